#!/usr/bin/env python3
"""
Identity features: the image itself
"""

from typing import List

import numpy as np

from olat_relight.core.imagecore import ImageDims
from olat_relight.extractors.base import FeatureExtractor


class IdentityExtractor(FeatureExtractor):
    """Single feature map equal to the input, turning the losses into pixel losses"""

    name = "identity"

    def layer_count(self, dims: ImageDims) -> int:
        return 1

    def extract(self, data: np.ndarray) -> List[np.ndarray]:
        return [data]

    def reduce_mask(self, mask: np.ndarray) -> List[np.ndarray]:
        return [mask]
