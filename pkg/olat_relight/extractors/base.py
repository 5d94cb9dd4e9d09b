#!/usr/bin/env python3
"""
Feature extractor contract for the reconstruction and rendering losses
"""

from abc import ABC, abstractmethod
from typing import List

import numpy as np

from olat_relight.core.imagecore import ImageDims


class FeatureExtractor(ABC):
    """
    Maps an image to M feature maps

    Implementations must be deterministic. The mask is reduced alongside the
    image so that every feature map has a matching per-pixel weight.
    """

    name = "base"

    @abstractmethod
    def layer_count(self, dims: ImageDims) -> int:
        """Number of feature maps M produced for an image of the given dims"""

    @abstractmethod
    def extract(self, data: np.ndarray) -> List[np.ndarray]:
        """
        Compute the feature maps of an image

        Args:
            data: (H, W, 3) radiance array

        Returns:
            M arrays of shape (H_j, W_j, C_j)
        """

    @abstractmethod
    def reduce_mask(self, mask: np.ndarray) -> List[np.ndarray]:
        """
        Compute the per-pixel weight of every feature map

        Args:
            mask: (H, W) mask array

        Returns:
            M arrays of shape (H_j, W_j)
        """
