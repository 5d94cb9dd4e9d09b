#!/usr/bin/env python3
"""
Multi-scale features: a 2x2 box-filtered image pyramid
"""

from typing import List

import numpy as np

from olat_relight.core.errors import ConfigError
from olat_relight.core.imagecore import ImageDims
from olat_relight.extractors.base import FeatureExtractor


def _downsample(arr: np.ndarray) -> np.ndarray:
    height, width = arr.shape[0] // 2 * 2, arr.shape[1] // 2 * 2
    arr = arr[:height, :width]
    return 0.25 * (arr[0::2, 0::2] + arr[1::2, 0::2] + arr[0::2, 1::2] + arr[1::2, 1::2])


class PyramidExtractor(FeatureExtractor):
    """
    Image pyramid with `levels` feature maps

    Level 0 is the image; each further level halves the resolution by 2x2
    averaging (odd trailing rows/columns dropped). Levels stop early once a
    dimension reaches 1 pixel.
    """

    name = "pyramid"

    def __init__(self, levels: int = 3):
        if levels < 1:
            raise ConfigError(f"PyramidExtractor needs at least one level, got {levels}")
        self.levels = int(levels)

    def layer_count(self, dims: ImageDims) -> int:
        count, height, width = 1, dims.height, dims.width
        while count < self.levels and min(height, width) >= 2:
            count, height, width = count + 1, height // 2, width // 2
        return count

    def _pyramid(self, arr: np.ndarray) -> List[np.ndarray]:
        out = [arr]
        while len(out) < self.levels and min(out[-1].shape[:2]) >= 2:
            out.append(_downsample(out[-1]))
        return out

    def extract(self, data: np.ndarray) -> List[np.ndarray]:
        return self._pyramid(data)

    def reduce_mask(self, mask: np.ndarray) -> List[np.ndarray]:
        return self._pyramid(mask)
