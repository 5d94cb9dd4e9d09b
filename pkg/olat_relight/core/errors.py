#!/usr/bin/env python3
"""
Exception hierarchy for OLAT Relight
"""

from typing import Optional


class RelightError(Exception):
    """Base class for every error raised by the relighting library"""


class ImageFormatError(RelightError):
    """An image file could not be read or written"""


class DimensionMismatchError(RelightError):
    """Images, masks, fields, weights or footprints disagree in shape"""


class GeometryError(RelightError):
    """Invalid probe geometry, lat-long dimensions or basis directions"""


class FootprintError(RelightError):
    """A basis footprint could not be formed"""


class FitError(RelightError):
    """Dual-gamma fitting failed"""


class ConfigError(RelightError):
    """Invalid job configuration"""


class ManifestError(RelightError):
    """Malformed dataset manifest or weights file"""


class EstimationError(RelightError):
    """
    Reflectance-field estimation failed

    Attributes:
        frame_index: Index of the failing frame when raised from a batch run
    """

    def __init__(self, message: str, frame_index: Optional[int] = None):
        self.frame_index = frame_index
        if frame_index is not None:
            message = f"frame {frame_index}: {message}"
        super().__init__(message)


class EmptyMaskError(RelightError):
    """A loss or average was requested over a mask with zero mass"""
