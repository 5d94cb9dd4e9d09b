#!/usr/bin/env python3
"""
Floating-point image containers, masks and image file I/O

Images hold linear radiance as read-only float64 arrays of shape (H, W, 3).
PNG files are mapped to [0, 1] by a plain division by 255; no transfer curve
is decoded here, linearization belongs to the gamma module.
"""

import io
import os
import logging
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

import numpy as np
from PIL import Image
from scipy import ndimage

from olat_relight.core.errors import DimensionMismatchError, ImageFormatError
from olat_relight.utils.fs_utils import atomic_write_bytes

logger = logging.getLogger(__name__)

PathLike = Union[str, "os.PathLike[str]"]

PFM_MAGIC_RGB = b"PF"
PFM_MAGIC_GRAY = b"Pf"
PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

# Largest accepted pixel count for a single image file
MAX_PIXELS = 1 << 28


@dataclass(frozen=True)
class ImageDims:
    """Image dimensions in pixels"""

    width: int
    height: int

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise DimensionMismatchError(
                f"Image dimensions must be at least 1x1, got {self.width}x{self.height}"
            )
        object.__setattr__(self, "width", int(self.width))
        object.__setattr__(self, "height", int(self.height))

    @property
    def shape(self) -> Tuple[int, int]:
        """(height, width), the numpy order"""
        return (self.height, self.width)

    def __str__(self) -> str:
        return f"{self.width}x{self.height}"


def _frozen_copy(data, ndim: int, what: str) -> np.ndarray:
    arr = np.array(data, dtype=np.float64)
    if arr.ndim != ndim:
        raise DimensionMismatchError(f"{what} must have {ndim} dimensions, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ImageFormatError(f"{what} contains non-finite values")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ImageF:
    """
    Immutable RGB radiance image

    Attributes:
        data: Read-only float64 array of shape (H, W, 3), finite and nonnegative
    """

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen_copy(self.data, 3, "Image data")
        if arr.shape[2] != 3:
            raise DimensionMismatchError(f"Image data must have 3 channels, got {arr.shape[2]}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatchError("Image must be at least 1x1")
        if np.any(arr < 0):
            raise ImageFormatError("Image data must be nonnegative")
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> ImageDims:
        return ImageDims(self.width, self.height)

    @classmethod
    def zeros(cls, dims: ImageDims) -> "ImageF":
        return cls(np.zeros((dims.height, dims.width, 3)))

    @classmethod
    def constant(cls, dims: ImageDims, rgb: Sequence[float]) -> "ImageF":
        return cls(np.broadcast_to(np.asarray(rgb, dtype=np.float64), (dims.height, dims.width, 3)))


@dataclass(frozen=True, eq=False)
class MaskImage:
    """
    Immutable per-pixel weight mask

    Attributes:
        data: Read-only float64 array of shape (H, W), clamped to [0, 1]
    """

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen_copy(self.data, 2, "Mask data")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatchError("Mask must be at least 1x1")
        arr = np.clip(arr, 0.0, 1.0)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def dims(self) -> ImageDims:
        return ImageDims(self.width, self.height)

    @classmethod
    def ones(cls, dims: ImageDims) -> "MaskImage":
        return cls(np.ones(dims.shape))


def check_dims(expected: ImageDims, actual: ImageDims, what: str) -> None:
    """
    Raise DimensionMismatchError unless two dimensions agree

    Args:
        expected: Reference dimensions
        actual: Dimensions to check
        what: Description used in the error message
    """
    if expected != actual:
        raise DimensionMismatchError(f"{what}: expected {expected}, got {actual}")


def mask_mass(mask: MaskImage) -> float:
    """Total weight of a mask"""
    return float(mask.data.sum())


def apply_mask(img: ImageF, mask: MaskImage) -> ImageF:
    """
    Multiply every channel of an image by the mask weight

    Args:
        img: Image to mask
        mask: Mask with the same dimensions

    Returns:
        The masked image
    """
    check_dims(img.dims, mask.dims, "apply_mask")
    return ImageF(img.data * mask.data[:, :, None])


# --- resampling ---------------------------------------------------------------

def _resample_bilinear(arr: np.ndarray, target: ImageDims) -> np.ndarray:
    src_h, src_w = arr.shape[:2]
    ys = (np.arange(target.height) + 0.5) * (src_h / target.height) - 0.5
    xs = (np.arange(target.width) + 0.5) * (src_w / target.width) - 0.5
    grid = np.meshgrid(ys, xs, indexing="ij")
    channels = [
        ndimage.map_coordinates(arr[:, :, c], grid, order=1, mode="nearest")
        for c in range(arr.shape[2])
    ]
    return np.stack(channels, axis=-1)


def _letterbox_resize(arr: np.ndarray, target: ImageDims) -> np.ndarray:
    height, width = arr.shape[:2]
    if (width, height) == (target.width, target.height):
        return arr.copy()

    target_aspect = target.width / target.height
    if width / height < target_aspect:
        canvas_w, canvas_h = max(width, int(round(height * target_aspect))), height
    else:
        canvas_w, canvas_h = width, max(height, int(round(width / target_aspect)))

    canvas = np.zeros((canvas_h, canvas_w, arr.shape[2]), dtype=np.float64)
    top = (canvas_h - height) // 2
    left = (canvas_w - width) // 2
    canvas[top:top + height, left:left + width] = arr
    return _resample_bilinear(canvas, target)


def pad_and_resize(img: ImageF, target: ImageDims) -> ImageF:
    """
    Letterbox an image with zeros to the target aspect ratio, then resample it

    The content is centered on the padded canvas, and the canvas is bilinearly
    resampled to the target dimensions. An image already at the target
    dimensions is returned unchanged.

    Args:
        img: Source image
        target: Output dimensions

    Returns:
        The padded and resized image
    """
    return ImageF(_letterbox_resize(img.data, target))


def pad_and_resize_mask(mask: MaskImage, target: ImageDims) -> MaskImage:
    """Letterbox and resample a mask with the same rule as pad_and_resize"""
    return MaskImage(_letterbox_resize(mask.data[:, :, None], target)[:, :, 0])


def crop_to_mask(img: ImageF, mask: MaskImage, margin: int = 0) -> Tuple[ImageF, MaskImage]:
    """
    Crop an image and its mask to the bounding box of the masked subject

    Args:
        img: Image to crop
        mask: Subject mask with the same dimensions
        margin: Extra pixels kept around the bounding box

    Returns:
        Tuple of (cropped image, cropped mask)
    """
    check_dims(img.dims, mask.dims, "crop_to_mask")
    rows = np.flatnonzero(mask.data.any(axis=1))
    cols = np.flatnonzero(mask.data.any(axis=0))
    if rows.size == 0:
        raise DimensionMismatchError("crop_to_mask: mask is empty")

    top = max(0, rows[0] - margin)
    bottom = min(img.height, rows[-1] + margin + 1)
    left = max(0, cols[0] - margin)
    right = min(img.width, cols[-1] + margin + 1)
    return (
        ImageF(img.data[top:bottom, left:right]),
        MaskImage(mask.data[top:bottom, left:right]),
    )


# --- PFM codec ----------------------------------------------------------------

def _read_header_line(buf: bytes, offset: int) -> Tuple[bytes, int]:
    end = buf.find(b"\n", offset)
    if end < 0:
        raise ImageFormatError("Truncated PFM header")
    return buf[offset:end].strip(), end + 1


def _decode_pfm(buf: bytes, path: str) -> np.ndarray:
    magic, offset = _read_header_line(buf, 0)
    if magic == PFM_MAGIC_RGB:
        channels = 3
    elif magic == PFM_MAGIC_GRAY:
        channels = 1
    else:
        raise ImageFormatError(f"{path}: not a PFM file")

    size_line, offset = _read_header_line(buf, offset)
    scale_line, offset = _read_header_line(buf, offset)
    try:
        width, height = (int(v) for v in size_line.split())
        scale = float(scale_line)
    except ValueError:
        raise ImageFormatError(f"{path}: malformed PFM header")

    if width < 1 or height < 1 or width * height > MAX_PIXELS:
        raise ImageFormatError(f"{path}: PFM dimensions {width}x{height} out of range")
    if scale == 0.0:
        raise ImageFormatError(f"{path}: PFM scale must be nonzero")

    count = width * height * channels
    if len(buf) - offset < count * 4:
        raise ImageFormatError(f"{path}: PFM raster truncated")

    dtype = "<f4" if scale < 0 else ">f4"
    raster = np.frombuffer(buf, dtype=dtype, count=count, offset=offset)
    # rows are stored bottom-to-top
    return np.flipud(raster.reshape(height, width, channels)).astype(np.float64)


def _encode_pfm(arr: np.ndarray) -> bytes:
    height, width, channels = arr.shape
    magic = PFM_MAGIC_RGB if channels == 3 else PFM_MAGIC_GRAY
    header = magic + b"\n" + f"{width} {height}\n-1.0\n".encode("ascii")
    return header + np.ascontiguousarray(np.flipud(arr)).astype("<f4").tobytes()


# --- PNG codec ----------------------------------------------------------------

def _open_png(buf: bytes, path: str) -> Image.Image:
    try:
        im = Image.open(io.BytesIO(buf))
        im.load()
    except (OSError, ValueError) as e:
        raise ImageFormatError(f"{path}: unreadable PNG: {e}")
    if im.mode not in ("1", "L", "LA", "P", "PA", "RGB", "RGBA"):
        raise ImageFormatError(f"{path}: only 8-bit PNG is supported, got mode {im.mode}")
    if im.width * im.height > MAX_PIXELS:
        raise ImageFormatError(f"{path}: PNG dimensions out of range")
    return im


def _quantize(arr: np.ndarray) -> np.ndarray:
    # clamp, scale, round half up
    return np.floor(np.clip(arr, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def _read_file(path: PathLike) -> Tuple[bytes, str]:
    path = os.fspath(path)
    try:
        with open(path, "rb") as f:
            return f.read(), path
    except OSError as e:
        raise ImageFormatError(f"Cannot read {path}: {e}")


def _format_for(path: str) -> str:
    ext = os.path.splitext(path)[1].lower()
    if ext in (".pfm", ".png"):
        return ext[1:]
    raise ImageFormatError(f"Unsupported output format for {path} (use .pfm or .png)")


def load_image(path: PathLike) -> ImageF:
    """
    Load a PFM or 8-bit PNG file as a radiance image

    PFM values pass through verbatim, except that negative samples are clamped
    to zero with a logged count. PNG bytes are divided by 255.

    Args:
        path: Image file path

    Returns:
        The loaded image
    """
    buf, path = _read_file(path)

    if buf.startswith(PNG_MAGIC):
        im = _open_png(buf, path)
        return ImageF(np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0)

    if buf[:2] in (PFM_MAGIC_RGB, PFM_MAGIC_GRAY):
        arr = _decode_pfm(buf, path)
        if not np.all(np.isfinite(arr)):
            raise ImageFormatError(f"{path}: PFM contains non-finite values")
        negatives = int(np.count_nonzero(arr < 0))
        if negatives:
            logger.warning(f"{path}: clamped {negatives} negative samples to 0")
            arr = np.maximum(arr, 0.0)
        if arr.shape[2] == 1:
            arr = np.repeat(arr, 3, axis=2)
        return ImageF(arr)

    raise ImageFormatError(f"{path}: unsupported image format")


def save_image(img: ImageF, path: PathLike) -> None:
    """
    Save an image as PFM (float) or PNG (8-bit), chosen by file extension

    PNG output clamps to [0, 1], scales by 255 and rounds half up. The file is
    written atomically.

    Args:
        img: Image to save
        path: Destination ending in .pfm or .png
    """
    path = os.fspath(path)
    if _format_for(path) == "pfm":
        payload = _encode_pfm(img.data)
    else:
        out = io.BytesIO()
        Image.fromarray(_quantize(img.data)).save(out, format="PNG")
        payload = out.getvalue()
    atomic_write_bytes(path, payload)
    logger.debug(f"Wrote {img.dims} image to {path}")


def load_mask(path: PathLike, use_alpha: bool = False) -> MaskImage:
    """
    Load a mask from a PNG or PFM file

    Args:
        path: Mask file path
        use_alpha: Read the PNG alpha channel instead of the first color channel

    Returns:
        The mask, clamped to [0, 1]
    """
    buf, path = _read_file(path)

    if buf.startswith(PNG_MAGIC):
        im = _open_png(buf, path)
        if use_alpha:
            if "A" not in im.getbands():
                raise ImageFormatError(f"{path}: PNG has no alpha channel")
            return MaskImage(np.asarray(im.getchannel("A"), dtype=np.float64) / 255.0)
        return MaskImage(np.asarray(im.convert("RGB"), dtype=np.float64)[:, :, 0] / 255.0)

    if buf[:2] in (PFM_MAGIC_RGB, PFM_MAGIC_GRAY):
        if use_alpha:
            raise ImageFormatError(f"{path}: PFM has no alpha channel")
        return MaskImage(_decode_pfm(buf, path)[:, :, 0])

    raise ImageFormatError(f"{path}: unsupported mask format")


def save_mask(mask: MaskImage, path: PathLike) -> None:
    """
    Save a mask as single-channel PFM or 8-bit grayscale PNG

    Args:
        mask: Mask to save
        path: Destination ending in .pfm or .png
    """
    path = os.fspath(path)
    if _format_for(path) == "pfm":
        payload = _encode_pfm(mask.data[:, :, None])
    else:
        out = io.BytesIO()
        Image.fromarray(_quantize(mask.data)).save(out, format="PNG")
        payload = out.getvalue()
    atomic_write_bytes(path, payload)
