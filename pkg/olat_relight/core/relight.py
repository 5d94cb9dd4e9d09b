#!/usr/bin/env python3
"""
Image-based relighting, losses and the rendering-loss gradient

A reflectance field is a stack of N OLAT images. Relighting is the weighted
sum I_relit(x, y, c) = sum_k w[k, c] * olat_k(x, y, c).
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from olat_relight.core.errors import ConfigError, DimensionMismatchError, EmptyMaskError
from olat_relight.core.gamma import DualGamma, apply_dual_gamma_array
from olat_relight.core.imagecore import ImageDims, ImageF, MaskImage, check_dims
from olat_relight.core.probe import LightingWeights
from olat_relight.extractors import FeatureExtractor, IdentityExtractor

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ReflectanceField:
    """
    Ordered stack of OLAT radiance images

    Attributes:
        olats: Read-only (N, H, W, 3) float64 array, finite and nonnegative
        basis_ids: Basis id of each OLAT, 0..N-1 by default
    """

    olats: np.ndarray
    basis_ids: Tuple[int, ...] = ()

    def __post_init__(self):
        arr = np.array(self.olats, dtype=np.float64)
        if arr.ndim != 4 or arr.shape[3] != 3 or arr.shape[0] < 1:
            raise DimensionMismatchError(f"Reflectance field must have shape (N, H, W, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise DimensionMismatchError("Reflectance field must be finite and nonnegative")
        ids = tuple(int(i) for i in self.basis_ids) or tuple(range(arr.shape[0]))
        if len(ids) != arr.shape[0]:
            raise DimensionMismatchError(f"{len(ids)} basis ids given for {arr.shape[0]} OLATs")
        arr.flags.writeable = False
        object.__setattr__(self, "olats", arr)
        object.__setattr__(self, "basis_ids", ids)

    @property
    def count(self) -> int:
        return self.olats.shape[0]

    @property
    def dims(self) -> ImageDims:
        return ImageDims(self.olats.shape[2], self.olats.shape[1])

    def image(self, k: int) -> ImageF:
        return ImageF(self.olats[k])

    def images(self) -> List[ImageF]:
        return [self.image(k) for k in range(self.count)]

    @classmethod
    def from_images(cls, images: Sequence[ImageF], basis_ids: Sequence[int] = ()) -> "ReflectanceField":
        if not images:
            raise DimensionMismatchError("A reflectance field needs at least one OLAT image")
        for k, img in enumerate(images):
            check_dims(images[0].dims, img.dims, f"OLAT {k}")
        return cls(np.stack([img.data for img in images]), tuple(basis_ids))


@dataclass(frozen=True)
class LossWeights:
    """Weights of the reconstruction (lambda1) and rendering (lambda2) losses"""

    lambda1: float = 1.0
    lambda2: float = 1.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ConfigError("Loss weights must be nonnegative")
        if self.lambda1 == 0 and self.lambda2 == 0:
            raise ConfigError("lambda1 and lambda2 cannot both be zero")


def check_field_weights(field: ReflectanceField, w: LightingWeights) -> None:
    if w.basis_count != field.count:
        raise DimensionMismatchError(
            f"{w.basis_count} lighting weights for a field of {field.count} OLATs"
        )


def relight_array(olats: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Weighted sum over the basis axis of an (N, H, W, 3) stack with (N, 3) weights"""
    return np.einsum("nhwc,nc->hwc", olats, weights)


def relight(field: ReflectanceField, w: LightingWeights) -> ImageF:
    """
    Relight a reflectance field

    Args:
        field: OLAT stack
        w: One weight per basis condition and channel

    Returns:
        The relit image
    """
    check_field_weights(field, w)
    return ImageF(relight_array(field.olats, w.weights))


def linearize_field(field: ReflectanceField, g: DualGamma) -> ReflectanceField:
    """Apply the dual-gamma curve to every OLAT image"""
    return ReflectanceField(apply_dual_gamma_array(field.olats, g), field.basis_ids)


def synth_tracking_frame(exemplar: ReflectanceField, w: LightingWeights, g: DualGamma) -> ImageF:
    """
    Synthesize a tracking frame: the linearized exemplar relit by the interview lighting

    Args:
        exemplar: Camera-encoded exemplar field
        w: Interview lighting weights
        g: Calibrated dual gamma

    Returns:
        The synthetic frame
    """
    return relight(linearize_field(exemplar, g), w)


# --- losses -------------------------------------------------------------------

def _mass(mask: MaskImage) -> float:
    mass = float(mask.data.sum())
    if not mass > 0.0:
        raise EmptyMaskError("Loss requested over an empty mask")
    return mass


def _feature_distance(a: np.ndarray, b: np.ndarray, mask: np.ndarray, fx: FeatureExtractor) -> float:
    layers = fx.layer_count(ImageDims(a.shape[1], a.shape[0]))
    features_a, features_b, masks = fx.extract(a), fx.extract(b), fx.reduce_mask(mask)
    if not len(features_a) == len(features_b) == len(masks) == layers:
        raise ConfigError(
            f"{fx.name} extractor produced {len(features_a)} feature maps and {len(masks)} masks, expected {layers}"
        )
    total = 0.0
    for fa, fb, m in zip(features_a, features_b, masks):
        diff = fa - fb
        total += float(np.sqrt(np.einsum("hw,hwc->", m, diff * diff)))
    return total


def rendering_loss(
    relit: ImageF,
    target: ImageF,
    mask: MaskImage,
    fx: Optional[FeatureExtractor] = None,
) -> float:
    """
    Rendering loss between a relit prediction and an observed frame

    Sum over the extractor's feature maps of the mask-weighted L2 norm of the
    feature difference, divided by the mask mass.

    Args:
        relit: Relit prediction
        target: Observed frame
        mask: Subject mask
        fx: Feature extractor, identity by default

    Returns:
        The loss value
    """
    check_dims(relit.dims, target.dims, "rendering_loss")
    check_dims(relit.dims, mask.dims, "rendering_loss mask")
    fx = fx or IdentityExtractor()
    return _feature_distance(relit.data, target.data, mask.data, fx) / _mass(mask)


def reconstruction_loss(
    pred: ReflectanceField,
    gt: ReflectanceField,
    mask: MaskImage,
    fx: Optional[FeatureExtractor] = None,
) -> float:
    """
    Reconstruction loss between predicted and ground-truth OLAT stacks

    The sum of the rendering loss over the N OLAT pairs.

    Args:
        pred: Predicted field
        gt: Ground-truth field
        mask: Subject mask
        fx: Feature extractor, identity by default

    Returns:
        The loss value
    """
    if pred.count != gt.count:
        raise DimensionMismatchError(f"Predicted field has {pred.count} OLATs, ground truth {gt.count}")
    check_dims(pred.dims, gt.dims, "reconstruction_loss")
    check_dims(pred.dims, mask.dims, "reconstruction_loss mask")
    fx = fx or IdentityExtractor()
    mass = _mass(mask)
    return sum(
        _feature_distance(pred.olats[k], gt.olats[k], mask.data, fx) for k in range(pred.count)
    ) / mass


def combined_loss(
    pred: ReflectanceField,
    gt: Optional[ReflectanceField],
    frame: ImageF,
    w: LightingWeights,
    mask: MaskImage,
    fx: Optional[FeatureExtractor] = None,
    lw: LossWeights = LossWeights(),
) -> float:
    """
    lambda1 * reconstruction loss + lambda2 * rendering loss

    Without ground truth only the rendering term is used, which requires
    lambda1 = 0.

    Args:
        pred: Predicted field
        gt: Ground-truth field, if known
        frame: Observed frame
        w: Lighting weights of the frame
        mask: Subject mask
        fx: Feature extractor, identity by default
        lw: Loss weights

    Returns:
        The combined loss
    """
    if gt is None and lw.lambda1 > 0:
        raise ConfigError("combined_loss: lambda1 > 0 requires a ground-truth field")

    total = 0.0
    if lw.lambda1 > 0:
        total += lw.lambda1 * reconstruction_loss(pred, gt, mask, fx)
    if lw.lambda2 > 0:
        total += lw.lambda2 * rendering_loss(relight(pred, w), frame, mask, fx)
    return total


def squared_rendering_loss(field: ReflectanceField, w: LightingWeights, target: ImageF, mask: MaskImage) -> float:
    """(1 / mass) * sum of m * (I_relit - target)^2, the smooth pixel loss"""
    check_field_weights(field, w)
    check_dims(field.dims, target.dims, "squared_rendering_loss")
    check_dims(field.dims, mask.dims, "squared_rendering_loss mask")
    diff = relight_array(field.olats, w.weights) - target.data
    return float(np.einsum("hw,hwc->", mask.data, diff * diff)) / _mass(mask)


def rendering_gradient_array(
    olats: np.ndarray,
    weights: np.ndarray,
    target: np.ndarray,
    mask: np.ndarray,
) -> np.ndarray:
    """Gradient of sum m * (I_relit - target)^2 over an unconstrained (N, H, W, 3) stack"""
    residual = mask[:, :, None] * (relight_array(olats, weights) - target)
    return 2.0 * residual[None, :, :, :] * weights[:, None, None, :]


def rendering_loss_gradient(
    field: ReflectanceField,
    w: LightingWeights,
    target: ImageF,
    mask: MaskImage,
) -> np.ndarray:
    """
    Gradient of the squared pixel rendering loss with respect to every OLAT sample

    d/d olat_k(x, y, c) = (2 / mass) * m(x, y) * (I_relit(x, y, c) - target(x, y, c)) * w[k, c]

    Args:
        field: Current field
        w: Lighting weights
        target: Observed frame
        mask: Subject mask

    Returns:
        (N, H, W, 3) gradient array
    """
    check_field_weights(field, w)
    check_dims(field.dims, target.dims, "rendering_loss_gradient")
    check_dims(field.dims, mask.dims, "rendering_loss_gradient mask")
    mass = _mass(mask)
    return rendering_gradient_array(field.olats, w.weights, target.data, mask.data) / mass
