#!/usr/bin/env python3
"""
Dual-gamma camera linearization

I' = (1 - I) * I**gamma1 + I * I**gamma2

The lower exponent dominates dark pixels and the upper one bright pixels. The
curve is applied per channel to OLAT images; the interview frame it is fitted
against is left untouched.
"""

import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, Tuple

import numpy as np
from scipy import optimize

from olat_relight.core.errors import EmptyMaskError, FitError
from olat_relight.core.imagecore import ImageF, MaskImage, check_dims, mask_mass

if TYPE_CHECKING:
    from olat_relight.core.probe import LightingWeights
    from olat_relight.core.relight import ReflectanceField

logger = logging.getLogger(__name__)

GAMMA_MIN = 0.2
GAMMA_MAX = 5.0
DEFAULT_GRID = 11
DEFAULT_MAX_ITER = 200
DEFAULT_XATOL = 1e-4

BISECTION_STEPS = 60


@dataclass(frozen=True)
class DualGamma:
    """Exponents of the lower (gamma1) and upper (gamma2) curves"""

    gamma1: float
    gamma2: float

    def __post_init__(self):
        for name in ("gamma1", "gamma2"):
            value = float(getattr(self, name))
            if not GAMMA_MIN - 1e-12 <= value <= GAMMA_MAX + 1e-12:
                raise FitError(f"{name}={value} outside [{GAMMA_MIN}, {GAMMA_MAX}]")
            object.__setattr__(self, name, value)

    def as_dict(self) -> Dict[str, float]:
        return {"gamma1": self.gamma1, "gamma2": self.gamma2}


IDENTITY = DualGamma(1.0, 1.0)


def _clamp_unit(arr: np.ndarray) -> np.ndarray:
    over = int(np.count_nonzero(arr > 1.0))
    if over:
        logger.warning(f"Clamped {over} samples above 1 before dual-gamma correction")
        arr = np.minimum(arr, 1.0)
    return arr


def _curve(arr: np.ndarray, g: DualGamma) -> np.ndarray:
    return (1.0 - arr) * np.power(arr, g.gamma1) + arr * np.power(arr, g.gamma2)


def apply_dual_gamma_array(arr: np.ndarray, g: DualGamma) -> np.ndarray:
    """Evaluate the dual-gamma curve on a raw array of values in [0, 1]"""
    return _curve(_clamp_unit(np.asarray(arr, dtype=np.float64)), g)


def apply_dual_gamma(img: ImageF, g: DualGamma) -> ImageF:
    """
    Linearize an image with the dual-gamma curve

    Values above 1 are clamped first, with a logged count.

    Args:
        img: Camera image with values in [0, 1]
        g: Curve parameters

    Returns:
        The linearized image
    """
    return ImageF(apply_dual_gamma_array(img.data, g))


def is_monotone(g: DualGamma, samples: int = 1001) -> bool:
    """Whether the curve is nondecreasing on [0, 1], checked on a uniform grid"""
    values = _curve(np.linspace(0.0, 1.0, samples), g)
    return bool(np.all(np.diff(values) >= -1e-12))


def invert_dual_gamma(img: ImageF, g: DualGamma) -> ImageF:
    """
    Gamma-encode linear radiance, the inverse of apply_dual_gamma

    Solved per sample by bisection on [0, 1]; targets outside [0, 1] are clamped.

    Args:
        img: Linear image
        g: Curve parameters; the curve must be monotone

    Returns:
        The encoded image
    """
    if not is_monotone(g):
        raise FitError(f"Dual-gamma curve {g} is not monotone and cannot be inverted")

    target = np.clip(img.data, 0.0, 1.0)
    lo = np.zeros_like(target)
    hi = np.ones_like(target)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        below = _curve(mid, g) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return ImageF(0.5 * (lo + hi))


def masked_mse_array(a: np.ndarray, b: np.ndarray, mask: np.ndarray) -> float:
    """Sum of m * |a - b|^2 over pixels and channels, divided by 3 x mask mass"""
    mass = float(mask.sum())
    if not mass > 0.0:
        raise EmptyMaskError("Mask is empty")
    diff = a - b
    return float(np.einsum("hw,hwc->", mask, diff * diff)) / (3.0 * mass)


def masked_mse(a: ImageF, b: ImageF, mask: MaskImage) -> float:
    """Mask-weighted mean squared error between two images"""
    check_dims(a.dims, b.dims, "masked_mse")
    check_dims(a.dims, mask.dims, "masked_mse mask")
    return masked_mse_array(a.data, b.data, mask.data)


def _fit_objective(
    olats: "ReflectanceField",
    weights: "LightingWeights",
    target: ImageF,
    mask: MaskImage,
):
    from olat_relight.core.relight import check_field_weights, relight_array

    check_field_weights(olats, weights)
    check_dims(olats.dims, target.dims, "fit_dual_gamma target")
    check_dims(olats.dims, mask.dims, "fit_dual_gamma mask")
    if not mask_mass(mask) > 0.0:
        raise FitError("fit_dual_gamma: mask is empty")

    stack = _clamp_unit(olats.olats)

    def loss(params) -> float:
        g = DualGamma(*params)
        relit = relight_array(_curve(stack, g), weights.weights)
        value = masked_mse_array(relit, target.data, mask.data)
        if not np.isfinite(value):
            raise FitError(f"Non-finite fit loss at {g}")
        return value

    return loss


def gamma_fit_residual(
    olats: "ReflectanceField",
    weights: "LightingWeights",
    target: ImageF,
    mask: MaskImage,
    g: DualGamma,
) -> float:
    """Masked MSE between the gamma-corrected relit OLATs and the target"""
    return _fit_objective(olats, weights, target, mask)((g.gamma1, g.gamma2))


def fit_dual_gamma(
    olats: "ReflectanceField",
    weights: "LightingWeights",
    target: ImageF,
    mask: MaskImage,
    bounds: Tuple[float, float] = (GAMMA_MIN, GAMMA_MAX),
    grid: int = DEFAULT_GRID,
    max_iter: int = DEFAULT_MAX_ITER,
    xatol: float = DEFAULT_XATOL,
) -> DualGamma:
    """
    Fit the dual-gamma curve that makes the relit OLATs match a frame

    A coarse grid over bounds x bounds picks the starting point for a bounded
    Nelder-Mead refinement, which stops when the simplex is smaller than
    xatol or after max_iter iterations.

    Args:
        olats: Camera-encoded OLAT images
        weights: Interview lighting projected onto the basis
        target: The first interview frame
        mask: Subject mask
        bounds: Search interval for both exponents
        grid: Grid points per axis
        max_iter: Nelder-Mead iteration limit
        xatol: Simplex size tolerance

    Returns:
        The fitted curve
    """
    lo, hi = bounds
    if not GAMMA_MIN <= lo < hi <= GAMMA_MAX:
        raise FitError(f"Invalid gamma bounds {bounds}")
    loss = _fit_objective(olats, weights, target, mask)

    axis = np.linspace(lo, hi, max(int(grid), 2))
    best_params, best_loss = None, np.inf
    for g1 in axis:
        for g2 in axis:
            value = loss((g1, g2))
            if value < best_loss:
                best_params, best_loss = (g1, g2), value
    logger.debug(f"Gamma grid minimum {best_loss:.6g} at {best_params}")

    result = optimize.minimize(
        loss,
        x0=np.asarray(best_params),
        method="Nelder-Mead",
        bounds=[(lo, hi), (lo, hi)],
        options={"xatol": xatol, "fatol": np.inf, "maxiter": max_iter},
    )
    if np.isfinite(result.fun) and result.fun <= best_loss:
        best_params, best_loss = tuple(np.clip(result.x, lo, hi)), float(result.fun)

    fitted = DualGamma(*best_params)
    logger.info(
        f"Fitted dual gamma ({fitted.gamma1:.4f}, {fitted.gamma2:.4f}), "
        f"residual {best_loss:.6g} after {result.nit} simplex iterations"
    )
    return fitted
