#!/usr/bin/env python3
"""
Per-frame reflectance-field estimation from a single flat-lit frame

Relighting is linear, so recovering the N OLAT values of a pixel from one
observation is an underdetermined linear inverse problem. It is regularized
toward a prior built by blending static-pose exemplar fields, and solved either
in closed form (per-pixel ridge regression) or by gradient descent on the
combined objective.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from olat_relight.core.errors import (
    ConfigError,
    DimensionMismatchError,
    EmptyMaskError,
    EstimationError,
    RelightError,
)
from olat_relight.core.gamma import DualGamma, masked_mse
from olat_relight.core.imagecore import ImageDims, ImageF, MaskImage, check_dims
from olat_relight.core.probe import LightingWeights
from olat_relight.core.relight import (
    LossWeights,
    ReflectanceField,
    check_field_weights,
    linearize_field,
    relight,
    relight_array,
    rendering_gradient_array,
)

logger = logging.getLogger(__name__)

METHODS = ("ridge", "iterative")
DIVERGENCE_PATIENCE = 5


@dataclass(frozen=True, eq=False)
class ExemplarPose:
    """A static pose: its captured field and its synthetic relit frame"""

    name: str
    field: ReflectanceField
    relit: ImageF


@dataclass(frozen=True, eq=False)
class ExemplarSet:
    """Static-pose priors shared by every frame of a video"""

    poses: Tuple[ExemplarPose, ...]

    def __post_init__(self):
        poses = tuple(self.poses)
        if not poses:
            raise EstimationError("Exemplar set is empty")
        first = poses[0].field
        for pose in poses:
            if pose.field.count != first.count:
                raise DimensionMismatchError(
                    f"Exemplar {pose.name} has {pose.field.count} OLATs, expected {first.count}"
                )
            check_dims(first.dims, pose.field.dims, f"exemplar {pose.name} field")
            check_dims(first.dims, pose.relit.dims, f"exemplar {pose.name} relit frame")
        object.__setattr__(self, "poses", poses)

    @property
    def count(self) -> int:
        return len(self.poses)

    @property
    def basis_count(self) -> int:
        return self.poses[0].field.count

    @property
    def dims(self) -> ImageDims:
        return self.poses[0].field.dims


@dataclass(frozen=True)
class EstimationConfig:
    """
    Estimator settings

    Attributes:
        lambda_prior: Ridge strength pulling the estimate toward the prior
        blend_temperature: Softmax temperature of the exemplar blend; None
            picks 0.01 x the masked mean squared frame value
        iterations: Gradient steps of the iterative estimator
        step_size: Gradient step; None picks a step that guarantees descent
        method: "ridge" (closed form) or "iterative"
    """

    lambda_prior: float = 0.1
    blend_temperature: Optional[float] = None
    iterations: int = 200
    step_size: Optional[float] = None
    method: str = "ridge"

    def __post_init__(self):
        if self.lambda_prior < 0:
            raise ConfigError(f"lambda_prior must be >= 0, got {self.lambda_prior}")
        if self.blend_temperature is not None and not self.blend_temperature > 0:
            raise ConfigError(f"blend_temperature must be > 0, got {self.blend_temperature}")
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.step_size is not None and not self.step_size > 0:
            raise ConfigError(f"step_size must be > 0, got {self.step_size}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")


@dataclass(frozen=True, eq=False)
class FieldEstimate:
    """An estimated field with its objective trace and the exemplar blend that seeded it"""

    field: ReflectanceField
    loss_trace: Tuple[float, ...] = ()
    blend: Tuple[float, ...] = ()


def build_exemplar_set(
    fields: Sequence[ReflectanceField],
    w: LightingWeights,
    g: DualGamma,
    names: Optional[Sequence[str]] = None,
) -> ExemplarSet:
    """
    Linearize every exemplar field and pair it with its synthetic tracking frame

    Args:
        fields: Camera-encoded exemplar fields
        w: Interview lighting weights
        g: Calibrated dual gamma
        names: Pose names, pose_0.. by default

    Returns:
        The exemplar set, fields in linear radiance
    """
    names = list(names) if names else [f"pose_{p}" for p in range(len(fields))]
    poses = []
    for name, field in zip(names, fields):
        linear = linearize_field(field, g)
        poses.append(ExemplarPose(name, linear, relight(linear, w)))
    return ExemplarSet(tuple(poses))


def default_temperature(frame: ImageF, mask: MaskImage) -> float:
    """0.01 x the masked mean of the squared frame values"""
    mass = float(mask.data.sum())
    if not mass > 0.0:
        raise EmptyMaskError("Cannot pick a blend temperature over an empty mask")
    energy = float(np.einsum("hw,hwc->", mask.data, frame.data * frame.data)) / (3.0 * mass)
    return max(0.01 * energy, 1e-12)


def exemplar_blend(
    frame: ImageF,
    ex: ExemplarSet,
    mask: MaskImage,
    temperature: Optional[float] = None,
) -> np.ndarray:
    """
    Softmax weights of the exemplar poses by similarity to the frame

    b_p = softmax_p(-masked_mse(frame, relit_p) / temperature)

    Args:
        frame: Observed frame
        ex: Exemplar set
        mask: Subject mask
        temperature: Softmax temperature; None for the default

    Returns:
        (P,) blend weights summing to 1
    """
    if temperature is None:
        temperature = default_temperature(frame, mask)
    if not temperature > 0:
        raise ConfigError(f"Blend temperature must be > 0, got {temperature}")
    distances = np.array([masked_mse(frame, pose.relit, mask) for pose in ex.poses])
    return special.softmax(-distances / temperature)


def prior_field(blend: Sequence[float], ex: ExemplarSet) -> ReflectanceField:
    """
    Convex combination of the exemplar fields

    Args:
        blend: (P,) weights summing to 1
        ex: Exemplar set

    Returns:
        The prior field
    """
    blend = np.asarray(blend, dtype=np.float64)
    if blend.shape != (ex.count,):
        raise DimensionMismatchError(f"{blend.size} blend weights for {ex.count} exemplars")
    if abs(float(blend.sum()) - 1.0) > 1e-9:
        raise EstimationError(f"Blend weights sum to {blend.sum()}, expected 1")
    stack = np.stack([pose.field.olats for pose in ex.poses])
    return ReflectanceField(np.einsum("p,pnhwc->nhwc", blend, stack), ex.poses[0].field.basis_ids)


# --- closed form --------------------------------------------------------------

def solve_ridge(
    frame: np.ndarray,
    weights: np.ndarray,
    prior: np.ndarray,
    mask: np.ndarray,
    lambda_prior: float,
) -> np.ndarray:
    """
    Per-pixel ridge solution on raw arrays, without a nonnegativity constraint

    Minimizes m * (w_c . r - i)^2 + lambda * |r - r0|^2 for every pixel and
    channel: r = r0 + m * w_c * (i - w_c . r0) / (m * |w_c|^2 + lambda).

    Args:
        frame: (H, W, 3) observation
        weights: (N, 3) lighting weights
        prior: (N, H, W, 3) prior field r0
        mask: (H, W) mask
        lambda_prior: Ridge strength

    Returns:
        (N, H, W, 3) solution
    """
    norms = np.einsum("nc,nc->c", weights, weights)
    observed = mask > 0
    if lambda_prior == 0 and observed.any() and np.any(norms == 0):
        raise EstimationError("Zero lighting weights in a channel with lambda_prior = 0 leave the fit undetermined")

    m = mask[:, :, None]
    denom = m * norms + lambda_prior
    residual = frame - relight_array(prior, weights)
    safe = np.where(denom > 0, denom, 1.0)
    coef = np.where(denom > 0, m * residual / safe, 0.0)
    return prior + weights[:, None, None, :] * coef[None, :, :, :]


def _objective(
    olats: np.ndarray,
    weights: np.ndarray,
    frame: np.ndarray,
    prior: np.ndarray,
    mask: np.ndarray,
    lambda_prior: float,
    gt: Optional[np.ndarray] = None,
    lw: LossWeights = LossWeights(),
) -> float:
    diff = relight_array(olats, weights) - frame
    value = lw.lambda2 * float(np.einsum("hw,hwc->", mask, diff * diff))
    value += lambda_prior * float(np.sum((olats - prior) ** 2))
    if gt is not None and lw.lambda1 > 0:
        value += lw.lambda1 * float(np.einsum("hw,nhwc->", mask, (olats - gt) ** 2))
    return value


def _to_field(olats: np.ndarray, basis_ids: Tuple[int, ...]) -> ReflectanceField:
    negatives = int(np.count_nonzero(olats < 0))
    if negatives:
        logger.warning(f"Clamped {negatives} negative OLAT estimates to 0")
    return ReflectanceField(np.maximum(olats, 0.0), basis_ids)


def _check_inputs(frame: ImageF, w: LightingWeights, r0: ReflectanceField, mask: MaskImage) -> None:
    check_field_weights(r0, w)
    check_dims(r0.dims, frame.dims, "estimation frame")
    check_dims(r0.dims, mask.dims, "estimation mask")


def estimate_field_ridge(
    frame: ImageF,
    w: LightingWeights,
    r0: ReflectanceField,
    mask: MaskImage,
    lambda_prior: float,
) -> ReflectanceField:
    """
    Closed-form ridge estimate of a frame's reflectance field

    Masked-out pixels keep the prior. Negative components of the solution are
    clamped to zero.

    Args:
        frame: Observed frame
        w: Lighting weights of the frame
        r0: Prior field
        mask: Subject mask
        lambda_prior: Ridge strength

    Returns:
        The estimated field
    """
    _check_inputs(frame, w, r0, mask)
    if lambda_prior < 0:
        raise ConfigError(f"lambda_prior must be >= 0, got {lambda_prior}")
    solution = solve_ridge(frame.data, w.weights, r0.olats, mask.data, lambda_prior)
    return _to_field(solution, r0.basis_ids)


# --- gradient descent ---------------------------------------------------------

def default_step_size(weights: np.ndarray, lambda_prior: float, lw: LossWeights, with_gt: bool) -> float:
    """Half the largest step for which gradient descent is guaranteed to descend"""
    curvature = lw.lambda2 * float(np.max(np.einsum("nc,nc->c", weights, weights))) + lambda_prior
    if with_gt:
        curvature += lw.lambda1
    if not curvature > 0:
        raise EstimationError("Objective has no curvature; set lambda_prior > 0")
    return 0.5 / curvature


def descend(
    frame: np.ndarray,
    weights: np.ndarray,
    prior: np.ndarray,
    mask: np.ndarray,
    lambda_prior: float,
    iterations: int,
    step_size: Optional[float] = None,
    gt: Optional[np.ndarray] = None,
    lw: LossWeights = LossWeights(),
) -> Tuple[np.ndarray, List[float]]:
    """
    Fixed-step gradient descent on raw arrays, starting at the prior

    Objective: lambda2 * sum m * (relight(R) - i)^2 + lambda_prior * |R - r0|^2
    (+ lambda1 * sum_k sum m * |R_k - gt_k|^2 when gt is given). Aborts when
    the objective rises for DIVERGENCE_PATIENCE consecutive steps.

    Args:
        frame: (H, W, 3) observation
        weights: (N, 3) lighting weights
        prior: (N, H, W, 3) prior and starting point
        mask: (H, W) mask
        lambda_prior: Prior strength
        iterations: Number of steps
        step_size: Step length; None for default_step_size
        gt: Optional (N, H, W, 3) ground truth
        lw: Loss weights

    Returns:
        Tuple of (final array, objective trace including the starting value)
    """
    if step_size is None:
        step_size = default_step_size(weights, lambda_prior, lw, gt is not None)
    use_gt = gt is not None and lw.lambda1 > 0
    m = mask[None, :, :, None]

    olats = np.array(prior, dtype=np.float64)
    trace = [_objective(olats, weights, frame, prior, mask, lambda_prior, gt, lw)]
    rising = 0
    for step in range(iterations):
        grad = lw.lambda2 * rendering_gradient_array(olats, weights, frame, mask)
        grad += 2.0 * lambda_prior * (olats - prior)
        if use_gt:
            grad += 2.0 * lw.lambda1 * m * (olats - gt)
        olats = olats - step_size * grad

        value = _objective(olats, weights, frame, prior, mask, lambda_prior, gt, lw)
        if not np.isfinite(value):
            raise EstimationError(f"Objective became non-finite at step {step + 1} (step size {step_size:g})")
        rising = rising + 1 if value > trace[-1] else 0
        trace.append(value)
        if rising >= DIVERGENCE_PATIENCE:
            raise EstimationError(
                f"Diverged: objective rose for {rising} consecutive steps, "
                f"reaching {value:.6g} at step {step + 1} (step size {step_size:g})"
            )
    return olats, trace


def estimate_field_iterative(
    frame: ImageF,
    w: LightingWeights,
    r0: ReflectanceField,
    mask: MaskImage,
    cfg: EstimationConfig,
    gt: Optional[ReflectanceField] = None,
    lw: LossWeights = LossWeights(),
) -> FieldEstimate:
    """
    Estimate a frame's reflectance field by gradient descent

    Args:
        frame: Observed frame
        w: Lighting weights of the frame
        r0: Prior field and starting point
        mask: Subject mask
        cfg: Estimator settings
        gt: Optional ground-truth field for the reconstruction term
        lw: Loss weights

    Returns:
        The estimate and its objective trace
    """
    _check_inputs(frame, w, r0, mask)
    if gt is not None:
        check_dims(r0.dims, gt.dims, "ground-truth field")
        if gt.count != r0.count:
            raise DimensionMismatchError(f"Ground truth has {gt.count} OLATs, prior {r0.count}")
    olats, trace = descend(
        frame.data,
        w.weights,
        r0.olats,
        mask.data,
        cfg.lambda_prior,
        cfg.iterations,
        cfg.step_size,
        gt.olats if gt is not None else None,
        lw,
    )
    logger.debug(f"Gradient descent: objective {trace[0]:.6g} -> {trace[-1]:.6g} in {len(trace) - 1} steps")
    return FieldEstimate(_to_field(olats, r0.basis_ids), tuple(trace))


# --- batch driver -------------------------------------------------------------

def estimate_frame(
    frame: ImageF,
    mask: MaskImage,
    w: LightingWeights,
    ex: ExemplarSet,
    cfg: EstimationConfig,
    lw: LossWeights = LossWeights(),
) -> FieldEstimate:
    """
    Blend exemplars, build the prior and solve for one frame

    Args:
        frame: Observed frame
        mask: Subject mask
        w: Interview lighting weights
        ex: Exemplar set
        cfg: Estimator settings
        lw: Loss weights (iterative method)

    Returns:
        The frame's estimate
    """
    blend = exemplar_blend(frame, ex, mask, cfg.blend_temperature)
    r0 = prior_field(blend, ex)
    if cfg.method == "iterative":
        result = estimate_field_iterative(frame, w, r0, mask, cfg, None, lw)
        return FieldEstimate(result.field, result.loss_trace, tuple(blend))

    _check_inputs(frame, w, r0, mask)
    solution = solve_ridge(frame.data, w.weights, r0.olats, mask.data, cfg.lambda_prior)
    objective = _objective(solution, w.weights, frame.data, r0.olats, mask.data, cfg.lambda_prior)
    return FieldEstimate(_to_field(solution, r0.basis_ids), (objective,), tuple(blend))


def estimate_video(
    frames: Sequence[ImageF],
    masks: Sequence[MaskImage],
    w: LightingWeights,
    ex: ExemplarSet,
    cfg: EstimationConfig,
    lw: LossWeights = LossWeights(),
    jobs: int = 1,
) -> List[FieldEstimate]:
    """
    Estimate a reflectance field for every frame of a video

    Frames are independent and run on up to `jobs` worker threads; results keep
    the input order.

    Args:
        frames: Observed frames
        masks: One mask per frame
        w: Interview lighting weights
        ex: Exemplar set
        cfg: Estimator settings
        lw: Loss weights (iterative method)
        jobs: Worker count

    Returns:
        One estimate per frame
    """
    if len(frames) != len(masks):
        raise DimensionMismatchError(f"{len(frames)} frames but {len(masks)} masks")
    check_field_weights(ex.poses[0].field, w)

    def work(index: int) -> FieldEstimate:
        try:
            return estimate_frame(frames[index], masks[index], w, ex, cfg, lw)
        except EstimationError as e:
            if e.frame_index is not None:
                raise
            raise EstimationError(str(e), frame_index=index) from e
        except RelightError as e:
            raise EstimationError(str(e), frame_index=index) from e

    logger.info(f"Estimating {len(frames)} frames with {cfg.method} on {jobs} worker(s)")
    if jobs <= 1 or len(frames) <= 1:
        return [work(i) for i in range(len(frames))]
    with ThreadPoolExecutor(max_workers=jobs) as executor:
        return list(executor.map(work, range(len(frames))))
