#!/usr/bin/env python3
"""
Light probes, latitude-longitude environments and OLAT basis projection

Lat-long convention, shared by every module: pixel (u, v) of a W x H map
looks along longitude phi = 2*pi*(u + 0.5)/W - pi and colatitude
theta = pi*(v + 0.5)/H (0 at the top). The world direction is
d = (sin(theta)cos(phi), cos(theta), sin(theta)sin(phi)): +y is up and +z
points toward the camera.
"""

import math
import logging
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import ndimage

from olat_relight.core.errors import (
    DimensionMismatchError,
    FootprintError,
    GeometryError,
    RelightError,
)
from olat_relight.core.imagecore import ImageDims, ImageF, check_dims

logger = logging.getLogger(__name__)

LUMINANCE = np.array([0.2126, 0.7152, 0.0722])
DEFAULT_NOISE_FLOOR = 0.05
DEFAULT_ENV_DIMS = ImageDims(64, 32)

Direction = Tuple[float, float]


def check_latlong_dims(dims: ImageDims) -> None:
    """Raise GeometryError unless width = 2 x height"""
    if dims.width != 2 * dims.height:
        raise GeometryError(f"Lat-long maps must be 2:1, got {dims}")


@dataclass(frozen=True)
class MirrorBall:
    """
    Photograph of a mirrored sphere

    Attributes:
        image: The probe photograph
        center: Ball center (x, y) in pixel coordinates (pixel centers are integers)
        radius: Ball radius in pixels
    """

    image: ImageF
    center: Tuple[float, float]
    radius: float

    def __post_init__(self):
        cx, cy = (float(c) for c in self.center)
        r = float(self.radius)
        if not r > 2.0:
            raise GeometryError(f"Mirror ball radius must exceed 2 pixels, got {r}")
        eps = 1e-9
        if (
            cx - r < -0.5 - eps
            or cy - r < -0.5 - eps
            or cx + r > self.image.width - 0.5 + eps
            or cy + r > self.image.height - 0.5 + eps
        ):
            raise GeometryError(
                f"Mirror ball circle (center=({cx}, {cy}), radius={r}) "
                f"exceeds the {self.image.dims} image"
            )
        object.__setattr__(self, "center", (cx, cy))
        object.__setattr__(self, "radius", r)

    @classmethod
    def inscribed(cls, image: ImageF) -> "MirrorBall":
        """Largest circle inscribed in the image, centered"""
        return cls(
            image=image,
            center=((image.width - 1) / 2.0, (image.height - 1) / 2.0),
            radius=min(image.width, image.height) / 2.0,
        )


@dataclass(frozen=True, eq=False)
class LatLongMap:
    """Latitude-longitude HDR radiance map"""

    image: ImageF

    def __post_init__(self):
        check_latlong_dims(self.image.dims)

    @property
    def data(self) -> np.ndarray:
        return self.image.data

    @property
    def dims(self) -> ImageDims:
        return self.image.dims

    @classmethod
    def from_array(cls, data: np.ndarray) -> "LatLongMap":
        return cls(ImageF(data))


@dataclass(frozen=True, eq=False)
class BasisFootprint:
    """
    Normalized angular footprint of one OLAT lighting condition

    Attributes:
        values: Read-only (H, W) nonnegative array with sum(values * omega) = 1
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionMismatchError(f"Footprint must be 2-D, got shape {arr.shape}")
        dims = ImageDims(arr.shape[1], arr.shape[0])
        check_latlong_dims(dims)
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise FootprintError("Footprint must be finite and nonnegative")
        integral = float((arr * solid_angle_map(dims)).sum())
        if abs(integral - 1.0) > 1e-6:
            raise FootprintError(f"Footprint integrates to {integral}, expected 1")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def dims(self) -> ImageDims:
        return ImageDims(self.values.shape[1], self.values.shape[0])

    @classmethod
    def normalized(cls, raw: np.ndarray) -> "BasisFootprint":
        """Scale a nonnegative (H, W) array so that it integrates to 1"""
        raw = np.asarray(raw, dtype=np.float64)
        dims = ImageDims(raw.shape[1], raw.shape[0])
        check_latlong_dims(dims)
        mass = float((raw * solid_angle_map(dims)).sum())
        if not mass > 0.0:
            raise FootprintError("Footprint is empty")
        return cls(raw / mass)


@dataclass(frozen=True, eq=False)
class LightingWeights:
    """
    Per-basis, per-channel projection of an environment onto the OLAT basis

    Attributes:
        weights: Read-only (N, 3) nonnegative array
        basis_ids: Basis id of each row
    """

    weights: np.ndarray
    basis_ids: Tuple[int, ...] = ()

    def __post_init__(self):
        arr = np.array(self.weights, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] < 1:
            raise DimensionMismatchError(f"Lighting weights must have shape (N, 3), got {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise RelightError("Lighting weights must be finite and nonnegative")
        ids = tuple(int(i) for i in self.basis_ids) or tuple(range(arr.shape[0]))
        if len(ids) != arr.shape[0]:
            raise DimensionMismatchError(
                f"{len(ids)} basis ids given for {arr.shape[0]} weight rows"
            )
        arr.flags.writeable = False
        object.__setattr__(self, "weights", arr)
        object.__setattr__(self, "basis_ids", ids)

    @property
    def basis_count(self) -> int:
        return self.weights.shape[0]

    def __add__(self, other: "LightingWeights") -> "LightingWeights":
        if self.basis_ids != other.basis_ids:
            raise DimensionMismatchError("Cannot add weights over different bases")
        return LightingWeights(self.weights + other.weights, self.basis_ids)

    def scaled(self, factor: float) -> "LightingWeights":
        return LightingWeights(self.weights * float(factor), self.basis_ids)

    @classmethod
    def one_hot(cls, count: int, index: int) -> "LightingWeights":
        weights = np.zeros((count, 3))
        weights[index] = 1.0
        return cls(weights)


# --- sphere geometry ----------------------------------------------------------

def latlong_angles(dims: ImageDims) -> Tuple[np.ndarray, np.ndarray]:
    """
    Colatitude of every row and longitude of every column

    Returns:
        Tuple of (theta with shape (H,), phi with shape (W,))
    """
    check_latlong_dims(dims)
    theta = math.pi * (np.arange(dims.height) + 0.5) / dims.height
    phi = 2.0 * math.pi * (np.arange(dims.width) + 0.5) / dims.width - math.pi
    return theta, phi


def angles_to_vectors(theta, phi) -> np.ndarray:
    """Unit direction vectors for broadcastable colatitude/longitude arrays"""
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    sin_t = np.sin(theta)
    return np.stack(
        np.broadcast_arrays(sin_t * np.cos(phi), np.cos(theta), sin_t * np.sin(phi)),
        axis=-1,
    )


def directions_to_vectors(directions: Sequence[Direction]) -> np.ndarray:
    """(K, 3) unit vectors for a list of (theta, phi) directions"""
    arr = np.asarray(directions, dtype=np.float64).reshape(-1, 2)
    return angles_to_vectors(arr[:, 0], arr[:, 1])


def latlong_directions(dims: ImageDims) -> np.ndarray:
    """(H, W, 3) unit direction of every lat-long pixel"""
    theta, phi = latlong_angles(dims)
    return angles_to_vectors(theta[:, None], phi[None, :])


def solid_angle_map(dims: ImageDims) -> np.ndarray:
    """
    Solid angle of every lat-long pixel

    omega(u, v) = sin(theta_v) * (pi / H) * (2 * pi / W)

    Args:
        dims: Lat-long dimensions (2:1)

    Returns:
        (H, W) array of solid angles
    """
    theta, _ = latlong_angles(dims)
    row = np.sin(theta) * (math.pi / dims.height) * (2.0 * math.pi / dims.width)
    return np.repeat(row[:, None], dims.width, axis=1)


def direction_to_pixel(direction: Direction, dims: ImageDims) -> Tuple[int, int]:
    """
    Lat-long pixel (u, v) containing a direction

    Args:
        direction: (theta, phi) in radians
        dims: Lat-long dimensions

    Returns:
        Tuple of (column u, row v)
    """
    check_latlong_dims(dims)
    theta, phi = direction
    u = int(math.floor((phi + math.pi) / (2.0 * math.pi) * dims.width)) % dims.width
    v = min(max(int(math.floor(theta / math.pi * dims.height)), 0), dims.height - 1)
    return u, v


def pixel_to_direction(pixel: Tuple[int, int], dims: ImageDims) -> Direction:
    """(theta, phi) at the center of lat-long pixel (u, v)"""
    u, v = pixel
    return (
        math.pi * (v + 0.5) / dims.height,
        2.0 * math.pi * (u + 0.5) / dims.width - math.pi,
    )


# --- probes -------------------------------------------------------------------

def mirrorball_to_latlong(ball: MirrorBall, out_dims: ImageDims = DEFAULT_ENV_DIMS) -> LatLongMap:
    """
    Resample a mirror-ball photograph into a lat-long environment map

    Each lat-long direction d is reflected off the ball toward the camera: the
    ball normal is n = normalize(d + (0, 0, 1)), and the photograph is sampled
    bilinearly at (cx + n.x * r, cy - n.y * r).

    Args:
        ball: Probe photograph with its circle
        out_dims: Lat-long dimensions (2:1)

    Returns:
        The environment map
    """
    check_latlong_dims(out_dims)
    cx, cy = ball.center
    r = ball.radius

    half = latlong_directions(out_dims) + np.array([0.0, 0.0, 1.0])
    norm = np.linalg.norm(half, axis=-1)
    # the backward pole reflects onto the rim
    backward = norm < 1e-12
    normal = half / np.where(backward, 1.0, norm)[..., None]
    normal[backward] = (0.0, 1.0, 0.0)

    dx = normal[..., 0] * r
    dy = -normal[..., 1] * r
    dist = np.hypot(dx, dy)
    shrink = np.where(dist > r, r / np.maximum(dist, 1e-12), 1.0)
    coords = [cy + dy * shrink, cx + dx * shrink]

    data = ball.image.data
    channels = [
        ndimage.map_coordinates(data[:, :, c], coords, order=1, mode="nearest")
        for c in range(3)
    ]
    out = np.maximum(np.stack(channels, axis=-1), 0.0)
    logger.debug(f"Converted {ball.image.dims} mirror ball to {out_dims} lat-long map")
    return LatLongMap(ImageF(out))


def footprint_from_probe(olat_probe: LatLongMap, noise_floor: float = DEFAULT_NOISE_FLOOR) -> BasisFootprint:
    """
    Derive a basis footprint from the probe captured under one OLAT condition

    The probe luminance is thresholded at noise_floor x its maximum, then
    normalized to unit solid-angle integral.

    Args:
        olat_probe: Lat-long probe of the lighting condition
        noise_floor: Fraction of the peak luminance below which pixels are dropped

    Returns:
        The normalized footprint
    """
    lum = olat_probe.data @ LUMINANCE
    peak = float(lum.max())
    if not peak > 0.0:
        raise FootprintError("OLAT probe is black")
    lum = np.where(lum < noise_floor * peak, 0.0, lum)
    return BasisFootprint.normalized(lum)


def project_environment(env: LatLongMap, footprints: Sequence[BasisFootprint]) -> LightingWeights:
    """
    Project an environment onto the OLAT basis

    w[k, c] = sum_p F_k(p) * env_c(p) * omega(p), the footprint-weighted
    average radiance seen by basis k.

    Args:
        env: Target environment
        footprints: One footprint per basis condition, in basis-id order

    Returns:
        The lighting weights
    """
    if not footprints:
        raise DimensionMismatchError("project_environment needs at least one footprint")
    for k, footprint in enumerate(footprints):
        check_dims(env.dims, footprint.dims, f"footprint {k} vs environment")

    omega = solid_angle_map(env.dims)
    stack = np.stack([f.values for f in footprints]) * omega
    weights = np.einsum("khw,hwc->kc", stack, env.data)
    return LightingWeights(np.maximum(weights, 0.0))


def delta_footprints(directions: Sequence[Direction], dims: ImageDims = DEFAULT_ENV_DIMS) -> List[BasisFootprint]:
    """
    Single-pixel footprints at the lat-long pixel nearest each direction

    Args:
        directions: (theta, phi) per basis condition
        dims: Lat-long dimensions

    Returns:
        One footprint per direction, in input order
    """
    omega = solid_angle_map(dims)
    seen = {}
    footprints = []
    for k, direction in enumerate(directions):
        u, v = direction_to_pixel(direction, dims)
        if (u, v) in seen:
            raise GeometryError(
                f"Directions {seen[(u, v)]} and {k} fall on the same lat-long pixel ({u}, {v})"
            )
        seen[(u, v)] = k
        values = np.zeros(dims.shape)
        values[v, u] = 1.0 / omega[v, u]
        footprints.append(BasisFootprint(values))
    return footprints


def nearest_direction_labels(directions: Sequence[Direction], dims: ImageDims) -> np.ndarray:
    """(H, W) index of the basis direction nearest to every lat-long pixel"""
    basis = directions_to_vectors(directions)
    cosines = np.einsum("hwi,ki->hwk", latlong_directions(dims), basis)
    return np.argmax(cosines, axis=-1)


def cell_footprints(directions: Sequence[Direction], dims: ImageDims = DEFAULT_ENV_DIMS) -> List[BasisFootprint]:
    """
    Footprints covering the spherical Voronoi cell of each basis direction

    Models a bank of lights: every lat-long pixel belongs to its nearest basis
    direction, and each cell is normalized to unit integral.

    Args:
        directions: (theta, phi) per basis condition
        dims: Lat-long dimensions

    Returns:
        One footprint per direction, in input order
    """
    labels = nearest_direction_labels(directions, dims)
    footprints = []
    for k in range(len(directions)):
        cell = (labels == k).astype(np.float64)
        if not cell.any():
            raise FootprintError(f"Basis direction {k} owns no lat-long pixel at {dims}")
        footprints.append(BasisFootprint.normalized(cell))
    return footprints


def rotate_environment(env: LatLongMap, angle: float) -> LatLongMap:
    """
    Rotate an environment about the vertical axis

    Content at longitude phi moves to phi + angle; columns are interpolated
    linearly with wrap-around.

    Args:
        env: Environment to rotate
        angle: Rotation in radians

    Returns:
        The rotated environment
    """
    height, width = env.dims.shape
    shift = angle / (2.0 * math.pi) * width
    rows, cols = np.meshgrid(
        np.arange(height, dtype=np.float64),
        np.arange(width, dtype=np.float64) - shift,
        indexing="ij",
    )
    channels = [
        ndimage.map_coordinates(env.data[:, :, c], [rows, cols], order=1, mode="grid-wrap")
        for c in range(3)
    ]
    return LatLongMap(ImageF(np.maximum(np.stack(channels, axis=-1), 0.0)))


def select_even_subset(directions: Sequence[Direction], count: int) -> List[int]:
    """
    Pick an evenly spread subset of basis directions

    Farthest-point sampling: start at the direction closest to the zenith,
    then repeatedly add the direction farthest from everything chosen so far.
    Ties resolve to the lowest index.

    Args:
        directions: Candidate (theta, phi) directions
        count: Number of directions to keep

    Returns:
        Indices into directions, in selection order
    """
    if not 1 <= count <= len(directions):
        raise GeometryError(f"Cannot select {count} of {len(directions)} directions")

    vectors = directions_to_vectors(directions)
    chosen = [int(np.argmax(vectors[:, 1]))]
    # angular distance proxy: 1 - cos
    nearest = 1.0 - vectors @ vectors[chosen[0]]
    while len(chosen) < count:
        nearest[chosen] = -np.inf
        pick = int(np.argmax(nearest))
        chosen.append(pick)
        nearest = np.minimum(nearest, 1.0 - vectors @ vectors[pick])
    return chosen
