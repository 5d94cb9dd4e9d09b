#!/usr/bin/env python3
"""
Synthetic light stage: a Lambertian sphere under OLAT and environment lighting

The renderers here are brute-force references. A dataset generated from them
is relit by the discrete pipeline and compared with direct integration.
"""

import math
import os
import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from olat_relight.core.errors import GeometryError
from olat_relight.core.gamma import DualGamma, invert_dual_gamma
from olat_relight.core.imagecore import ImageDims, ImageF, MaskImage, load_image, save_image, save_mask
from olat_relight.core.probe import (
    DEFAULT_ENV_DIMS,
    BasisFootprint,
    Direction,
    LatLongMap,
    angles_to_vectors,
    cell_footprints,
    delta_footprints,
    direction_to_pixel,
    footprint_from_probe,
    latlong_directions,
    nearest_direction_labels,
    pixel_to_direction,
    project_environment,
    select_even_subset,
    solid_angle_map,
)
from olat_relight.core.relight import ReflectanceField, relight
from olat_relight.utils.fs_utils import ensure_directory

logger = logging.getLogger(__name__)

BASIS_MODES = ("bank", "delta")
GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass(frozen=True)
class SphereScene:
    """
    Orthographic view of a Lambertian sphere centered in the image

    Attributes:
        albedo: RGB albedo in [0, 1]
        radius: Sphere radius as a fraction of the image half-width, in (0, 1]
        dims: Image dimensions
        ambient: RGB radiance added on the sphere
    """

    albedo: Tuple[float, float, float]
    radius: float = 0.8
    dims: ImageDims = ImageDims(32, 32)
    ambient: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        albedo = tuple(float(a) for a in self.albedo)
        ambient = tuple(float(a) for a in self.ambient)
        if len(albedo) != 3 or not all(0.0 <= a <= 1.0 for a in albedo):
            raise GeometryError(f"Albedo must be an RGB triple in [0, 1], got {self.albedo}")
        if len(ambient) != 3 or not all(a >= 0.0 for a in ambient):
            raise GeometryError(f"Ambient must be a nonnegative RGB triple, got {self.ambient}")
        if not 0.0 < self.radius <= 1.0:
            raise GeometryError(f"Sphere radius must be in (0, 1], got {self.radius}")
        object.__setattr__(self, "albedo", albedo)
        object.__setattr__(self, "ambient", ambient)

    def without_ambient(self) -> "SphereScene":
        return SphereScene(self.albedo, self.radius, self.dims)


def sphere_geometry(scene: SphereScene) -> Tuple[np.ndarray, np.ndarray]:
    """
    Coverage and surface normals of the sphere

    Returns:
        Tuple of ((H, W) bool coverage, (H, W, 3) unit normals, zero off the sphere)
    """
    half = scene.dims.width / 2.0
    x = (np.arange(scene.dims.width) + 0.5 - half) / half
    y = -(np.arange(scene.dims.height) + 0.5 - scene.dims.height / 2.0) / half
    xx, yy = np.meshgrid(x, y)
    r2 = scene.radius ** 2
    rho2 = xx * xx + yy * yy
    covered = rho2 <= r2
    zz = np.sqrt(np.maximum(r2 - rho2, 0.0))
    normals = np.stack([xx, yy, zz], axis=-1) / scene.radius
    normals[~covered] = 0.0
    return covered, normals


def sphere_mask(scene: SphereScene) -> MaskImage:
    """Binary mask of the pixels covered by the sphere"""
    covered, _ = sphere_geometry(scene)
    return MaskImage(covered.astype(np.float64))


def _shade(scene: SphereScene, covered: np.ndarray, shading: np.ndarray) -> ImageF:
    """Albedo x shading (+ ambient) on covered pixels, black background"""
    out = np.zeros(scene.dims.shape + (3,))
    out[covered] = shading[covered][:, None] * np.asarray(scene.albedo) + np.asarray(scene.ambient)
    return ImageF(out)


def render_olat(scene: SphereScene, direction: Direction) -> ImageF:
    """
    Render the sphere lit by a single distant light of unit intensity

    radiance = albedo * max(0, n . l) + ambient on the sphere, 0 elsewhere.

    Args:
        scene: Sphere scene
        direction: Light direction (theta, phi)

    Returns:
        The rendered image
    """
    covered, normals = sphere_geometry(scene)
    light = angles_to_vectors(*direction)
    return _shade(scene, covered, np.maximum(normals @ light, 0.0))


def _transport(scene: SphereScene, env_dims: ImageDims) -> Tuple[np.ndarray, np.ndarray]:
    """Coverage and the (P, Q) matrix max(0, n . d(q)) * omega(q) / pi over covered pixels"""
    covered, normals = sphere_geometry(scene)
    directions = latlong_directions(env_dims).reshape(-1, 3)
    omega = solid_angle_map(env_dims).ravel()
    cosines = np.maximum(normals[covered] @ directions.T, 0.0)
    return covered, cosines * (omega / math.pi)


def render_env(scene: SphereScene, env: LatLongMap) -> ImageF:
    """
    Render the sphere under a full environment by direct integration

    radiance = ambient + albedo * sum_p env(p) * max(0, n . d(p)) * omega(p) / pi,
    summed over every environment pixel.

    Args:
        scene: Sphere scene
        env: Lat-long environment

    Returns:
        The rendered image
    """
    covered, transport = _transport(scene, env.dims)
    out = np.zeros(scene.dims.shape + (3,))
    out[covered] = transport @ env.data.reshape(-1, 3) * np.asarray(scene.albedo) + np.asarray(scene.ambient)
    return ImageF(out)


def fibonacci_directions(count: int) -> List[Direction]:
    """
    Near-uniform directions on the sphere (Fibonacci lattice)

    Args:
        count: Number of directions

    Returns:
        (theta, phi) pairs, phi wrapped to [-pi, pi)
    """
    if count < 1:
        raise GeometryError("Need at least one direction")
    directions = []
    for i in range(count):
        theta = math.acos(1.0 - (2.0 * i + 1.0) / count)
        phi = (i * GOLDEN_ANGLE + math.pi) % (2.0 * math.pi) - math.pi
        directions.append((theta, phi))
    return directions


def snap_directions(directions: Sequence[Direction], dims: ImageDims) -> List[Direction]:
    """Move every direction to the center of its lat-long pixel"""
    return [pixel_to_direction(direction_to_pixel(d, dims), dims) for d in directions]


def generate_dataset(
    scene: SphereScene,
    directions: Sequence[Direction],
    dims: ImageDims = DEFAULT_ENV_DIMS,
    basis: str = "bank",
) -> Tuple[ReflectanceField, List[BasisFootprint]]:
    """
    Render a ground-truth OLAT dataset with matching basis footprints

    Directions are snapped to lat-long pixel centers and ambient light is
    dropped. With basis="bank" every basis condition lights its whole Voronoi
    cell of the sphere at unit radiance and its footprint is that cell. With
    basis="delta" each condition is a point light scaled by its cell's solid
    angle over pi, with a single-pixel footprint.

    Args:
        scene: Sphere scene
        directions: Basis directions (theta, phi)
        dims: Lat-long dimensions of the footprints
        basis: "bank" or "delta"

    Returns:
        Tuple of (reflectance field, footprints)
    """
    if basis not in BASIS_MODES:
        raise GeometryError(f"basis must be one of {BASIS_MODES}, got {basis!r}")
    snapped = snap_directions(directions, dims)
    # rejects directions that collide on one pixel
    deltas = delta_footprints(snapped, dims)
    scene = scene.without_ambient()
    labels = nearest_direction_labels(snapped, dims).ravel()

    if basis == "bank":
        footprints = cell_footprints(snapped, dims)
        covered, transport = _transport(scene, dims)
        cells = np.zeros((labels.size, len(snapped)))
        cells[np.arange(labels.size), labels] = 1.0
        shading = np.zeros(scene.dims.shape + (len(snapped),))
        shading[covered] = transport @ cells
        albedo = np.asarray(scene.albedo)
        olats = np.moveaxis(shading, -1, 0)[..., None] * albedo
    else:
        footprints = deltas
        omega = solid_angle_map(dims).ravel()
        cell_omega = np.bincount(labels, weights=omega, minlength=len(snapped))
        olats = np.stack([
            render_olat(scene, d).data * (cell_omega[k] / math.pi)
            for k, d in enumerate(snapped)
        ])

    logger.debug(f"Generated {len(snapped)}-condition {basis} dataset at {scene.dims}")
    return ReflectanceField(olats), footprints


def smooth_environment(dims: ImageDims = DEFAULT_ENV_DIMS, rng: Optional[np.random.Generator] = None) -> LatLongMap:
    """
    Random positive low-frequency environment

    Per channel: a constant level c0 in [0.5, 1.5], a linear term of magnitude
    at most 0.2 c0, and a broad lobe of amplitude at most 0.2 c0.

    Args:
        dims: Lat-long dimensions
        rng: Random generator

    Returns:
        The environment
    """
    rng = rng if rng is not None else np.random.default_rng()
    directions = latlong_directions(dims)
    lobe_axis = rng.normal(size=3)
    lobe_axis /= np.linalg.norm(lobe_axis)
    lobe = np.exp(directions @ lobe_axis - 1.0)

    channels = []
    for _ in range(3):
        level = rng.uniform(0.5, 1.5)
        tilt = rng.normal(size=3)
        tilt *= rng.uniform(0.0, 0.2) * level / np.linalg.norm(tilt)
        channels.append(level + directions @ tilt + rng.uniform(0.0, 0.2) * level * lobe)
    return LatLongMap(ImageF(np.maximum(np.stack(channels, axis=-1), 0.0)))


def _encode(field: ReflectanceField, camera_gamma: Optional[DualGamma]) -> List[ImageF]:
    images = field.images()
    if camera_gamma is None:
        return images
    return [invert_dual_gamma(img, camera_gamma) for img in images]


def _footprint_probe(footprint: BasisFootprint) -> LatLongMap:
    """Unit-radiance lat-long probe covering a footprint's support"""
    support = (footprint.values > 0).astype(np.float64)
    return LatLongMap(ImageF(np.repeat(support[:, :, None], 3, axis=2)))


def simulate_capture(
    out_dir: str,
    basis_count: int = 41,
    size: int = 32,
    env_dims: ImageDims = DEFAULT_ENV_DIMS,
    poses: int = 3,
    frames: int = 4,
    camera_gamma: Optional[DualGamma] = None,
    seed: int = 0,
    basis: str = "bank",
    subset: Optional[int] = None,
) -> str:
    """
    Write a complete simulated capture to disk

    Layout under out_dir: olat/ (basis field of pose 0), probes/ (lat-long
    probe per basis condition), exemplars/pose_P/ (one field per pose),
    interview_probe.pfm, frames/ (interview frames lit by the interview
    probe), masks/ (subject masks) and manifest.json. frame_0000 is the
    pose-0 basis relit with the projected probe, so it calibrates the camera
    gamma; later frames integrate the probe over albedos walking from pose 0
    to the last pose.

    Args:
        out_dir: Output directory
        basis_count: Number of OLAT conditions (lattice size when subset is set)
        size: Image width and height
        env_dims: Lat-long resolution
        poses: Number of exemplar poses (albedo variations)
        frames: Number of interview frames
        camera_gamma: If set, OLAT images are gamma-encoded with this curve
        seed: Random seed
        basis: "bank" or "delta"
        subset: If set, keep this many evenly spread directions of the
            basis_count lattice as the basis

    Returns:
        Path of the written manifest
    """
    from olat_relight.config.manifest import BasisEntry, DatasetManifest, ExemplarEntry

    if poses < 1 or frames < 0:
        raise GeometryError("Need at least one pose and a nonnegative frame count")
    rng = np.random.default_rng(seed)
    dims = ImageDims(size, size)
    directions = fibonacci_directions(basis_count)
    if subset is not None:
        directions = [directions[i] for i in select_even_subset(directions, subset)]
    albedos = rng.uniform(0.3, 0.9, size=(poses, 3))

    for sub in ("olat", "probes", "frames", "masks", "exemplars"):
        ensure_directory(os.path.join(out_dir, sub))

    exemplars = []
    basis_entries = []
    stage_field = None
    stage_footprints = []
    for p, albedo in enumerate(albedos):
        field, footprints = generate_dataset(SphereScene(tuple(albedo), dims=dims), directions, env_dims, basis)
        pose_dir = ensure_directory(os.path.join(out_dir, "exemplars", f"pose_{p}"))
        paths = []
        for k, img in enumerate(_encode(field, camera_gamma)):
            rel = os.path.join("exemplars", f"pose_{p}", f"olat_{k:03d}.pfm")
            save_image(img, os.path.join(out_dir, rel))
            paths.append(rel)
            if p == 0:
                olat_rel = os.path.join("olat", f"olat_{k:03d}.pfm")
                probe_rel = os.path.join("probes", f"probe_{k:03d}.pfm")
                probe = _footprint_probe(footprints[k])
                save_image(img, os.path.join(out_dir, olat_rel))
                save_image(probe.image, os.path.join(out_dir, probe_rel))
                basis_entries.append(BasisEntry(k, olat_rel, probe_rel))
                stage_footprints.append(footprint_from_probe(probe))
        if p == 0:
            stage_field = field
        exemplars.append(ExemplarEntry(f"pose_{p}", paths, None))
        logger.debug(f"Wrote exemplar pose {p} to {pose_dir}")

    probe_path = os.path.join(out_dir, "interview_probe.pfm")
    save_image(smooth_environment(env_dims, rng).image, probe_path)
    # the stored float32 probe, as every command reads it
    env = LatLongMap(load_image(probe_path))

    mask = sphere_mask(SphereScene((0.5, 0.5, 0.5), dims=dims))
    save_mask(mask, os.path.join(out_dir, "masks", "subject.png"))
    for f in range(frames):
        if f == 0:
            # calibration frame: the pose-0 basis relit by the stage
            frame = relight(stage_field, project_environment(env, stage_footprints))
        else:
            t = f / (frames - 1) * (poses - 1)
            lo = min(int(math.floor(t)), poses - 1)
            hi = min(lo + 1, poses - 1)
            albedo = (1.0 - (t - lo)) * albedos[lo] + (t - lo) * albedos[hi]
            frame = render_env(SphereScene(tuple(albedo), dims=dims), env)
        save_image(frame, os.path.join(out_dir, "frames", f"frame_{f:04d}.pfm"))
        save_mask(mask, os.path.join(out_dir, "masks", f"frame_{f:04d}.png"))

    manifest = DatasetManifest(
        root=os.path.abspath(out_dir),
        dims=dims,
        basis=basis_entries,
        exemplars=exemplars,
        interview_probe="interview_probe.pfm",
        mask_dir="masks",
    )
    manifest_path = os.path.join(out_dir, "manifest.json")
    manifest.save(manifest_path)
    logger.info(f"Simulated {len(directions)}-condition capture with {poses} poses and {frames} frames in {out_dir}")
    return manifest_path
