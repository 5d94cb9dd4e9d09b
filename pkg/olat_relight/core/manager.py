#!/usr/bin/env python3
"""
OLAT Relight manager
Orchestrates the relighting pipeline for the command-line interface
"""

import os
import json
import logging
from typing import Dict, List, Optional, Sequence, Tuple

from olat_relight.config.config_manager import ConfigManager
from olat_relight.config.manifest import DatasetManifest, load_weights, save_field, save_weights
from olat_relight.core.errors import ConfigError, DimensionMismatchError, RelightError
from olat_relight.core.estimate import ExemplarPose, ExemplarSet, estimate_video
from olat_relight.core.gamma import IDENTITY, DualGamma, fit_dual_gamma, gamma_fit_residual
from olat_relight.core.imagecore import (
    ImageDims,
    ImageF,
    MaskImage,
    crop_to_mask,
    load_image,
    load_mask,
    pad_and_resize,
    pad_and_resize_mask,
    save_image,
)
from olat_relight.core.probe import (
    LatLongMap,
    LightingWeights,
    MirrorBall,
    mirrorball_to_latlong,
    project_environment,
    rotate_environment,
)
from olat_relight.core.relight import (
    LossWeights,
    combined_loss,
    linearize_field,
    reconstruction_loss,
    relight,
    rendering_loss,
    synth_tracking_frame,
)
from olat_relight.core.stagesim import simulate_capture
from olat_relight.extractors import get_extractor
from olat_relight.utils.fs_utils import atomic_write_text, ensure_directory, resolve_jobs
from olat_relight.utils.logger import get_logger

IMAGE_EXTENSIONS = (".pfm", ".png")


class RelightManager:
    """Runs relighting jobs and records them in the operation log"""

    def __init__(self, config: Optional[ConfigManager] = None, log_dir: Optional[str] = None):
        """
        Initialize the manager

        Args:
            config: Resolved configuration layers. If None, defaults plus the user defaults file.
            log_dir: Directory of the operation log. If None, uses the default location.
        """
        self.logger = logging.getLogger(__name__)
        self.config = config or ConfigManager()
        self.job = self.config.job_config()

        # Initialize operation logger
        self.op_logger = get_logger(log_dir)

    def _failed(self, operation: str, target: Optional[str], error: Exception) -> None:
        message = f"{operation.lower().replace('_', '-')} failed: {error}"
        self.logger.error(message)
        self.op_logger.log_operation(operation, target, False, str(error))

    def _output_path(self, path: str) -> str:
        if os.path.splitext(path)[1].lower() in IMAGE_EXTENSIONS:
            return path
        return f"{path}.{self.job.output_format}"

    def _weights_for(
        self,
        manifest: DatasetManifest,
        weights_path: Optional[str],
        env_path: Optional[str],
        rotate: float = 0.0,
    ) -> LightingWeights:
        if weights_path:
            w = load_weights(weights_path)
        elif env_path:
            env = LatLongMap(load_image(env_path))
            if rotate:
                env = rotate_environment(env, rotate)
            w = project_environment(env, manifest.load_footprints(self.job.noise_floor))
        else:
            raise RelightError("Either a weights file or an environment map is required")
        if list(w.basis_ids) != manifest.basis_ids:
            raise DimensionMismatchError(
                f"Weights cover {w.basis_count} basis ids, manifest has {len(manifest.basis_ids)} conditions"
            )
        return w

    def convert_probe(
        self,
        input_path: str,
        output_path: str,
        center: Optional[Tuple[float, float]] = None,
        radius: Optional[float] = None,
    ) -> bool:
        """
        Unwrap a mirror-ball photograph into a lat-long map

        Args:
            input_path: Mirror-ball image
            output_path: Lat-long output image
            center: Ball center (x, y); auto-detected if None
            radius: Ball radius; auto-detected if None

        Returns:
            bool: True if successful, False otherwise
        """
        try:
            image = load_image(input_path)
            auto = MirrorBall.inscribed(image)
            ball = MirrorBall(
                image,
                center if center is not None else auto.center,
                radius if radius is not None else auto.radius,
            )
            env = mirrorball_to_latlong(ball, self.job.env_dims)
            output_path = self._output_path(output_path)
            save_image(env.image, output_path)
            self.logger.info(f"Wrote {env.dims} lat-long map to {output_path}")
            self.op_logger.log_operation("PROBE", input_path, True, f"Center: {ball.center}, Radius: {ball.radius}")
            return True
        except (RelightError, OSError) as e:
            self._failed("PROBE", input_path, e)
            return False

    def project(self, manifest_path: str, env_path: Optional[str], output_path: str) -> bool:
        """
        Project an environment onto the basis footprints and write a weights file

        Args:
            manifest_path: Dataset manifest with basis probes
            env_path: Lat-long environment image; the manifest's interview probe if None
            output_path: Weights file to write

        Returns:
            bool: True if successful, False otherwise
        """
        try:
            manifest = DatasetManifest.load(manifest_path)
            if env_path is None:
                env = manifest.load_interview_probe()
                w = project_environment(env, manifest.load_footprints(self.job.noise_floor))
                env_path = manifest.resolve(manifest.interview_probe)
            else:
                w = self._weights_for(manifest, None, env_path)
            save_weights(w, output_path)
            self.logger.info(f"Wrote {w.basis_count} lighting weights to {output_path}")
            self.op_logger.log_operation("PROJECT", env_path, True, f"Basis: {w.basis_count}")
            return True
        except (RelightError, OSError) as e:
            self._failed("PROJECT", env_path, e)
            return False

    def relight(
        self,
        manifest_path: str,
        output_path: str,
        weights_path: Optional[str] = None,
        env_path: Optional[str] = None,
        gamma: Optional[DualGamma] = None,
        rotate: float = 0.0,
    ) -> bool:
        """
        Relight a reflectance field

        Args:
            manifest_path: Field manifest
            output_path: Relit image; .pfm or .png, else output_format is appended
            weights_path: Weights file
            env_path: Environment to project on the fly when no weights file is given
            gamma: Linearize the OLATs with this curve first
            rotate: Environment rotation about the vertical axis, radians

        Returns:
            bool: True if successful, False otherwise
        """
        try:
            manifest = DatasetManifest.load(manifest_path)
            field = manifest.load_field()
            if gamma is not None:
                field = linearize_field(field, gamma)
            w = self._weights_for(manifest, weights_path, env_path, rotate)
            output_path = self._output_path(output_path)
            save_image(relight(field, w), output_path)
            self.logger.info(f"Wrote relit image to {output_path}")
            self.op_logger.log_operation("RELIGHT", output_path, True, f"Basis: {field.count}")
            return True
        except (RelightError, OSError) as e:
            self._failed("RELIGHT", manifest_path, e)
            return False

    def fit_gamma(
        self,
        manifest_path: str,
        weights_path: str,
        frame_path: str,
        mask_path: str,
    ) -> Optional[Dict[str, float]]:
        """
        Fit the dual-gamma curve of the camera against an interview frame

        Args:
            manifest_path: Manifest of the camera-encoded basis OLATs
            weights_path: Interview lighting weights
            frame_path: First interview frame
            mask_path: Subject mask

        Returns:
            {"gamma1", "gamma2", "residual"}, or None on failure
        """
        try:
            manifest = DatasetManifest.load(manifest_path)
            field = manifest.load_field()
            w = self._weights_for(manifest, weights_path, None)
            frame = load_image(frame_path)
            mask = load_mask(mask_path)
            fitted = fit_dual_gamma(
                field, w, frame, mask,
                bounds=self.job.gamma_bounds,
                grid=self.job.gamma_grid,
                max_iter=self.job.gamma_max_iter,
                xatol=self.job.gamma_xatol,
            )
            result = fitted.as_dict()
            result["residual"] = gamma_fit_residual(field, w, frame, mask, fitted)
            self.op_logger.log_values("GAMMA_FIT", frame_path, result)
            return result
        except (RelightError, OSError) as e:
            self._failed("GAMMA_FIT", frame_path, e)
            return None

    def synthesize(
        self,
        manifest_path: str,
        weights_path: str,
        output_dir: str,
        gamma: Optional[DualGamma] = None,
    ) -> bool:
        """
        Synthesize the tracking frame of every exemplar pose

        Args:
            manifest_path: Manifest listing the exemplar poses
            weights_path: Interview lighting weights
            output_dir: Directory receiving one <pose>.pfm per pose
            gamma: Calibrated dual gamma, identity if None

        Returns:
            bool: True if successful, False otherwise
        """
        try:
            manifest = DatasetManifest.load(manifest_path)
            if not manifest.exemplars:
                raise RelightError(f"{manifest_path} lists no exemplar poses")
            w = self._weights_for(manifest, weights_path, None)
            ensure_directory(output_dir)
            for entry, field in zip(manifest.exemplars, manifest.load_exemplar_fields()):
                frame = synth_tracking_frame(field, w, gamma or IDENTITY)
                save_image(frame, os.path.join(output_dir, f"{entry.pose}.pfm"))
            self.logger.info(f"Synthesized {len(manifest.exemplars)} tracking frames in {output_dir}")
            self.op_logger.log_operation("SYNTH", output_dir, True, f"Poses: {len(manifest.exemplars)}")
            return True
        except (RelightError, OSError) as e:
            self._failed("SYNTH", manifest_path, e)
            return False

    def _exemplar_set(self, manifest: DatasetManifest, w: LightingWeights, g: DualGamma) -> ExemplarSet:
        poses = []
        for entry, field in zip(manifest.exemplars, manifest.load_exemplar_fields()):
            linear = linearize_field(field, g)
            relit = load_image(manifest.resolve(entry.relit)) if entry.relit else relight(linear, w)
            poses.append(ExemplarPose(entry.pose, linear, relit))
        return ExemplarSet(tuple(poses))

    def _frame_subjects(
        self, frames: Sequence[ImageF], masks: Sequence[MaskImage], dims: ImageDims
    ) -> Tuple[List[ImageF], List[MaskImage]]:
        """Crop every frame to its mask, then letterbox it to the basis resolution"""
        out_frames, out_masks = [], []
        for frame, mask in zip(frames, masks):
            frame, mask = crop_to_mask(frame, mask, self.job.crop_margin)
            out_frames.append(pad_and_resize(frame, dims))
            out_masks.append(pad_and_resize_mask(mask, dims))
        self.logger.debug(f"Cropped {len(out_frames)} frames to their subjects at {dims}")
        return out_frames, out_masks

    def estimate(
        self,
        manifest_path: str,
        weights_path: str,
        frame_paths: Sequence[str],
        mask_paths: Sequence[str],
        output_dir: str,
        gamma: Optional[DualGamma] = None,
        jobs: Optional[int] = None,
    ) -> bool:
        """
        Estimate a reflectance field for every interview frame

        Writes output_dir/frame_NNNN/ (olat_KKK.pfm + field.json) per frame and
        output_dir/loss_trace.json.

        Args:
            manifest_path: Manifest listing the exemplar poses
            weights_path: Interview lighting weights
            frame_paths: Interview frames in order
            mask_paths: One mask per frame, or a single mask shared by all
            output_dir: Output directory
            gamma: Calibrated dual gamma, identity if None
            jobs: Worker count; resolved from the environment and config if None

        Returns:
            bool: True if successful, False otherwise
        """
        cfg = None
        try:
            cfg = self.job.estimation()
            manifest = DatasetManifest.load(manifest_path)
            if not manifest.exemplars:
                raise RelightError(f"{manifest_path} lists no exemplar poses")
            w = self._weights_for(manifest, weights_path, None)
            ex = self._exemplar_set(manifest, w, gamma or IDENTITY)

            frames: List[ImageF] = [load_image(p) for p in frame_paths]
            if len(mask_paths) == 1:
                masks = [load_mask(mask_paths[0])] * len(frames)
            else:
                masks = [load_mask(p) for p in mask_paths]
            if len(masks) != len(frames):
                raise DimensionMismatchError(f"{len(frames)} frames but {len(masks)} masks")
            if self.job.crop_to_mask:
                frames, masks = self._frame_subjects(frames, masks, manifest.dims)

            workers = resolve_jobs(jobs, self.job.jobs)
            estimates = estimate_video(frames, masks, w, ex, cfg, self.job.loss_weights(), workers)

            ensure_directory(output_dir)
            records = []
            for i, est in enumerate(estimates):
                save_field(est.field, os.path.join(output_dir, f"frame_{i:04d}"))
                records.append({
                    "frame": i,
                    "source": os.path.basename(frame_paths[i]),
                    "blend": list(est.blend),
                    "loss_trace": list(est.loss_trace),
                })
            atomic_write_text(
                os.path.join(output_dir, "loss_trace.json"),
                json.dumps({"method": cfg.method, "frames": records}, indent=2) + "\n",
            )
            self.logger.info(f"Estimated {len(estimates)} fields in {output_dir}")
            self.op_logger.log_estimate(len(frames), cfg.method, True, f"Workers: {workers}")
            return True
        except (RelightError, OSError) as e:
            self.logger.error(f"estimate failed: {e}")
            self.op_logger.log_estimate(len(frame_paths), cfg.method if cfg else "?", False, str(e))
            return False

    def simulate(
        self,
        output_dir: str,
        basis_count: int = 41,
        size: int = 32,
        poses: int = 3,
        frames: int = 4,
        camera_gamma: Optional[DualGamma] = None,
        seed: int = 0,
        basis: str = "bank",
        subset: Optional[int] = None,
    ) -> Optional[str]:
        """
        Write a simulated light-stage capture

        Args:
            output_dir: Dataset directory
            basis_count: Number of OLAT conditions (lattice size when subset is set)
            size: Image width and height
            poses: Exemplar poses
            frames: Interview frames
            camera_gamma: Gamma-encode the OLATs with this curve
            seed: Random seed
            basis: "bank" or "delta"
            subset: Evenly spread conditions kept from the lattice

        Returns:
            Path of the manifest, or None on failure
        """
        try:
            manifest_path = simulate_capture(
                output_dir,
                basis_count=basis_count,
                size=size,
                env_dims=self.job.env_dims,
                poses=poses,
                frames=frames,
                camera_gamma=camera_gamma,
                seed=seed,
                basis=basis,
                subset=subset,
            )
            count = basis_count if subset is None else f"{subset} of {basis_count}"
            self.op_logger.log_operation("SIMULATE", output_dir, True, f"Basis: {count} ({basis}), Seed: {seed}")
            return manifest_path
        except (RelightError, OSError) as e:
            self._failed("SIMULATE", output_dir, e)
            return None

    def compute_losses(
        self,
        manifest_path: str,
        weights_path: str,
        frame_path: str,
        mask_path: str,
        gt_manifest_path: Optional[str] = None,
    ) -> Optional[Dict[str, Optional[float]]]:
        """
        Evaluate the reconstruction, rendering and combined losses of a predicted field

        Without a ground-truth manifest the reconstruction loss is None and the
        combined loss uses the rendering term only.

        Args:
            manifest_path: Predicted field manifest
            weights_path: Lighting weights of the frame
            frame_path: Observed frame
            mask_path: Subject mask
            gt_manifest_path: Ground-truth field manifest

        Returns:
            {"reconstruction", "rendering", "combined"}, or None on failure
        """
        try:
            manifest = DatasetManifest.load(manifest_path)
            pred = manifest.load_field()
            gt = DatasetManifest.load(gt_manifest_path).load_field() if gt_manifest_path else None
            w = self._weights_for(manifest, weights_path, None)
            frame = load_image(frame_path)
            mask = load_mask(mask_path)
            fx = get_extractor(self.job.extractor)

            lw = self.job.loss_weights()
            if gt is None:
                if not lw.lambda2 > 0.0:
                    raise ConfigError("lambda2 = 0 leaves no loss term without a ground-truth manifest")
                lw = LossWeights(0.0, lw.lambda2)
            result = {
                "reconstruction": reconstruction_loss(pred, gt, mask, fx) if gt is not None else None,
                "rendering": rendering_loss(relight(pred, w), frame, mask, fx),
                "combined": combined_loss(pred, gt, frame, w, mask, fx, lw),
            }
            self.op_logger.log_values(
                "LOSS", frame_path, {k: v for k, v in result.items() if v is not None}
            )
            return result
        except (RelightError, OSError) as e:
            self._failed("LOSS", manifest_path, e)
            return None
