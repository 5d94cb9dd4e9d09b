#!/usr/bin/env python3
"""
Command-line interface for OLAT Relight
"""

import sys
import json
import argparse
import logging
import colorama
from typing import List, Optional

from olat_relight import __version__
from olat_relight.config.config_manager import ConfigManager
from olat_relight.core.errors import RelightError
from olat_relight.core.gamma import DualGamma
from olat_relight.core.manager import RelightManager
from olat_relight.core.stagesim import BASIS_MODES

# Initialize colorama
colorama.init()

BOLD = colorama.Style.BRIGHT
RESET = colorama.Style.RESET_ALL

EXIT_OK = 0
EXIT_FAILURE = 1


def setup_parser() -> argparse.ArgumentParser:
    """
    Set up the argument parser for the CLI

    Returns:
        The configured argument parser
    """
    parser = argparse.ArgumentParser(
        prog="olat-relight",
        description="OLAT reflectance-field relighting",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Simulate a light-stage capture
  olat-relight simulate --output-dir stage --basis-count 41

  # Project the interview lighting onto the basis
  olat-relight project --manifest stage/manifest.json --env stage/interview_probe.pfm --output w.json

  # Relight the basis field
  olat-relight relight --manifest stage/manifest.json --weights w.json --output relit.pfm

  # Estimate per-frame fields
  olat-relight estimate --manifest stage/manifest.json --weights w.json \\
      --frames stage/frames/frame_0000.pfm --masks stage/masks/subject.png --output-dir fields
"""
    )

    parser.add_argument("--version", action="store_true", help="Print the version and exit")
    parser.add_argument("--log-dir", help="Directory of the operation log")
    parser.add_argument("--verbose", action="store_true", help="Log debug messages")

    commands = parser.add_subparsers(dest="command", metavar="COMMAND")

    def command(name: str, help_text: str) -> argparse.ArgumentParser:
        sub = commands.add_parser(name, help=help_text, description=help_text)
        sub.add_argument("--config", metavar="FILE", help="key=value job file")
        return sub

    probe = command("probe", "Unwrap a mirror-ball photograph into a lat-long map")
    probe.add_argument("--input", required=True, help="Mirror-ball image (PFM or PNG)")
    probe.add_argument("--output", required=True, help="Lat-long output image")
    probe.add_argument("--center", nargs=2, type=float, metavar=("X", "Y"), help="Ball center in pixels")
    probe.add_argument("--radius", type=float, help="Ball radius in pixels")
    probe.add_argument("--env-width", type=int, help="Width of the lat-long map")

    project = command("project", "Project an environment onto the basis")
    project.add_argument("--manifest", required=True, help="Dataset manifest with basis probes")
    project.add_argument("--env", help="Lat-long environment image (default: the manifest's interview probe)")
    project.add_argument("--output", required=True, help="Weights file to write")
    project.add_argument("--noise-floor", type=float, help="Probe threshold relative to its peak")

    relight = command("relight", "Relight a reflectance field")
    relight.add_argument("--manifest", required=True, help="Field manifest")
    relight.add_argument("--output", required=True, help="Relit image (.pfm or .png)")
    source = relight.add_mutually_exclusive_group(required=True)
    source.add_argument("--weights", help="Weights file")
    source.add_argument("--env", help="Lat-long environment, projected on the fly")
    relight.add_argument("--gamma", nargs=2, type=float, metavar=("G1", "G2"), help="Linearize the OLATs first")
    relight.add_argument("--rotate", type=float, default=0.0, help="Rotate the environment, radians")
    relight.add_argument("--output-format", choices=("pfm", "png"), help="Format when --output has no extension")

    gamma_fit = command("gamma-fit", "Fit the camera dual-gamma curve")
    gamma_fit.add_argument("--manifest", required=True, help="Manifest of the camera-encoded OLATs")
    gamma_fit.add_argument("--weights", required=True, help="Interview lighting weights")
    gamma_fit.add_argument("--frame", required=True, help="First interview frame")
    gamma_fit.add_argument("--mask", required=True, help="Subject mask")

    synth = command("synth", "Synthesize exemplar tracking frames")
    synth.add_argument("--manifest", required=True, help="Manifest listing exemplar poses")
    synth.add_argument("--weights", required=True, help="Interview lighting weights")
    synth.add_argument("--output-dir", required=True, help="Output directory")
    synth.add_argument("--gamma", nargs=2, type=float, metavar=("G1", "G2"), help="Calibrated dual gamma")

    estimate = command("estimate", "Estimate a reflectance field per frame")
    estimate.add_argument("--manifest", required=True, help="Manifest listing exemplar poses")
    estimate.add_argument("--weights", required=True, help="Interview lighting weights")
    estimate.add_argument("--frames", nargs="+", required=True, help="Interview frames")
    estimate.add_argument("--masks", nargs="+", required=True, help="One mask per frame, or one shared mask")
    estimate.add_argument("--output-dir", required=True, help="Output directory")
    estimate.add_argument("--gamma", nargs=2, type=float, metavar=("G1", "G2"), help="Calibrated dual gamma")
    estimate.add_argument("--method", choices=("ridge", "iterative"), help="Estimator")
    estimate.add_argument("--iterations", type=int, help="Gradient steps (iterative)")
    estimate.add_argument("--lambda-prior", type=float, help="Prior strength")
    estimate.add_argument(
        "--crop-to-mask", action="store_true", default=None,
        help="Crop each frame to its mask and letterbox it to the basis resolution",
    )
    estimate.add_argument("--crop-margin", type=int, help="Pixels kept around the cropped subject")
    estimate.add_argument("--jobs", type=int, help="Worker count")

    simulate = command("simulate", "Write a simulated light-stage capture")
    simulate.add_argument("--output-dir", required=True, help="Dataset directory")
    simulate.add_argument("--basis-count", type=int, default=41, help="OLAT conditions")
    simulate.add_argument("--subset", type=int, help="Keep this many evenly spread conditions of the lattice")
    simulate.add_argument("--size", type=int, default=32, help="Image width and height")
    simulate.add_argument("--poses", type=int, default=3, help="Exemplar poses")
    simulate.add_argument("--frames", type=int, default=4, help="Interview frames")
    simulate.add_argument("--camera-gamma", nargs=2, type=float, metavar=("G1", "G2"), help="Gamma-encode the OLATs")
    simulate.add_argument("--seed", type=int, default=0, help="Random seed")
    simulate.add_argument("--basis", choices=BASIS_MODES, default="bank", help="Basis footprint model")
    simulate.add_argument("--env-width", type=int, help="Width of the lat-long maps")

    loss = command("loss", "Evaluate the losses of a predicted field")
    loss.add_argument("--manifest", required=True, help="Predicted field manifest")
    loss.add_argument("--weights", required=True, help="Lighting weights of the frame")
    loss.add_argument("--frame", required=True, help="Observed frame")
    loss.add_argument("--mask", required=True, help="Subject mask")
    loss.add_argument("--gt-manifest", help="Ground-truth field manifest")
    loss.add_argument("--extractor", choices=("identity", "pyramid"), help="Feature extractor")

    return parser


def print_version():
    """Print the version information"""
    print(f"OLAT Relight version: {BOLD}{__version__}{RESET}")


def _gamma(values: Optional[List[float]]) -> Optional[DualGamma]:
    return DualGamma(*values) if values else None


def _flags(args: argparse.Namespace) -> dict:
    """Configuration keys set on the command line"""
    names = (
        "env_width", "noise_floor", "output_format", "method", "iterations", "lambda_prior", "extractor",
        "crop_to_mask", "crop_margin",
    )
    return {name: getattr(args, name) for name in names if getattr(args, name, None) is not None}


def _report(ok: bool, success: str, failure: str) -> int:
    if ok:
        print(f"{BOLD}{success}{RESET}")
        return EXIT_OK
    print(f"{BOLD}{failure}{RESET}")
    return EXIT_FAILURE


def run_command(manager: RelightManager, args: argparse.Namespace) -> int:
    """
    Dispatch a parsed subcommand

    Args:
        manager: The configured manager
        args: Parsed arguments

    Returns:
        Exit status
    """
    if args.command == "probe":
        ok = manager.convert_probe(args.input, args.output, tuple(args.center) if args.center else None, args.radius)
        return _report(ok, f"Wrote lat-long map to {args.output}", "Failed to convert probe")

    if args.command == "project":
        ok = manager.project(args.manifest, args.env, args.output)
        return _report(ok, f"Wrote lighting weights to {args.output}", "Failed to project environment")

    if args.command == "relight":
        ok = manager.relight(args.manifest, args.output, args.weights, args.env, _gamma(args.gamma), args.rotate)
        return _report(ok, "Relit image written", "Failed to relight")

    if args.command == "gamma-fit":
        result = manager.fit_gamma(args.manifest, args.weights, args.frame, args.mask)
        if result is None:
            return _report(False, "", "Failed to fit dual gamma")
        print(json.dumps(result))
        return EXIT_OK

    if args.command == "synth":
        ok = manager.synthesize(args.manifest, args.weights, args.output_dir, _gamma(args.gamma))
        return _report(ok, f"Wrote tracking frames to {args.output_dir}", "Failed to synthesize tracking frames")

    if args.command == "estimate":
        print(f"{BOLD}Estimating {len(args.frames)} frame(s){RESET}")
        ok = manager.estimate(
            args.manifest, args.weights, args.frames, args.masks, args.output_dir,
            _gamma(args.gamma), args.jobs,
        )
        return _report(ok, f"Wrote fields to {args.output_dir}", "Failed to estimate fields")

    if args.command == "simulate":
        manifest_path = manager.simulate(
            args.output_dir, args.basis_count, args.size, args.poses, args.frames,
            _gamma(args.camera_gamma), args.seed, args.basis, args.subset,
        )
        return _report(manifest_path is not None, f"Wrote manifest {manifest_path}", "Failed to simulate capture")

    if args.command == "loss":
        result = manager.compute_losses(args.manifest, args.weights, args.frame, args.mask, args.gt_manifest)
        if result is None:
            return _report(False, "", "Failed to compute losses")
        print(json.dumps(result))
        return EXIT_OK

    raise ValueError(f"Unhandled command {args.command}")


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the CLI"""
    parser = setup_parser()
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(message)s")
    logging.getLogger().setLevel(logging.DEBUG if args.verbose else logging.INFO)

    if args.version:
        print_version()
        return EXIT_OK
    if not args.command:
        parser.print_help()
        return EXIT_FAILURE

    try:
        config = ConfigManager(args.config).override(**_flags(args))
        manager = RelightManager(config, args.log_dir)
        return run_command(manager, args)
    except (RelightError, OSError) as e:
        print(f"{BOLD}Error: {e}{RESET}")
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
