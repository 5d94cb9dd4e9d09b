"""
Tests for the command-line interface
"""

import json
import os

import numpy as np
import pytest

from olat_relight import __version__
from olat_relight.cli import EXIT_FAILURE, EXIT_OK, main
from olat_relight.config.manifest import DatasetManifest, load_weights, save_weights
from olat_relight.core.imagecore import ImageDims, ImageF, MaskImage, load_image, load_mask, save_image, save_mask
from olat_relight.core.probe import LightingWeights, latlong_directions


def run(tmp_path, *argv):
    return main(["--log-dir", str(tmp_path / "logs"), *argv])


def last_json(capsys):
    lines = [line for line in capsys.readouterr().out.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


@pytest.fixture
def capture(tmp_path):
    """Simulated capture plus the interview lighting weights"""
    data = tmp_path / "capture"
    assert run(
        tmp_path, "simulate", "--output-dir", str(data), "--basis-count", "12", "--size", "16",
        "--poses", "2", "--frames", "2", "--camera-gamma", "1.2", "1.8", "--seed", "11",
    ) == EXIT_OK
    manifest = str(data / "manifest.json")
    weights = str(tmp_path / "interview.json")
    assert run(tmp_path, "project", "--manifest", manifest, "--env", str(data / "interview_probe.pfm"), "--output", weights) == EXIT_OK
    return data, manifest, weights


class TestBasics:
    def test_version(self, capsys):
        assert main(["--version"]) == EXIT_OK
        assert __version__ in capsys.readouterr().out

    def test_no_command(self):
        assert main([]) == EXIT_FAILURE

    def test_unknown_config_key(self, tmp_path):
        job = tmp_path / "job.cfg"
        job.write_text("colour = red\n")
        code = run(tmp_path, "probe", "--config", str(job), "--input", "x.pfm", "--output", "y.pfm")
        assert code == EXIT_FAILURE

    def test_operations_are_logged(self, tmp_path):
        run(tmp_path, "probe", "--input", str(tmp_path / "absent.pfm"), "--output", str(tmp_path / "env.pfm"))
        logs = os.listdir(tmp_path / "logs")
        assert len(logs) == 1
        with open(tmp_path / "logs" / logs[0]) as f:
            assert "PROBE - FAILURE" in f.read()


class TestProbe:
    def test_constant_ball(self, tmp_path):
        ball = tmp_path / "ball.pfm"
        save_image(ImageF.constant(ImageDims(40, 40), (0.25, 0.5, 1.0)), ball)
        out = tmp_path / "env"
        assert run(tmp_path, "probe", "--input", str(ball), "--output", str(out), "--env-width", "32") == EXIT_OK
        env = load_image(str(out) + ".pfm")
        assert env.dims == ImageDims(32, 16)
        assert np.allclose(env.data, [0.25, 0.5, 1.0])

    def test_vertical_gradient_ball_round_trip(self, tmp_path):
        # ball of an environment whose radiance is 1 + 0.5 * d.y
        size, radius = 128, 64.0
        center = (size - 1) / 2.0
        x = (np.arange(size) - center) / radius
        nx, ny = np.meshgrid(x, -x)
        nz = np.sqrt(np.clip(1.0 - nx * nx - ny * ny, 0.0, None))
        radiance = 1.0 + nz * ny
        ball = tmp_path / "gradient_ball.pfm"
        save_image(ImageF(radiance[:, :, None] * np.array([1.0, 0.5, 0.25])), ball)

        out = str(tmp_path / "gradient_env.pfm")
        assert run(
            tmp_path, "probe", "--input", str(ball), "--output", out, "--env-width", "64",
            "--center", str(center), str(center), "--radius", str(radius),
        ) == EXIT_OK
        env = load_image(out)
        directions = latlong_directions(ImageDims(64, 32))
        front = directions[..., 2] >= 0.0
        expected = (1.0 + 0.5 * directions[..., 1])[:, :, None] * np.array([1.0, 0.5, 0.25])
        assert np.allclose(env.data[front], expected[front], atol=1e-2)

    def test_missing_input(self, tmp_path):
        code = run(tmp_path, "probe", "--input", str(tmp_path / "absent.pfm"), "--output", str(tmp_path / "env.pfm"))
        assert code == EXIT_FAILURE


class TestProject:
    def test_constant_environment_gives_constant_weights(self, tmp_path, capture):
        _, manifest, _ = capture
        env = tmp_path / "constant.pfm"
        save_image(ImageF.constant(ImageDims(64, 32), (0.5, 1.0, 2.0)), env)
        out = str(tmp_path / "constant.json")
        assert run(tmp_path, "project", "--manifest", manifest, "--env", str(env), "--output", out) == EXIT_OK
        w = load_weights(out)
        assert w.basis_ids == tuple(range(12))
        assert np.allclose(w.weights, [0.5, 1.0, 2.0], rtol=1e-9)

    def test_zero_environment_gives_zero_weights(self, tmp_path, capture):
        _, manifest, _ = capture
        env = tmp_path / "black.pfm"
        save_image(ImageF.zeros(ImageDims(64, 32)), env)
        out = str(tmp_path / "black.json")
        assert run(tmp_path, "project", "--manifest", manifest, "--env", str(env), "--output", out) == EXIT_OK
        assert np.all(load_weights(out).weights == 0.0)

    def test_defaults_to_the_interview_probe(self, tmp_path, capture):
        _, manifest, weights = capture
        out = str(tmp_path / "default.json")
        assert run(tmp_path, "project", "--manifest", manifest, "--output", out) == EXIT_OK
        with open(out, "rb") as a, open(weights, "rb") as b:
            assert a.read() == b.read()


class TestRelight:
    def test_one_hot_weights_reproduce_an_olat(self, tmp_path, capture):
        data, manifest, _ = capture
        weights = str(tmp_path / "one_hot.json")
        save_weights(LightingWeights.one_hot(12, 3), weights)
        out = str(tmp_path / "relit.pfm")
        assert run(tmp_path, "relight", "--manifest", manifest, "--weights", weights, "--output", out) == EXIT_OK
        assert np.array_equal(load_image(out).data, load_image(str(data / "olat" / "olat_003.pfm")).data)

    def test_environment_and_weights_agree(self, tmp_path, capture):
        data, manifest, weights = capture
        by_weights, by_env = str(tmp_path / "a.pfm"), str(tmp_path / "b.pfm")
        assert run(tmp_path, "relight", "--manifest", manifest, "--weights", weights, "--output", by_weights) == EXIT_OK
        assert run(
            tmp_path, "relight", "--manifest", manifest, "--env", str(data / "interview_probe.pfm"), "--output", by_env
        ) == EXIT_OK
        with open(by_weights, "rb") as a, open(by_env, "rb") as b:
            assert a.read() == b.read()

    def test_sum_of_weight_files_relights_to_the_sum(self, tmp_path, capture, rng):
        _, manifest, _ = capture
        wa = LightingWeights(rng.uniform(0.0, 1.0, size=(12, 3)))
        wb = LightingWeights(rng.uniform(0.0, 1.0, size=(12, 3)))
        outputs = []
        for name, w in (("a", wa), ("b", wb), ("sum", wa + wb)):
            weights, out = str(tmp_path / f"{name}.json"), str(tmp_path / f"{name}.pfm")
            save_weights(w, weights)
            assert run(tmp_path, "relight", "--manifest", manifest, "--weights", weights, "--output", out) == EXIT_OK
            outputs.append(load_image(out).data)
        assert np.allclose(outputs[2], outputs[0] + outputs[1], rtol=1e-6, atol=1e-7)

    def test_png_output_format(self, tmp_path, capture):
        _, manifest, weights = capture
        out = tmp_path / "relit"
        assert run(
            tmp_path, "relight", "--manifest", manifest, "--weights", weights,
            "--output", str(out), "--output-format", "png",
        ) == EXIT_OK
        assert (tmp_path / "relit.png").exists()

    def test_weights_must_match_the_basis(self, tmp_path, capture):
        _, manifest, _ = capture
        weights = str(tmp_path / "short.json")
        save_weights(LightingWeights.one_hot(5, 0), weights)
        code = run(tmp_path, "relight", "--manifest", manifest, "--weights", weights, "--output", str(tmp_path / "x.pfm"))
        assert code == EXIT_FAILURE


class TestGammaAndSynth:
    def test_fit_recovers_the_camera_gamma(self, tmp_path, capture, capsys):
        data, manifest, weights = capture
        capsys.readouterr()
        code = run(
            tmp_path, "gamma-fit", "--manifest", manifest, "--weights", weights,
            "--frame", str(data / "frames" / "frame_0000.pfm"), "--mask", str(data / "masks" / "subject.png"),
        )
        assert code == EXIT_OK
        result = last_json(capsys)
        assert set(result) == {"gamma1", "gamma2", "residual"}
        assert abs(result["gamma1"] - 1.2) < 0.05
        assert abs(result["gamma2"] - 1.8) < 0.05

    def test_synth_reproduces_the_calibration_frame(self, tmp_path, capture):
        data, manifest, weights = capture
        synth_dir = tmp_path / "synth"
        assert run(
            tmp_path, "synth", "--manifest", manifest, "--weights", weights,
            "--output-dir", str(synth_dir), "--gamma", "1.2", "1.8",
        ) == EXIT_OK
        assert sorted(os.listdir(synth_dir)) == ["pose_0.pfm", "pose_1.pfm"]
        synthesized = load_image(str(synth_dir / "pose_0.pfm"))
        frame = load_image(str(data / "frames" / "frame_0000.pfm"))
        assert np.allclose(synthesized.data, frame.data, atol=1e-5)


class TestEstimate:
    def test_writes_fields_and_trace(self, tmp_path, capture):
        data, manifest, weights = capture
        out = tmp_path / "fields"
        code = run(
            tmp_path, "estimate", "--manifest", manifest, "--weights", weights,
            "--frames", str(data / "frames" / "frame_0000.pfm"), str(data / "frames" / "frame_0001.pfm"),
            "--masks", str(data / "masks" / "subject.png"),
            "--output-dir", str(out), "--gamma", "1.2", "1.8", "--jobs", "2",
        )
        assert code == EXIT_OK
        for i in range(2):
            field = DatasetManifest.load(str(out / f"frame_{i:04d}" / "field.json")).load_field()
            assert field.count == 12
            assert field.dims == ImageDims(16, 16)
        with open(out / "loss_trace.json") as f:
            trace = json.load(f)
        assert trace["method"] == "ridge"
        assert [r["source"] for r in trace["frames"]] == ["frame_0000.pfm", "frame_0001.pfm"]
        assert all(sum(r["blend"]) == pytest.approx(1.0) for r in trace["frames"])

    def test_iterative_method(self, tmp_path, capture):
        data, manifest, weights = capture
        out = tmp_path / "fields"
        code = run(
            tmp_path, "estimate", "--manifest", manifest, "--weights", weights,
            "--frames", str(data / "frames" / "frame_0000.pfm"),
            "--masks", str(data / "masks" / "frame_0000.png"),
            "--output-dir", str(out), "--method", "iterative", "--iterations", "5",
        )
        assert code == EXIT_OK
        with open(out / "loss_trace.json") as f:
            trace = json.load(f)
        assert trace["method"] == "iterative"
        assert len(trace["frames"][0]["loss_trace"]) == 6

    def test_crop_to_mask_fits_larger_frames(self, tmp_path, capture):
        data, manifest, weights = capture
        frame = load_image(str(data / "frames" / "frame_0000.pfm"))
        mask = load_mask(str(data / "masks" / "frame_0000.png"))
        canvas = np.zeros((24, 40, 3))
        canvas[4:20, 10:26] = frame.data
        canvas_mask = np.zeros((24, 40))
        canvas_mask[4:20, 10:26] = mask.data
        save_image(ImageF(canvas), tmp_path / "wide.pfm")
        save_mask(MaskImage(canvas_mask), tmp_path / "wide_mask.png")

        argv = [
            "estimate", "--manifest", manifest, "--weights", weights,
            "--frames", str(tmp_path / "wide.pfm"), "--masks", str(tmp_path / "wide_mask.png"),
            "--output-dir", str(tmp_path / "fields"), "--gamma", "1.2", "1.8",
        ]
        assert run(tmp_path, *argv) == EXIT_FAILURE
        assert run(tmp_path, *argv, "--crop-to-mask", "--crop-margin", "1") == EXIT_OK
        field = DatasetManifest.load(str(tmp_path / "fields" / "frame_0000" / "field.json")).load_field()
        assert field.dims == ImageDims(16, 16)

    def test_mask_count_mismatch(self, tmp_path, capture):
        data, manifest, weights = capture
        code = run(
            tmp_path, "estimate", "--manifest", manifest, "--weights", weights,
            "--frames", str(data / "frames" / "frame_0000.pfm"), str(data / "frames" / "frame_0001.pfm"),
            "--masks", str(data / "masks" / "frame_0000.png"), str(data / "masks" / "frame_0000.png"),
            str(data / "masks" / "frame_0001.png"),
            "--output-dir", str(tmp_path / "fields"),
        )
        assert code == EXIT_FAILURE


class TestSimulate:
    def test_subset_keeps_evenly_spread_conditions(self, tmp_path):
        data = tmp_path / "subset"
        assert run(
            tmp_path, "simulate", "--output-dir", str(data), "--basis-count", "24", "--subset", "6",
            "--size", "16", "--poses", "1", "--frames", "1",
        ) == EXIT_OK
        manifest = DatasetManifest.load(str(data / "manifest.json"))
        assert manifest.basis_ids == list(range(6))
        assert len(os.listdir(data / "olat")) == 6
        logs = os.listdir(tmp_path / "logs")
        with open(tmp_path / "logs" / logs[0]) as f:
            assert "Basis: 6 of 24 (bank)" in f.read()

    def test_subset_larger_than_the_lattice(self, tmp_path):
        code = run(
            tmp_path, "simulate", "--output-dir", str(tmp_path / "bad"), "--basis-count", "8", "--subset", "9",
            "--size", "16", "--poses", "1", "--frames", "1",
        )
        assert code == EXIT_FAILURE


class TestLoss:
    def test_losses_against_ground_truth(self, tmp_path, capture, capsys):
        data, manifest, weights = capture
        frame = str(data / "frames" / "frame_0000.pfm")
        mask = str(data / "masks" / "subject.png")

        capsys.readouterr()
        assert run(tmp_path, "loss", "--manifest", manifest, "--weights", weights, "--frame", frame, "--mask", mask) == EXIT_OK
        result = last_json(capsys)
        assert result["reconstruction"] is None
        assert result["combined"] == pytest.approx(result["rendering"])

        assert run(
            tmp_path, "loss", "--manifest", manifest, "--weights", weights, "--frame", frame,
            "--mask", mask, "--gt-manifest", manifest, "--extractor", "pyramid",
        ) == EXIT_OK
        result = last_json(capsys)
        assert result["reconstruction"] == 0.0
        assert result["rendering"] > 0.0

    def test_rendering_weight_zero_needs_ground_truth(self, tmp_path, capture):
        data, manifest, weights = capture
        job = tmp_path / "no_rendering.cfg"
        job.write_text("lambda2 = 0\n")
        argv = [
            "loss", "--config", str(job), "--manifest", manifest, "--weights", weights,
            "--frame", str(data / "frames" / "frame_0000.pfm"), "--mask", str(data / "masks" / "subject.png"),
        ]
        assert run(tmp_path, *argv) == EXIT_FAILURE
        logs = os.listdir(tmp_path / "logs")
        with open(tmp_path / "logs" / logs[0]) as f:
            assert "lambda2 = 0 leaves no loss term" in f.read()
        assert run(tmp_path, *argv, "--gt-manifest", manifest) == EXIT_OK
