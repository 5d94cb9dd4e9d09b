"""
Shared fixtures for the OLAT Relight test suite
"""

import numpy as np
import pytest

from olat_relight.core.imagecore import ImageDims, ImageF, MaskImage
from olat_relight.core.probe import LightingWeights
from olat_relight.core.relight import ReflectanceField


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(autouse=True)
def isolated_home(tmp_path, monkeypatch):
    """Keep user defaults and operation logs inside the test's temp directory"""
    home = tmp_path / "home"
    monkeypatch.setenv("OLAT_RELIGHT_HOME", str(home))
    monkeypatch.delenv("OLAT_RELIGHT_JOBS", raising=False)
    return home


def random_field(rng, count=3, dims=ImageDims(4, 4), low=0.0, high=1.0) -> ReflectanceField:
    return ReflectanceField(rng.uniform(low, high, size=(count, dims.height, dims.width, 3)))


def random_weights(rng, count=3, low=0.0, high=1.0) -> LightingWeights:
    return LightingWeights(rng.uniform(low, high, size=(count, 3)))


def random_image(rng, dims=ImageDims(4, 4), low=0.0, high=1.0) -> ImageF:
    return ImageF(rng.uniform(low, high, size=(dims.height, dims.width, 3)))


def random_mask(rng, dims=ImageDims(4, 4)) -> MaskImage:
    data = rng.uniform(0.0, 1.0, size=dims.shape)
    data[0, 0] = 1.0
    return MaskImage(data)


@pytest.fixture(scope="module")
def stage(tmp_path_factory):
    """A small simulated capture with gamma-encoded OLATs"""
    from olat_relight.core.gamma import DualGamma
    from olat_relight.core.stagesim import simulate_capture

    out_dir = tmp_path_factory.mktemp("stage")
    manifest = simulate_capture(
        str(out_dir),
        basis_count=12,
        size=16,
        poses=2,
        frames=2,
        camera_gamma=DualGamma(1.2, 1.8),
        seed=7,
    )
    return out_dir, manifest
