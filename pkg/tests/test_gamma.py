"""
Tests for the dual-gamma curve, its inverse and its fit
"""

import numpy as np
import pytest

from conftest import random_mask, random_weights
from olat_relight.core.errors import EmptyMaskError, FitError
from olat_relight.core.gamma import (
    IDENTITY,
    DualGamma,
    apply_dual_gamma,
    apply_dual_gamma_array,
    fit_dual_gamma,
    gamma_fit_residual,
    invert_dual_gamma,
    is_monotone,
    masked_mse,
)
from olat_relight.core.imagecore import ImageDims, ImageF, MaskImage
from olat_relight.core.relight import ReflectanceField, linearize_field, relight


class TestCurve:
    def test_identity(self, rng):
        values = rng.uniform(size=(8, 8, 3))
        assert np.max(np.abs(apply_dual_gamma_array(values, IDENTITY) - values)) < 1e-7

    def test_endpoints_are_fixed(self, rng):
        for _ in range(25):
            g = DualGamma(*rng.uniform(0.2, 5.0, size=2))
            out = apply_dual_gamma_array(np.array([0.0, 1.0]), g)
            assert out.tolist() == [0.0, 1.0]

    def test_values_above_one_are_clamped(self):
        img = ImageF.constant(ImageDims(2, 2), (1.5, 1.0, 0.0))
        out = apply_dual_gamma(img, DualGamma(2.0, 3.0))
        assert np.allclose(out.data, [1.0, 1.0, 0.0])

    def test_monotone_on_the_recovery_range(self):
        for g1 in np.linspace(0.5, 3.0, 6):
            for g2 in np.linspace(0.5, 3.0, 6):
                assert is_monotone(DualGamma(g1, g2))

    def test_not_monotone_at_the_box_corner(self):
        assert not is_monotone(DualGamma(0.2, 5.0))

    def test_out_of_range_exponent(self):
        with pytest.raises(FitError):
            DualGamma(0.1, 1.0)
        with pytest.raises(FitError):
            DualGamma(1.0, 5.5)

    def test_inverse(self, rng):
        g = DualGamma(1.4, 2.2)
        img = ImageF(rng.uniform(size=(6, 6, 3)))
        assert np.allclose(apply_dual_gamma(invert_dual_gamma(img, g), g).data, img.data, atol=1e-12)

    def test_inverse_requires_monotone_curve(self):
        with pytest.raises(FitError):
            invert_dual_gamma(ImageF.zeros(ImageDims(1, 1)), DualGamma(0.2, 5.0))


class TestMaskedMse:
    def test_value(self):
        a = ImageF.constant(ImageDims(2, 1), (1.0, 1.0, 1.0))
        b = ImageF(np.array([[[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]]))
        assert masked_mse(a, b, MaskImage(np.array([[1.0, 1.0]]))) == pytest.approx(0.5)
        assert masked_mse(a, b, MaskImage(np.array([[0.0, 1.0]]))) == 0.0

    def test_empty_mask(self):
        img = ImageF.zeros(ImageDims(2, 2))
        with pytest.raises(EmptyMaskError):
            masked_mse(img, img, MaskImage(np.zeros((2, 2))))


class TestFit:
    def _instance(self, rng, g):
        dims = ImageDims(16, 16)
        olats = ReflectanceField(rng.uniform(0.0, 1.0, size=(4, 16, 16, 3)))
        w = random_weights(rng, count=4, low=0.2, high=1.0)
        mask = random_mask(rng, dims)
        target = relight(linearize_field(olats, g), w)
        return olats, w, target, mask

    def test_recovers_ground_truth(self, rng):
        for _ in range(10):
            truth = DualGamma(*rng.uniform(0.5, 3.0, size=2))
            olats, w, target, mask = self._instance(rng, truth)
            fitted = fit_dual_gamma(olats, w, target, mask)
            assert abs(fitted.gamma1 - truth.gamma1) < 0.05
            assert abs(fitted.gamma2 - truth.gamma2) < 0.05
            assert gamma_fit_residual(olats, w, target, mask, fitted) < 1e-6

    @pytest.mark.parametrize("truth", [DualGamma(1.8, 1.1), IDENTITY])
    def test_recovers_fixed_curves(self, rng, truth):
        olats, w, target, mask = self._instance(rng, truth)
        fitted = fit_dual_gamma(olats, w, target, mask)
        assert abs(fitted.gamma1 - truth.gamma1) < 0.05
        assert abs(fitted.gamma2 - truth.gamma2) < 0.05

    def test_residual_is_no_worse_than_the_grid(self, rng):
        olats, w, target, mask = self._instance(rng, DualGamma(1.8, 1.1))
        fitted = fit_dual_gamma(olats, w, target, mask)
        residual = gamma_fit_residual(olats, w, target, mask, fitted)
        axis = np.linspace(0.2, 5.0, 11)
        for g1 in axis:
            for g2 in axis:
                assert residual <= gamma_fit_residual(olats, w, target, mask, DualGamma(g1, g2))
        assert residual <= gamma_fit_residual(olats, w, target, mask, IDENTITY)

    def test_respects_bounds(self, rng):
        olats, w, target, mask = self._instance(rng, DualGamma(2.5, 2.5))
        fitted = fit_dual_gamma(olats, w, target, mask, bounds=(0.5, 1.5))
        assert 0.5 <= fitted.gamma1 <= 1.5
        assert 0.5 <= fitted.gamma2 <= 1.5

    def test_empty_mask(self, rng):
        olats, w, target, _ = self._instance(rng, IDENTITY)
        with pytest.raises(FitError):
            fit_dual_gamma(olats, w, target, MaskImage(np.zeros((16, 16))))

    def test_invalid_bounds(self, rng):
        olats, w, target, mask = self._instance(rng, IDENTITY)
        with pytest.raises(FitError):
            fit_dual_gamma(olats, w, target, mask, bounds=(2.0, 1.0))
