"""
Tests for relighting, the losses and the rendering-loss gradient
"""

import numpy as np
import pytest

from conftest import random_field, random_image, random_mask, random_weights
from olat_relight.core.errors import ConfigError, DimensionMismatchError, EmptyMaskError
from olat_relight.core.gamma import IDENTITY, DualGamma
from olat_relight.core.imagecore import ImageDims, ImageF, MaskImage
from olat_relight.core.probe import LightingWeights
from olat_relight.core.relight import (
    LossWeights,
    ReflectanceField,
    combined_loss,
    linearize_field,
    reconstruction_loss,
    relight,
    rendering_loss,
    rendering_loss_gradient,
    squared_rendering_loss,
    synth_tracking_frame,
)
from olat_relight.extractors import PyramidExtractor, get_extractor


class TestRelight:
    def test_one_hot_selects_the_olat_exactly(self, rng):
        field = random_field(rng, count=5, dims=ImageDims(6, 5))
        for k in range(field.count):
            assert np.array_equal(relight(field, LightingWeights.one_hot(5, k)).data, field.olats[k])

    def test_zero_weights_give_black(self, rng):
        field = random_field(rng)
        assert np.all(relight(field, LightingWeights(np.zeros((3, 3)))).data == 0.0)

    def test_weight_count_must_match(self, rng):
        with pytest.raises(DimensionMismatchError):
            relight(random_field(rng, count=3), random_weights(rng, count=4))

    def test_superposition_in_the_weights(self, rng):
        for _ in range(100):
            field = random_field(rng)
            w1, w2 = random_weights(rng), random_weights(rng)
            s = rng.uniform(0.0, 2.0)
            lhs = relight(field, w1 + w2.scaled(s)).data
            rhs = relight(field, w1).data + s * relight(field, w2).data
            assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)

    def test_superposition_in_the_field(self, rng):
        for _ in range(100):
            f1, f2 = random_field(rng), random_field(rng)
            w = random_weights(rng)
            lhs = relight(ReflectanceField(f1.olats + f2.olats), w).data
            rhs = relight(f1, w).data + relight(f2, w).data
            assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)

    def test_synth_with_identity_gamma_is_plain_relight(self, rng):
        field, w = random_field(rng), random_weights(rng)
        assert np.array_equal(synth_tracking_frame(field, w, IDENTITY).data, relight(field, w).data)

    def test_synth_linearizes_first(self, rng):
        field, w = random_field(rng), random_weights(rng)
        g = DualGamma(2.0, 2.0)
        expected = np.einsum("nhwc,nc->hwc", field.olats ** 2, w.weights)
        assert np.allclose(synth_tracking_frame(field, w, g).data, expected)
        assert np.allclose(linearize_field(field, g).olats, field.olats ** 2)


class TestLosses:
    def test_identical_images_have_zero_loss(self, rng):
        img, mask = random_image(rng), random_mask(rng)
        assert rendering_loss(img, img, mask) == 0.0

    def test_rendering_loss_value(self):
        a = ImageF.zeros(ImageDims(2, 1))
        b = ImageF(np.array([[[3.0, 4.0, 0.0], [0.0, 0.0, 0.0]]]))
        mask = MaskImage(np.array([[1.0, 1.0]]))
        # norm 5 over a mask mass of 2
        assert rendering_loss(a, b, mask) == pytest.approx(2.5)

    def test_empty_mask(self, rng):
        img = random_image(rng)
        with pytest.raises(EmptyMaskError):
            rendering_loss(img, img, MaskImage(np.zeros((4, 4))))

    def test_reconstruction_sums_over_olats(self, rng):
        pred, gt, mask = random_field(rng), random_field(rng), random_mask(rng)
        expected = sum(
            rendering_loss(pred.image(k), gt.image(k), mask) for k in range(pred.count)
        )
        assert reconstruction_loss(pred, gt, mask) == pytest.approx(expected)

    def test_combined_loss_weights(self, rng):
        pred, gt, w = random_field(rng), random_field(rng), random_weights(rng)
        frame, mask = random_image(rng), random_mask(rng)
        rec = reconstruction_loss(pred, gt, mask)
        ren = rendering_loss(relight(pred, w), frame, mask)
        value = combined_loss(pred, gt, frame, w, mask, lw=LossWeights(0.3, 2.0))
        assert value == pytest.approx(0.3 * rec + 2.0 * ren)

    def test_combined_loss_without_ground_truth(self, rng):
        pred, w = random_field(rng), random_weights(rng)
        frame, mask = random_image(rng), random_mask(rng)
        with pytest.raises(ConfigError):
            combined_loss(pred, None, frame, w, mask)
        value = combined_loss(pred, None, frame, w, mask, lw=LossWeights(0.0, 1.0))
        assert value == pytest.approx(rendering_loss(relight(pred, w), frame, mask))

    def test_loss_weights_validation(self):
        with pytest.raises(ConfigError):
            LossWeights(-1.0, 1.0)
        with pytest.raises(ConfigError):
            LossWeights(0.0, 0.0)

    def test_losses_are_symmetric(self, rng):
        for _ in range(20):
            a, b, mask = random_image(rng), random_image(rng), random_mask(rng)
            assert rendering_loss(a, b, mask) == pytest.approx(rendering_loss(b, a, mask), rel=1e-12)
            pred, gt = random_field(rng), random_field(rng)
            assert reconstruction_loss(pred, gt, mask) == pytest.approx(reconstruction_loss(gt, pred, mask), rel=1e-12)

    def test_pyramid_extractor(self, rng):
        a, b, mask = random_image(rng, ImageDims(8, 8)), random_image(rng, ImageDims(8, 8)), random_mask(rng, ImageDims(8, 8))
        pyramid = PyramidExtractor(levels=3)
        assert len(pyramid.extract(a.data)) == 3
        assert pyramid.extract(a.data)[2].shape == (2, 2, 3)
        assert rendering_loss(a, b, mask, pyramid) > rendering_loss(a, b, mask)

    def test_pyramid_layer_count_matches_its_maps(self):
        pyramid = PyramidExtractor(levels=6)
        for dims in (ImageDims(8, 4), ImageDims(16, 16), ImageDims(5, 3), ImageDims(1, 7)):
            maps = pyramid.extract(np.zeros((dims.height, dims.width, 3)))
            assert pyramid.layer_count(dims) == len(maps)
        assert pyramid.layer_count(ImageDims(8, 4)) == 3

    def test_extractor_with_a_wrong_layer_count(self, rng):
        class Truncating(PyramidExtractor):
            def extract(self, data):
                return super().extract(data)[:1]

        a, b, mask = random_image(rng, ImageDims(8, 8)), random_image(rng, ImageDims(8, 8)), random_mask(rng, ImageDims(8, 8))
        with pytest.raises(ConfigError):
            rendering_loss(a, b, mask, Truncating(levels=3))

    def test_unknown_extractor(self):
        with pytest.raises(ConfigError):
            get_extractor("vgg")

    def test_squared_loss_adds_over_masks(self, rng):
        for _ in range(100):
            a, b = random_image(rng), random_image(rng)
            m1 = MaskImage(rng.uniform(0.0, 0.5, size=(4, 4)))
            m2 = MaskImage(rng.uniform(0.0, 0.5, size=(4, 4)))
            both = MaskImage(m1.data + m2.data)

            def weighted_error(mask):
                return squared_rendering_loss(
                    ReflectanceField(a.data[None]), LightingWeights.one_hot(1, 0), b, mask
                ) * mask.data.sum()

            assert weighted_error(both) == pytest.approx(weighted_error(m1) + weighted_error(m2), rel=1e-12)


class TestGradient:
    def test_matches_central_differences(self, rng):
        h = 1e-6
        for _ in range(20):
            field = random_field(rng, count=3, dims=ImageDims(4, 4), low=0.1, high=1.0)
            w, target, mask = random_weights(rng), random_image(rng), random_mask(rng)
            analytic = rendering_loss_gradient(field, w, target, mask)

            numeric = np.zeros_like(analytic)
            base = field.olats.copy()
            for index in np.ndindex(base.shape):
                plus, minus = base.copy(), base.copy()
                plus[index] += h
                minus[index] -= h
                numeric[index] = (
                    squared_rendering_loss(ReflectanceField(plus), w, target, mask)
                    - squared_rendering_loss(ReflectanceField(minus), w, target, mask)
                ) / (2.0 * h)

            error = np.linalg.norm(analytic - numeric) / np.linalg.norm(analytic)
            assert error < 1e-4

    def test_zero_at_exact_fit(self, rng):
        field, w, mask = random_field(rng), random_weights(rng), random_mask(rng)
        grad = rendering_loss_gradient(field, w, relight(field, w), mask)
        assert np.all(grad == 0.0)

    def test_unlit_basis_has_zero_gradient(self, rng):
        field, target, mask = random_field(rng, count=4), random_image(rng), random_mask(rng)
        weights = rng.uniform(0.1, 1.0, size=(4, 3))
        weights[2] = 0.0
        grad = rendering_loss_gradient(field, LightingWeights(weights), target, mask)
        assert np.all(grad[2] == 0.0)
        assert np.any(grad[0] != 0.0)
