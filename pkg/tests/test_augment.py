"""Crop geometry, Beta crop-center sampling, and the two-view pipeline."""

import numpy as np
import pytest

from hcl.augment import (
    AugmentConfig,
    CropRegion,
    apply_transforms,
    augment_pair,
    center_crop,
    center_crop_region,
    center_suppressed_crop,
    eval_view,
    resize_bilinear,
    sample_beta,
    to_unit_float,
)
from hcl.data import Image

# Two-sided tail mass P(X<0.1 or X>0.9) of Beta(0.6, 0.6); quadrature of
# the density after the substitution x = t^(1/alpha), cross-checked
# against an independent statistics library.
BETA06_TAIL_01 = 0.3520945086920757


def _rand_image(rng, h=32, w=32):
    return Image(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))


class TestCenterCrop:
    def test_half_crop_of_32_is_rows_8_to_23(self):
        rng = np.random.default_rng(0)
        img = _rand_image(rng)
        out = center_crop(img, 0.5)
        assert (out.h, out.w) == (16, 16)
        assert np.array_equal(out.pixels, img.pixels[8:24, 8:24])

    def test_p_one_is_identity(self):
        rng = np.random.default_rng(1)
        img = _rand_image(rng)
        out = center_crop(img, 1.0)
        assert np.array_equal(out.pixels, img.pixels)

    def test_center_preserved_within_one_pixel(self):
        for h, w in ((32, 32), (31, 17), (9, 40)):
            for p in (0.3, 0.5, 0.77, 0.99):
                reg = center_crop_region(h, w, p)
                cy, cx = reg.center()
                assert abs(cy - (h - 1) / 2) <= 1.0, (h, w, p)
                assert abs(cx - (w - 1) / 2) <= 1.0, (h, w, p)

    def test_rejects_bad_ratio(self):
        img = _rand_image(np.random.default_rng(2))
        with pytest.raises(ValueError, match="p must be"):
            center_crop(img, 0.0)
        with pytest.raises(ValueError, match="p must be"):
            center_crop(img, 1.5)

    def test_rejects_empty_result(self):
        img = _rand_image(np.random.default_rng(3), h=4, w=4)
        with pytest.raises(ValueError, match="empty"):
            center_crop(img, 0.1)


class TestSampleBeta:
    def test_mean_is_half(self):
        rng = np.random.default_rng(7)
        draws = np.array([sample_beta(0.6, rng) for _ in range(100_000)])
        assert abs(draws.mean() - 0.5) < 0.01

    def test_tail_mass_matches_oracle(self):
        rng = np.random.default_rng(8)
        draws = np.array([sample_beta(0.6, rng) for _ in range(100_000)])
        tail = float(np.mean((draws < 0.1) | (draws > 0.9)))
        assert abs(tail - BETA06_TAIL_01) < 0.01

    def test_variance_exceeds_uniform(self):
        # Var Beta(a,a) = 1/(4(2a+1)) > 1/12 for a < 1.
        rng = np.random.default_rng(9)
        draws = np.array([sample_beta(0.6, rng) for _ in range(10_000)])
        uniform = rng.random(10_000)
        assert draws.var() > uniform.var()
        assert abs(draws.var() - 1 / 8.8) < 0.01

    def test_rejects_alpha_outside_open_interval(self):
        rng = np.random.default_rng(10)
        for bad in (0.0, 1.0, -0.5, 2.0):
            with pytest.raises(ValueError, match="alpha"):
                sample_beta(bad, rng)


class TestResizeBilinear:
    def test_same_size_is_identity(self):
        rng = np.random.default_rng(11)
        src = rng.random((5, 7, 3))
        assert np.array_equal(resize_bilinear(src, 5, 7), src)

    def test_half_pixel_upscale_values(self):
        src = np.array([[0.0, 1.0], [2.0, 3.0]])[:, :, None]
        out = resize_bilinear(src, 4, 4)[:, :, 0]
        r0 = np.array([0.0, 0.25, 0.75, 1.0])
        expected = np.stack([r0, r0 + 0.5, r0 + 1.5, r0 + 2.0])
        np.testing.assert_allclose(out, expected, atol=1e-12)


class TestCenterSuppressedCrop:
    def test_degenerate_scale_covers_whole_image(self):
        cfg = AugmentConfig(scale_range=(1.0, 1.0), aspect_range=(1.0, 1.0), out_size=16)
        img = _rand_image(np.random.default_rng(12))
        for seed in range(5):
            region, out = center_suppressed_crop(img, cfg, np.random.default_rng(seed))
            assert (region.top, region.left, region.crop_h, region.crop_w) == (0, 0, 32, 32)
            assert out.pixels.shape == (16, 16, 3)

    def test_region_always_inside_image(self):
        cfg = AugmentConfig(out_size=8)
        img = _rand_image(np.random.default_rng(13), h=24, w=40)
        rng = np.random.default_rng(14)
        for _ in range(300):
            region, out = center_suppressed_crop(img, cfg, rng)
            assert 0 <= region.top and region.top + region.crop_h <= 24
            assert 0 <= region.left and region.left + region.crop_w <= 40
            assert region.crop_h >= 1 and region.crop_w >= 1
            assert out.pixels.shape == (8, 8, 3)

    def test_beta_centers_sit_farther_out_than_uniform(self):
        # Monte-Carlo comparison against a uniform-placement oracle at
        # fixed crop size (scale 0.25 of a 32x32 image).
        cfg = AugmentConfig(
            alpha=0.6, scale_range=(0.25, 0.25), aspect_range=(1.0, 1.0), out_size=8
        )
        img = _rand_image(np.random.default_rng(15))
        mid = (32 - 1) / 2.0
        rng = np.random.default_rng(16)
        beta_d = []
        for _ in range(10_000):
            region, _ = center_suppressed_crop(img, cfg, rng)
            cy, cx = region.center()
            beta_d.append(np.hypot(cy - mid, cx - mid))
        uni = np.random.default_rng(17)
        uni_d = []
        for _ in range(10_000):
            ch = cw = 16
            top = int(round(uni.random() * (32 - ch)))
            left = int(round(uni.random() * (32 - cw)))
            cy, cx = CropRegion(top, left, ch, cw).center()
            uni_d.append(np.hypot(cy - mid, cx - mid))
        assert np.mean(beta_d) > np.mean(uni_d)


class TestAugmentPair:
    def test_all_randomness_off_reproduces_input(self):
        cfg = AugmentConfig(
            p=1.0,
            scale_range=(1.0, 1.0),
            aspect_range=(1.0, 1.0),
            out_size=32,
            jitter_strength=0.0,
            grayscale_prob=0.0,
            flip_prob=0.0,
            blur_prob=0.0,
        )
        img = _rand_image(np.random.default_rng(18))
        x1, x2 = augment_pair(img, cfg, np.random.default_rng(19))
        assert np.array_equal(x1.pixels, img.pixels)
        assert np.array_equal(x2.pixels, img.pixels)

    def test_same_seed_same_views(self):
        cfg = AugmentConfig(out_size=16)
        img = _rand_image(np.random.default_rng(20))
        a1, a2 = augment_pair(img, cfg, np.random.default_rng(99))
        b1, b2 = augment_pair(img, cfg, np.random.default_rng(99))
        assert np.array_equal(a1.pixels, b1.pixels)
        assert np.array_equal(a2.pixels, b2.pixels)

    def test_view1_source_confined_to_central_half(self):
        # With p=0.5 the view-1 source is rows/cols 8..23 of the
        # original; any sub-crop of it stays inside that square.
        cfg = AugmentConfig(p=0.5, out_size=8)
        img = _rand_image(np.random.default_rng(21))
        inner = center_crop(img, 0.5)
        rng = np.random.default_rng(22)
        for _ in range(200):
            region, _ = center_suppressed_crop(inner, cfg, rng)
            top_global = 8 + region.top
            left_global = 8 + region.left
            assert 8 <= top_global and top_global + region.crop_h <= 24
            assert 8 <= left_global and left_global + region.crop_w <= 24

    def test_output_size_postcondition(self):
        cfg = AugmentConfig(out_size=20)
        img = _rand_image(np.random.default_rng(23))
        x1, x2 = augment_pair(img, cfg, np.random.default_rng(24))
        assert x1.pixels.shape == (20, 20, 3)
        assert x2.pixels.shape == (20, 20, 3)

    def test_config_validation_messages(self):
        with pytest.raises(ValueError, match="alpha"):
            AugmentConfig(alpha=1.0).validate()
        with pytest.raises(ValueError, match="scale_range"):
            AugmentConfig(scale_range=(0.0, 1.0)).validate()
        with pytest.raises(ValueError, match="flip_prob"):
            AugmentConfig(flip_prob=1.5).validate()


class TestPhotometric:
    def test_forced_grayscale_equalizes_channels(self):
        cfg = AugmentConfig(
            jitter_strength=0.0, grayscale_prob=1.0, flip_prob=0.0, blur_prob=0.0
        )
        img = _rand_image(np.random.default_rng(25))
        out = apply_transforms(img, cfg, np.random.default_rng(26))
        px = out.pixels.astype(np.int64)
        assert np.abs(px[:, :, 0] - px[:, :, 1]).max() <= 1
        assert np.abs(px[:, :, 1] - px[:, :, 2]).max() <= 1

    def test_forced_flip_mirrors(self):
        cfg = AugmentConfig(
            jitter_strength=0.0, grayscale_prob=0.0, flip_prob=1.0, blur_prob=0.0
        )
        img = _rand_image(np.random.default_rng(27))
        out = apply_transforms(img, cfg, np.random.default_rng(28))
        assert np.array_equal(out.pixels, img.pixels[:, ::-1])

    def test_forced_blur_reduces_variance(self):
        cfg = AugmentConfig(
            jitter_strength=0.0, grayscale_prob=0.0, flip_prob=0.0, blur_prob=1.0
        )
        img = _rand_image(np.random.default_rng(29))
        out = apply_transforms(img, cfg, np.random.default_rng(30))
        assert out.pixels.astype(float).var() < img.pixels.astype(float).var()


class TestEncoderViews:
    def test_to_unit_float_layout(self):
        img = _rand_image(np.random.default_rng(31), h=8, w=6)
        x = to_unit_float(img)
        assert x.shape == (3, 8, 6)
        assert x.min() >= 0.0 and x.max() <= 1.0
        np.testing.assert_allclose(x[1, 2, 3], img.pixels[2, 3, 1] / 255.0)

    def test_eval_view_passthrough_and_resize(self):
        img = _rand_image(np.random.default_rng(32), h=16, w=16)
        same = eval_view(img, 16)
        np.testing.assert_array_equal(same, to_unit_float(img))
        smaller = eval_view(img, 8)
        assert smaller.shape == (3, 8, 8)
