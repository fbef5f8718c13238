import math

import numpy as np
import pytest

from flimkit.bench import denoise_direction, _uniform_phasor_frames
from flimkit.decay import TimeGrid
from flimkit.denoise import (
    CompositeImage,
    FrameAverage,
    GaussianSmooth,
    MedianSmooth,
    composite,
    denoise_sg,
    lifetime_from_phasor_image,
    psnr,
)
from flimkit.images import LifetimeImage
from flimkit.phasor import PhasorImage

GRID = TimeGrid(128, 0.1)


def constant_phasor(g, s, side=8, omega=1.0, valid=None):
    shape = (side, side)
    if valid is None:
        valid = np.ones(shape, dtype=bool)
    return PhasorImage(np.full(shape, g), np.full(shape, s),
                       np.full(shape, 1e4), valid, omega)


class TestDenoiseSg:
    def test_gaussian_zero_sigma_identity(self, rng):
        g = rng.uniform(0.2, 0.8, size=(10, 10))
        s = rng.uniform(0.1, 0.4, size=(10, 10))
        img = PhasorImage(g, s, np.full((10, 10), 1e3),
                          np.ones((10, 10), dtype=bool), 1.0)
        out = denoise_sg(img, GaussianSmooth(1e-6))
        assert np.abs(out.g - g).max() < 1e-9
        assert np.abs(out.s - s).max() < 1e-9

    def test_frame_average_variance_reduction(self):
        frames = _uniform_phasor_frames(3, 8, tau=2.0, photons=1e3, side=32,
                                        grid=TimeGrid(256, 0.0488))
        averaged = denoise_sg(frames, FrameAverage(8))
        var_single = frames[0].g[frames[0].valid].var()
        var_avg = averaged.g[averaged.valid].var()
        assert var_single / var_avg == pytest.approx(8.0, rel=0.30)

    def test_median_removes_salt_impulses(self):
        img = constant_phasor(0.5, 0.25, side=9)
        s = img.s.copy()
        s[4, 4] = 5.0  # single-pixel impulse
        noisy = PhasorImage(img.g, s, img.intensity, img.valid, img.omega)
        out = denoise_sg(noisy, MedianSmooth(1))
        assert np.abs(out.s - 0.25).max() == 0.0
        assert np.abs(out.g - 0.5).max() == 0.0

    def test_frame_average_needs_stack(self):
        img = constant_phasor(0.5, 0.25)
        with pytest.raises(ValueError):
            denoise_sg(img, FrameAverage(4))
        with pytest.raises(ValueError):
            denoise_sg([img, img], FrameAverage(4))

    def test_zero_frames_rejected(self):
        with pytest.raises(ValueError):
            FrameAverage(0)

    def test_validity_propagation(self):
        # gaussian support is truncated at 4 sigma = 4 rows here
        valid = np.ones((16, 16), dtype=bool)
        valid[:12, :] = False
        img = constant_phasor(0.4, 0.2, side=16, valid=valid)
        out = denoise_sg(img, GaussianSmooth(1.0))
        assert not out.valid[:8, :].any()
        assert out.valid[8:, :].all()

    def test_linearity_of_gaussian(self, rng):
        g1 = rng.uniform(0, 1, size=(12, 12))
        g2 = rng.uniform(0, 1, size=(12, 12))
        base = np.ones((12, 12), dtype=bool)
        mk = lambda g: PhasorImage(g, g * 0.4, np.ones((12, 12)), base, 1.0)
        f = GaussianSmooth(1.3)
        out_sum = denoise_sg(mk(g1 + g2), f)
        out1 = denoise_sg(mk(g1), f)
        out2 = denoise_sg(mk(g2), f)
        assert np.abs(out_sum.g - (out1.g + out2.g)).max() < 1e-12


class TestLifetimeFromPhasor:
    def test_constant_image(self):
        img = constant_phasor(0.5, 0.5, omega=1.0)
        ltimg = lifetime_from_phasor_image(img)
        assert ltimg.valid.all()
        assert np.abs(ltimg.tau[..., 0] - 1.0).max() < 1e-12

    def test_end_to_end_mean_accuracy(self):
        grid = TimeGrid(256, 0.0488)
        frames = _uniform_phasor_frames(9, 1, tau=2.0, photons=1e4, side=24,
                                        grid=grid)
        ltimg = lifetime_from_phasor_image(frames[0])
        mean_tau = ltimg.tau[..., 0][ltimg.valid].mean()
        assert mean_tau == pytest.approx(2.0, rel=0.02)

    def test_nonpositive_g_flagged_not_nan(self):
        g = np.array([[0.5, -0.1], [0.0, 0.3]])
        s = np.full((2, 2), 0.2)
        img = PhasorImage(g, s, np.full((2, 2), 1e3),
                          np.ones((2, 2), dtype=bool), 1.0)
        ltimg = lifetime_from_phasor_image(img)
        assert ltimg.valid[0, 0]
        assert not ltimg.valid[0, 1]
        assert not ltimg.valid[1, 0]
        assert np.isfinite(ltimg.tau).all()


class TestPsnr:
    def test_identical_images_infinite(self):
        img = np.ones((4, 4))
        assert psnr(img, img, peak=1.0) == math.inf

    def test_zero_reference_constant_image(self):
        image = np.full((3, 3), 2.0)
        assert psnr(image, np.zeros((3, 3)), peak=2.0) == pytest.approx(0.0)

    def test_hand_computed_case(self):
        image = np.array([[1.0, 0.0], [0.0, 1.0]])
        reference = np.array([[0.0, 1.0], [1.0, 0.0]])  # MSE = 1
        assert psnr(image, reference, peak=255.0) == pytest.approx(48.13, abs=0.01)

    def test_symmetry_and_shift_invariance(self, rng):
        a = rng.uniform(0, 1, size=(6, 6))
        b = rng.uniform(0, 1, size=(6, 6))
        assert psnr(a, b, 1.0) == psnr(b, a, 1.0)
        assert psnr(a + 3.0, b + 3.0, 1.0) == pytest.approx(psnr(a, b, 1.0))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            psnr(np.ones((2, 2)), np.ones((3, 3)), 1.0)

    def test_masked_comparison(self, rng):
        a = rng.uniform(0, 1, size=(4, 4))
        b = a.copy()
        b[0, 0] = 100.0  # excluded by the mask
        mask = np.ones((4, 4), dtype=bool)
        mask[0, 0] = False
        assert psnr(a, b, 1.0, valid=mask) == math.inf


class TestComposite:
    @staticmethod
    def flat_lifetime(tau_value, side=4):
        tau = np.full((side, side, 1), tau_value)
        fr = np.ones((side, side, 1))
        return LifetimeImage(tau, fr, np.full((side, side), 100.0),
                             np.ones((side, side), dtype=bool))

    def test_short_lifetime_is_red(self):
        ltimg = self.flat_lifetime(0.5)
        image = composite(ltimg.intensity, ltimg, (0.5, 3.0))
        assert (image.rgb.reshape(-1, 3) == [255, 0, 0]).all()

    def test_zero_intensity_black(self):
        ltimg = self.flat_lifetime(1.0)
        image = composite(np.zeros((4, 4)), ltimg, (0.5, 3.0))
        assert (image.rgb == 0).all()

    def test_midpoint_is_green(self):
        ltimg = self.flat_lifetime(1.75)
        image = composite(ltimg.intensity, ltimg, (0.5, 3.0))
        assert (image.rgb.reshape(-1, 3) == [0, 255, 0]).all()

    def test_long_lifetime_is_blue(self):
        ltimg = self.flat_lifetime(3.0)
        image = composite(ltimg.intensity, ltimg, (0.5, 3.0))
        assert (image.rgb.reshape(-1, 3) == [0, 0, 255]).all()

    def test_degenerate_range_rejected(self):
        ltimg = self.flat_lifetime(1.0)
        with pytest.raises(ValueError):
            composite(ltimg.intensity, ltimg, (2.0, 2.0))

    def test_invalid_pixels_black(self):
        tau = np.full((2, 2, 1), 1.0)
        fr = np.ones((2, 2, 1))
        valid = np.array([[True, False], [True, True]])
        ltimg = LifetimeImage(tau, fr, np.full((2, 2), 10.0), valid)
        image = composite(ltimg.intensity, ltimg, (0.5, 3.0))
        assert (image.rgb[0, 1] == 0).all()
        assert image.rgb[0, 0].sum() > 0

    def test_type_guard(self):
        with pytest.raises(ValueError):
            CompositeImage(np.zeros((2, 2, 3)))  # float, not uint8


class TestDirectionBenchmark:
    def test_small_run_direction(self):
        summary = denoise_direction(n_seeds=5)
        fa = summary["frame_average"]
        assert fa["sg_wins"] >= 4
        assert fa["both_beat_baseline"] == 5
