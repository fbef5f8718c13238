import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flimkit.bench import BENCH_IRF, FIT_RECOVERY_GRID, fit_recovery_rate
from flimkit.decay import (
    DecayModel,
    DiracIrf,
    FlimCube,
    GaussianIrf,
    TcspcHistogram,
    TimeGrid,
    evaluate_decay,
    synthesize_histogram_on,
)
from flimkit.errors import (
    DegenerateParameterWarning,
    LowSignalError,
    UndefinedLifetimeError,
)
from flimkit.fitting import (
    CurveModel,
    batch_fit,
    fit_em,
    fit_lsm,
    fit_lsm_values,
    gate_lifetime,
    gate_lifetime_values,
    tail_fit,
)


class TestFitLsm:
    def test_noiseless_rounded_recovery(self, grid):
        curve = evaluate_decay(DecayModel.single(1.0), DiracIrf(), grid)
        hist = TcspcHistogram(grid, np.round(1e5 * curve).astype(np.int64))
        result = fit_lsm(hist, DiracIrf(), 1)
        assert result.model.lifetimes[0] == pytest.approx(1.0, rel=0.005)
        assert result.converged

    def test_fixed_point_at_truth(self, grid):
        model = DecayModel.single(1.0)
        curve = evaluate_decay(model, DiracIrf(), grid)
        result = fit_lsm_values(
            grid, 1e5 * curve, DiracIrf(), 1, init=model, track_history=True
        )
        assert result.iterations <= 3
        assert result.residual_norm < 1e-6
        assert result.model.lifetimes[0] == pytest.approx(1.0, rel=1e-6)

    def test_monte_carlo_recovery(self):
        report = fit_recovery_rate(n_seeds=100)
        assert report["hits"] >= 90

    def test_low_signal_rejected(self, grid):
        hist = TcspcHistogram(grid, np.zeros(grid.n_bins, dtype=np.int64))
        with pytest.raises(LowSignalError):
            fit_lsm(hist, DiracIrf(), 1)

    def test_chi2_history_non_increasing(self, grid):
        curve = evaluate_decay(DecayModel.single(1.2), DiracIrf(), grid)
        hist = synthesize_histogram_on(grid, curve, 5e3, 7)
        result = fit_lsm(hist, DiracIrf(), 1, track_history=True)
        history = np.array(result.chi2_history)
        assert (np.diff(history) <= 1e-9).all()

    def test_lifetimes_within_bounds(self, grid):
        curve = evaluate_decay(DecayModel.single(1.2), DiracIrf(), grid)
        hist = synthesize_histogram_on(grid, curve, 5e3, 3)
        result = fit_lsm(hist, DiracIrf(), 2)
        assert (result.model.lifetimes >= 0.01).all()
        assert (result.model.lifetimes <= 20.0).all()
        taus = result.model.lifetimes
        assert taus[0] <= taus[1]


class TestJacobian:
    @pytest.mark.parametrize("n_components", [1, 2])
    @pytest.mark.parametrize("irf_kind", ["dirac", "gaussian"])
    def test_matches_finite_differences(self, grid, n_components, irf_kind):
        irf = DiracIrf() if irf_kind == "dirac" else GaussianIrf(1.0, 0.15)
        model = CurveModel(grid, irf, n_components)
        rng = np.random.default_rng(42)
        worst = 0.0
        for _ in range(10):
            if n_components == 1:
                p = np.array([rng.uniform(0.3, 3.0), rng.uniform(5, 12)])
            else:
                p = np.array([rng.uniform(0.3, 1.0), rng.uniform(2, 5),
                              rng.uniform(-2, 2), rng.uniform(5, 12)])
            _, jac = model.eval(p[None, :])
            for k in range(p.size):
                h = 1e-6 * max(abs(p[k]), 1.0)
                pp, pm = p.copy(), p.copy()
                pp[k] += h
                pm[k] -= h
                fd = (model.eval(pp[None, :])[0][0]
                      - model.eval(pm[None, :])[0][0]) / (2 * h)
                denom = max(np.abs(fd).max(), np.abs(jac[0, :, k]).max(), 1e-12)
                worst = max(worst, np.abs(fd - jac[0, :, k]).max() / denom)
        assert worst < 1e-5


class TestTailFit:
    def test_agrees_with_full_fit_on_dirac_data(self, grid):
        curve = evaluate_decay(DecayModel.single(1.5), DiracIrf(), grid)
        hist = synthesize_histogram_on(grid, curve, 1e5, 11)
        full = fit_lsm(hist, DiracIrf(), 1)
        tail = tail_fit(hist, start=grid.bin_width * 1.5, n_components=1)
        assert tail.model.lifetimes[0] == pytest.approx(
            full.model.lifetimes[0], rel=0.01
        )

    def test_gaussian_irf_tail(self, grid):
        irf = GaussianIrf(center=1.0, fwhm=0.2)
        curve = evaluate_decay(DecayModel.single(2.0), irf, grid)
        hist = synthesize_histogram_on(grid, curve, 1e6, 2)
        result = tail_fit(hist, start=1.0 + 4 * 0.2, n_components=1)
        assert result.model.lifetimes[0] == pytest.approx(2.0, rel=0.05)

    def test_start_past_end_rejected(self, grid):
        curve = evaluate_decay(DecayModel.single(1.0), DiracIrf(), grid)
        hist = synthesize_histogram_on(grid, curve, 1e4, 1)
        with pytest.raises(ValueError):
            tail_fit(hist, start=grid.span + 1.0)

    def test_start_before_peak_rejected(self, grid):
        irf = GaussianIrf(center=2.0, fwhm=0.3)
        curve = evaluate_decay(DecayModel.single(1.0), irf, grid)
        hist = synthesize_histogram_on(grid, curve, 1e5, 1)
        with pytest.raises(ValueError, match="peak"):
            tail_fit(hist, start=0.5)


class TestGateLifetime:
    def test_exact_inversion(self):
        grid = TimeGrid(4000, 0.005)
        curve = evaluate_decay(DecayModel.single(1.0), DiracIrf(), grid)
        tau = gate_lifetime_values(grid, curve, gate_width=1.0, gate1_start=0.0)
        assert tau == pytest.approx(1.0, abs=1e-9)

    def test_binning_bias_bounded(self):
        grid = TimeGrid(2000, 0.01)
        curve = evaluate_decay(DecayModel.single(2.0), DiracIrf(), grid)
        tau = gate_lifetime_values(grid, curve, gate_width=2.0, gate1_start=0.0)
        assert tau == pytest.approx(2.0, rel=0.01)

    def test_zero_tail_gate(self, grid):
        counts = np.zeros(grid.n_bins, dtype=np.int64)
        counts[:10] = 100
        hist = TcspcHistogram(grid, counts)
        with pytest.raises(LowSignalError):
            gate_lifetime(hist, gate_width=2.0, gate1_start=8.0)

    def test_non_decaying_rejected(self, grid):
        counts = np.ones(grid.n_bins, dtype=np.int64) * 50
        hist = TcspcHistogram(grid, counts)
        with pytest.raises(UndefinedLifetimeError):
            gate_lifetime(hist, gate_width=2.0, gate1_start=0.0)

    def test_gates_outside_grid_rejected(self, grid):
        counts = np.ones(grid.n_bins, dtype=np.int64)
        hist = TcspcHistogram(grid, counts)
        with pytest.raises(ValueError):
            gate_lifetime(hist, gate_width=10.0, gate1_start=0.0)

    @given(st.integers(min_value=1, max_value=1000))
    @settings(max_examples=25, deadline=None)
    def test_intensity_scaling_invariance(self, c):
        grid = TimeGrid(512, 0.02)
        curve = evaluate_decay(DecayModel.single(1.3), DiracIrf(), grid)
        counts = np.round(1e4 * curve)
        tau1 = gate_lifetime_values(grid, counts, 1.0, 0.0)
        tau2 = gate_lifetime_values(grid, c * counts, 1.0, 0.0)
        assert tau1 == tau2


class TestFitEm:
    def test_recovery_at_150ps(self):
        grid = TimeGrid(1250, 0.01)
        irf = GaussianIrf(center=1.0, fwhm=0.15)
        curve = evaluate_decay(DecayModel.single(1.5), irf, grid)
        hist = synthesize_histogram_on(grid, curve, 1e6, 11)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tau, estimate = fit_em(hist, max_iter=3000)
        assert tau == pytest.approx(1.5, rel=0.05)
        assert estimate.theta == pytest.approx(0.15, rel=0.20)
        assert estimate.t0 == pytest.approx(1.0, abs=0.05)

    def test_dirac_like_truth_clamps_at_floor(self):
        grid = TimeGrid(12500, 0.001)
        irf = GaussianIrf(center=1.0, fwhm=0.001)
        curve = evaluate_decay(DecayModel.single(1.5), irf, grid)
        hist = synthesize_histogram_on(grid, curve, 1e6, 5)
        with pytest.warns(DegenerateParameterWarning):
            tau, estimate = fit_em(hist, max_iter=20000)
        sigma = estimate.theta / (2 * math.sqrt(2 * math.log(2)))
        assert sigma == pytest.approx(0.001, rel=1e-6)
        assert tau == pytest.approx(1.5, rel=0.02)

    def test_log_likelihood_non_decreasing(self):
        grid = TimeGrid(256, 0.0488)
        rng = np.random.default_rng(0)
        for seed in range(20):
            tau = rng.uniform(0.5, 3.0)
            theta = rng.uniform(0.05, 0.3)
            irf = GaussianIrf(center=1.0, fwhm=theta)
            curve = evaluate_decay(DecayModel.single(tau), irf, grid)
            hist = synthesize_histogram_on(grid, curve, 1e4, seed)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                _, estimate = fit_em(hist, max_iter=200)
            ll = np.array(estimate.ll_history)
            assert (np.diff(ll) >= -1e-7 * np.abs(ll[:-1])).all()

    def test_low_signal_rejected(self, grid):
        counts = np.zeros(grid.n_bins, dtype=np.int64)
        counts[10] = 500
        with pytest.raises(LowSignalError):
            fit_em(TcspcHistogram(grid, counts))


class TestBatchFit:
    def test_shot_noise_scaling(self):
        from flimkit.decay import PhantomSpec, Rectangle, Region, synthesize_cube

        grid = TimeGrid(64, 0.195)
        stds = []
        for photons in (1e3, 1e4, 1e5):
            spec = PhantomSpec(
                width=12, height=12,
                regions=(
                    Region(Rectangle(0, 0, 12, 12), DecayModel.single(1.0), photons),
                ),
            )
            cube, _ = synthesize_cube(spec, DiracIrf(), grid, 6)
            img = batch_fit(cube, DiracIrf(), 1, "lsm")
            stds.append(img.tau[..., 0][img.valid].std())
        # sigma should shrink ~1/sqrt(10) per decade, within a factor 1.5
        for a, b in zip(stds, stds[1:]):
            ratio = a / b
            assert math.sqrt(10) / 1.5 < ratio < math.sqrt(10) * 1.5

    def test_all_zero_cube_invalid(self, grid):
        cube = FlimCube(grid, np.zeros((4, 4, grid.n_bins), dtype=np.int64))
        img = batch_fit(cube, DiracIrf(), 1, "lsm")
        assert not img.valid.any()
        img = batch_fit(cube, DiracIrf(), 1, "gate")
        assert not img.valid.any()

    def test_two_region_means(self):
        from flimkit.decay import PhantomSpec, Rectangle, Region, synthesize_cube

        grid = TimeGrid(64, 0.195)
        spec = PhantomSpec(
            width=16, height=8,
            regions=(
                Region(Rectangle(0, 0, 8, 8), DecayModel.single(0.5), 1e4),
                Region(Rectangle(8, 0, 8, 8), DecayModel.single(3.0), 1e4),
            ),
        )
        cube, _ = synthesize_cube(spec, DiracIrf(), grid, 1)
        img = batch_fit(cube, DiracIrf(), 1, "lsm")
        left = img.tau[:, :8, 0].mean()
        right = img.tau[:, 8:, 0].mean()
        assert left == pytest.approx(0.5, rel=0.05)
        assert right == pytest.approx(3.0, rel=0.05)

    def test_deterministic(self):
        from flimkit.bench import uniform_biexp_cube

        cube, _ = uniform_biexp_cube(8, 1e4, 3, TimeGrid(64, 0.195))
        img1 = batch_fit(cube, BENCH_IRF, 2, "lsm")
        img2 = batch_fit(cube, BENCH_IRF, 2, "lsm")
        assert np.array_equal(img1.tau, img2.tau)
        assert np.array_equal(img1.fractions, img2.fractions)

    def test_gate_method(self):
        grid = TimeGrid(128, 0.1)
        curve = evaluate_decay(DecayModel.single(1.5), DiracIrf(), grid)
        counts = np.round(1e5 * curve).astype(np.int64)
        cube = FlimCube(grid, np.tile(counts, (3, 3, 1)))
        img = batch_fit(cube, DiracIrf(), 1, "gate", gate_width=2.0,
                        gate1_start=0.0)
        assert img.valid.all()
        assert img.tau[..., 0] == pytest.approx(1.5, rel=0.01)

    def test_tail_method(self):
        grid = TimeGrid(128, 0.1)
        irf = GaussianIrf(center=1.0, fwhm=0.2)
        curve = evaluate_decay(DecayModel.single(2.0), irf, grid)
        counts = np.round(1e5 * curve).astype(np.int64)
        cube = FlimCube(grid, np.tile(counts, (2, 2, 1)))
        img = batch_fit(cube, DiracIrf(), 1, "tail", tail_start=1.8)
        assert img.valid.all()
        assert img.tau[..., 0] == pytest.approx(2.0, rel=0.05)

    def test_unknown_method(self, grid):
        cube = FlimCube(grid, np.ones((2, 2, grid.n_bins), dtype=np.int64))
        with pytest.raises(ValueError):
            batch_fit(cube, DiracIrf(), 1, "annealing")


class TestRecoveryGridRationale:
    def test_bench_grid_spans_default_window(self):
        assert FIT_RECOVERY_GRID.span == pytest.approx(12.5)
