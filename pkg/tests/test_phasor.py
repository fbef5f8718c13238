import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from flimkit.decay import (
    DecayModel,
    DiracIrf,
    PhantomSpec,
    Rectangle,
    Region,
    TimeGrid,
    evaluate_decay,
    synthesize_cube,
)
from flimkit.errors import LowSignalError, UndefinedLifetimeError
from flimkit.phasor import (
    FdMeasurement,
    Phasor,
    average_lifetime,
    default_omega,
    fd_from_components,
    fd_lifetimes,
    phasor_from_components,
    phasor_from_counts,
    phasor_from_fd,
    phasor_from_histogram,
    phasor_image,
)


def fine_curve_phasor(tau: float, omega: float, span_factor: float = 40.0):
    """Numerical phasor of a single-exponential on a long fine grid."""
    grid = TimeGrid(20000, span_factor * tau / 20000)
    curve = evaluate_decay(DecayModel.single(tau), DiracIrf(), grid)
    return phasor_from_counts(grid, curve, omega)


class TestPhasorFromHistogram:
    def test_omega_tau_one_lands_at_half_half(self):
        p = fine_curve_phasor(2.0, 0.5)
        assert p.g == pytest.approx(0.5, abs=1e-3)
        assert p.s == pytest.approx(0.5, abs=1e-3)

    def test_zero_lifetime_limit(self):
        grid = TimeGrid(1024, 0.01)
        counts = np.zeros(1024)
        counts[0] = 1e6
        p = phasor_from_counts(grid, counts, default_omega(grid))
        assert p.g == pytest.approx(1.0, abs=1e-2)
        assert p.s == pytest.approx(0.0, abs=1e-2)

    def test_mixture_on_connecting_segment(self):
        omega = 0.8
        model = DecayModel(((0.6, 0.5), (0.4, 3.0)))
        grid = TimeGrid(40000, 120.0 / 40000)
        curve = evaluate_decay(model, DiracIrf(), grid)
        p = phasor_from_counts(grid, curve, omega)
        p1 = phasor_from_components(DecayModel.single(0.5), omega)
        p2 = phasor_from_components(DecayModel.single(3.0), omega)
        # perpendicular distance from the chord between the endpoints
        d = np.array([p2.g - p1.g, p2.s - p1.s])
        v = np.array([p.g - p1.g, p.s - p1.s])
        perp = abs(d[0] * v[1] - d[1] * v[0]) / np.linalg.norm(d)
        assert perp < 1e-3
        t = float(v @ d / (d @ d))
        assert 0.0 <= t <= 1.0

    def test_zero_counts_rejected(self, grid):
        from flimkit.decay import TcspcHistogram

        hist = TcspcHistogram(grid, np.zeros(grid.n_bins, dtype=np.int64))
        with pytest.raises(LowSignalError):
            phasor_from_histogram(hist, 0.5)

    @given(st.integers(min_value=1, max_value=40))
    @settings(max_examples=20, deadline=None)
    def test_power_of_two_scaling_exact(self, k):
        grid = TimeGrid(128, 0.1)
        curve = evaluate_decay(DecayModel.single(1.7), DiracIrf(), grid)
        base = phasor_from_counts(grid, curve, 0.5)
        scaled = phasor_from_counts(grid, curve * 2.0**(k % 20), 0.5)
        assert scaled.g == base.g and scaled.s == base.s

    @given(st.floats(min_value=1e-3, max_value=1e6,
                     allow_nan=False, allow_infinity=False))
    @settings(max_examples=30, deadline=None)
    def test_general_scaling_invariance(self, c):
        grid = TimeGrid(128, 0.1)
        curve = evaluate_decay(DecayModel.single(1.7), DiracIrf(), grid)
        base = phasor_from_counts(grid, curve, 0.5)
        scaled = phasor_from_counts(grid, c * curve, 0.5)
        assert scaled.g == pytest.approx(base.g, rel=1e-12)
        assert scaled.s == pytest.approx(base.s, rel=1e-12)


class TestPhasorFromFd:
    def test_zero_phase_full_modulation(self):
        p = phasor_from_fd(FdMeasurement(m=1.0, phi=0.0, omega=1.0))
        assert (p.g, p.s) == (1.0, 0.0)

    def test_quarter_turn(self):
        p = phasor_from_fd(FdMeasurement(m=1 / math.sqrt(2), phi=math.pi / 4,
                                         omega=1.0))
        assert p.g == pytest.approx(0.5, abs=1e-12)
        assert p.s == pytest.approx(0.5, abs=1e-12)

    def test_round_trip(self, rng):
        for _ in range(50):
            m = rng.uniform(0.05, 1.0)
            phi = rng.uniform(0.0, math.pi / 2 - 1e-6)
            p = phasor_from_fd(FdMeasurement(m=m, phi=phi, omega=2.0))
            assert math.hypot(p.g, p.s) == pytest.approx(m, abs=1e-12)
            assert math.atan2(p.s, p.g) == pytest.approx(phi, abs=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            FdMeasurement(m=1.2, phi=0.1, omega=1.0)
        with pytest.raises(ValueError):
            FdMeasurement(m=0.5, phi=math.pi / 2, omega=1.0)
        with pytest.raises(ValueError):
            FdMeasurement(m=0.5, phi=0.1, omega=0.0)


class TestPhasorFromComponents:
    def test_omega_tau_one_exact(self):
        p = phasor_from_components(DecayModel.single(2.0), 0.5)
        assert (p.g, p.s) == (0.5, 0.5)

    def test_semicircle_membership(self, rng):
        for _ in range(100):
            tau = rng.uniform(0.05, 10.0)
            omega = rng.uniform(0.05, 20.0) / tau
            p = phasor_from_components(DecayModel.single(tau), omega)
            assert abs((p.g - 0.5) ** 2 + p.s**2 - 0.25) < 1e-12

    def test_matches_numerical(self, rng):
        for _ in range(10):
            tau = rng.uniform(0.3, 3.0)
            omega = rng.uniform(0.3, 3.0) / tau
            closed = phasor_from_components(DecayModel.single(tau), omega)
            numeric = fine_curve_phasor(tau, omega)
            assert numeric.g == pytest.approx(closed.g, abs=1e-3)
            assert numeric.s == pytest.approx(closed.s, abs=1e-3)

    def test_convex_combination(self, rng):
        omega = 0.7
        for _ in range(20):
            t1, t2 = rng.uniform(0.2, 1.0), rng.uniform(2.0, 6.0)
            a1 = rng.uniform(0.05, 0.95)
            model = DecayModel(((a1, t1), (1 - a1, t2)))
            p = phasor_from_components(model, omega)
            p1 = phasor_from_components(DecayModel.single(t1), omega)
            p2 = phasor_from_components(DecayModel.single(t2), omega)
            f1 = model.intensity_fractions()[0]
            assert p.g == pytest.approx(f1 * p1.g + (1 - f1) * p2.g, abs=1e-12)
            assert p.s == pytest.approx(f1 * p1.s + (1 - f1) * p2.s, abs=1e-12)

    def test_fd_td_consistency(self, rng):
        for _ in range(20):
            tau = rng.uniform(0.2, 5.0)
            omega = rng.uniform(0.1, 3.0)
            model = DecayModel.single(tau)
            via_fd = phasor_from_fd(fd_from_components(model, omega))
            direct = phasor_from_components(model, omega)
            assert via_fd.g == pytest.approx(direct.g, abs=1e-12)
            assert via_fd.s == pytest.approx(direct.s, abs=1e-12)


class TestFdLifetimes:
    def test_single_exponential_identical(self):
        meas = FdMeasurement(m=1 / math.sqrt(2), phi=math.pi / 4, omega=1.0)
        tau_m, tau_phi = fd_lifetimes(meas)
        assert tau_m == pytest.approx(1.0, abs=1e-12)
        assert tau_phi == pytest.approx(1.0, abs=1e-12)

    def test_limits_to_zero(self):
        tau_m, tau_phi = fd_lifetimes(FdMeasurement(m=1 - 1e-12, phi=1e-12,
                                                    omega=1.0))
        assert tau_m < 1e-5
        assert tau_phi < 1e-5

    def test_modulation_one_rejected(self):
        with pytest.raises(UndefinedLifetimeError):
            fd_lifetimes(FdMeasurement(m=1.0, phi=0.3, omega=1.0))

    def test_heterogeneity_ordering(self, rng):
        for _ in range(100):
            t1, t2 = rng.uniform(0.1, 1.0), rng.uniform(1.5, 8.0)
            a1 = rng.uniform(0.05, 0.95)
            omega = rng.uniform(0.2, 2.0)
            meas = fd_from_components(DecayModel(((a1, t1), (1 - a1, t2))), omega)
            tau_m, tau_phi = fd_lifetimes(meas)
            assert tau_phi <= tau_m + 1e-12


class TestAverageLifetime:
    def test_half_half(self):
        assert average_lifetime(Phasor(0.5, 0.5), 1.0) == pytest.approx(1.0)

    def test_single_exponential_exact(self, rng):
        for _ in range(30):
            tau = rng.uniform(0.1, 8.0)
            omega = rng.uniform(0.05, 20.0) / tau
            p = phasor_from_components(DecayModel.single(tau), omega)
            assert average_lifetime(p, omega) == pytest.approx(tau, rel=1e-12)

    def test_biexponential_equals_phase_lifetime(self, rng):
        omega = 0.9
        for _ in range(20):
            model = DecayModel(
                ((rng.uniform(0.1, 1), rng.uniform(0.2, 1.0)),
                 (rng.uniform(0.1, 1), rng.uniform(2.0, 6.0)))
            )
            p = phasor_from_components(model, omega)
            expected = math.tan(math.atan2(p.s, p.g)) / omega
            assert average_lifetime(p, omega) == pytest.approx(expected, abs=1e-12)

    def test_nonpositive_g_rejected(self):
        with pytest.raises(UndefinedLifetimeError):
            average_lifetime(Phasor(0.0, 0.3), 1.0)


class TestPhasorImage:
    def test_uniform_phantom_centroid_and_spread(self, grid):
        omega = default_omega(grid)
        tau = 1.0 / omega
        centroids = {}
        spreads = {}
        for photons in (1e3, 1e5):
            spec = PhantomSpec(
                width=12, height=12,
                regions=(
                    Region(Rectangle(0, 0, 12, 12), DecayModel.single(tau), photons),
                ),
            )
            cube, _ = synthesize_cube(spec, DiracIrf(), grid, 8)
            img = phasor_image(cube, omega)
            pts = img.points()
            centroids[photons] = pts.mean(axis=0)
            spreads[photons] = pts.std(axis=0).mean()
        closed = phasor_from_components(
            DecayModel.single(tau), omega
        )
        # midpoint-rule discretization keeps the numeric point near the
        # closed form; centroid of the noisy cloud stays within 0.01
        assert np.abs(centroids[1e5] - [closed.g, closed.s]).max() < 0.01
        assert spreads[1e5] < spreads[1e3] / 3

    def test_all_below_floor(self, grid):
        spec = PhantomSpec(
            width=6, height=6,
            regions=(Region(Rectangle(0, 0, 6, 6), DecayModel.single(1.0), 20.0),),
        )
        cube, _ = synthesize_cube(spec, DiracIrf(), grid, 0)
        img = phasor_image(cube, intensity_floor=100.0)
        assert not img.valid.any()

    def test_two_population_separation(self):
        from flimkit.bench import two_population_phantom

        cube, _, labels, omega = two_population_phantom(side=24, seed=4)
        img = phasor_image(cube, omega)
        pts = np.stack([img.g, img.s], axis=-1)
        a = pts[labels == 0].reshape(-1, 2)
        b = pts[labels == 1].reshape(-1, 2)
        separation = np.linalg.norm(a.mean(axis=0) - b.mean(axis=0))
        within = max(a.std(axis=0).mean(), b.std(axis=0).mean())
        assert separation > 5 * within
