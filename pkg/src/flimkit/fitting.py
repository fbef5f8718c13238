"""Lifetime extraction from TCSPC histograms.

Four estimators are provided: weighted least-squares curve fitting with
the full IRF model (Levenberg-Marquardt), tail fitting past the pulse,
a two-gate rapid lifetime estimate, and an expectation-maximization
fit of an exponentially-modified-Gaussian model that recovers both the
lifetime and a Gaussian IRF from the same histogram.

The least-squares fitters weight residuals by 1/max(counts, 1), the
Poisson-motivated choice; the EM fitter maximizes the binned likelihood
directly.  The least-squares machinery is written over batches of
histograms so whole images fit in a handful of vectorized passes; a
single histogram is just a batch of one.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfcx, log_ndtr

from .decay import (
    DecayModel,
    DiracIrf,
    FlimCube,
    FWHM_PER_SIGMA,
    Irf,
    TcspcHistogram,
    TimeGrid,
)
from .errors import (
    DegenerateParameterWarning,
    LowSignalError,
    UndefinedLifetimeError,
)
from .images import LifetimeImage

TAU_BOUNDS = (0.01, 20.0)  # ns
LOGIT_BOUND = 9.0
LOG_SCALE_BOUND = 60.0
DEFAULT_MIN_TOTAL = 100
LM_MAX_ITER = 200
LM_STEP_TOL = 1e-8
LM_LAMBDA0 = 1e-3
EM_MIN_TOTAL = 1000
# EM converges linearly; bright histograms need a few thousand steps to
# push the log-likelihood gain under the tolerance
EM_MAX_ITER = 2000
EM_LL_TOL = 1e-9
EM_SIGMA_FLOOR = 0.001  # ns


@dataclass(frozen=True)
class FitResult:
    """Outcome of a least-squares fit on one histogram."""

    model: DecayModel
    scale: float
    residual_norm: float
    iterations: int
    converged: bool
    chi2_history: tuple[float, ...] = field(default=(), repr=False, compare=False)


@dataclass(frozen=True)
class IrfEstimate:
    """Gaussian IRF recovered jointly with the lifetime by the EM fitter."""

    t0: float
    theta: float
    log_likelihood: float
    converged: bool = True
    ll_history: tuple[float, ...] = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError("theta must be positive")


def _logit(p: float) -> float:
    p = min(max(p, 1e-7), 1 - 1e-7)
    return math.log(p / (1 - p))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


class CurveModel:
    """Expected curve and analytic Jacobian for the LM fitter.

    Parameter layout per batch element:
      1 component:  [tau, log_scale]
      2 components: [tau1, tau2, logit_a1, log_scale]
    The model value is exp(log_scale) * shape(params), where shape is the
    IRF-convolved multi-exponential normalized to unit sum, matching
    `decay.evaluate_decay`.
    """

    def __init__(self, grid: TimeGrid, irf: Irf, n_components: int):
        if n_components not in (1, 2):
            raise ValueError("n_components must be 1 or 2")
        self.grid = grid
        self.n_components = n_components
        self.n_params = 2 if n_components == 1 else 4
        if isinstance(irf, DiracIrf):
            self._irf_rfft = None
            self._times = grid.rel_centers()
        else:
            samples = irf.sample_on(grid)
            n = grid.n_bins
            self._irf_rfft = np.fft.rfft(samples, 2 * n)
            self._times = np.arange(n) * grid.bin_width

    def _convolve(self, curves: np.ndarray) -> np.ndarray:
        # no clipping: derivative kernels passed through here go negative
        if self._irf_rfft is None:
            return curves
        n = self.grid.n_bins
        spec = np.fft.rfft(curves, 2 * n, axis=-1)
        return np.fft.irfft(spec * self._irf_rfft, 2 * n, axis=-1)[..., :n]

    def lower_bounds(self) -> np.ndarray:
        if self.n_components == 1:
            return np.array([TAU_BOUNDS[0], -LOG_SCALE_BOUND])
        return np.array([TAU_BOUNDS[0], TAU_BOUNDS[0], -LOGIT_BOUND, -LOG_SCALE_BOUND])

    def upper_bounds(self) -> np.ndarray:
        if self.n_components == 1:
            return np.array([TAU_BOUNDS[1], LOG_SCALE_BOUND])
        return np.array([TAU_BOUNDS[1], TAU_BOUNDS[1], LOGIT_BOUND, LOG_SCALE_BOUND])

    def step_limits(self, params: np.ndarray) -> np.ndarray:
        """Per-parameter trust bounds so one step cannot saturate a parameter."""
        limits = np.empty_like(params)
        limits[:, : self.n_components] = 0.5 * np.maximum(
            np.abs(params[:, : self.n_components]), 0.1
        )
        limits[:, self.n_components :] = 1.5
        return limits

    def eval(self, params: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Model values (B, n) and Jacobian d(model)/d(params) (B, n, P)."""
        params = np.atleast_2d(params)
        batch = params.shape[0]
        t = self._times
        scale = np.exp(params[:, -1])[:, None]

        if self.n_components == 1:
            tau = params[:, 0][:, None]
            frac = np.ones((batch, 1))
            taus = tau[:, :, None]  # (B, 1, 1)
            fracs = frac[:, :, None]
        else:
            tau1 = params[:, 0][:, None, None]
            tau2 = params[:, 1][:, None, None]
            a1 = _sigmoid(params[:, 2])[:, None, None]
            taus = np.concatenate([tau1, tau2], axis=1)  # (B, 2, 1)
            fracs = np.concatenate([a1, 1.0 - a1], axis=1)

        expo = np.exp(-t[None, None, :] / taus)  # (B, C, n)
        u = (fracs * expo).sum(axis=1)  # unnormalized shape
        du = []  # per-parameter derivative of u, excluding log_scale
        for c in range(self.n_components):
            du.append(fracs[:, c] * expo[:, c] * t[None, :] / taus[:, c] ** 2)
        if self.n_components == 2:
            da = (fracs[:, 0] * fracs[:, 1])[:, 0][:, None]  # sigmoid'(logit)
            du.append(da * (expo[:, 0] - expo[:, 1]))

        u = self._convolve(u)
        du = [self._convolve(d) for d in du]

        total = u.sum(axis=1, keepdims=True)
        total = np.where(total > 0, total, 1.0)
        shape = u / total
        model = scale * shape

        jac = np.empty((batch, self.grid.n_bins, self.n_params))
        for k, d in enumerate(du):
            dshape = d / total - shape * (d.sum(axis=1, keepdims=True) / total)
            jac[:, :, k] = scale * dshape
        jac[:, :, -1] = model  # d/d log_scale
        return model, jac

    def pack(self, model: DecayModel, scale: float) -> np.ndarray:
        """Parameter vector from a decay model (components sorted by lifetime)."""
        comps = sorted(model.components, key=lambda c: c[1])
        if len(comps) != self.n_components:
            raise ValueError(
                f"init model has {len(comps)} components, expected {self.n_components}"
            )
        log_s = math.log(max(scale, 1e-12))
        if self.n_components == 1:
            return np.array([comps[0][1], log_s])
        a_total = comps[0][0] + comps[1][0]
        a1 = comps[0][0] / a_total if a_total > 0 else 0.5
        return np.array([comps[0][1], comps[1][1], _logit(a1), log_s])

    def unpack(self, params: np.ndarray) -> tuple[DecayModel, float]:
        scale = float(np.exp(params[-1]))
        if self.n_components == 1:
            return DecayModel.single(float(params[0])), scale
        tau1, tau2 = float(params[0]), float(params[1])
        a1 = float(_sigmoid(np.array(params[2])))
        if tau1 <= tau2:
            model = DecayModel(((a1, tau1), (1.0 - a1, tau2)))
        else:
            model = DecayModel(((1.0 - a1, tau2), (a1, tau1)))
        return model, scale


def _lm_minimize(
    model: CurveModel,
    y: np.ndarray,
    p0: np.ndarray,
    max_iter: int = LM_MAX_ITER,
    track_history: bool = False,
) -> dict:
    """Batched Levenberg-Marquardt on chi^2 = sum (y - m)^2 / max(y, 1).

    Every batch element keeps its own damping factor; an element finishes
    when an accepted step moves all parameters by less than LM_STEP_TOL in
    relative terms, or when damping saturates without progress.
    """
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    p = np.atleast_2d(p0).astype(np.float64).copy()
    batch, n_params = p.shape
    lo, hi = model.lower_bounds(), model.upper_bounds()
    p = np.clip(p, lo, hi)

    inv_sigma = 1.0 / np.sqrt(np.maximum(y, 1.0))
    m, jac = model.eval(p)
    resid = (y - m) * inv_sigma
    chi2 = np.einsum("bn,bn->b", resid, resid)

    lam = np.full(batch, LM_LAMBDA0)
    converged = np.zeros(batch, dtype=bool)
    active = np.ones(batch, dtype=bool)
    iterations = np.zeros(batch, dtype=np.int64)
    history = [chi2.copy()] if track_history else None

    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        jac_a = jac[idx] * inv_sigma[idx][:, :, None]
        grad = np.einsum("bnp,bn->bp", jac_a, resid[idx])
        hess = np.einsum("bnp,bnq->bpq", jac_a, jac_a)
        diag = np.einsum("bpp->bp", hess).copy()
        diag[diag <= 0] = 1.0
        damped = hess + lam[idx, None, None] * diag[:, :, None] * np.eye(n_params)
        try:
            delta = np.linalg.solve(damped, grad[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            delta = np.stack(
                [np.linalg.lstsq(a, b, rcond=None)[0] for a, b in zip(damped, grad)]
            )

        limits = model.step_limits(p[idx])
        with np.errstate(divide="ignore", invalid="ignore"):
            shrink = np.min(limits / np.maximum(np.abs(delta), 1e-300), axis=1)
        delta *= np.minimum(shrink, 1.0)[:, None]
        p_new = np.clip(p[idx] + delta, lo, hi)
        m_new, jac_new = model.eval(p_new)
        resid_new = (y[idx] - m_new) * inv_sigma[idx]
        chi2_new = np.einsum("bn,bn->b", resid_new, resid_new)

        accept = np.isfinite(chi2_new) & (chi2_new <= chi2[idx])
        acc = idx[accept]
        if acc.size:
            step = p_new[accept] - p[acc]
            rel = np.abs(step) / np.maximum(np.abs(p[acc]), 1e-12)
            p[acc] = p_new[accept]
            m[acc] = m_new[accept]
            jac[acc] = jac_new[accept]
            resid[acc] = resid_new[accept]
            chi2[acc] = chi2_new[accept]
            lam[acc] = np.maximum(lam[acc] / 10.0, 1e-12)
            done = rel.max(axis=1) < LM_STEP_TOL
            converged[acc[done]] = True
            active[acc[done]] = False
        rej = idx[~accept]
        if rej.size:
            lam[rej] *= 10.0
            stuck = lam[rej] > 1e12
            active[rej[stuck]] = False  # converged stays False
        iterations[idx] += 1
        if track_history:
            history.append(chi2.copy())

    return {
        "params": p,
        "chi2": chi2,
        "iterations": iterations,
        "converged": converged,
        "history": history,
    }


def _default_init_tau(grid: TimeGrid, y: np.ndarray) -> np.ndarray:
    """Half-window gate estimate used to seed the LM fit, per batch row."""
    half = grid.n_bins // 2
    i1 = y[:, :half].sum(axis=1)
    i2 = y[:, half:].sum(axis=1)
    tau = np.full(y.shape[0], grid.span / 4.0)
    ok = (i1 > 0) & (i2 > 0) & (i2 < i1)
    with np.errstate(divide="ignore", invalid="ignore"):
        est = (grid.span / 2.0) / np.log(i1 / i2)
    tau[ok] = est[ok]
    return np.clip(tau, TAU_BOUNDS[0] * 2, TAU_BOUNDS[1] / 2)


def _initial_params(
    model: CurveModel, grid: TimeGrid, y: np.ndarray, init: DecayModel | None
) -> np.ndarray:
    totals = np.maximum(y.sum(axis=1), 1e-12)
    log_s = np.log(totals)
    if init is not None:
        base = model.pack(init, 1.0)
        p0 = np.tile(base, (y.shape[0], 1))
        p0[:, -1] = log_s
        return p0
    tau = _default_init_tau(grid, y)
    if model.n_components == 1:
        return np.column_stack([tau, log_s])
    return np.column_stack(
        [np.clip(tau * 0.5, *TAU_BOUNDS), np.clip(tau * 2.0, *TAU_BOUNDS),
         np.zeros_like(tau), log_s]
    )


def fit_lsm_values(
    grid: TimeGrid,
    values: np.ndarray,
    irf: Irf,
    n_components: int = 1,
    init: DecayModel | None = None,
    min_total: float = DEFAULT_MIN_TOTAL,
    max_iter: int = LM_MAX_ITER,
    track_history: bool = False,
) -> FitResult:
    """Least-squares fit of a single (possibly real-valued) count vector."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.shape[0] != grid.n_bins:
        raise ValueError("values length must match the grid")
    total = values.sum()
    if total < min_total:
        raise LowSignalError(
            f"total counts {total:.1f} below the fit floor of {min_total}"
        )
    model = CurveModel(grid, irf, n_components)
    p0 = _initial_params(model, grid, values[None, :], init)
    out = _lm_minimize(model, values[None, :], p0, max_iter, track_history)
    decay_model, scale = model.unpack(out["params"][0])
    residual_norm = math.sqrt(out["chi2"][0] / grid.n_bins)
    history = tuple(float(h[0]) for h in out["history"]) if track_history else ()
    return FitResult(
        model=decay_model,
        scale=scale,
        residual_norm=residual_norm,
        iterations=int(out["iterations"][0]),
        converged=bool(out["converged"][0]),
        chi2_history=history,
    )


def fit_lsm(
    hist: TcspcHistogram,
    irf: Irf,
    n_components: int = 1,
    init: DecayModel | None = None,
    **kwargs,
) -> FitResult:
    """Levenberg-Marquardt fit of an IRF-convolved multi-exponential model."""
    return fit_lsm_values(
        hist.grid, hist.counts.astype(np.float64), irf, n_components, init, **kwargs
    )


def _tail_window(grid: TimeGrid, counts: np.ndarray, start: float) -> np.ndarray:
    centers = grid.centers()
    peak_center = centers[int(np.argmax(counts))]
    if start <= peak_center:
        raise ValueError(
            f"tail start {start} ns must be beyond the histogram peak at "
            f"{peak_center:.4f} ns"
        )
    sel = np.flatnonzero(centers >= start)
    if sel.size < 10:
        raise ValueError(
            f"tail window must keep at least 10 bins, only {sel.size} remain"
        )
    return sel


def tail_fit(
    hist: TcspcHistogram, start: float, n_components: int = 1, **kwargs
) -> FitResult:
    """Dirac-IRF fit restricted to bins at or beyond `start` (absolute ns)."""
    sel = _tail_window(hist.grid, hist.counts, start)
    sub_grid = TimeGrid(
        sel.size, hist.grid.bin_width,
        hist.grid.centers()[sel[0]] - hist.grid.bin_width / 2,
    )
    return fit_lsm_values(
        sub_grid, hist.counts[sel].astype(np.float64), DiracIrf(), n_components,
        **kwargs,
    )


def gate_lifetime_values(
    grid: TimeGrid, values: np.ndarray, gate_width: float, gate1_start: float
) -> float:
    """Two-gate rapid lifetime estimate tau = width / ln(I1 / I2)."""
    values = np.asarray(values, dtype=np.float64)
    if not gate_width > 0:
        raise ValueError("gate_width must be positive")
    if gate1_start < grid.origin or gate1_start + 2 * gate_width > grid.end:
        raise ValueError("both gates must lie inside the grid")
    centers = grid.centers()
    in1 = (centers >= gate1_start) & (centers < gate1_start + gate_width)
    in2 = (centers >= gate1_start + gate_width) & (
        centers < gate1_start + 2 * gate_width
    )
    i1 = values[in1].sum()
    i2 = values[in2].sum()
    if i1 <= 0 or i2 <= 0:
        raise LowSignalError("a gate contains no photons")
    if i2 >= i1:
        raise UndefinedLifetimeError(
            "second gate is at least as bright as the first; lifetime undefined"
        )
    return gate_width / math.log(i1 / i2)


def gate_lifetime(hist: TcspcHistogram, gate_width: float, gate1_start: float) -> float:
    return gate_lifetime_values(
        hist.grid, hist.counts.astype(np.float64), gate_width, gate1_start
    )


# --- EM fit of the exponentially-modified-Gaussian model ------------------

_SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


def _emg_log_likelihood(
    x: np.ndarray, c: np.ndarray, tau: float, t0: float, sigma: float
) -> float:
    """Binned log-likelihood of arrivals = Gaussian(t0, sigma) + Exp(tau)."""
    u = sigma / tau - (x - t0) / sigma
    ll = (
        -math.log(tau)
        + sigma**2 / (2.0 * tau**2)
        - (x - t0) / tau
        + log_ndtr(-u)
    )
    return float(np.sum(c * ll))


def fit_em(
    hist: TcspcHistogram,
    init: tuple[float, IrfEstimate] | None = None,
    max_iter: int = EM_MAX_ITER,
    tol: float = EM_LL_TOL,
) -> tuple[float, IrfEstimate]:
    """Jointly estimate a mono-exponential lifetime and a Gaussian IRF.

    Each photon arrival is modeled as an exponential emission delay
    (lifetime tau) added to Gaussian timing jitter (center t0, width
    sigma).  The E-step takes the posterior of the latent delay, which is
    a Gaussian truncated at zero, and the M-step updates (tau, t0, sigma)
    in closed form from its first two moments.  The binned log-likelihood
    is non-decreasing across iterations.
    """
    total = hist.total
    if total < EM_MIN_TOTAL:
        raise LowSignalError(
            f"EM fit needs at least {EM_MIN_TOTAL} photons, got {total}"
        )
    grid = hist.grid
    sel = hist.counts > 0
    x = grid.centers()[sel]
    c = hist.counts[sel].astype(np.float64)
    n_photons = c.sum()

    if init is not None:
        tau, irf0 = init
        t0 = irf0.t0
        sigma = max(irf0.theta / FWHM_PER_SIGMA, EM_SIGMA_FLOOR)
    else:
        t0 = float(grid.centers()[int(np.argmax(hist.counts))])
        tau = max(float(np.sum(c * x) / n_photons - t0), grid.bin_width)
        sigma = max(2.0 * grid.bin_width, 0.01)

    ll = _emg_log_likelihood(x, c, tau, t0, sigma)
    history = [ll]
    converged = False
    clamped = False
    for _ in range(max_iter):
        # E-step: moments of the emission delay e | x ~ N(mean, sigma^2) truncated at 0
        mean = x - t0 - sigma**2 / tau
        alpha = -mean / sigma
        hazard = _SQRT_2_OVER_PI / erfcx(alpha / math.sqrt(2.0))
        e1 = np.maximum(mean + sigma * hazard, 0.0)
        var = sigma**2 * np.maximum(1.0 + alpha * hazard - hazard**2, 0.0)
        e2 = var + e1**2

        # M-step: closed-form updates from the expected sufficient statistics
        tau = max(float(np.sum(c * e1) / n_photons), 1e-6)
        jitter = x - e1
        t0 = float(np.sum(c * jitter) / n_photons)
        jitter2 = x**2 - 2.0 * x * e1 + e2
        var_j = float(np.sum(c * jitter2) / n_photons) - t0**2
        sigma = math.sqrt(max(var_j, EM_SIGMA_FLOOR**2))
        if sigma <= EM_SIGMA_FLOOR:
            sigma = EM_SIGMA_FLOOR
            clamped = True

        ll_new = _emg_log_likelihood(x, c, tau, t0, sigma)
        history.append(ll_new)
        if abs(ll_new - ll) < tol:
            ll = ll_new
            converged = True
            break
        ll = ll_new

    if clamped:
        warnings.warn(
            "EM IRF width collapsed and was clamped at 1 ps",
            DegenerateParameterWarning,
            stacklevel=2,
        )
    if not converged:
        warnings.warn(
            f"EM did not converge within {max_iter} iterations",
            DegenerateParameterWarning,
            stacklevel=2,
        )
    estimate = IrfEstimate(
        t0=t0,
        theta=sigma * FWHM_PER_SIGMA,
        log_likelihood=ll,
        converged=converged,
        ll_history=tuple(history),
    )
    return tau, estimate


# --- whole-image fitting ---------------------------------------------------

BATCH_CHUNK = 4096


def fit_image_values(
    grid: TimeGrid,
    values: np.ndarray,
    irf: Irf,
    n_components: int = 1,
    method: str = "lsm",
    min_total: float = DEFAULT_MIN_TOTAL,
    init: DecayModel | None = None,
    tail_start: float | None = None,
    gate_width: float | None = None,
    gate1_start: float | None = None,
    max_iter: int = LM_MAX_ITER,
) -> LifetimeImage:
    """Fit every pixel of an (H, W, n_bins) stack of real-valued counts.

    Pixels whose total counts fall below `min_total` are marked invalid,
    as are pixels where the gate estimate is undefined.  Results do not
    depend on pixel processing order.
    """
    if method not in ("lsm", "tail", "gate"):
        raise ValueError(f"unknown batch fit method {method!r}")
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 3 or values.shape[2] != grid.n_bins:
        raise ValueError("values must be (H, W, n_bins)")
    height, width = values.shape[:2]
    y = values.reshape(height * width, grid.n_bins)
    totals = y.sum(axis=1)
    valid = totals >= max(min_total, 1e-300)

    n_comp_out = 1 if (n_components == 1 or method == "gate") else 2
    tau = np.zeros((height * width, n_comp_out))
    fractions = np.zeros((height * width, n_comp_out))

    if method == "gate":
        if gate_width is None:
            gate_width = grid.span / 4.0
        if gate1_start is None:
            peak = int(np.argmax(y.sum(axis=0)))
            gate1_start = grid.centers()[peak] - grid.bin_width / 2
        centers = grid.centers()
        in1 = (centers >= gate1_start) & (centers < gate1_start + gate_width)
        in2 = (centers >= gate1_start + gate_width) & (
            centers < gate1_start + 2 * gate_width
        )
        i1 = y[:, in1].sum(axis=1)
        i2 = y[:, in2].sum(axis=1)
        ok = valid & (i1 > 0) & (i2 > 0) & (i2 < i1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = gate_width / np.log(i1 / i2)
        tau[ok, 0] = t[ok]
        fractions[ok, 0] = 1.0
        valid = ok
    else:
        if method == "tail":
            if tail_start is None:
                peak = int(np.argmax(y.sum(axis=0)))
                tail_start = grid.centers()[peak] + grid.bin_width
            sel = np.flatnonzero(grid.centers() >= tail_start)
            if sel.size < 10:
                raise ValueError("tail window must keep at least 10 bins")
            fit_grid = TimeGrid(
                sel.size, grid.bin_width, grid.centers()[sel[0]] - grid.bin_width / 2
            )
            y_fit = y[:, sel]
            fit_irf: Irf = DiracIrf()
        else:
            fit_grid, y_fit, fit_irf = grid, y, irf
        model = CurveModel(fit_grid, fit_irf, n_components)
        idx = np.flatnonzero(valid)
        for lo in range(0, idx.size, BATCH_CHUNK):
            rows = idx[lo : lo + BATCH_CHUNK]
            yb = y_fit[rows]
            p0 = _initial_params(model, fit_grid, yb, init)
            out = _lm_minimize(model, yb, p0, max_iter)
            params = out["params"]
            if n_components == 1:
                tau[rows, 0] = params[:, 0]
                fractions[rows, 0] = 1.0
            else:
                t1, t2 = params[:, 0], params[:, 1]
                a1 = _sigmoid(params[:, 2])
                swap = t1 > t2
                tau[rows, 0] = np.where(swap, t2, t1)
                tau[rows, 1] = np.where(swap, t1, t2)
                fractions[rows, 0] = np.where(swap, 1.0 - a1, a1)
                fractions[rows, 1] = np.where(swap, a1, 1.0 - a1)

    shape3 = (height, width, n_comp_out)
    return LifetimeImage(
        tau.reshape(shape3),
        fractions.reshape(shape3),
        totals.reshape(height, width),
        valid.reshape(height, width),
    )


def batch_fit(
    cube: FlimCube,
    irf: Irf,
    n_components: int = 1,
    method: str = "lsm",
    **options,
) -> LifetimeImage:
    """Per-pixel lifetime extraction over a whole cube; see fit_image_values."""
    return fit_image_values(
        cube.grid, cube.counts.astype(np.float64), irf, n_components, method,
        **options,
    )
