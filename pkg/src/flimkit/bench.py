"""Reproducible synthetic benchmarks tying the modules together.

Every benchmark here is a pure function of its seed, builds its own
phantom with known ground truth, and returns plain numbers.  The
acceptance suite asserts on them and the CLI `bench` subcommand prints
them as CSV, so both views of the toolkit run the same code.
"""

import time
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from . import classify, cs, denoise, fitting, phasor, segment
from .decay import (
    DecayModel,
    DiracIrf,
    GaussianIrf,
    PhantomSpec,
    Rectangle,
    Region,
    TimeGrid,
    evaluate_decay,
    expected_cube,
    poisson_cube,
    synthesize_cube,
    synthesize_histogram_on,
)
from .estimator import (
    TrainConfig,
    biexp_curves,
    mlp_batch,
    mlp_predict_batch,
    mlp_train,
)
from .images import LifetimeImage

DEFAULT_GRID = TimeGrid(256, 0.0488)
BENCH_IRF = GaussianIrf(center=1.0, fwhm=0.15)

# Coarse gating keeps per-bin counts high enough that the 1/max(counts, 1)
# weighting stays unbiased; see the fit-recovery benchmark notes.
FIT_RECOVERY_GRID = TimeGrid(32, 12.5 / 32)
EM_GRID = TimeGrid(1250, 0.01)

MLP_BENCH_CONFIG = TrainConfig(
    dataset_size=50000, epochs=100, learning_rate=3e-3, seed=7
)


def biexp_from_intensity(tau1: float, tau2: float, f1: float) -> DecayModel:
    """Two-component model whose intensity fractions are (f1, 1 - f1).

    Intensity fractions weight each component by its photon share
    a_k tau_k; this converts them back to the amplitudes of the decay.
    """
    a1 = f1 / tau1
    a2 = (1.0 - f1) / tau2
    return DecayModel(((a1 / (a1 + a2), tau1), (a2 / (a1 + a2), tau2)))


# --- fit recovery (LSM Monte Carlo + EM regime) -----------------------------

FIT_RECOVERY_MODEL = biexp_from_intensity(0.5, 3.0, 0.6)


def fit_recovery_rate(n_seeds: int = 100, photons: float = 1e4) -> dict:
    """Fraction of seeds where the LM fit lands within 10% on every parameter."""
    grid = FIT_RECOVERY_GRID
    curve = evaluate_decay(FIT_RECOVERY_MODEL, BENCH_IRF, grid)
    hits = 0
    for seed in range(n_seeds):
        hist = synthesize_histogram_on(grid, curve, photons, seed)
        result = fitting.fit_lsm(hist, BENCH_IRF, n_components=2)
        taus = result.model.lifetimes
        f1 = result.model.intensity_fractions()[0]
        ok = (
            abs(taus[0] - 0.5) / 0.5 < 0.10
            and abs(taus[1] - 3.0) / 3.0 < 0.10
            and abs(f1 - 0.6) / 0.6 < 0.10
        )
        hits += ok
    return {"n_seeds": n_seeds, "hits": hits, "rate": hits / n_seeds}


def em_recovery(
    thetas_ps=(50.0, 150.0, 200.0), tau: float = 1.5, photons: float = 1e6,
    seed: int = 11,
) -> list[dict]:
    """EM joint (tau, IRF) recovery in the picosecond-IRF regime."""
    import warnings

    rows = []
    for theta_ps in thetas_ps:
        irf = GaussianIrf(center=1.0, fwhm=theta_ps / 1000.0)
        curve = evaluate_decay(DecayModel.single(tau), irf, EM_GRID)
        hist = synthesize_histogram_on(EM_GRID, curve, photons, seed)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            tau_hat, estimate = fitting.fit_em(hist, max_iter=3000)
        rows.append(
            {
                "theta_ps": theta_ps,
                "tau_hat": tau_hat,
                "theta_hat_ps": estimate.theta * 1000.0,
                "tau_rel_err": abs(tau_hat - tau) / tau,
                "theta_rel_err": abs(estimate.theta * 1000.0 - theta_ps) / theta_ps,
            }
        )
    return rows


# --- two-population phasor phantom (segmentation, phasor clusters) ----------


def two_population_phantom(
    side: int = 32, photons: float = 1e4, seed: int = 5,
    grid: TimeGrid = DEFAULT_GRID,
):
    """Left/right halves with omega*tau of 0.3 and 3.0 at the default omega."""
    omega = phasor.default_omega(grid)
    tau_a = 0.3 / omega
    tau_b = 3.0 / omega
    spec = PhantomSpec(
        width=side,
        height=side,
        regions=(
            Region(Rectangle(0, 0, side // 2, side), DecayModel.single(tau_a), photons),
            Region(
                Rectangle(side // 2, 0, side - side // 2, side),
                DecayModel.single(tau_b),
                photons,
            ),
        ),
    )
    cube, truth = synthesize_cube(spec, DiracIrf(), grid, seed)
    labels = np.zeros((side, side), dtype=np.int64)
    labels[:, side // 2 :] = 1
    return cube, truth, labels, omega


def segmentation_accuracy(seed: int = 5, side: int = 32) -> dict:
    """K-means label accuracy on the two-population phantom, K = 2."""
    cube, _, truth_labels, omega = two_population_phantom(side=side, seed=seed)
    img = phasor.phasor_image(cube, omega)
    result = segment.kmeans_phasor(img, k=2, seed=seed)
    best = 0.0
    for perm in ((0, 1), (1, 0)):
        mapped = np.where(result.labels == 0, perm[0], perm[1])
        best = max(best, float((mapped == truth_labels).mean()))
    return {
        "accuracy": best,
        "inertia_history": result.inertia_history,
        "iterations": result.iterations,
    }


# --- classification benchmarks ----------------------------------------------


def _phasor_cloud_image(
    rng: np.random.Generator, tau_mean: float, omega: float,
    side: int = 16, tau_jitter: float = 0.12, noise: float = 0.012,
) -> phasor.PhasorImage:
    taus = np.clip(rng.normal(tau_mean, tau_jitter, size=(side, side)), 0.05, None)
    wt = omega * taus
    g = 1.0 / (1.0 + wt**2) + rng.normal(0.0, noise, size=(side, side))
    s = wt / (1.0 + wt**2) + rng.normal(0.0, noise, size=(side, side))
    intensity = np.full((side, side), 1e4)
    valid = np.ones((side, side), dtype=bool)
    return phasor.PhasorImage(g, s, intensity, valid, omega)


def da_benchmark(
    n_train: int = 60, n_test: int = 60, seed: int = 21, omega: float = 0.5
) -> dict:
    """Separable healthy/unhealthy phasor clouds scored by the discriminant.

    Healthy clouds sit at long lifetimes (left of the plot), unhealthy at
    short.  Returns held-out accuracy and the fraction of held-out
    healthy samples with a negative score.
    """
    rng = np.random.default_rng(seed)

    def draw(n, tau_mean, spread):
        return [
            classify.quadrant_features(
                _phasor_cloud_image(rng, rng.normal(tau_mean, spread), omega)
            )
            for _ in range(n)
        ]

    healthy_train = draw(n_train, 3.4, 0.20)
    unhealthy_train = draw(n_train, 1.1, 0.15)
    healthy_test = draw(n_test, 3.4, 0.20)
    unhealthy_test = draw(n_test, 1.1, 0.15)

    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = classify.da_train(healthy_train, unhealthy_train)
    scores_h = [classify.da_score(model, f) for f in healthy_test]
    scores_u = [classify.da_score(model, f) for f in unhealthy_test]
    correct = sum(r.label == "healthy" for r in scores_h) + sum(
        r.label == "unhealthy" for r in scores_u
    )
    return {
        "accuracy": correct / (2 * n_test),
        "healthy_negative_rate": sum(r.evi < 0 for r in scores_h) / n_test,
    }


ELM_CLASS_PARAMS = (
    # (tau2 mean ns, per-image pixel std, per-sample mean jitter)
    (1.9, 0.15, 0.06),
    (2.6, 0.22, 0.06),
    (3.3, 0.30, 0.06),
)


def _tau2_stats_sample(
    rng: np.random.Generator, class_idx: int, side: int = 12
) -> np.ndarray:
    mean, pixel_std, jitter = ELM_CLASS_PARAMS[class_idx]
    sample_mean = rng.normal(mean, jitter)
    tau2 = np.clip(rng.normal(sample_mean, pixel_std, size=(side, side)), 0.2, None)
    tau1 = np.full((side, side), 0.5)
    tau = np.stack([tau1, tau2], axis=-1)
    fractions = np.full((side, side, 2), 0.5)
    img = LifetimeImage(tau, fractions, np.full((side, side), 1e4),
                        np.ones((side, side), dtype=bool))
    stats = classify.region_stats(img, [np.ones((side, side), dtype=bool)])
    return np.array([stats.means[0], stats.stds[0]])


def elm_tau2_benchmark(
    n_per_class: int = 200, hidden_dim: int = 100, seed: int = 33
) -> dict:
    """Held-out accuracy of the ELM on 3-class long-lifetime statistics."""
    rng = np.random.default_rng(seed)
    features = []
    labels = []
    for cls in range(3):
        for _ in range(n_per_class):
            features.append(_tau2_stats_sample(rng, cls))
            labels.append(cls)
    features = np.stack(features)
    labels = np.array(labels)
    order = rng.permutation(len(labels))
    split = len(labels) // 2
    train, test = order[:split], order[split:]
    model = classify.elm_train(features[train], labels[train], hidden_dim, seed)
    predictions, _ = classify.elm_predict(model, features[test])
    return {"accuracy": float((predictions == labels[test]).mean())}


def layered_phantom_stats(n_layers: int = 4, seed: int = 3) -> classify.RegionStats:
    """Stacked layers whose long lifetime rises with depth."""
    rng = np.random.default_rng(seed)
    height, width = 6 * n_layers, 24
    tau2 = np.empty((height, width))
    masks = []
    for layer in range(n_layers):
        rows = slice(6 * layer, 6 * (layer + 1))
        tau2[rows] = rng.normal(1.5 + 0.5 * layer, 0.05, size=(6, width))
        mask = np.zeros((height, width), dtype=bool)
        mask[rows] = True
        masks.append(mask)
    tau = np.stack([np.full_like(tau2, 0.5), tau2], axis=-1)
    fractions = np.full(tau.shape, 0.5)
    img = LifetimeImage(tau, fractions, np.full(tau2.shape, 1e4),
                        np.ones(tau2.shape, dtype=bool))
    return classify.region_stats(img, masks)


# --- denoising direction ------------------------------------------------------


def _uniform_phasor_frames(
    seed: int, n_frames: int, tau: float, photons: float, side: int,
    grid: TimeGrid,
) -> list[phasor.PhasorImage]:
    omega = phasor.default_omega(grid)
    curve = evaluate_decay(DecayModel.single(tau), DiracIrf(), grid)
    frames = []
    for frame_idx in range(n_frames):
        expected = np.broadcast_to(photons * curve, (side, side, grid.n_bins))
        cube = poisson_cube(expected, grid, seed * 1000 + frame_idx)
        frames.append(phasor.phasor_image(cube, omega))
    return frames


def denoise_direction(
    n_seeds: int = 20, tau: float = 2.0, photons: float = 1e3, side: int = 32,
    grid: TimeGrid = DEFAULT_GRID,
) -> dict:
    """Compare S/G-plane denoising against direct lifetime denoising.

    For each seed and each method the same noisy data feed three paths:
    no denoising, filtering the lifetime map, and filtering S and G
    before forming the lifetime.  Scores are PSNR against the analytic
    constant-lifetime truth.
    """
    results = {"frame_average": [], "gaussian": []}
    truth = np.full((side, side), tau)
    for seed in range(n_seeds):
        frames = _uniform_phasor_frames(seed + 1, 8, tau, photons, side, grid)

        def score(ltimg):
            return denoise.psnr(
                ltimg.tau[..., 0], truth, peak=tau, valid=ltimg.valid
            )

        baseline = score(denoise.lifetime_from_phasor_image(frames[0]))

        method = denoise.FrameAverage(8)
        sg = denoise.lifetime_from_phasor_image(denoise.denoise_sg(frames, method))
        direct = denoise.denoise_lifetime(frames, method)
        results["frame_average"].append(
            {"seed": seed, "baseline": baseline, "sg": score(sg),
             "direct": score(direct)}
        )

        method = denoise.GaussianSmooth(1.0)
        sg = denoise.lifetime_from_phasor_image(denoise.denoise_sg(frames[0], method))
        direct = denoise.denoise_lifetime(frames[0], method)
        results["gaussian"].append(
            {"seed": seed, "baseline": baseline, "sg": score(sg),
             "direct": score(direct)}
        )
    summary = {}
    for name, rows in results.items():
        wins = sum(r["sg"] > r["direct"] for r in rows)
        both_beat = sum(
            r["sg"] > r["baseline"] and r["direct"] > r["baseline"] for r in rows
        )
        summary[name] = {
            "rows": rows,
            "sg_wins": wins,
            "win_rate": wins / len(rows),
            "both_beat_baseline": both_beat,
        }
    return summary


# --- compressive sensing ------------------------------------------------------


def cs_two_region_phantom(side: int = 32, grid: TimeGrid = DEFAULT_GRID):
    """Smooth two-region phantom over a bright flat background.

    The background dominates each gate so that a random half of the
    Hadamard basis still captures the frame energy; the regions modulate
    it with distinct decays.
    """
    yy, xx = np.mgrid[0:side, 0:side]
    disk = ((xx - 10) ** 2 + (yy - 11) ** 2 <= 36).astype(np.float64)
    rect = ((xx >= 18) & (xx < 28) & (yy >= 16) & (yy < 28)).astype(np.float64)
    amp_a = gaussian_filter(800.0 * disk, 1.5)
    amp_b = gaussian_filter(800.0 * rect, 1.5)
    background = np.full((side, side), 75000.0)
    models = [DecayModel.single(0.5), DecayModel.single(3.0)]
    expected = expected_cube(
        np.stack([amp_a, amp_b]), models, background, DiracIrf(), grid
    )
    return expected


def cs_two_region_benchmark(
    n_patterns: int = 512, ridge: float = 1e-3, seed: int = 9,
) -> dict:
    """Reconstruction error of the half-sampled ridge inversion per gate."""
    grid = DEFAULT_GRID
    expected = cs_two_region_phantom(grid=grid)
    cube = poisson_cube(expected, grid, seed)
    patterns = cs.hadamard_patterns(32, n_patterns, seed)
    meas = cs.cs_forward(cube, patterns)
    stack = cs.cs_invert(meas, patterns, ridge)
    err = stack.values - expected
    num = np.sqrt((err**2).sum(axis=(0, 1)))
    den = np.sqrt((expected**2).sum(axis=(0, 1)))
    rel = num / den
    return {
        "max_gate_rel_err": float(rel.max()),
        "mean_gate_rel_err": float(rel.mean()),
        "clamp_fraction": stack.clamp_fraction,
    }


CS_SWEEP_LEVELS = (32000.0, 16000.0, 8000.0, 4000.0, 2000.0, 1000.0)


def cs_intensity_sweep(
    tau: float = 0.5, n_patterns: int = 512, ridge: float = 1e-3, seed: int = 13,
) -> list[dict]:
    """Uniform phantom at six intensity levels spanning 32x, through the CS path."""
    grid = DEFAULT_GRID
    side = 32
    curve = evaluate_decay(DecayModel.single(tau), DiracIrf(), grid)
    patterns = cs.hadamard_patterns(side, n_patterns, seed)
    rows = []
    for level in CS_SWEEP_LEVELS:
        expected = np.broadcast_to(level * curve, (side, side, grid.n_bins))
        cube = poisson_cube(expected, grid, seed)
        stack = cs.cs_invert(cs.cs_forward(cube, patterns), patterns, ridge)
        ltimg = cs.cs_lifetime(stack, method="lsm", min_total=50.0)
        mean_tau = float(ltimg.tau[..., 0][ltimg.valid].mean())
        rows.append(
            {
                "photons": level,
                "mean_tau": mean_tau,
                "rel_err": abs(mean_tau - tau) / tau,
                "valid_fraction": float(ltimg.valid.mean()),
            }
        )
    return rows


# --- estimator speed and success rate ----------------------------------------


def uniform_biexp_cube(side: int, photons: float, seed: int,
                       grid: TimeGrid = DEFAULT_GRID):
    spec = PhantomSpec(
        width=side, height=side,
        regions=(
            Region(Rectangle(0, 0, side, side), FIT_RECOVERY_MODEL, photons),
        ),
    )
    return synthesize_cube(spec, BENCH_IRF, grid, seed)


@dataclass
class MlpVsLsmReport:
    train_seconds: float
    mlp_seconds: float
    lsm_seconds: float
    speedup: float
    mlp_success: float
    lsm_success: float
    mlp_median_rel_err: dict
    uniform_within10: float = 0.0


def mlp_vs_lsm(
    side: int = 256, photons: float = 1e4, seed: int = 17,
    config: TrainConfig = MLP_BENCH_CONFIG, n_success: int = 400,
) -> MlpVsLsmReport:
    """Train the network, race it against batch LSM, and compare success rates.

    Success for both estimators means every parameter within 10% of the
    generator truth.  The LSM fits are started from a deliberately bad
    initialization (both lifetimes long), mirroring its sensitivity to
    initial conditions; the network has no initialization to choose.
    """
    grid = DEFAULT_GRID
    t0 = time.perf_counter()
    model = mlp_train(config, BENCH_IRF, grid)
    train_seconds = time.perf_counter() - t0

    cube, _ = uniform_biexp_cube(side, photons, seed, grid)
    t0 = time.perf_counter()
    mlp_img = mlp_batch(model, cube)
    mlp_seconds = time.perf_counter() - t0
    t0 = time.perf_counter()
    lsm_img = fitting.batch_fit(cube, BENCH_IRF, n_components=2, method="lsm")
    lsm_seconds = time.perf_counter() - t0

    del mlp_img, lsm_img

    # per-pixel accuracy on a bright uniform phantom (top of the photon range)
    uniform_cube, _ = uniform_biexp_cube(64, 1e5, seed + 2, grid)
    uniform_img = mlp_batch(model, uniform_cube)
    truth_taus = FIT_RECOVERY_MODEL.lifetimes
    err1 = np.abs(uniform_img.tau[..., 0] - truth_taus[0]) / truth_taus[0]
    err2 = np.abs(uniform_img.tau[..., 1] - truth_taus[1]) / truth_taus[1]
    uniform_within10 = float(
        ((err1 < 0.10) & (err2 < 0.10))[uniform_img.valid].mean()
    )

    # success-rate harness on fresh in-distribution draws
    rng = np.random.default_rng(seed + 1)
    n = n_success
    tau1 = rng.uniform(*config.tau1_range, size=n)
    tau2 = rng.uniform(*config.tau2_range, size=n)
    a1 = rng.uniform(*config.a1_range, size=n)
    curves = biexp_curves(grid, BENCH_IRF, tau1, tau2, a1)
    counts = rng.poisson(photons * curves).astype(np.float64)

    preds = mlp_predict_batch(model, counts)
    mlp_ok = (
        (np.abs(preds[:, 0] - tau1) / tau1 < 0.10)
        & (np.abs(preds[:, 1] - tau2) / tau2 < 0.10)
        & (np.abs(preds[:, 2] - a1) / a1 < 0.10)
    )

    adversarial = DecayModel.biexponential(4.0, 4.5, 0.5)
    lsm_ok = np.zeros(n, dtype=bool)
    for i in range(n):
        result = fitting.fit_lsm_values(
            grid, counts[i], BENCH_IRF, n_components=2, init=adversarial
        )
        taus = result.model.lifetimes
        fr = result.model.normalized_fractions()
        lsm_ok[i] = (
            abs(taus[0] - tau1[i]) / tau1[i] < 0.10
            and abs(taus[1] - tau2[i]) / tau2[i] < 0.10
            and abs(fr[0] - a1[i]) / a1[i] < 0.10
        )

    rel1 = np.abs(preds[:, 0] - tau1) / tau1
    rel2 = np.abs(preds[:, 1] - tau2) / tau2
    return MlpVsLsmReport(
        train_seconds=train_seconds,
        mlp_seconds=mlp_seconds,
        lsm_seconds=lsm_seconds,
        speedup=lsm_seconds / mlp_seconds,
        mlp_success=float(mlp_ok.mean()),
        lsm_success=float(lsm_ok.mean()),
        mlp_median_rel_err={
            "tau1": float(np.median(rel1)),
            "tau2": float(np.median(rel2)),
            "lifetimes_pooled": float(np.median(np.concatenate([rel1, rel2]))),
            "a1_abs": float(np.median(np.abs(preds[:, 2] - a1))),
        },
        uniform_within10=uniform_within10,
    )


# --- CSV emission for the CLI -------------------------------------------------


def bench_csv(pipeline: str, **kwargs) -> str:
    """Run a named benchmark pipeline and format the outcome as CSV."""
    if pipeline == "mlp-vs-lsm":
        report = mlp_vs_lsm(**kwargs)
        lines = [
            "metric,value",
            f"train_seconds,{report.train_seconds:.3f}",
            f"mlp_seconds,{report.mlp_seconds:.3f}",
            f"lsm_seconds,{report.lsm_seconds:.3f}",
            f"speedup,{report.speedup:.3f}",
            f"mlp_success,{report.mlp_success:.4f}",
            f"lsm_success,{report.lsm_success:.4f}",
            f"mlp_median_rel_err_tau1,{report.mlp_median_rel_err['tau1']:.4f}",
            f"mlp_median_rel_err_tau2,{report.mlp_median_rel_err['tau2']:.4f}",
            "mlp_median_rel_err_lifetimes,"
            f"{report.mlp_median_rel_err['lifetimes_pooled']:.4f}",
            f"mlp_median_abs_err_a1,{report.mlp_median_rel_err['a1_abs']:.4f}",
            f"uniform_within10,{report.uniform_within10:.4f}",
        ]
        return "\n".join(lines) + "\n"
    if pipeline == "denoise":
        summary = denoise_direction(**kwargs)
        lines = ["method,seed,baseline_db,sg_db,direct_db"]
        for name, data in summary.items():
            for row in data["rows"]:
                lines.append(
                    f"{name},{row['seed']},{row['baseline']:.4f},"
                    f"{row['sg']:.4f},{row['direct']:.4f}"
                )
        return "\n".join(lines) + "\n"
    if pipeline == "fit-recovery":
        report = fit_recovery_rate(**kwargs)
        return (
            "metric,value\n"
            f"n_seeds,{report['n_seeds']}\n"
            f"hits,{report['hits']}\n"
            f"rate,{report['rate']:.4f}\n"
        )
    raise ValueError(f"unknown bench pipeline {pipeline!r}")
