"""Per-pixel lifetime estimation with a small fully connected network.

The network maps an area-normalized TCSPC histogram straight to
(tau_1, tau_2, a_1), trading the per-pixel iterative fit for a single
forward pass.  It is trained from scratch on synthetic decays drawn
from the forward model, with plain minibatch SGD and momentum; the
network is small enough that the backward pass is written out by hand
and checked against finite differences.
"""

import math
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .decay import DiracIrf, FlimCube, Irf, TcspcHistogram, TimeGrid
from .errors import FileFormatError, LowSignalError, TrainingFailureError
from .images import LifetimeImage

MLP_MAGIC = b"FLMLP1"
DEFAULT_HIDDEN = (128, 64)


@dataclass(frozen=True)
class TrainConfig:
    """Synthetic-data and optimization settings for the estimator."""

    dataset_size: int = 20000
    photon_range: tuple[float, float] = (1e3, 1e5)
    tau1_range: tuple[float, float] = (0.2, 1.5)
    tau2_range: tuple[float, float] = (1.8, 6.0)
    a1_range: tuple[float, float] = (0.1, 0.9)
    learning_rate: float = 1e-3
    batch_size: int = 128
    epochs: int = 50
    seed: int = 0
    hidden_dims: tuple[int, int] = DEFAULT_HIDDEN
    momentum: float = 0.9

    def __post_init__(self):
        if self.tau1_range[1] >= self.tau2_range[0]:
            raise ValueError(
                "tau1 range must end below the tau2 range for identifiability"
            )
        for name in ("photon_range", "tau1_range", "tau2_range", "a1_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ValueError(f"{name} must be positive and ordered")
        if self.dataset_size < self.batch_size:
            raise ValueError("dataset must hold at least one batch")
        if len(self.hidden_dims) != 2:
            raise ValueError("the network has exactly two hidden layers")


@dataclass(frozen=True)
class MlpModel:
    """Two-hidden-layer network with softplus/sigmoid output heads.

    Ordered heads keep tau_1 <= tau_2 by construction:
      tau_1 = softplus(z_1), tau_2 = tau_1 + softplus(z_2), a_1 = sigmoid(z_3).
    Inputs are area-normalized histograms standardized per bin with the
    training-set statistics stored on the model.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    norm_mean: np.ndarray
    norm_std: np.ndarray
    seed: int = 0
    epochs: int = 0
    final_loss: float = field(default=0.0, compare=False)

    def __post_init__(self):
        weights = tuple(np.asarray(w, dtype=np.float64) for w in self.weights)
        biases = tuple(np.asarray(b, dtype=np.float64) for b in self.biases)
        if len(weights) != 3 or len(biases) != 3:
            raise ValueError("the network has two hidden layers plus a head")
        for w, b in zip(weights, biases):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError("inconsistent layer shapes")
            if not (np.isfinite(w).all() and np.isfinite(b).all()):
                raise ValueError("parameters must be finite")
        if weights[2].shape[1] != 3:
            raise ValueError("output layer must have 3 units")
        mean = np.asarray(self.norm_mean, dtype=np.float64)
        std = np.asarray(self.norm_std, dtype=np.float64)
        if mean.shape != (weights[0].shape[0],) or std.shape != mean.shape:
            raise ValueError("normalization constants must match the input size")
        for arr in (*weights, *biases, mean, std):
            arr.setflags(write=False)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)
        object.__setattr__(self, "norm_mean", mean)
        object.__setattr__(self, "norm_std", std)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    @property
    def n_bins(self) -> int:
        return self.weights[0].shape[0]


def _softplus(x: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, x)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def _heads(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    tau1 = _softplus(z[:, 0])
    tau2 = tau1 + _softplus(z[:, 1])
    a1 = _sigmoid(z[:, 2])
    return tau1, tau2, a1


def _forward_raw(
    weights, biases, x: np.ndarray
) -> tuple[np.ndarray, list[np.ndarray]]:
    h1 = np.tanh(x @ weights[0] + biases[0])
    h2 = np.tanh(h1 @ weights[1] + biases[1])
    z = h2 @ weights[2] + biases[2]
    return z, [h1, h2]


def mlp_predict_batch(model: MlpModel, counts: np.ndarray) -> np.ndarray:
    """(B, 3) predictions (tau_1, tau_2, a_1) from raw count rows."""
    counts = np.asarray(counts, dtype=np.float64)
    totals = counts.sum(axis=1, keepdims=True)
    x = counts / np.maximum(totals, 1e-300)
    x = (x - model.norm_mean) / model.norm_std
    z, _ = _forward_raw(model.weights, model.biases, x)
    tau1, tau2, a1 = _heads(z)
    return np.column_stack([tau1, tau2, a1])


def mlp_predict(model: MlpModel, hist: TcspcHistogram) -> tuple[float, float, float]:
    """Estimate (tau_1, tau_2, a_1) for one histogram."""
    if hist.grid.n_bins != model.n_bins:
        raise ValueError(
            f"histogram has {hist.grid.n_bins} bins, model expects {model.n_bins}"
        )
    if hist.total <= 0:
        raise LowSignalError("cannot estimate lifetimes from zero counts")
    out = mlp_predict_batch(model, hist.counts[None, :].astype(np.float64))
    return float(out[0, 0]), float(out[0, 1]), float(out[0, 2])


def mlp_batch(
    model: MlpModel, cube: FlimCube, min_total: float = 100.0
) -> LifetimeImage:
    """Per-pixel network inference over a cube; low-signal pixels invalid."""
    if cube.grid.n_bins != model.n_bins:
        raise ValueError("cube bin count does not match the model input size")
    height, width = cube.height, cube.width
    counts = cube.counts.reshape(-1, model.n_bins).astype(np.float64)
    totals = counts.sum(axis=1)
    valid = totals >= max(min_total, 1e-300)
    preds = np.zeros((counts.shape[0], 3))
    if valid.any():
        preds[valid] = mlp_predict_batch(model, counts[valid])
    tau = np.zeros((height * width, 2))
    fractions = np.zeros((height * width, 2))
    tau[valid, 0] = preds[valid, 0]
    tau[valid, 1] = preds[valid, 1]
    fractions[valid, 0] = preds[valid, 2]
    fractions[valid, 1] = 1.0 - preds[valid, 2]
    return LifetimeImage(
        tau.reshape(height, width, 2),
        fractions.reshape(height, width, 2),
        totals.reshape(height, width),
        valid.reshape(height, width),
    )


def synthesize_training_set(
    cfg: TrainConfig, irf: Irf, grid: TimeGrid, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw (counts, truth) pairs from the forward model.

    Returns counts (N, n_bins) and truth columns (tau_1, tau_2, a_1).
    """
    n = cfg.dataset_size
    tau1 = rng.uniform(*cfg.tau1_range, size=n)
    tau2 = rng.uniform(*cfg.tau2_range, size=n)
    a1 = rng.uniform(*cfg.a1_range, size=n)
    photons = np.exp(rng.uniform(*np.log(cfg.photon_range), size=n))
    curves = biexp_curves(grid, irf, tau1, tau2, a1)
    counts = rng.poisson(photons[:, None] * curves).astype(np.float64)
    return counts, np.column_stack([tau1, tau2, a1])


def biexp_curves(
    grid: TimeGrid, irf: Irf, tau1: np.ndarray, tau2: np.ndarray, a1: np.ndarray
) -> np.ndarray:
    """Batched unit-sum expected curves for two-component decays."""
    if isinstance(irf, DiracIrf):
        t = grid.rel_centers()
        conv = None
    else:
        t = np.arange(grid.n_bins) * grid.bin_width
        samples = irf.sample_on(grid)
        conv = np.fft.rfft(samples, 2 * grid.n_bins)
    shape = (
        a1[:, None] * np.exp(-t[None, :] / tau1[:, None])
        + (1.0 - a1)[:, None] * np.exp(-t[None, :] / tau2[:, None])
    )
    if conv is not None:
        spec = np.fft.rfft(shape, 2 * grid.n_bins, axis=1)
        shape = np.fft.irfft(spec * conv, 2 * grid.n_bins, axis=1)[:, : grid.n_bins]
        shape = np.clip(shape, 0.0, None)
    return shape / shape.sum(axis=1, keepdims=True)


def mlp_train(cfg: TrainConfig, irf: Irf, grid: TimeGrid) -> MlpModel:
    """Train the estimator on freshly synthesized decays; deterministic per seed."""
    rng = np.random.default_rng(cfg.seed)
    counts, truth = synthesize_training_set(cfg, irf, grid, rng)

    x = counts / np.maximum(counts.sum(axis=1, keepdims=True), 1e-300)
    norm_mean = x.mean(axis=0)
    norm_std = np.maximum(x.std(axis=0), 1e-12)
    x = (x - norm_mean) / norm_std
    targets = np.column_stack(
        [np.log(truth[:, 0]), np.log(truth[:, 1]), truth[:, 2]]
    )

    sizes = (grid.n_bins,) + tuple(cfg.hidden_dims) + (3,)
    weights = [
        rng.normal(0.0, 1.0 / math.sqrt(sizes[i]), size=(sizes[i], sizes[i + 1]))
        for i in range(3)
    ]
    biases = [np.zeros(sizes[i + 1]) for i in range(3)]
    velocity_w = [np.zeros_like(w) for w in weights]
    velocity_b = [np.zeros_like(b) for b in biases]

    n = cfg.dataset_size
    final_loss = math.inf
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, n - cfg.batch_size + 1, cfg.batch_size):
            rows = order[lo : lo + cfg.batch_size]
            loss, gw, gb = loss_and_grads(weights, biases, x[rows], targets[rows])
            if not math.isfinite(loss):
                raise TrainingFailureError(
                    f"training loss diverged at epoch {epoch + 1}"
                )
            for i in range(3):
                velocity_w[i] = cfg.momentum * velocity_w[i] - cfg.learning_rate * gw[i]
                velocity_b[i] = cfg.momentum * velocity_b[i] - cfg.learning_rate * gb[i]
                weights[i] = weights[i] + velocity_w[i]
                biases[i] = biases[i] + velocity_b[i]
            epoch_loss += loss
            n_batches += 1
        final_loss = epoch_loss / n_batches

    return MlpModel(
        weights=tuple(weights),
        biases=tuple(biases),
        norm_mean=norm_mean,
        norm_std=norm_std,
        seed=cfg.seed,
        epochs=cfg.epochs,
        final_loss=final_loss,
    )


def loss_and_grads(
    weights: list[np.ndarray],
    biases: list[np.ndarray],
    x: np.ndarray,
    targets: np.ndarray,
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    """MSE on (log tau_1, log tau_2, a_1) with hand-derived gradients.

    Target columns are (log tau_1, log tau_2, a_1); x is already
    normalized.  The chain rule runs through the ordered output heads,
    so the tau_2 error also propagates into the tau_1 head.
    """
    batch = x.shape[0]
    h1 = np.tanh(x @ weights[0] + biases[0])
    h2 = np.tanh(h1 @ weights[1] + biases[1])
    z = h2 @ weights[2] + biases[2]

    sp1 = _softplus(z[:, 0])
    sp2 = _softplus(z[:, 1])
    tau1 = sp1
    tau2 = sp1 + sp2
    a1 = _sigmoid(z[:, 2])
    log_tau1 = np.log(tau1)
    log_tau2 = np.log(tau2)

    e1 = log_tau1 - targets[:, 0]
    e2 = log_tau2 - targets[:, 1]
    e3 = a1 - targets[:, 2]
    loss = float((e1 @ e1 + e2 @ e2 + e3 @ e3) / (3 * batch))

    coef = 2.0 / (3 * batch)
    sig1 = _sigmoid(z[:, 0])  # d softplus / dz
    sig2 = _sigmoid(z[:, 1])
    dz = np.empty_like(z)
    dz[:, 0] = coef * (e1 / tau1 + e2 / tau2) * sig1
    dz[:, 1] = coef * (e2 / tau2) * sig2
    dz[:, 2] = coef * e3 * a1 * (1.0 - a1)

    gw3 = h2.T @ dz
    gb3 = dz.sum(axis=0)
    dh2 = (dz @ weights[2].T) * (1.0 - h2**2)
    gw2 = h1.T @ dh2
    gb2 = dh2.sum(axis=0)
    dh1 = (dh2 @ weights[1].T) * (1.0 - h1**2)
    gw1 = x.T @ dh1
    gb1 = dh1.sum(axis=0)
    return loss, [gw1, gw2, gw3], [gb1, gb2, gb3]


# --- model serialization (magic FLMLP1, little-endian, CRC32 trailer) ------


def mlp_to_bytes(model: MlpModel) -> bytes:
    parts = [MLP_MAGIC]
    sizes = model.layer_sizes
    parts.append(struct.pack("<I", len(model.weights)))
    parts.append(struct.pack(f"<{len(sizes)}I", *sizes))
    parts.append(model.norm_mean.astype("<f8").tobytes())
    parts.append(model.norm_std.astype("<f8").tobytes())
    for w, b in zip(model.weights, model.biases):
        parts.append(w.astype("<f8").tobytes())
        parts.append(b.astype("<f8").tobytes())
    parts.append(struct.pack("<qId", model.seed, model.epochs, model.final_loss))
    payload = b"".join(parts)
    return payload + struct.pack("<I", zlib.crc32(payload))


def mlp_from_bytes(data: bytes) -> MlpModel:
    if len(data) < len(MLP_MAGIC) + 8:
        raise FileFormatError("model file truncated", offset=len(data))
    if data[: len(MLP_MAGIC)] != MLP_MAGIC:
        raise FileFormatError(
            f"bad magic {data[:len(MLP_MAGIC)]!r}, expected {MLP_MAGIC!r}", offset=0
        )
    stored_crc = struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(data[:-4]) != stored_crc:
        raise FileFormatError("model checksum mismatch", offset=len(data) - 4)
    off = len(MLP_MAGIC)

    def take(fmt: str):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(data) - 4:
            raise FileFormatError("model file truncated", offset=off)
        vals = struct.unpack_from(fmt, data, off)
        off += size
        return vals

    (n_layers,) = take("<I")
    if n_layers != 3:
        raise FileFormatError(f"unsupported layer count {n_layers}", offset=off - 4)
    sizes = take(f"<{n_layers + 1}I")

    def take_array(count: int) -> np.ndarray:
        nonlocal off
        size = count * 8
        if off + size > len(data) - 4:
            raise FileFormatError("model file truncated", offset=off)
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=off).copy()
        off += size
        return arr

    norm_mean = take_array(sizes[0])
    norm_std = take_array(sizes[0])
    weights = []
    biases = []
    for i in range(n_layers):
        weights.append(take_array(sizes[i] * sizes[i + 1]).reshape(sizes[i], sizes[i + 1]))
        biases.append(take_array(sizes[i + 1]))
    seed, epochs, final_loss = take("<qId")
    if off != len(data) - 4:
        raise FileFormatError("trailing bytes after model payload", offset=off)
    return MlpModel(
        weights=tuple(weights),
        biases=tuple(biases),
        norm_mean=norm_mean,
        norm_std=norm_std,
        seed=seed,
        epochs=epochs,
        final_loss=final_loss,
    )


def save_mlp(model: MlpModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(mlp_to_bytes(model))


def load_mlp(path) -> MlpModel:
    with open(path, "rb") as fh:
        return mlp_from_bytes(fh.read())
