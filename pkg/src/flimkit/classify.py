"""Classification on lifetime and phasor data.

Two classifiers mirror common FLIM workflows: a distance-analysis style
discriminant on phasor-plot quadrant statistics that emits a signed
viability index (negative = healthy), and an extreme learning machine
on long-lifetime statistics (random frozen hidden layer, least-squares
output weights).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import LowSignalError
from .images import LifetimeImage
from .phasor import PhasorImage

# quadrants split the physical phasor rectangle, not the data bounding box
QUADRANT_RECT = (0.0, 1.0, 0.0, 0.5)
DA_RIDGE = 1e-6
ELM_DEFAULT_HIDDEN = 100


@dataclass(frozen=True)
class QuadrantFeatures:
    """Occupancy fraction and centroid (g, s) for each phasor-plot quadrant.

    Quadrant index is (s >= 0.25) * 2 + (g >= 0.5); boundary points join
    the higher-index quadrant.  Empty quadrants report their midpoint
    with fraction 0.  The vector layout is (fraction, g, s) per quadrant.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (12,):
            raise ValueError("quadrant features must be a 12-vector")
        if abs(v[0::3].sum() - 1.0) > 1e-9:
            raise ValueError("quadrant fractions must sum to 1")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def fractions(self) -> np.ndarray:
        return self.values[0::3]


@dataclass(frozen=True)
class EviResult:
    """Signed viability score; negative scores are labeled healthy."""

    evi: float
    label: str

    def __post_init__(self):
        expected = "healthy" if self.evi < 0 else "unhealthy"
        if self.label != expected:
            raise ValueError("label must match the sign of the score")


@dataclass(frozen=True)
class DaModel:
    """Fisher linear discriminant on quadrant features: score = w . x + b."""

    weights: np.ndarray
    bias: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 1:
            raise ValueError("weights must be a vector")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)


@dataclass(frozen=True)
class RegionStats:
    """Mean and population standard deviation of the long lifetime per region."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        stds = np.asarray(self.stds, dtype=np.float64)
        if means.shape != stds.shape or means.ndim != 1:
            raise ValueError("means and stds must be matching vectors")
        if (stds < 0).any():
            raise ValueError("standard deviations must be nonnegative")
        means.setflags(write=False)
        stds.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "stds", stds)


@dataclass(frozen=True)
class ElmModel:
    """Single-hidden-layer network with frozen random input weights.

    Output weights are the minimum-norm least-squares solution mapping
    sigmoid hidden activations onto one-hot class targets.
    """

    input_weights: np.ndarray
    input_bias: np.ndarray
    output_weights: np.ndarray
    seed: int = field(compare=False)

    def __post_init__(self):
        w = np.asarray(self.input_weights, dtype=np.float64)
        b = np.asarray(self.input_bias, dtype=np.float64)
        beta = np.asarray(self.output_weights, dtype=np.float64)
        if w.ndim != 2 or b.shape != (w.shape[1],) or beta.shape[0] != w.shape[1]:
            raise ValueError("inconsistent ELM layer shapes")
        for arr in (w, b, beta):
            arr.setflags(write=False)
        object.__setattr__(self, "input_weights", w)
        object.__setattr__(self, "input_bias", b)
        object.__setattr__(self, "output_weights", beta)

    @property
    def input_dim(self) -> int:
        return self.input_weights.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.input_weights.shape[1]

    @property
    def n_classes(self) -> int:
        return self.output_weights.shape[1]


def quadrant_features(img: PhasorImage) -> QuadrantFeatures:
    """Per-quadrant occupancy fractions and centroids of the valid phasors."""
    pts = img.points()
    if pts.shape[0] == 0:
        raise LowSignalError("no valid pixels to extract quadrant features from")
    g_mid = (QUADRANT_RECT[0] + QUADRANT_RECT[1]) / 2
    s_mid = (QUADRANT_RECT[2] + QUADRANT_RECT[3]) / 2
    quadrant = (pts[:, 1] >= s_mid).astype(int) * 2 + (pts[:, 0] >= g_mid).astype(int)
    values = np.empty(12)
    for q in range(4):
        sel = quadrant == q
        count = int(sel.sum())
        values[3 * q] = count / pts.shape[0]
        if count:
            values[3 * q + 1] = pts[sel, 0].mean()
            values[3 * q + 2] = pts[sel, 1].mean()
        else:
            values[3 * q + 1] = g_mid / 2 + (q % 2) * g_mid
            values[3 * q + 2] = s_mid / 2 + (q // 2) * s_mid
    return QuadrantFeatures(values)


def _feature_matrix(samples: list[QuadrantFeatures]) -> np.ndarray:
    return np.stack([s.values for s in samples])


def da_train(
    healthy: list[QuadrantFeatures], unhealthy: list[QuadrantFeatures]
) -> DaModel:
    """Fisher discriminant with the sign fixed so healthy scores are negative.

    The within-class scatter of quadrant features is always singular
    (fractions sum to one), so a small ridge is added with a warning.
    """
    if len(healthy) < 2 or len(unhealthy) < 2:
        raise ValueError("need at least 2 samples per class")
    xh = _feature_matrix(healthy)
    xu = _feature_matrix(unhealthy)
    mu_h = xh.mean(axis=0)
    mu_u = xu.mean(axis=0)
    scatter = (xh - mu_h).T @ (xh - mu_h) + (xu - mu_u).T @ (xu - mu_u)
    eigvals = np.linalg.eigvalsh(scatter)
    if eigvals[0] <= 1e-10 * max(eigvals[-1], 1.0):
        warnings.warn(
            "within-class scatter is singular; adding ridge regularization",
            stacklevel=2,
        )
        scatter = scatter + DA_RIDGE * np.eye(scatter.shape[0])
    w = np.linalg.solve(scatter, mu_u - mu_h)
    b = -float(w @ (mu_h + mu_u)) / 2.0
    if float(w @ mu_h) + b > 0:
        w, b = -w, -b
    return DaModel(w, b)


def da_score(model: DaModel, features: QuadrantFeatures) -> EviResult:
    evi = float(model.weights @ features.values) + model.bias
    return EviResult(evi, "healthy" if evi < 0 else "unhealthy")


def region_stats(ltimg: LifetimeImage, masks: list[np.ndarray]) -> RegionStats:
    """Long-lifetime mean/std over the valid pixels of each mask."""
    if not masks:
        raise ValueError("need at least one mask")
    tau2 = ltimg.tau[..., -1]
    means = np.empty(len(masks))
    stds = np.empty(len(masks))
    for i, mask in enumerate(masks):
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != ltimg.valid.shape:
            raise ValueError(f"mask {i} shape {mask.shape} does not match the image")
        sel = mask & ltimg.valid
        if not sel.any():
            raise LowSignalError(f"mask {i} contains no valid pixels")
        vals = tau2[sel]
        means[i] = vals.mean()
        stds[i] = vals.std()
    return RegionStats(means, stds)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def elm_train(
    features: np.ndarray,
    labels: np.ndarray,
    hidden_dim: int = ELM_DEFAULT_HIDDEN,
    seed: int = 0,
) -> ElmModel:
    """Fit an ELM: random uniform(-1, 1) input layer, pseudo-inverse readout."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ValueError("features must be (N, D) with one label per row")
    if x.shape[0] < 2 or len(np.unique(y)) < 2:
        raise ValueError("need at least 2 samples covering at least 2 classes")
    if (y < 0).any():
        raise ValueError("labels must be nonnegative class indices")
    rng = np.random.default_rng(seed)
    n_classes = int(y.max()) + 1
    w = rng.uniform(-1.0, 1.0, size=(x.shape[1], hidden_dim))
    b = rng.uniform(-1.0, 1.0, size=hidden_dim)
    hidden = _sigmoid(x @ w + b)
    targets = np.eye(n_classes)[y]
    beta = np.linalg.pinv(hidden) @ targets
    return ElmModel(w, b, beta, seed)


def elm_scores(model: ElmModel, features: np.ndarray) -> np.ndarray:
    x = np.asarray(features, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.input_dim:
        raise ValueError(
            f"feature dimension {x.shape[1]} does not match model input "
            f"dimension {model.input_dim}"
        )
    scores = _sigmoid(x @ model.input_weights + model.input_bias) @ model.output_weights
    return scores[0] if single else scores


def elm_predict(
    model: ElmModel, features: np.ndarray
) -> tuple[np.ndarray | int, np.ndarray]:
    """Class index (argmax of scores, ties to the lower index) plus raw scores."""
    scores = elm_scores(model, features)
    if scores.ndim == 1:
        return int(np.argmax(scores)), scores
    return np.argmax(scores, axis=1), scores
