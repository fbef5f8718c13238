"""Forward model for TCSPC decays and synthetic data with known ground truth.

The measured TCSPC curve is the convolution of the instrument response
function with a weighted sum of exponential decay paths.  This module
evaluates that model on a discrete time grid, draws Poisson photon
counts from it, and builds whole-image phantoms whose true per-pixel
lifetimes are returned alongside the noisy data.
"""

import math
import warnings
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import TruncationWarning
from .images import LifetimeImage

# FWHM of a Gaussian = 2*sqrt(2*ln 2) * sigma
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

# 256 bins of 48.8 ps span 12.5 ns, one 80 MHz repetition period.
DEFAULT_N_BINS = 256
DEFAULT_BIN_WIDTH_NS = 0.0488


@dataclass(frozen=True)
class TimeGrid:
    """Uniform histogram grid; bin i is centered at origin + (i + 0.5) * bin_width."""

    n_bins: int
    bin_width: float
    origin: float = 0.0

    def __post_init__(self):
        if self.n_bins < 1:
            raise ValueError(f"n_bins must be positive, got {self.n_bins}")
        if not (self.bin_width > 0 and math.isfinite(self.bin_width)):
            raise ValueError(f"bin_width must be positive, got {self.bin_width}")
        if not math.isfinite(self.origin):
            raise ValueError("origin must be finite")

    @property
    def span(self) -> float:
        return self.n_bins * self.bin_width

    @property
    def end(self) -> float:
        return self.origin + self.span

    def centers(self) -> np.ndarray:
        """Absolute bin-center times in ns."""
        return self.origin + (np.arange(self.n_bins) + 0.5) * self.bin_width

    def rel_centers(self) -> np.ndarray:
        """Bin-center times measured from the grid origin."""
        return (np.arange(self.n_bins) + 0.5) * self.bin_width


def default_grid() -> TimeGrid:
    return TimeGrid(DEFAULT_N_BINS, DEFAULT_BIN_WIDTH_NS, 0.0)


@dataclass(frozen=True)
class DecayModel:
    """Multi-exponential decay: components are (amplitude, lifetime ns) pairs."""

    components: tuple[tuple[float, float], ...]

    def __post_init__(self):
        comps = tuple((float(a), float(t)) for a, t in self.components)
        if not comps:
            raise ValueError("DecayModel needs at least one component")
        for a, t in comps:
            if not (t > 0 and math.isfinite(t)):
                raise ValueError(f"lifetimes must be positive and finite, got {t}")
            if not (a >= 0 and math.isfinite(a)):
                raise ValueError(f"amplitudes must be nonnegative, got {a}")
        if not any(a > 0 for a, _ in comps):
            raise ValueError("at least one amplitude must be positive")
        object.__setattr__(self, "components", comps)

    @classmethod
    def single(cls, tau: float) -> "DecayModel":
        return cls(((1.0, tau),))

    @classmethod
    def biexponential(cls, tau1: float, tau2: float, a1: float) -> "DecayModel":
        """Two components with amplitude fractions (a1, 1 - a1)."""
        if not 0.0 <= a1 <= 1.0:
            raise ValueError(f"a1 must lie in [0, 1], got {a1}")
        return cls(((a1, tau1), (1.0 - a1, tau2)))

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([a for a, _ in self.components])

    @property
    def lifetimes(self) -> np.ndarray:
        return np.array([t for _, t in self.components])

    def normalized_fractions(self) -> np.ndarray:
        """Amplitude fractions a_n / sum(a)."""
        a = self.amplitudes
        return a / a.sum()

    def intensity_fractions(self) -> np.ndarray:
        """Photon-count fractions a_n tau_n / sum(a tau).

        A component of amplitude a and lifetime tau contributes a*tau of
        the integrated intensity, so these are the weights that govern
        phasor coordinates and steady-state brightness.
        """
        w = self.amplitudes * self.lifetimes
        return w / w.sum()


@dataclass(frozen=True)
class DiracIrf:
    """Idealized instantaneous excitation at the grid origin."""


@dataclass(frozen=True)
class GaussianIrf:
    """Gaussian instrument response centered at t0 with the given FWHM (both ns)."""

    center: float
    fwhm: float

    def __post_init__(self):
        if not (self.fwhm > 0 and math.isfinite(self.fwhm)):
            raise ValueError(f"fwhm must be positive, got {self.fwhm}")

    @property
    def sigma(self) -> float:
        return self.fwhm / FWHM_PER_SIGMA

    def sample_on(self, grid: TimeGrid) -> np.ndarray:
        if (self.center - 4 * self.sigma < grid.origin
                or self.center + 4 * self.sigma > grid.end):
            warnings.warn(
                "Gaussian IRF +/-4 sigma support extends beyond the time grid; "
                "the sampled IRF is truncated",
                TruncationWarning,
                stacklevel=2,
            )
        t = grid.centers()
        y = np.exp(-0.5 * ((t - self.center) / self.sigma) ** 2)
        total = y.sum()
        if total <= 0:
            raise ValueError("Gaussian IRF has no support on the grid")
        return y / total


@dataclass(frozen=True)
class MeasuredIrf:
    """Measured IRF histogram aligned bin-for-bin with the evaluation grid."""

    samples: tuple[float, ...] = field(repr=False)

    def __post_init__(self):
        s = tuple(float(v) for v in self.samples)
        if not s:
            raise ValueError("measured IRF needs at least one sample")
        if any(v < 0 or not math.isfinite(v) for v in s):
            raise ValueError("measured IRF samples must be nonnegative and finite")
        if sum(s) <= 0:
            raise ValueError("measured IRF must have a positive sum")
        object.__setattr__(self, "samples", s)

    def sample_on(self, grid: TimeGrid) -> np.ndarray:
        if len(self.samples) != grid.n_bins:
            raise ValueError(
                f"measured IRF has {len(self.samples)} samples "
                f"but the grid has {grid.n_bins} bins"
            )
        y = np.asarray(self.samples, dtype=np.float64)
        return y / y.sum()


Irf = Union[DiracIrf, GaussianIrf, MeasuredIrf]


def multiexp_at(model: DecayModel, times: np.ndarray) -> np.ndarray:
    """Amplitude-fraction-weighted sum of exponentials at the given times (>= 0)."""
    frac = model.normalized_fractions()
    tau = model.lifetimes
    return np.exp(-times[..., None] / tau) @ frac


def evaluate_decay(model: DecayModel, irf: Irf, grid: TimeGrid) -> np.ndarray:
    """Expected TCSPC curve: IRF convolved with the decay, normalized to unit sum.

    With a Dirac IRF the result is the bare multi-exponential sampled at
    bin centers.  Otherwise the IRF is sampled on the grid, area
    normalized, and convolved linearly with the decay kernel sampled at
    integer bin delays; the tail is truncated at the grid end.
    """
    if isinstance(irf, DiracIrf):
        curve = multiexp_at(model, grid.rel_centers())
    else:
        irf_samples = irf.sample_on(grid)
        delays = np.arange(grid.n_bins) * grid.bin_width
        kernel = multiexp_at(model, delays)
        curve = np.convolve(irf_samples, kernel)[: grid.n_bins]
    total = curve.sum()
    if total <= 0:
        raise ValueError("decay curve has no mass on the grid")
    return curve / total


@dataclass(frozen=True)
class TcspcHistogram:
    """Photon counts per time bin for one pixel."""

    grid: TimeGrid
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 1 or counts.shape[0] != self.grid.n_bins:
            raise ValueError(
                f"counts must be 1-D with {self.grid.n_bins} entries, got {counts.shape}"
            )
        if not np.issubdtype(counts.dtype, np.integer):
            rounded = np.rint(counts)
            if not np.array_equal(rounded, counts):
                raise ValueError("counts must be integers")
            counts = rounded
        counts = counts.astype(np.int64)
        if (counts < 0).any():
            raise ValueError("counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class FlimCube:
    """Stack of per-pixel TCSPC histograms: counts indexed (y, x, bin)."""

    grid: TimeGrid
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.ndim != 3 or counts.shape[2] != self.grid.n_bins:
            raise ValueError(
                f"counts must be (H, W, {self.grid.n_bins}), got {counts.shape}"
            )
        if counts.shape[0] < 1 or counts.shape[1] < 1:
            raise ValueError("cube dimensions must be positive")
        if not np.issubdtype(counts.dtype, np.integer):
            raise ValueError("cube counts must be integers")
        counts = counts.astype(np.int64)
        if (counts < 0).any():
            raise ValueError("cube counts must be nonnegative")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def height(self) -> int:
        return self.counts.shape[0]

    @property
    def width(self) -> int:
        return self.counts.shape[1]

    def pixel(self, y: int, x: int) -> TcspcHistogram:
        return TcspcHistogram(self.grid, self.counts[y, x])

    def intensity(self) -> np.ndarray:
        """(H, W) total photon counts."""
        return self.counts.sum(axis=2)


@dataclass(frozen=True)
class Rectangle:
    """Axis-aligned pixel rectangle [x0, x0+width) x [y0, y0+height)."""

    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("rectangle must have positive extent")
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError("rectangle origin must be nonnegative")

    def mask(self, image_width: int, image_height: int) -> np.ndarray:
        if self.x0 + self.width > image_width or self.y0 + self.height > image_height:
            raise ValueError("rectangle extends outside the image")
        m = np.zeros((image_height, image_width), dtype=bool)
        m[self.y0 : self.y0 + self.height, self.x0 : self.x0 + self.width] = True
        return m


@dataclass(frozen=True)
class Disk:
    """Disk of pixel centers within `radius` of (cx, cy)."""

    cx: float
    cy: float
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("disk radius must be positive")

    def mask(self, image_width: int, image_height: int) -> np.ndarray:
        if (self.cx - self.radius < -0.5 or self.cx + self.radius > image_width - 0.5
                or self.cy - self.radius < -0.5
                or self.cy + self.radius > image_height - 0.5):
            raise ValueError("disk extends outside the image")
        yy, xx = np.mgrid[0:image_height, 0:image_width]
        return (xx - self.cx) ** 2 + (yy - self.cy) ** 2 <= self.radius**2


Shape = Union[Rectangle, Disk]


@dataclass(frozen=True)
class Region:
    shape: Shape
    model: DecayModel
    mean_photons: float

    def __post_init__(self):
        if self.mean_photons < 0:
            raise ValueError("mean_photons must be nonnegative")


@dataclass(frozen=True)
class PhantomSpec:
    """Geometric phantom: decay regions over a temporally flat background.

    Background pixels receive `background_photons` expected counts spread
    uniformly over all time bins (uncorrelated ambient signal) and carry
    no ground-truth lifetime.
    """

    width: int
    height: int
    regions: tuple[Region, ...]
    background_photons: float = 0.0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("phantom dimensions must be positive")
        if self.background_photons < 0:
            raise ValueError("background_photons must be nonnegative")
        object.__setattr__(self, "regions", tuple(self.regions))
        for region in self.regions:
            region.shape.mask(self.width, self.height)  # bounds check


def pixel_rng(seed: int, y: int, x: int) -> np.random.Generator:
    """Independent per-pixel stream so cubes are reproducible under any pixel order."""
    return np.random.default_rng([seed, y, x])


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if seed < 0:
        raise ValueError("seed must be nonnegative")
    return seed


def synthesize_histogram(
    curve: np.ndarray, total_photons: float, seed: int
) -> TcspcHistogram:
    """Draw Poisson counts around total_photons * normalized curve.

    The grid of the returned histogram is the default grid when the curve
    has the default length; pass an explicit grid via
    `synthesize_histogram_on` otherwise.
    """
    return synthesize_histogram_on(
        TimeGrid(len(np.asarray(curve)), DEFAULT_BIN_WIDTH_NS), curve, total_photons, seed
    )


def synthesize_histogram_on(
    grid: TimeGrid, curve: np.ndarray, total_photons: float, seed: int
) -> TcspcHistogram:
    seed = _check_seed(seed)
    curve = np.asarray(curve, dtype=np.float64)
    if curve.ndim != 1 or curve.shape[0] != grid.n_bins:
        raise ValueError("curve length must match the grid")
    if (curve < 0).any() or curve.sum() <= 0:
        raise ValueError("curve must be nonnegative with a positive sum")
    if not total_photons > 0:
        raise ValueError(f"total_photons must be positive, got {total_photons}")
    lam = total_photons * curve / curve.sum()
    counts = np.random.default_rng(seed).poisson(lam)
    return TcspcHistogram(grid, counts.astype(np.int64))


def synthesize_cube_from_maps(
    mean_map: np.ndarray,
    label_map: np.ndarray,
    models: list[DecayModel],
    irf: Irf,
    grid: TimeGrid,
    seed: int,
) -> tuple[FlimCube, LifetimeImage]:
    """Synthesize a cube from per-pixel expected counts and decay labels.

    mean_map:  (H, W) expected total photons per pixel.
    label_map: (H, W) int, index into `models`, or -1 for temporally flat
               background pixels (no ground-truth lifetime).
    """
    seed = _check_seed(seed)
    mean_map = np.asarray(mean_map, dtype=np.float64)
    label_map = np.asarray(label_map, dtype=np.int64)
    if mean_map.shape != label_map.shape or mean_map.ndim != 2:
        raise ValueError("mean_map and label_map must be matching 2-D arrays")
    if (mean_map < 0).any():
        raise ValueError("mean_map must be nonnegative")
    height, width = mean_map.shape
    n = grid.n_bins

    curves = [evaluate_decay(m, irf, grid) for m in models]
    flat = np.full(n, 1.0 / n)

    counts = np.zeros((height, width, n), dtype=np.int64)
    for y in range(height):
        for x in range(width):
            mean = mean_map[y, x]
            if mean == 0:
                continue
            label = label_map[y, x]
            shape_curve = curves[label] if label >= 0 else flat
            counts[y, x] = pixel_rng(seed, y, x).poisson(mean * shape_curve)

    n_comp = max((len(m.components) for m in models), default=1)
    tau = np.zeros((height, width, n_comp))
    fractions = np.zeros((height, width, n_comp))
    valid = (label_map >= 0) & (mean_map > 0)
    for idx, model in enumerate(models):
        sel = valid & (label_map == idx)
        if not sel.any():
            continue
        taus = model.lifetimes
        fracs = model.normalized_fractions()
        if len(taus) < n_comp:
            # mono-exponential region in a bi-exponential phantom
            taus = np.concatenate([taus, [taus[-1]]])
            fracs = np.concatenate([fracs, [0.0]])
        tau[sel] = taus
        fractions[sel] = fracs

    cube = FlimCube(grid, counts)
    truth = LifetimeImage(tau, fractions, counts.sum(axis=2), valid)
    return cube, truth


def expected_cube(
    amplitude_maps: np.ndarray,
    models: list[DecayModel],
    background_map: np.ndarray,
    irf: Irf,
    grid: TimeGrid,
) -> np.ndarray:
    """Noise-free expected counts for a mixture phantom.

    amplitude_maps: (R, H, W) expected photons per pixel from each model.
    background_map: (H, W) expected photons spread flat over all bins.
    Returns the (H, W, n_bins) expectation; pixels may mix components,
    which supports smoothly blended phantoms.
    """
    amplitude_maps = np.asarray(amplitude_maps, dtype=np.float64)
    background_map = np.asarray(background_map, dtype=np.float64)
    if amplitude_maps.ndim != 3 or amplitude_maps.shape[0] != len(models):
        raise ValueError("amplitude_maps must be (n_models, H, W)")
    if background_map.shape != amplitude_maps.shape[1:]:
        raise ValueError("background_map must be (H, W)")
    if (amplitude_maps < 0).any() or (background_map < 0).any():
        raise ValueError("expected photon maps must be nonnegative")
    n = grid.n_bins
    out = np.repeat(background_map[:, :, None] / n, n, axis=2)
    for amp, model in zip(amplitude_maps, models):
        out += amp[:, :, None] * evaluate_decay(model, irf, grid)
    return out


def poisson_cube(expected: np.ndarray, grid: TimeGrid, seed: int) -> FlimCube:
    """Draw per-pixel Poisson counts around an expected (H, W, n_bins) stack."""
    seed = _check_seed(seed)
    expected = np.asarray(expected, dtype=np.float64)
    height, width = expected.shape[:2]
    counts = np.zeros(expected.shape, dtype=np.int64)
    for y in range(height):
        for x in range(width):
            if expected[y, x].sum() > 0:
                counts[y, x] = pixel_rng(seed, y, x).poisson(expected[y, x])
    return FlimCube(grid, counts)


def synthesize_cube(
    spec: PhantomSpec, irf: Irf, grid: TimeGrid, seed: int
) -> tuple[FlimCube, LifetimeImage]:
    """Render a phantom spec into a noisy cube plus its ground truth.

    Overlapping regions are resolved in favor of the later region, with a
    warning.
    """
    label_map = np.full((spec.height, spec.width), -1, dtype=np.int64)
    mean_map = np.full((spec.height, spec.width), spec.background_photons)
    covered = np.zeros_like(label_map, dtype=bool)
    for idx, region in enumerate(spec.regions):
        m = region.shape.mask(spec.width, spec.height)
        if (covered & m).any():
            warnings.warn(
                f"region {idx} overlaps an earlier region; later region wins",
                stacklevel=2,
            )
        covered |= m
        label_map[m] = idx
        mean_map[m] = region.mean_photons
    models = [r.model for r in spec.regions]
    return synthesize_cube_from_maps(mean_map, label_map, models, irf, grid, seed)
