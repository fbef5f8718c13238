"""Compressive-sensing acquisition and reconstruction for time-gated FLIM.

A cube is measured per time gate as S = P I, where P is a {0, 1}
Hadamard-derived pattern matrix and I the vectorized frame.  Intensity
frames are recovered gate by gate with ridge-regularized least squares,
and lifetimes are then extracted from the reconstructed time series
with the ordinary fitters.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, hadamard

from .decay import DiracIrf, FlimCube, Irf, TimeGrid
from .errors import RankDeficiencyError
from .fitting import fit_image_values
from .images import LifetimeImage


@dataclass(frozen=True)
class PatternSet:
    """Binary illumination patterns; rows of a {0, 1} Hadamard matrix.

    The derived +-1 rows (2 p - 1) are mutually orthogonal.  Pixels are
    vectorized row-major from (y, x) frames of shape (side, side).
    """

    side: int
    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.uint8)
        if matrix.ndim != 2 or matrix.shape[1] != self.side**2:
            raise ValueError("pattern matrix must be (n_patterns, side^2)")
        if matrix.shape[0] < 1 or matrix.shape[0] > matrix.shape[1]:
            raise ValueError("need 1 <= n_patterns <= n_pixels")
        if not np.isin(matrix, (0, 1)).all():
            raise ValueError("pattern entries must be 0 or 1")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def n_patterns(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_pixels(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class CsMeasurement:
    """Pattern-by-gate measurement array from a (height, width, n_bins) cube."""

    values: np.ndarray
    grid: TimeGrid
    height: int
    width: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2 or values.shape[1] != self.grid.n_bins:
            raise ValueError("values must be (n_patterns, n_bins)")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_patterns(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class GatedStack:
    """Reconstructed per-gate intensities, clamped at zero."""

    grid: TimeGrid
    values: np.ndarray
    clamp_fraction: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 3 or values.shape[2] != self.grid.n_bins:
            raise ValueError("values must be (H, W, n_bins)")
        if (values < 0).any():
            raise ValueError("gated stack must be nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def hadamard_patterns(side: int, n_patterns: int, seed: int = 0) -> PatternSet:
    """Sylvester-Hadamard rows mapped {-1, +1} -> {0, 1}.

    When a subset is requested, the all-ones row is always retained (it
    measures total intensity and anchors the reconstruction); the other
    rows are chosen by a seeded shuffle.
    """
    if side < 1 or side & (side - 1):
        raise ValueError(f"side must be a power of 2, got {side}")
    n_pixels = side * side
    if not 1 <= n_patterns <= n_pixels:
        raise ValueError(f"n_patterns must lie in [1, {n_pixels}]")
    h = hadamard(n_pixels)
    binary = ((h + 1) // 2).astype(np.uint8)
    if n_patterns == n_pixels:
        rows = np.arange(n_pixels)
    else:
        rng = np.random.default_rng(seed)
        others = rng.permutation(np.arange(1, n_pixels))[: n_patterns - 1]
        rows = np.concatenate([[0], np.sort(others)])
    return PatternSet(side, binary[rows])


def cs_forward(cube: FlimCube, patterns: PatternSet) -> CsMeasurement:
    """Measure S = P I for every time gate; exact linear map."""
    if cube.height * cube.width != patterns.n_pixels:
        raise ValueError(
            f"cube has {cube.height * cube.width} pixels but patterns expect "
            f"{patterns.n_pixels}"
        )
    frames = cube.counts.reshape(-1, cube.grid.n_bins).astype(np.float64)
    values = patterns.matrix.astype(np.float64) @ frames
    return CsMeasurement(values, cube.grid, cube.height, cube.width)


def cs_forward_values(
    values: np.ndarray, grid: TimeGrid, patterns: PatternSet
) -> CsMeasurement:
    """cs_forward on a real-valued (H, W, n_bins) stack (for linearity tests)."""
    values = np.asarray(values, dtype=np.float64)
    height, width = values.shape[:2]
    if height * width != patterns.n_pixels:
        raise ValueError("frame size does not match the pattern length")
    meas = patterns.matrix.astype(np.float64) @ values.reshape(-1, grid.n_bins)
    return CsMeasurement(meas, grid, height, width)


def cs_invert(
    meas: CsMeasurement, patterns: PatternSet, ridge: float = 0.0
) -> GatedStack:
    """Per-gate minimum of ||P x - s||^2 + ridge ||x||^2 via normal equations.

    The symmetric system (P^T P + ridge I) is factorized once and shared
    by all gates.  Negative reconstructed intensities are clamped to
    zero and reported via clamp_fraction.
    """
    if meas.n_patterns != patterns.n_patterns:
        raise ValueError("measurement and pattern counts differ")
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    if ridge == 0.0 and patterns.n_patterns < patterns.n_pixels:
        raise RankDeficiencyError(
            "pattern matrix is rank deficient with fewer patterns than pixels; "
            "pass ridge > 0"
        )
    p = patterns.matrix.astype(np.float64)
    normal = p.T @ p + ridge * np.eye(patterns.n_pixels)
    factor = cho_factor(normal)
    x = cho_solve(factor, p.T @ meas.values)
    clamp_fraction = float((x < 0).mean())
    x = np.clip(x, 0.0, None)
    return GatedStack(
        meas.grid, x.reshape(meas.height, meas.width, meas.grid.n_bins),
        clamp_fraction,
    )


def cs_lifetime(
    stack: GatedStack,
    method: str = "lsm",
    irf: Irf = DiracIrf(),
    n_components: int = 1,
    **options,
) -> LifetimeImage:
    """Lifetimes from the reconstructed time series of every pixel."""
    if method not in ("lsm", "gate"):
        raise ValueError("cs_lifetime supports the lsm and gate methods")
    return fit_image_values(
        stack.grid, stack.values, irf, n_components, method, **options
    )
