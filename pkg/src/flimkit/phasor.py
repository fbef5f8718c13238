"""Phasor transforms for time-domain and frequency-domain lifetime data.

A decay maps to a point (g, s) via cosine/sine transforms at an angular
frequency omega.  Single-exponential decays land on the universal
semicircle between (1, 0) for zero lifetime and (0, 0) for infinite
lifetime; mixtures fall on chords between their component phasors.
"""

import math
from dataclasses import dataclass

import numpy as np

from .decay import DecayModel, FlimCube, TcspcHistogram, TimeGrid
from .errors import LowSignalError, UndefinedLifetimeError

DEFAULT_INTENSITY_FLOOR = 100.0


def default_omega(grid: TimeGrid) -> float:
    """Fundamental harmonic of the measurement window, rad/ns."""
    return 2.0 * math.pi / grid.span


@dataclass(frozen=True)
class Phasor:
    g: float
    s: float


@dataclass(frozen=True)
class FdMeasurement:
    """Frequency-domain reading: modulation degree m and phase shift phi at omega."""

    m: float
    phi: float
    omega: float

    def __post_init__(self):
        if not 0.0 < self.m <= 1.0:
            raise ValueError(f"modulation degree must lie in (0, 1], got {self.m}")
        if not 0.0 <= self.phi < math.pi / 2:
            raise ValueError(f"phase shift must lie in [0, pi/2), got {self.phi}")
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")


@dataclass(frozen=True)
class PhasorImage:
    """Per-pixel phasor coordinates with intensity, shared omega, validity flags."""

    g: np.ndarray
    s: np.ndarray
    intensity: np.ndarray
    valid: np.ndarray
    omega: float

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.float64)
        s = np.asarray(self.s, dtype=np.float64)
        intensity = np.asarray(self.intensity, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if g.ndim != 2 or g.shape != s.shape or g.shape != intensity.shape \
                or g.shape != valid.shape:
            raise ValueError("g, s, intensity, valid must share a 2-D shape")
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        if valid.any() and not (np.isfinite(g[valid]).all() and np.isfinite(s[valid]).all()):
            raise ValueError("valid pixels must carry finite phasors")
        for arr in (g, s, intensity, valid):
            arr.setflags(write=False)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "intensity", intensity)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.g.shape[0]

    @property
    def width(self) -> int:
        return self.g.shape[1]

    def points(self) -> np.ndarray:
        """(N, 2) array of valid (g, s) pairs in row-major pixel order."""
        return np.column_stack([self.g[self.valid], self.s[self.valid]])


def phasor_from_counts(grid: TimeGrid, values: np.ndarray, omega: float) -> Phasor:
    """Midpoint-rule phasor of a nonnegative per-bin weight vector.

    Time is measured from the grid origin.  Scale invariant: multiplying
    the values by a positive constant leaves the result unchanged.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.shape[0] != grid.n_bins:
        raise ValueError("values length must match the grid")
    total = values.sum()
    if total <= 0:
        raise LowSignalError("cannot compute a phasor from zero total signal")
    wt = omega * grid.rel_centers()
    # np.sum keeps the reduction order independent of BLAS threading
    g = float(np.sum(values * np.cos(wt)) / total)
    s = float(np.sum(values * np.sin(wt)) / total)
    return Phasor(g, s)


def phasor_from_histogram(hist: TcspcHistogram, omega: float) -> Phasor:
    if hist.total <= 0:
        raise LowSignalError("histogram has zero counts")
    return phasor_from_counts(hist.grid, hist.counts.astype(np.float64), omega)


def phasor_from_fd(meas: FdMeasurement) -> Phasor:
    """g = m cos(phi), s = m sin(phi)."""
    return Phasor(meas.m * math.cos(meas.phi), meas.m * math.sin(meas.phi))


def phasor_from_components(model: DecayModel, omega: float) -> Phasor:
    """Closed-form phasor from intensity-weighted component fractions.

    g = sum_k f_k / (1 + (omega tau_k)^2)
    s = sum_k f_k omega tau_k / (1 + (omega tau_k)^2)
    with f_k = a_k tau_k / sum(a tau).
    """
    f = model.intensity_fractions()
    wt = omega * model.lifetimes
    denom = 1.0 + wt**2
    return Phasor(float((f / denom).sum()), float((f * wt / denom).sum()))


def fd_from_components(model: DecayModel, omega: float) -> FdMeasurement:
    """Exact (m, phi) a frequency-domain system would report for this decay."""
    p = phasor_from_components(model, omega)
    return FdMeasurement(math.hypot(p.g, p.s), math.atan2(p.s, p.g), omega)


def fd_lifetimes(meas: FdMeasurement) -> tuple[float, float]:
    """Lifetimes (tau_m, tau_phi) from modulation degree and phase shift.

    tau_phi = tan(phi) / omega.  tau_m carries the same 1/omega factor
    for dimensional consistency: tau_m = sqrt(1/m^2 - 1) / omega.
    """
    if meas.m >= 1.0:
        raise UndefinedLifetimeError(
            "modulation lifetime is undefined for modulation degree >= 1"
        )
    tau_m = math.sqrt(1.0 / meas.m**2 - 1.0) / meas.omega
    tau_phi = math.tan(meas.phi) / meas.omega
    return tau_m, tau_phi


def average_lifetime(p: Phasor, omega: float) -> float:
    """Phase lifetime s / (g * omega); exact for single-exponential decays."""
    if p.g <= 0:
        raise UndefinedLifetimeError("average lifetime is undefined for g <= 0")
    return p.s / (p.g * omega)


def phasor_image(
    cube: FlimCube,
    omega: float | None = None,
    intensity_floor: float = DEFAULT_INTENSITY_FLOOR,
) -> PhasorImage:
    """Per-pixel phasor transform; pixels below the photon floor are invalid."""
    if omega is None:
        omega = default_omega(cube.grid)
    counts = cube.counts.astype(np.float64)
    total = counts.sum(axis=2)
    valid = (total >= intensity_floor) & (total > 0)
    wt = omega * cube.grid.rel_centers()
    safe_total = np.where(total > 0, total, 1.0)
    g = np.einsum("hwn,n->hw", counts, np.cos(wt)) / safe_total
    s = np.einsum("hwn,n->hw", counts, np.sin(wt)) / safe_total
    g[~valid] = 0.0
    s[~valid] = 0.0
    return PhasorImage(g, s, total, valid, omega)
