"""Per-pixel lifetime maps, the common output of every extraction path."""

from dataclasses import dataclass

import numpy as np

FRACTION_SUM_TOL = 1e-9


@dataclass(frozen=True)
class LifetimeImage:
    """Per-pixel lifetimes with intensity and validity flags.

    tau:       (height, width, n_components) lifetimes in ns, n_components 1 or 2
    fractions: (height, width, n_components) amplitude fractions, sum 1 on valid pixels
    intensity: (height, width) photon counts
    valid:     (height, width) bool
    """

    tau: np.ndarray
    fractions: np.ndarray
    intensity: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=np.float64)
        fractions = np.asarray(self.fractions, dtype=np.float64)
        intensity = np.asarray(self.intensity, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if tau.ndim != 3 or tau.shape[2] not in (1, 2):
            raise ValueError(f"tau must be (H, W, 1|2), got {tau.shape}")
        if fractions.shape != tau.shape:
            raise ValueError("fractions shape must match tau")
        if intensity.shape != tau.shape[:2] or valid.shape != tau.shape[:2]:
            raise ValueError("intensity/valid must be (H, W)")
        if valid.any():
            if not (tau[valid] > 0).all():
                raise ValueError("valid pixels must have positive lifetimes")
            f = fractions[valid]
            if (f < -FRACTION_SUM_TOL).any() or (f > 1 + FRACTION_SUM_TOL).any():
                raise ValueError("fractions must lie in [0, 1]")
            if not np.allclose(f.sum(axis=-1), 1.0, atol=FRACTION_SUM_TOL, rtol=0):
                raise ValueError("fractions of valid pixels must sum to 1")
        for arr in (tau, fractions, intensity, valid):
            arr.setflags(write=False)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "fractions", fractions)
        object.__setattr__(self, "intensity", intensity)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.tau.shape[0]

    @property
    def width(self) -> int:
        return self.tau.shape[1]

    @property
    def n_components(self) -> int:
        return self.tau.shape[2]

    def long_lifetime(self) -> np.ndarray:
        """(H, W) map of the slowest component, zero on invalid pixels."""
        out = self.tau[..., -1].copy()
        out[~self.valid] = 0.0
        return out

    def mean_lifetime(self) -> np.ndarray:
        """(H, W) amplitude-weighted mean lifetime, zero on invalid pixels."""
        out = (self.tau * self.fractions).sum(axis=-1)
        out[~self.valid] = 0.0
        return out
