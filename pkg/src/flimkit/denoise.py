"""Denoising of phasor-coordinate images and lifetime rendering.

The lifetime at a pixel is s / (g * omega), so instead of filtering the
lifetime map directly one can filter the S and G planes independently
and take the ratio of the filtered planes.  This module implements both
paths with pluggable classical filters, plus the PSNR metric and the
composite HSV rendering (lifetime as hue, intensity as brightness).
"""

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy.ndimage import gaussian_filter

from .images import LifetimeImage
from .phasor import PhasorImage


@dataclass(frozen=True)
class FrameAverage:
    """Pixelwise mean over a stack of co-registered frames."""

    n_frames: int

    def __post_init__(self):
        if self.n_frames < 1:
            raise ValueError("FrameAverage needs at least one frame")


@dataclass(frozen=True)
class GaussianSmooth:
    """Spatial Gaussian filter with the given sigma in pixels."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class MedianSmooth:
    """Median over a (2 * radius + 1)^2 pixel window."""

    radius: int

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("radius must be at least 1")


DenoiseMethod = Union[FrameAverage, GaussianSmooth, MedianSmooth]


def _masked_gaussian(plane, valid, sigma):
    num = gaussian_filter(np.where(valid, plane, 0.0), sigma, mode="constant")
    den = gaussian_filter(valid.astype(np.float64), sigma, mode="constant")
    ok = den > 1e-12
    out = np.zeros_like(plane)
    out[ok] = num[ok] / den[ok]
    return out, ok


def _masked_median(plane, valid, radius):
    h, w = plane.shape
    padded = np.full((h + 2 * radius, w + 2 * radius), np.nan)
    padded[radius : radius + h, radius : radius + w] = np.where(valid, plane, np.nan)
    windows = np.lib.stride_tricks.sliding_window_view(
        padded, (2 * radius + 1, 2 * radius + 1)
    )
    flat = windows.reshape(h, w, -1)
    ok = ~np.isnan(flat).all(axis=2)
    out = np.zeros((h, w))
    with np.errstate(all="ignore"):
        med = np.nanmedian(flat, axis=2)
    out[ok] = med[ok]
    return out, ok


def denoise_sg(
    noisy: Union[PhasorImage, Sequence[PhasorImage]], method: DenoiseMethod
) -> PhasorImage:
    """Filter the S and G planes independently, propagating validity.

    A pixel in the output is valid iff the filter support at that pixel
    contains at least one valid input pixel.  Frame averaging takes a
    stack of images; the spatial filters take a single image.
    """
    if isinstance(method, FrameAverage):
        if isinstance(noisy, PhasorImage):
            raise ValueError("FrameAverage needs a sequence of phasor images")
        frames = list(noisy)
        if len(frames) != method.n_frames:
            raise ValueError(
                f"FrameAverage({method.n_frames}) got {len(frames)} frames"
            )
        first = frames[0]
        if any(
            f.g.shape != first.g.shape or f.omega != first.omega for f in frames
        ):
            raise ValueError("frames must share shape and omega")
        valid_any = np.zeros(first.g.shape, dtype=bool)
        g_sum = np.zeros(first.g.shape)
        s_sum = np.zeros(first.g.shape)
        i_sum = np.zeros(first.g.shape)
        n_valid = np.zeros(first.g.shape)
        for f in frames:
            g_sum += np.where(f.valid, f.g, 0.0)
            s_sum += np.where(f.valid, f.s, 0.0)
            i_sum += f.intensity
            n_valid += f.valid
            valid_any |= f.valid
        denom = np.maximum(n_valid, 1.0)
        return PhasorImage(
            g_sum / denom, s_sum / denom, i_sum / len(frames), valid_any, first.omega
        )

    if not isinstance(noisy, PhasorImage):
        raise ValueError("spatial filters take a single phasor image")
    if isinstance(method, GaussianSmooth):
        g, ok_g = _masked_gaussian(noisy.g, noisy.valid, method.sigma)
        s, _ = _masked_gaussian(noisy.s, noisy.valid, method.sigma)
    elif isinstance(method, MedianSmooth):
        g, ok_g = _masked_median(noisy.g, noisy.valid, method.radius)
        s, _ = _masked_median(noisy.s, noisy.valid, method.radius)
    else:
        raise ValueError(f"unknown denoise method {method!r}")
    return PhasorImage(g, s, noisy.intensity, ok_g, noisy.omega)


def lifetime_from_phasor_image(img: PhasorImage) -> LifetimeImage:
    """Per-pixel tau = s / (g * omega); pixels with g <= 0 become invalid."""
    ok = img.valid & (img.g > 0)
    tau = np.zeros(img.g.shape)
    tau[ok] = img.s[ok] / (img.g[ok] * img.omega)
    ok &= tau > 0
    tau[~ok] = 0.0
    return LifetimeImage(
        tau[..., None],
        np.where(ok, 1.0, 0.0)[..., None],
        img.intensity,
        ok,
    )


def denoise_lifetime(
    noisy: Union[PhasorImage, Sequence[PhasorImage]], method: DenoiseMethod
) -> LifetimeImage:
    """Reference path for comparison: filter the lifetime map itself.

    The lifetime is formed per input frame first and then filtered, so
    any nonlinearity of the ratio is baked in before smoothing.
    """
    if isinstance(method, FrameAverage):
        if isinstance(noisy, PhasorImage):
            raise ValueError("FrameAverage needs a sequence of phasor images")
        frames = [lifetime_from_phasor_image(f) for f in noisy]
        if len(frames) != method.n_frames:
            raise ValueError(
                f"FrameAverage({method.n_frames}) got {len(frames)} frames"
            )
        tau_sum = np.zeros(frames[0].valid.shape)
        i_sum = np.zeros_like(tau_sum)
        n_valid = np.zeros_like(tau_sum)
        for f in frames:
            tau_sum += f.tau[..., 0]
            i_sum += f.intensity
            n_valid += f.valid
        ok = n_valid > 0
        tau = np.zeros_like(tau_sum)
        tau[ok] = tau_sum[ok] / n_valid[ok]
        return LifetimeImage(
            tau[..., None], np.where(ok, 1.0, 0.0)[..., None],
            i_sum / len(frames), ok & (tau > 0),
        )

    ltimg = lifetime_from_phasor_image(noisy)
    plane = ltimg.tau[..., 0]
    if isinstance(method, GaussianSmooth):
        tau, ok = _masked_gaussian(plane, ltimg.valid, method.sigma)
    elif isinstance(method, MedianSmooth):
        tau, ok = _masked_median(plane, ltimg.valid, method.radius)
    else:
        raise ValueError(f"unknown denoise method {method!r}")
    ok = ok & (tau > 0)
    tau[~ok] = 0.0
    return LifetimeImage(
        tau[..., None], np.where(ok, 1.0, 0.0)[..., None], ltimg.intensity, ok
    )


def psnr(
    image: np.ndarray,
    reference: np.ndarray,
    peak: float,
    valid: np.ndarray | None = None,
) -> float:
    """10 log10(peak^2 / MSE) in dB over the (optionally masked) pixels."""
    image = np.asarray(image, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if image.shape != reference.shape:
        raise ValueError("image and reference dimensions differ")
    if not peak > 0:
        raise ValueError("peak must be positive")
    if valid is not None:
        valid = np.asarray(valid, dtype=bool)
        if valid.shape != image.shape:
            raise ValueError("valid mask dimensions differ")
        image = image[valid]
        reference = reference[valid]
        if image.size == 0:
            raise ValueError("no pixels to compare")
    mse = float(np.mean((image - reference) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)


@dataclass(frozen=True)
class CompositeImage:
    """HSV rendering: lifetime mapped to hue, intensity to brightness."""

    rgb: np.ndarray

    def __post_init__(self):
        rgb = np.asarray(self.rgb)
        if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.dtype != np.uint8:
            raise ValueError("rgb must be (H, W, 3) uint8")
        rgb.setflags(write=False)
        object.__setattr__(self, "rgb", rgb)


def _hsv_to_rgb(h_deg: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Full-saturation HSV to RGB, vectorized; h in degrees, v in [0, 1]."""
    c = v
    hp = h_deg / 60.0
    x = c * (1.0 - np.abs(hp % 2.0 - 1.0))
    z = np.zeros_like(c)
    sector = np.floor(hp).astype(int) % 6
    r = np.select([sector == 0, sector == 1, sector == 2,
                   sector == 3, sector == 4, sector == 5], [c, x, z, z, x, c])
    g = np.select([sector == 0, sector == 1, sector == 2,
                   sector == 3, sector == 4, sector == 5], [x, c, c, x, z, z])
    b = np.select([sector == 0, sector == 1, sector == 2,
                   sector == 3, sector == 4, sector == 5], [z, z, x, c, c, x])
    return np.stack([r, g, b], axis=-1)


def composite(
    intensity: np.ndarray,
    lifetime: LifetimeImage,
    tau_range: tuple[float, float],
) -> CompositeImage:
    """Render lifetime as hue from red (short) to blue (long) over intensity.

    Hue runs linearly from 0 degrees at tau_range[0] to 240 degrees at
    tau_range[1]; out-of-range lifetimes are clamped.  Brightness is the
    intensity normalized to its 99th percentile over valid pixels.
    Invalid pixels render black.
    """
    tau_min, tau_max = tau_range
    if not tau_min < tau_max:
        raise ValueError("tau_range must satisfy min < max")
    intensity = np.asarray(intensity, dtype=np.float64)
    if intensity.shape != lifetime.valid.shape:
        raise ValueError("intensity dimensions must match the lifetime image")
    tau = lifetime.mean_lifetime()
    frac = np.clip((tau - tau_min) / (tau_max - tau_min), 0.0, 1.0)
    hue = 240.0 * frac

    if lifetime.valid.any():
        scale = np.percentile(intensity[lifetime.valid], 99)
    else:
        scale = 0.0
    value = np.clip(intensity / scale, 0.0, 1.0) if scale > 0 else np.zeros_like(intensity)
    value[~lifetime.valid] = 0.0

    rgb = np.rint(_hsv_to_rgb(hue, value) * 255.0).astype(np.uint8)
    return CompositeImage(rgb)
