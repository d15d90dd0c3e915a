"""Multiscale vesselness ridge filter and binarization.

Highlights dark tubular structures (whistle traces) in the inverted-gray
spectrogram. Per pixel and scale:

    V0 = 0                                     if lam2 < 0
    V0 = exp(-Rb^2/(2 beta^2)) * (1 - exp(-S^2/(2 c^2)))   otherwise

with S = sqrt(lam1^2 + lam2^2), Rb = |lam1|/|lam2| (0 when both vanish), and
(lam1, lam2) the Hessian eigenvalues ordered by |lam2| >= |lam1|. The final
map is the maximum response over scales.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate1d

from .spectrogram import as_grid


@dataclass(frozen=True)
class FrangiConfig:
    scales: tuple[float, ...] = (1.0, 2.0, 3.0)
    beta: float = 0.5
    c: float | None = None  # None -> adaptive: half the max S at each scale
    binarize_threshold: float = 0.15

    def __post_init__(self) -> None:
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ValueError("scales must be non-empty and positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.c is not None and self.c <= 0:
            raise ValueError("c must be positive or None for adaptive")
        if not 0.0 <= self.binarize_threshold <= 1.0:
            raise ValueError("binarize_threshold must lie in [0, 1]")


def _derivative_kernels(sigma: float, truncate: float = 4.0):
    """Sampled Gaussian smoothing/derivative kernels with exact discrete moments.

    The raw truncated kernels leak a small DC response, so they are corrected
    to satisfy sum(k2) = 0, sum(k2 * o^2) = 2 and sum(k1 * o) = 1 exactly:
    constants map to zero and quadratic ramps to their true second derivative.
    """
    radius = max(1, int(truncate * sigma + 0.5))
    o = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (o / sigma) ** 2)
    g /= g.sum()
    k1 = (o / sigma**2) * g  # antisymmetric, so sum(k1) == 0 exactly
    k1 /= np.sum(k1 * o)
    k2 = ((o * o - sigma * sigma) / sigma**4) * g
    k2 -= g * k2.sum()  # remove DC leakage along the Gaussian shape
    k2 *= 2.0 / np.sum(k2 * o * o)
    return g, k1, k2


def hessian_at_scale(image, sigma: float):
    """Scale-normalized Hessian grids (Hxx, Hxy, Hyy) at Gaussian scale sigma.

    Each grid is the image convolved with the corresponding second Gaussian
    derivative, multiplied by sigma^2 so responses are comparable across
    scales. Boundaries use reflection padding.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    grid = as_grid(image)
    g, k1, k2 = _derivative_kernels(sigma)
    s2 = sigma * sigma

    def sep(img, kx, ky):
        tmp = correlate1d(img, kx, axis=0, mode="reflect")
        return correlate1d(tmp, ky, axis=1, mode="reflect")

    hxx = s2 * sep(grid, k2, g)
    hxy = s2 * sep(grid, k1, k1)
    hyy = s2 * sep(grid, g, k2)
    return hxx, hxy, hyy


def eigen2x2(hxx, hxy, hyy):
    """Eigenvalues of the symmetric 2x2 matrix [[hxx, hxy], [hxy, hyy]].

    Returns (lam1, lam2) ordered by absolute value, |lam2| >= |lam1|.
    Works elementwise on arrays.
    """
    hxx = np.asarray(hxx, dtype=np.float64)
    hxy = np.asarray(hxy, dtype=np.float64)
    hyy = np.asarray(hyy, dtype=np.float64)
    mean = 0.5 * (hxx + hyy)
    root = np.hypot(0.5 * (hxx - hyy), hxy)
    plus = mean + root
    minus = mean - root
    plus_larger = np.abs(plus) >= np.abs(minus)
    lam2 = np.where(plus_larger, plus, minus)
    lam1 = np.where(plus_larger, minus, plus)
    if lam1.ndim == 0:
        return float(lam1), float(lam2)
    return lam1, lam2


def frangi(image, cfg: FrangiConfig = FrangiConfig()) -> np.ndarray:
    """Vesselness map in [0, 1], same shape as the input image."""
    grid = as_grid(image)
    out = np.zeros_like(grid)
    for sigma in cfg.scales:
        hxx, hxy, hyy = hessian_at_scale(grid, sigma)
        lam1, lam2 = eigen2x2(hxx, hxy, hyy)
        s_sq = lam1 * lam1 + lam2 * lam2
        with np.errstate(divide="ignore", invalid="ignore"):
            rb_sq = np.where(lam2 != 0.0, (lam1 / lam2) ** 2, 0.0)
        if cfg.c is None:
            s_max = np.sqrt(s_sq.max())
            # structure at rounding-noise level counts as no structure, else
            # the adaptive c would rescale float noise into responses
            if s_max <= 1e-12 * max(1.0, float(np.abs(grid).max())):
                continue
            c = 0.5 * s_max
        else:
            c = cfg.c
        v = np.exp(-rb_sq / (2.0 * cfg.beta**2)) * (
            1.0 - np.exp(-s_sq / (2.0 * c * c))
        )
        v[lam2 < 0.0] = 0.0
        v[s_sq == 0.0] = 0.0
        np.maximum(out, v, out=out)
    return np.clip(out, 0.0, 1.0)


def binarize(values: np.ndarray, threshold: float) -> np.ndarray:
    """Boolean map: True where vesselness >= threshold."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    return np.asarray(values) >= threshold
