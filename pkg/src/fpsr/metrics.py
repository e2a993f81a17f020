"""Objective image quality: PSNR, windowed SSIM, difference heatmaps."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import ShapeError

PSNR_INF = math.inf  # sentinel for identical images

_SSIM_WINDOW = 11
_SSIM_SIGMA = 1.5
_SSIM_K1 = 0.01
_SSIM_K2 = 0.03


@dataclass
class MetricResult:
    psnr_db: float
    ssim: float


@dataclass
class AggregateResult:
    per_image: list
    psnr_mean: float
    psnr_std: float
    ssim_mean: float
    ssim_std: float

    @classmethod
    def from_results(cls, results):
        p = np.array([r.psnr_db for r in results], dtype=np.float64)
        s = np.array([r.ssim for r in results], dtype=np.float64)
        return cls(list(results), float(p.mean()), float(p.std()),
                   float(s.mean()), float(s.std()))


def _as_2d(img):
    arr = np.asarray(img.data if hasattr(img, "data") else img, dtype=np.float64)
    arr = np.squeeze(arr)
    if arr.ndim != 2:
        raise ShapeError(f"expected a single 2-D image, got shape {arr.shape}")
    return arr


def psnr(pred, target, peak=1.0):
    """10 log10(peak^2 / MSE) in dB; identical images give the inf sentinel."""
    p, t = _as_2d(pred), _as_2d(target)
    if p.shape != t.shape:
        raise ShapeError(f"psnr: shapes {p.shape} vs {t.shape}")
    mse = float(np.mean((p - t) ** 2))
    if mse == 0.0:
        return PSNR_INF
    return 10.0 * math.log10(peak * peak / mse)


def _gauss_window():
    half = (_SSIM_WINDOW - 1) / 2
    x = np.arange(_SSIM_WINDOW) - half
    g = np.exp(-(x ** 2) / (2 * _SSIM_SIGMA ** 2))
    return g / g.sum()


def _band_matrix(n):
    # valid-window correlation as an explicit banded matrix
    g = _gauss_window()
    rows = n - _SSIM_WINDOW + 1
    m = np.zeros((rows, n))
    for r in range(rows):
        m[r, r:r + _SSIM_WINDOW] = g
    return m


def ssim(pred, target, peak=1.0):
    """Mean local SSIM, 11x11 Gaussian window (sigma 1.5), valid windows only."""
    p, t = _as_2d(pred), _as_2d(target)
    if p.shape != t.shape:
        raise ShapeError(f"ssim: shapes {p.shape} vs {t.shape}")
    h, w = p.shape
    if h < _SSIM_WINDOW or w < _SSIM_WINDOW:
        raise ShapeError(f"ssim: image {h}x{w} smaller than the {_SSIM_WINDOW}-pixel window")

    gr, gc = _band_matrix(h), _band_matrix(w)

    def smooth(img):
        return gr @ img @ gc.T

    mu_p = smooth(p)
    mu_t = smooth(t)
    var_p = smooth(p * p) - mu_p ** 2
    var_t = smooth(t * t) - mu_t ** 2
    cov = smooth(p * t) - mu_p * mu_t

    c1 = (_SSIM_K1 * peak) ** 2
    c2 = (_SSIM_K2 * peak) ** 2
    num = (2 * mu_p * mu_t + c1) * (2 * cov + c2)
    den = (mu_p ** 2 + mu_t ** 2 + c1) * (var_p + var_t + c2)
    return float(np.mean(num / den))


def diff_heatmap(a, b, norm_max=None):
    """|a - b| scaled into [0, 1].

    `norm_max` is the maximum difference over the whole comparison set
    when heatmaps should be cross-comparable; by default each map is
    normalized by its own maximum (identical inputs give all zeros).
    """
    x, y = _as_2d(a), _as_2d(b)
    if x.shape != y.shape:
        raise ShapeError(f"diff_heatmap: shapes {x.shape} vs {y.shape}")
    d = np.abs(x - y)
    m = float(d.max()) if norm_max is None else float(norm_max)
    if m > 0:
        d = d / m
    return np.clip(d, 0.0, 1.0)


def save_heatmap_png(heatmap, path):
    """Render a [0, 1] map as an 8-bit PNG; brighter means more difference."""
    arr = np.clip(np.asarray(heatmap), 0.0, 1.0)
    img = Image.fromarray(np.round(arr * 255.0).astype(np.uint8), mode="L")
    img.save(path, format="PNG")
