"""Image quality metrics for [0, 1] projections: MAE, NRMSE, PSNR, SSIM."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import correlate1d

__all__ = ["MetricReport", "mae", "nrmse", "psnr", "ssim", "evaluate", "gaussian_window"]

SSIM_WIN = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _pair(a, b):
    a = np.asarray(getattr(a, "data", a), dtype=np.float64)
    b = np.asarray(getattr(b, "data", b), dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"image shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def mae(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def nrmse(a, b) -> float:
    """RMSE normalized by the dynamic range of the reference ``b``."""
    a, b = _pair(a, b)
    span = float(b.max() - b.min())
    if span == 0.0:
        raise ValueError("reference image has zero dynamic range")
    return math.sqrt(float(np.mean((a - b) ** 2))) / span


def psnr(a, b, data_range: float = 1.0) -> float:
    """PSNR in dB; identical images give ``math.inf``."""
    a, b = _pair(a, b)
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(data_range**2 / mse)


def gaussian_window(size: int = SSIM_WIN, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 1D Gaussian taps."""
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x**2) / (2.0 * sigma**2))
    return g / g.sum()


def _filter_valid(img: np.ndarray, taps: np.ndarray) -> np.ndarray:
    """Separable correlation keeping only windows fully inside the image."""
    r = (taps.size - 1) // 2
    out = correlate1d(img, taps, axis=-2, mode="constant")
    out = correlate1d(out, taps, axis=-1, mode="constant")
    return out[..., r : img.shape[-2] - r, r : img.shape[-1] - r]


def ssim_map(a, b, data_range: float = 1.0) -> np.ndarray:
    a, b = _pair(a, b)
    if a.ndim < 2 or min(a.shape[-2:]) < SSIM_WIN:
        raise ValueError(f"SSIM needs images of at least {SSIM_WIN}x{SSIM_WIN}, got {a.shape}")
    w = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    mu_a, mu_b = _filter_valid(a, w), _filter_valid(b, w)
    var_a = _filter_valid(a * a, w) - mu_a * mu_a
    var_b = _filter_valid(b * b, w) - mu_b * mu_b
    cov = _filter_valid(a * b, w) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return num / den


def ssim(a, b, data_range: float = 1.0) -> float:
    """Mean single-scale SSIM (11x11 Gaussian window, sigma 1.5).

    Leading axes (e.g. channels) are averaged together with the spatial map.
    """
    return float(np.mean(ssim_map(a, b, data_range)))


@dataclass(frozen=True)
class MetricReport:
    mae: float
    rmse: float
    ssim: float
    psnr: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["psnr_infinite"] = math.isinf(self.psnr)
        if d["psnr_infinite"]:
            d["psnr"] = None
        return d


def evaluate(pred, truth, data_range: float = 1.0) -> MetricReport:
    return MetricReport(
        mae=mae(pred, truth),
        rmse=nrmse(pred, truth),
        ssim=ssim(pred, truth, data_range),
        psnr=psnr(pred, truth, data_range),
    )
