"""Image-quality metrics: RMSE, PSNR, and 3D SSIM.

All metrics compare a candidate field against a reference ("truth") field in
float64.  PSNR and SSIM need a data range L; by default it is the value range
of the reference, so identical inputs give PSNR = inf and SSIM = 1 without
extra arguments.  SSIM uses a 7-wide uniform window and the standard
stabilizers C1 = (0.01 L)^2, C2 = (0.03 L)^2.
"""

from __future__ import annotations

import numpy as np
from scipy.ndimage import uniform_filter

from .containers import ImageVolume
from .errors import ShapeError

__all__ = ["rmse", "psnr", "ssim", "evaluate_volumes"]


def _pair(x, truth):
    x = np.asarray(x, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if x.shape != truth.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {truth.shape}")
    return x, truth


def _range(truth: np.ndarray, data_range) -> float:
    if data_range is not None:
        return float(data_range)
    spread = float(truth.max() - truth.min())
    return spread if spread > 0 else 1.0


def rmse(x, truth) -> float:
    """Root-mean-square error, accumulated in float64."""
    x, truth = _pair(x, truth)
    d = x - truth
    return float(np.sqrt(np.mean(d * d)))


def psnr(x, truth, data_range=None) -> float:
    """Peak signal-to-noise ratio in dB; inf when the fields are identical."""
    x, truth = _pair(x, truth)
    d = x - truth
    mse = float(np.mean(d * d))
    if mse == 0.0:
        return float("inf")
    peak = _range(truth, data_range)
    return float(10.0 * np.log10(peak * peak / mse))


def ssim(x, truth, data_range=None, window: int = 7,
         k1: float = 0.01, k2: float = 0.03) -> float:
    """Mean structural similarity over a uniform sliding window."""
    x, truth = _pair(x, truth)
    peak = _range(truth, data_range)
    c1 = (k1 * peak) ** 2
    c2 = (k2 * peak) ** 2

    def uf(a):
        return uniform_filter(a, size=window, mode="reflect")

    mu_x = uf(x)
    mu_y = uf(truth)
    var_x = uf(x * x) - mu_x * mu_x
    var_y = uf(truth * truth) - mu_y * mu_y
    cov = uf(x * truth) - mu_x * mu_y
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


def evaluate_volumes(recon: ImageVolume, truth: ImageVolume) -> dict:
    """PSNR/SSIM/RMSE of a reconstruction against a reference volume."""
    if recon.dims != truth.dims:
        raise ShapeError(f"volume dims differ: {recon.dims} vs {truth.dims}")
    return {
        "psnr": psnr(recon.data, truth.data),
        "ssim": ssim(recon.data, truth.data),
        "rmse": rmse(recon.data, truth.data),
    }
