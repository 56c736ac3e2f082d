"""Image quality metrics."""

from __future__ import annotations

import math

import numpy as np
from scipy.ndimage import correlate1d

from ..fields import ShapeError

__all__ = ["psnr", "ssim"]


def _pair(u, ref):
    u = np.asarray(u, dtype=float)
    ref = np.asarray(ref, dtype=float)
    if u.shape != ref.shape:
        raise ShapeError(f"shape mismatch: {u.shape} vs {ref.shape}")
    return u, ref


def _range(ref, data_range):
    if data_range is not None:
        return float(data_range)
    r = float(ref.max() - ref.min())
    return r if r > 0 else 1.0


def psnr(u, ref, data_range: float | None = None) -> float:
    """``10 log10(range^2 / MSE)`` with ``range = max(ref) - min(ref)``; ``inf`` for identical inputs."""
    u, ref = _pair(u, ref)
    mse = float(np.mean((u - ref) ** 2))
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(_range(ref, data_range) ** 2 / mse)


def _gauss11(sigma=1.5, radius=5):
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def _filt(x, k):
    return correlate1d(correlate1d(x, k, axis=0, mode="reflect"), k, axis=1, mode="reflect")


def ssim(u, ref, data_range: float | None = None) -> float:
    """Mean SSIM with an 11x11 Gaussian window (std 1.5), K1=0.01, K2=0.03.

    The mean is taken over pixels whose window lies inside the image.
    """
    u, ref = _pair(u, ref)
    L = _range(ref, data_range)
    c1, c2 = (0.01 * L) ** 2, (0.03 * L) ** 2
    k = _gauss11()
    mu_x, mu_y = _filt(u, k), _filt(ref, k)
    sxx = _filt(u * u, k) - mu_x**2
    syy = _filt(ref * ref, k) - mu_y**2
    sxy = _filt(u * ref, k) - mu_x * mu_y
    s = ((2 * mu_x * mu_y + c1) * (2 * sxy + c2)) / ((mu_x**2 + mu_y**2 + c1) * (sxx + syy + c2))
    pad = 5
    if s.shape[0] > 2 * pad and s.shape[1] > 2 * pad:
        s = s[pad:-pad, pad:-pad]
    return float(s.mean())
