"""Separable CDF 9/7 wavelet transform by lifting, and the coarse-band projection.

Boundaries use whole-sample symmetric extension, so every even length
reconstructs perfectly. The low-pass channel is scaled to a DC gain of
``sqrt(2)`` per axis: one 2-D level multiplies a constant image by 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import ScalarField, ShapeError

__all__ = ["WaveletPyramid", "dwt_forward", "dwt_inverse", "project_UD", "coarse_from_lowres", "LIFTING"]

# predict / update / predict / update / scale
LIFTING = (-1.586134342059924, -0.052980118572961, 0.882911075530934, 0.443506852043971, 1.149604398860241)


@dataclass(frozen=True)
class WaveletPyramid:
    """Coarse band plus detail bands ``(LH, HL, HH)`` per level, finest first."""

    coarse: np.ndarray
    details: tuple
    shape: tuple

    @property
    def levels(self) -> int:
        return len(self.details)


def _lift_forward(x: np.ndarray) -> np.ndarray:
    # 1-D transform along axis 0; output is [low; high]
    a, b, c, d, k = LIFTING
    s = x[0::2].copy()
    h = x[1::2].copy()
    s_next = np.concatenate([s[1:], s[-1:]])
    h += a * (s + s_next)
    h_prev = np.concatenate([h[:1], h[:-1]])
    s += b * (h_prev + h)
    s_next = np.concatenate([s[1:], s[-1:]])
    h += c * (s + s_next)
    h_prev = np.concatenate([h[:1], h[:-1]])
    s += d * (h_prev + h)
    return np.concatenate([s * k, h / k])


def _lift_inverse(y: np.ndarray) -> np.ndarray:
    a, b, c, d, k = LIFTING
    half = y.shape[0] // 2
    s = y[:half] / k
    h = y[half:] * k
    h_prev = np.concatenate([h[:1], h[:-1]])
    s = s - d * (h_prev + h)
    s_next = np.concatenate([s[1:], s[-1:]])
    h = h - c * (s + s_next)
    h_prev = np.concatenate([h[:1], h[:-1]])
    s = s - b * (h_prev + h)
    s_next = np.concatenate([s[1:], s[-1:]])
    h = h - a * (s + s_next)
    x = np.empty((2 * half,) + y.shape[1:])
    x[0::2] = s
    x[1::2] = h
    return x


def _forward2(x):
    y = _lift_forward(x)
    return _lift_forward(y.T).T


def _inverse2(y):
    x = _lift_inverse(y.T).T
    return _lift_inverse(x)


def _check_size(shape, R):
    if R < 1:
        raise ValueError(f"number of levels must be >= 1, got {R}")
    m, n = shape
    step = 2**R
    if m % step or n % step:
        raise ShapeError(f"image of shape {shape} must have both sides divisible by 2**R = {step}")


def dwt_forward(u, R: int = 2) -> WaveletPyramid:
    """``R``-level 2-D analysis. Both sides must be divisible by ``2**R``."""
    if isinstance(u, ScalarField):
        u = u.values
    x = np.asarray(u, dtype=float)
    _check_size(x.shape, R)
    details = []
    for _ in range(R):
        y = _forward2(x)
        m, n = y.shape[0] // 2, y.shape[1] // 2
        details.append((y[:m, n:].copy(), y[m:, :n].copy(), y[m:, n:].copy()))
        x = y[:m, :n].copy()
    return WaveletPyramid(x, tuple(details), tuple(np.shape(u)))


def dwt_inverse(p: WaveletPyramid) -> np.ndarray:
    """Synthesis matching :func:`dwt_forward`."""
    x = np.asarray(p.coarse, dtype=float)
    for lh, hl, hh in reversed(p.details):
        if not (lh.shape == hl.shape == hh.shape == x.shape):
            raise ShapeError("inconsistent band sizes in wavelet pyramid")
        y = np.block([[x, lh], [hl, hh]])
        x = _inverse2(y)
    return x


def project_UD(u, u0_coarse, R: int = 2) -> np.ndarray:
    """Replace the coarse band of ``u`` by ``u0_coarse`` and resynthesise."""
    if isinstance(u, ScalarField):
        u = u.values
    p = dwt_forward(u, R)
    u0_coarse = np.asarray(u0_coarse, dtype=float)
    if u0_coarse.shape != p.coarse.shape:
        raise ShapeError(f"coarse band of shape {u0_coarse.shape}, expected {p.coarse.shape}")
    return dwt_inverse(WaveletPyramid(u0_coarse, p.details, p.shape))


def coarse_from_lowres(img, R: int = 2) -> np.ndarray:
    """Interpret a low-resolution image as coarse coefficients (DC gain ``2**R``)."""
    return np.asarray(img, dtype=float) * 2.0**R
