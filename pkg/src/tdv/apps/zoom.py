"""Wavelet-constrained zooming."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..anisotropy import estimate_direction_model
from ..pdhg import DataTerm, solve
from ..tdvop import build_joint
from ..wavelet import WaveletPyramid, dwt_inverse

__all__ = ["ZoomResult", "naive_upsample", "zoom_wavelet"]


@dataclass
class ZoomResult:
    u: np.ndarray
    v: np.ndarray | None
    solves: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return sum(s.iterations for s in self.solves)


def naive_upsample(coarse, R: int = 2) -> np.ndarray:
    """Inverse transform with all detail bands set to zero."""
    c = np.asarray(coarse, dtype=float)
    m, n = c.shape
    # finest level first
    details = tuple((np.zeros((m << k, n << k)),) * 3 for k in reversed(range(R)))
    return dwt_inverse(WaveletPyramid(c, details, (m << R, n << R)))


def zoom_wavelet(
    coarse,
    orders=(1.0, 0.0, 0.0),
    R: int = 2,
    *,
    anisotropic: bool = True,
    beta: float | str = 0.1,
    sigma: float = 1.0,
    rho: float = 2.0,
    gamma: float = 1.0,
    outer: int = 1,
    inner: int = 500,
    trace=None,
) -> ZoomResult:
    """Minimise the joint TDV energy over images whose coarse band equals ``coarse``.

    The direction field is estimated from the zero-detail reconstruction and
    re-estimated from the current iterate on every further outer iteration.
    """
    coarse = np.asarray(coarse, dtype=float)
    dt = DataTerm.wavelet(coarse, R)
    u = naive_upsample(coarse, R)
    w = None
    model = None
    solves = []
    for _ in range(outer if anisotropic else 1):
        if anisotropic:
            model, _ = estimate_direction_model(u, sigma, rho, beta, gamma)
        K = build_joint(orders, model, u.shape)
        r = solve(K, dt, max_iters=inner, z_init=[u], w_init=w, trace=trace)
        u, w = r.u, r.state.w
        solves.append(r)
    return ZoomResult(u, None if model is None else model.v, solves)
