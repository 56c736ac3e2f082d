"""Direction fields and anisotropy weights from the structure tensor.

The pipeline is: smooth the image, take the staggered gradient, average it
onto cell centres, form the per-cell outer product and smooth it again. The
eigenvector of the smaller eigenvalue points along edges and becomes the
raw direction field; the normalised eigenvalue gap measures how coherent
that direction is and drives both the direction smoothing and the
contraction weight ``beta``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.ndimage import correlate1d
from scipy.sparse.linalg import cg

from .diffops import grad1, transfer_operator
from .fields import ScalarField

__all__ = [
    "SolverError",
    "StructureTensorField",
    "DirectionModel",
    "gaussian_kernel",
    "gaussian_smooth",
    "structure_tensor",
    "eig2x2",
    "coherence_weight",
    "beta_from_anisotropy",
    "smooth_direction_field",
    "assemble_M",
    "estimate_direction_model",
]

logger = logging.getLogger(__name__)

DEFAULT_EPS = 1e-8
UNIT_TOL = 1e-9
WEIGHT_FLOOR = 1e-10


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class StructureTensorField:
    """Symmetric 2x2 tensor per cell centre."""

    j11: np.ndarray
    j12: np.ndarray
    j22: np.ndarray
    sigma: float
    rho: float


@dataclass(frozen=True)
class DirectionModel:
    """Direction field ``v`` and contraction weights ``(b1, b2)`` on cell centres.

    ``M = diag(b1, b2) R_theta^T`` has rows ``b1 * v`` and ``b2 * v_perp`` with
    ``v_perp = (-v2, v1)``, so ``M grad u = (b1 d_v u, b2 d_vperp u)``.
    """

    v: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    @property
    def shape(self):
        return self.v.shape[1:]

    @property
    def v_perp(self) -> np.ndarray:
        return np.stack([-self.v[1], self.v[0]])

    @property
    def M(self) -> np.ndarray:
        """Weighting matrices as a ``(2, 2, m, n)`` array."""
        v1, v2 = self.v
        return np.array([[self.b1 * v1, self.b1 * v2], [-self.b2 * v2, self.b2 * v1]])

    def apply(self, g1: np.ndarray, g2: np.ndarray):
        """``M (g1, g2)`` pointwise; arrays broadcast against the cell grid."""
        v1, v2 = self.v
        return self.b1 * (g1 * v1 + g2 * v2), self.b2 * (g2 * v1 - g1 * v2)

    def apply_transpose(self, p1: np.ndarray, p2: np.ndarray):
        v1, v2 = self.v
        bp1, bp2 = self.b1 * p1, self.b2 * p2
        return bp1 * v1 - bp2 * v2, bp1 * v2 + bp2 * v1

    def with_b2(self, b2) -> "DirectionModel":
        return DirectionModel(self.v, self.b1, np.broadcast_to(np.asarray(b2, float), self.b1.shape).copy())


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled Gaussian truncated at ``ceil(3 sigma)`` and normalised to sum 1."""
    if sigma < 0:
        raise ValueError(f"sigma must be nonnegative, got {sigma}")
    if sigma == 0:
        return np.ones(1)
    radius = max(1, math.ceil(3 * sigma))
    x = np.arange(-radius, radius + 1, dtype=float)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_smooth(u, sigma: float):
    """Separable Gaussian convolution with half-sample symmetric boundary."""
    if isinstance(u, ScalarField):
        return ScalarField(u.grid, gaussian_smooth(u.values, sigma))
    k = gaussian_kernel(sigma)
    out = np.asarray(u, dtype=float)
    if k.size == 1:
        return out.copy()
    for axis in (-2, -1):
        out = correlate1d(out, k, axis=axis, mode="reflect")
    return out


def structure_tensor(u, sigma: float, rho: float, h: float = 1.0) -> StructureTensorField:
    """Smoothed outer product of the cell-centred gradient of the smoothed image."""
    if sigma < 0 or rho < 0:
        raise ValueError(f"sigma and rho must be nonnegative, got {sigma}, {rho}")
    if isinstance(u, ScalarField):
        h = u.grid.spacing
        u = u.values
    u = np.asarray(u, dtype=float)
    W = transfer_operator(1, *u.shape)
    g = W.to_centres(grad1(gaussian_smooth(u, sigma), h))
    g1, g2 = g[0], g[1]
    return StructureTensorField(
        gaussian_smooth(g1 * g1, rho),
        gaussian_smooth(g1 * g2, rho),
        gaussian_smooth(g2 * g2, rho),
        sigma,
        rho,
    )


def _sign_convention(e1, e2):
    # first nonzero component nonnegative
    flip = (e1 < 0) | ((e1 == 0) & (e2 < 0))
    return np.where(flip, -e1, e1), np.where(flip, -e2, e2)


def eig2x2(J: StructureTensorField):
    """Closed-form eigen-decomposition of symmetric 2x2 fields.

    Returns ``(lam1, lam2, e1, e2)`` with ``lam1 >= lam2`` and unit
    eigenvectors stacked as ``(2, m, n)``. Where ``lam1 == lam2`` the pair
    ``e1 = (1, 0)``, ``e2 = (0, 1)`` is returned.
    """
    a, b, c = (np.asarray(x, dtype=float) for x in (J.j11, J.j12, J.j22))
    half_trace = 0.5 * (a + c)
    disc = np.hypot(0.5 * (a - c), b)
    lam1 = half_trace + disc
    lam2 = half_trace - disc
    # eigenvector of lam1: (b, lam1 - a) or (lam1 - c, b); take the better conditioned one
    x1 = np.where(a >= c, lam1 - c, b)
    y1 = np.where(a >= c, b, lam1 - a)
    nrm = np.hypot(x1, y1)
    degenerate = nrm <= 1e-300
    safe = np.where(degenerate, 1.0, nrm)
    x1 = np.where(degenerate, 1.0, x1 / safe)
    y1 = np.where(degenerate, 0.0, y1 / safe)
    x1, y1 = _sign_convention(x1, y1)
    x2, y2 = _sign_convention(-y1, x1)
    return lam1, lam2, np.stack([x1, y1]), np.stack([x2, y2])


def coherence_weight(lam1, lam2, eps: float = DEFAULT_EPS) -> np.ndarray:
    """``(lam1 - lam2) / (lam1 + lam2 + eps)``."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    lam1 = np.asarray(lam1, dtype=float)
    lam2 = np.asarray(lam2, dtype=float)
    return (lam1 - lam2) / (lam1 + lam2 + eps)


def beta_from_anisotropy(w) -> np.ndarray:
    """Rescale ``1 - w`` affinely onto ``[0, 1]``; constant input gives ``beta = 1``."""
    aniso = 1.0 - np.asarray(w, dtype=float)
    lo, hi = aniso.min(), aniso.max()
    if hi - lo <= 0:
        return np.ones_like(aniso)
    return np.clip((aniso - lo) / (hi - lo), 0.0, 1.0)


def _grad_matrix(m: int, n: int) -> sp.csr_matrix:
    # forward differences with zero last row/column, flattened row-major
    def d(k):
        main = -np.ones(k)
        main[-1] = 0.0
        return sp.diags([main, np.ones(k - 1)], [0, 1], shape=(k, k))

    return sp.vstack([sp.kron(d(m), sp.identity(n)), sp.kron(sp.identity(m), d(n))]).tocsr()


def _normalise(v: np.ndarray) -> np.ndarray:
    nrm = np.hypot(v[0], v[1])
    zero = nrm <= 1e-12
    safe = np.where(zero, 1.0, nrm)
    return np.stack([np.where(zero, 0.0, v[0] / safe), np.where(zero, 1.0, v[1] / safe)])


def smooth_direction_field(v_raw, w, gamma: float, rtol: float = 1e-8, maxiter: int | None = None):
    """Regularise a direction field where the coherence weight is small.

    Solves ``(diag(w) + gamma L^T L) t = diag(w) v_raw`` for each component
    by conjugate gradients (``L`` the forward-difference gradient on the
    cell grid) and renormalises ``t`` to unit length; zero vectors become
    ``(0, 1)``. With ``w == 0`` everywhere the minimiser is any constant, and
    the normalised mean of ``v_raw`` is returned.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be nonnegative, got {gamma}")
    v_raw = np.asarray(v_raw, dtype=float)
    w = np.asarray(w, dtype=float)
    # round-off weights would make the system numerically singular
    w = np.where(w > WEIGHT_FLOOR, w, 0.0)
    m, n = w.shape
    if gamma == 0:
        return _normalise(v_raw)
    if not np.any(w > 0):
        mean = v_raw.reshape(2, -1).mean(axis=1)
        return _normalise(np.broadcast_to(mean[:, None, None], v_raw.shape).copy())
    L = _grad_matrix(m, n)
    A = (sp.diags(w.ravel()) + gamma * (L.T @ L)).tocsr()
    maxiter = maxiter or 10 * m * n
    out = np.empty_like(v_raw)
    for c in range(2):
        rhs = w.ravel() * v_raw[c].ravel()
        x, info = cg(A, rhs, x0=v_raw[c].ravel(), rtol=rtol, atol=0.0, maxiter=maxiter)
        res = np.linalg.norm(A @ x - rhs) / max(np.linalg.norm(rhs), 1e-300)
        if info != 0 and res > rtol:
            raise SolverError(f"direction smoothing did not converge: relative residual {res:.3e}")
        out[c] = x.reshape(m, n)
    return _normalise(out)


def assemble_M(v, b1, b2) -> DirectionModel:
    """Build a :class:`DirectionModel` after validating ``v`` and ``b``."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 3 or v.shape[0] != 2:
        raise ValueError(f"v must have shape (2, m, n), got {v.shape}")
    if np.max(np.abs(np.hypot(v[0], v[1]) - 1.0)) > UNIT_TOL:
        raise ValueError("direction field is not unit length")
    shape = v.shape[1:]
    b1 = np.broadcast_to(np.asarray(b1, dtype=float), shape).copy()
    b2 = np.broadcast_to(np.asarray(b2, dtype=float), shape).copy()
    for name, b in (("b1", b1), ("b2", b2)):
        if np.any(b < 0) or np.any(b > 1):
            raise ValueError(f"{name} must lie in [0, 1]")
    return DirectionModel(v, b1, b2)


def estimate_direction_model(
    u,
    sigma: float,
    rho: float,
    beta: float | str = "vary",
    gamma: float = 1.0,
    eps: float = DEFAULT_EPS,
    h: float = 1.0,
):
    """Direction field and weights ``b = (1, beta)`` from image content.

    ``beta`` is either a constant in ``[0, 1]`` or ``"vary"`` for the
    spatially varying rescaled anisotropy. Returns ``(model, coherence)``.
    """
    J = structure_tensor(u, sigma, rho, h)
    lam1, lam2, _, e2 = eig2x2(J)
    lam2 = np.maximum(lam2, 0.0)
    w = coherence_weight(lam1, lam2, eps)
    v = smooth_direction_field(e2, w, gamma)
    if isinstance(beta, str):
        if beta != "vary":
            raise ValueError(f"beta must be a number or 'vary', got {beta!r}")
        b2 = beta_from_anisotropy(w)
    else:
        b2 = float(beta)
    return assemble_M(v, 1.0, b2), w
