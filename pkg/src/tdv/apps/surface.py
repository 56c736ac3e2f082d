"""Surface interpolation from scattered heights by alternating u/v minimisation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from ..anisotropy import assemble_M
from ..diffops import div1, grad1, transfer_operator
from ..pdhg import DataTerm, prox_polar_ball, solve
from ..tdvop import build_joint

__all__ = ["SurfaceResult", "harmonic_fill", "normalised_gradient", "prox_v_step", "solve_v_step", "interpolate_surface"]

logger = logging.getLogger(__name__)

GRAD_EPS = 1e-8


@dataclass
class SurfaceResult:
    u: np.ndarray
    v: np.ndarray
    solves: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return sum(s.iterations for s in self.solves)


def normalised_gradient(u, eps: float = GRAD_EPS) -> np.ndarray:
    """``W grad u / (|W grad u| + eps)`` on the cell centres."""
    u = np.asarray(u, dtype=float)
    g = transfer_operator(1, *u.shape).to_centres(grad1(u))
    return g / (np.hypot(g[0], g[1]) + eps)


def prox_v_step(v_hat, p, zeta: float, tau: float) -> np.ndarray:
    """Pointwise ``argmin_v zeta (1 - v.p)^2 + |v - v_hat|^2 / (2 tau)``.

    Solves ``(I / tau + 2 zeta p p^T) v = v_hat / tau + 2 zeta p`` in closed
    form (Sherman-Morrison).
    """
    v_hat = np.asarray(v_hat, dtype=float)
    p = np.asarray(p, dtype=float)
    rhs = v_hat / tau + 2.0 * zeta * p
    pp = p[0] ** 2 + p[1] ** 2
    pr = p[0] * rhs[0] + p[1] * rhs[1]
    coef = 2.0 * zeta * tau / (1.0 + 2.0 * zeta * tau * pp)
    return tau * (rhs - coef * pr * p)


def solve_v_step(v0, p, mu: float, zeta: float, iters: int = 300) -> np.ndarray:
    """PDHG for ``mu TV(v) + zeta |1 - v.p|^2`` with a joint 4-component polar ball.

    ``G`` is only rank-one in each cell, so the fixed-step schedule is used.
    """
    v = np.array(v0, dtype=float)
    tau = sigma = 1.0 / math.sqrt(8.0)
    s = np.zeros((4,) + v.shape[1:])
    v_bar = v.copy()
    for _ in range(iters):
        s = prox_polar_ball(s + sigma * grad1(v_bar), mu)
        v_new = prox_v_step(v - tau * div1(s), p, zeta, tau)
        v_bar = 2.0 * v_new - v
        v = v_new
    return v


def harmonic_fill(values, mask) -> np.ndarray:
    """Membrane interpolation: the discrete Laplace equation off the samples, data on them."""
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    m, n = values.shape

    def d(k):
        return sp.diags([-np.ones(k - 1), np.ones(k - 1)], [0, 1], shape=(k - 1, k))

    D = sp.vstack([sp.kron(d(m), sp.identity(n)), sp.kron(sp.identity(m), d(n))]).tocsr()
    A = (D.T @ D).tocsr()
    free = ~mask.ravel()
    x = values.ravel() * mask.ravel()
    if free.any():
        rhs = -A[free][:, ~free] @ x[~free]
        x[free] = spsolve(A[free][:, free].tocsc(), rhs)
    return x.reshape(m, n)


def _unit(v):
    n = np.hypot(v[0], v[1])
    zero = n <= 1e-12
    n = np.where(zero, 1.0, n)
    return np.stack([np.where(zero, 0.0, v[0] / n), np.where(zero, 1.0, v[1] / n)])


def interpolate_surface(
    values,
    mask,
    orders=(0.0, 1.0, 1.0),
    eta: float | None = 100.0,
    mu: float = 1.0,
    zeta: float = 1.0,
    outer: int = 10,
    inner: int = 2000,
    v_iters: int = 300,
    seed: int = 0,
    step_rule: str = "bound",
    balance: float = 0.05,
    trace=None,
) -> SurfaceResult:
    """Alternate reduced-model u-steps (``b = (1, 0)``) and TV-regularised v-steps.

    ``eta=None`` imposes the samples exactly. ``u`` starts from the
    membrane interpolation of the samples; ``v`` starts from seeded random
    unit vectors.
    """
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    if values.shape != mask.shape:
        raise ValueError("values and mask shapes differ")
    if not mask.any():
        raise ValueError("sampling mask is empty")
    if outer < 1:
        raise ValueError("outer must be positive")
    dt = DataTerm.interpolation(values, mask) if eta is None else DataTerm.quadratic(values, eta, mask)
    rng = np.random.default_rng(seed)
    theta = rng.uniform(0.0, 2.0 * np.pi, (values.shape[0] - 1, values.shape[1] - 1))
    v = np.stack([np.cos(theta), np.sin(theta)])
    u = harmonic_fill(values, mask)
    w = None
    solves = []
    for t in range(outer):
        model = assemble_M(v, 1.0, 0.0)
        K = build_joint(orders, model, u.shape)
        r = solve(K, dt, max_iters=inner, z_init=[u], w_init=w, step_rule=step_rule, balance=balance, trace=trace)
        u, w = r.u, r.state.w
        solves.append(r)
        v = _unit(solve_v_step(v, normalised_gradient(u), mu, zeta, v_iters))
        logger.info("outer %d: %d u-iterations, energy %s", t, r.iterations, r.energy)
    return SurfaceResult(u, v, solves)

