"""Weighted higher-order operators and the TDV operator stacks.

One *level* maps a stack of order ``j-1`` to order ``j``: differentiate
every component with :func:`~tdv.diffops.grad1`, average onto cell centres
with ``W^j``, and apply the per-cell weighting matrix ``M_j`` to each
``(d1, d2)`` pair. Inner levels map back to the derivative grids with
``(W^j)^T``; the top level stays on the cell centres. A level without a
direction model is the plain isotropic gradient and skips the transfer
entirely.

Two operators are built from levels:

- :class:`OperatorStack`, the bidiagonal matrix of the full model with
  auxiliary primal variables ``z_1 .. z_{q-1}``;
- :class:`JointOperator`, the reduced model in which every active order
  ``q`` contributes one dual block ``M W^q grad^q u`` and ``u`` is the only
  primal variable.

Both expose the same interface (``apply``, ``apply_adjoint``, ``radii``,
``primal_shapes``, ``dual_shapes``, ``norm_bound``) so that one solver
serves both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .anisotropy import DirectionModel
from .diffops import MAX_ORDER, UnsupportedOrderError, grad1, div1, transfer_operator
from .fields import ScalarField, ShapeError, TensorFieldStack, norm_21

__all__ = [
    "Unconstrained",
    "UNCONSTRAINED",
    "LevelWeights",
    "WeightedLevel",
    "OperatorStack",
    "JointOperator",
    "weighted_grad1",
    "weighted_div1",
    "build_stack",
    "build_joint",
    "apply",
    "apply_adjoint",
    "tdv_energy_reduced",
    "operator_norm_bound",
    "composite_norm_bound",
    "power_iteration",
]


class Unconstrained:
    """Marker for an infinite dual radius (no constraint on that block)."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "UNCONSTRAINED"


UNCONSTRAINED = Unconstrained()


def _check_radius(r):
    if r is UNCONSTRAINED:
        return r
    r = float(r)
    if not r > 0 or not math.isfinite(r):
        raise ValueError(f"dual radius must be positive and finite (or UNCONSTRAINED), got {r}")
    return r


@dataclass(frozen=True)
class LevelWeights:
    """Per-level weighting: ``None`` is the identity, otherwise a :class:`DirectionModel`."""

    models: tuple

    def __post_init__(self):
        object.__setattr__(self, "models", tuple(self.models))
        if not 1 <= len(self.models) <= MAX_ORDER:
            raise UnsupportedOrderError(f"need 1..{MAX_ORDER} levels, got {len(self.models)}")
        for m in self.models:
            if m is not None and not isinstance(m, DirectionModel):
                raise TypeError(f"level weight must be None or DirectionModel, got {type(m).__name__}")

    @classmethod
    def identity(cls, q: int) -> "LevelWeights":
        return cls((None,) * q)

    @property
    def q(self) -> int:
        return len(self.models)


def _model_norm(model: DirectionModel) -> float:
    # singular values of M are b1 and b2
    return float(max(np.max(model.b1), np.max(model.b2)))


class WeightedLevel:
    """Level ``j`` operator ``x -> [(W^j)^T] M_j W^j grad x``.

    Parameters
    ----------
    level : int
        Order ``j`` of the output stack.
    rows, cols : int
        Pixel grid size.
    model : DirectionModel or None
        Weighting on the cell centres; ``None`` gives the plain gradient.
    top : bool
        Whether this is the outermost level (no transfer back).
    h : float
        Grid spacing.
    """

    def __init__(self, level: int, rows: int, cols: int, model: DirectionModel | None, top: bool, h: float = 1.0):
        if not 1 <= level <= MAX_ORDER:
            raise UnsupportedOrderError(f"level must be in 1..{MAX_ORDER}, got {level}")
        self.level = level
        self.rows = rows
        self.cols = cols
        self.model = model
        self.top = top
        self.h = float(h)
        if model is not None:
            self.W = transfer_operator(level, rows, cols)
            if model.shape != self.W.centre_shape:
                raise ShapeError(f"direction model of shape {model.shape} does not fit {rows}x{cols} pixels")
        else:
            self.W = None

    @property
    def in_shape(self):
        if self.level == 1:
            return (self.rows, self.cols)
        return (2 ** (self.level - 1), self.rows, self.cols)

    @property
    def out_shape(self):
        if self.model is not None and self.top:
            return (2**self.level, self.rows - 1, self.cols - 1)
        return (2**self.level, self.rows, self.cols)

    def _weight(self, y, transpose=False):
        m, n = y.shape[-2:]
        pairs = y.reshape(-1, 2, m, n)
        f = self.model.apply_transpose if transpose else self.model.apply
        r1, r2 = f(pairs[:, 0], pairs[:, 1])
        return np.stack([r1, r2], axis=1).reshape(y.shape)

    def apply(self, x: np.ndarray) -> np.ndarray:
        g = grad1(x, self.h)
        if self.model is None:
            return g
        y = self._weight(self.W.to_centres(g))
        return y if self.top else self.W.adjoint(y)

    def apply_adjoint(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        if p.shape != self.out_shape:
            raise ShapeError(f"level {self.level} adjoint expects shape {self.out_shape}, got {p.shape}")
        if self.model is not None:
            y = p if self.top else self.W.to_centres(p)
            p = self.W.adjoint(self._weight(y, transpose=True))
        return div1(p, self.h)

    def norm_bound(self) -> float:
        """Upper bound on the spectral norm of this level."""
        g = math.sqrt(8.0) / self.h
        if self.model is None:
            return g
        w = self.W.norm_bound()
        return g * _model_norm(self.model) * (w if self.top else w * w)


def weighted_grad1(u, dm: DirectionModel, W=None, h: float = 1.0):
    """First-order weighted gradient ``M W^1 grad u`` on the cell centres.

    ``W`` is accepted for symmetry with the transfer API; it must be the
    level-1 operator of ``u``'s grid if given.
    """
    if isinstance(u, ScalarField):
        h = u.grid.spacing
        u = u.values
    u = np.asarray(u, dtype=float)
    if W is not None and (W.level, W.rows, W.cols) != (1,) + u.shape:
        raise ShapeError("transfer operator does not match the input grid")
    return WeightedLevel(1, *u.shape, dm, top=True, h=h).apply(u)


def weighted_div1(p, dm: DirectionModel, W=None, h: float = 1.0):
    """Adjoint of :func:`weighted_grad1`: ``div1 W^T M^T p``."""
    if isinstance(p, TensorFieldStack):
        h = p.grid.spacing
        p = p.values
    p = np.asarray(p, dtype=float)
    rows, cols = p.shape[1] + 1, p.shape[2] + 1
    if W is not None and (W.level, W.rows, W.cols) != (1, rows, cols):
        raise ShapeError("transfer operator does not match the input grid")
    return WeightedLevel(1, rows, cols, dm, top=True, h=h).apply_adjoint(p)


class OperatorStack:
    """Bidiagonal operator of the full model.

    Row ``j`` (``j = 1..q``) maps ``z = (z_0, .., z_{q-1})`` to
    ``K_jj z_{j-1} - z_j``; the last row has no ``-z`` term. The dual radius
    of row ``j`` is ``alpha[q-j]``.
    """

    def __init__(self, levels: list[WeightedLevel], radii):
        self.levels = list(levels)
        self.q = len(self.levels)
        self.radii = [_check_radius(r) for r in radii]
        if len(self.radii) != self.q:
            raise ValueError(f"need {self.q} dual radii, got {len(self.radii)}")
        self.shape = (self.levels[0].rows, self.levels[0].cols)

    @property
    def primal_shapes(self):
        return [lv.in_shape for lv in self.levels]

    @property
    def dual_shapes(self):
        return [lv.out_shape for lv in self.levels]

    def _check(self, xs, shapes, what):
        if len(xs) != len(shapes):
            raise ValueError(f"{what} tuple has {len(xs)} entries, expected {len(shapes)}")
        for x, s in zip(xs, shapes):
            if np.shape(x) != tuple(s):
                raise ShapeError(f"{what} entry of shape {np.shape(x)}, expected {s}")

    def apply(self, z):
        self._check(z, self.primal_shapes, "primal")
        out = []
        for j, lv in enumerate(self.levels):
            r = lv.apply(z[j])
            if j + 1 < self.q:
                r = r - z[j + 1]
            out.append(r)
        return out

    def apply_adjoint(self, w):
        self._check(w, self.dual_shapes, "dual")
        out = []
        for j, lv in enumerate(self.levels):
            r = lv.apply_adjoint(w[j])
            if j > 0:
                r = r - w[j - 1]
            out.append(r)
        return out

    def norm_bound(self) -> float:
        """``max_j ||K_jj|| + 1`` (the ``-I`` couplings have norm one)."""
        b = max(lv.norm_bound() for lv in self.levels)
        return b + (1.0 if self.q > 1 else 0.0)

    def energy(self, z) -> float:
        """``sum_j alpha_{q-j} ||(K z)_j||_{2,1}``; unconstrained rows must vanish."""
        total = 0.0
        for r, k in zip(self.radii, self.apply(z)):
            if r is UNCONSTRAINED:
                continue
            total += r * norm_21(k)
        return total


class JointOperator:
    """Reduced joint operator: one dual block ``M W^q grad^q u`` per active order."""

    def __init__(self, chains: list[list[WeightedLevel]], radii, orders):
        self.chains = [list(c) for c in chains]
        self.radii = [_check_radius(r) for r in radii]
        self.orders = tuple(orders)
        if not self.chains or len(self.chains) != len(self.radii):
            raise ValueError("need one radius per active order")
        self.shape = (self.chains[0][0].rows, self.chains[0][0].cols)

    @property
    def primal_shapes(self):
        return [self.shape]

    @property
    def dual_shapes(self):
        return [c[-1].out_shape for c in self.chains]

    def apply(self, z):
        u = np.asarray(z[0], dtype=float)
        if len(z) != 1 or u.shape != self.shape:
            raise ShapeError(f"joint operator expects a single primal of shape {self.shape}")
        out = []
        for chain in self.chains:
            x = u
            for lv in chain:
                x = lv.apply(x)
            out.append(x)
        return out

    def apply_adjoint(self, w):
        if len(w) != len(self.chains):
            raise ValueError(f"dual tuple has {len(w)} entries, expected {len(self.chains)}")
        acc = np.zeros(self.shape)
        for chain, p in zip(self.chains, w):
            x = p
            for lv in reversed(chain):
                x = lv.apply_adjoint(x)
            acc += x
        return [acc]

    def chain_bound(self, k: int) -> float:
        return float(np.prod([lv.norm_bound() for lv in self.chains[k]]))

    def norm_bound(self) -> float:
        """``sqrt(sum_q ||K_q||^2)``, valid for the vertically stacked blocks."""
        return math.sqrt(sum(self.chain_bound(k) ** 2 for k in range(len(self.chains))))

    def energy(self, z) -> float:
        return sum(r * norm_21(k) for r, k in zip(self.radii, self.apply(z)))


def build_stack(q: int, weights: LevelWeights, alpha, shape, h: float = 1.0) -> OperatorStack:
    """Full-model stack for order ``q``.

    ``alpha = (alpha_0, .., alpha_{q-1})``; row ``j`` uses ``alpha[q-j]``.
    """
    if not 1 <= q <= MAX_ORDER:
        raise UnsupportedOrderError(f"order must be in 1..{MAX_ORDER}, got {q}")
    if weights.q != q:
        raise ValueError(f"level weights describe {weights.q} levels, expected {q}")
    alpha = list(alpha)
    if len(alpha) != q:
        raise ValueError(f"need {q} radii alpha_0..alpha_{q - 1}, got {len(alpha)}")
    rows, cols = shape
    levels = [WeightedLevel(j, rows, cols, weights.models[j - 1], top=(j == q), h=h) for j in range(1, q + 1)]
    return OperatorStack(levels, [alpha[q - j] for j in range(1, q + 1)])


def build_joint(alphas, model: DirectionModel | None, shape, h: float = 1.0) -> JointOperator:
    """Reduced joint operator for orders with ``alphas[q-1] > 0``.

    Inner derivatives are exact (identity weights); only the outer level of
    each order carries ``model``.
    """
    alphas = list(alphas)
    if len(alphas) > MAX_ORDER:
        raise UnsupportedOrderError(f"at most {MAX_ORDER} orders, got {len(alphas)}")
    if any(a < 0 for a in alphas):
        raise ValueError("order weights must be nonnegative")
    rows, cols = shape
    chains, radii, orders = [], [], []
    for q, a in enumerate(alphas, start=1):
        if a == 0:
            continue
        chains.append([WeightedLevel(j, rows, cols, model if j == q else None, top=(j == q), h=h) for j in range(1, q + 1)])
        radii.append(a)
        orders.append(q)
    if not chains:
        raise ValueError("at least one order weight must be positive")
    return JointOperator(chains, radii, orders)


def apply(K, z):
    return K.apply(z)


def apply_adjoint(K, w):
    return K.apply_adjoint(w)


def tdv_energy_reduced(u, q: int, dm: DirectionModel | None, alpha0: float, h: float = 1.0) -> float:
    """``alpha0 * ||M W^q grad^q u||_{2,1}`` with exact inner derivatives."""
    if isinstance(u, ScalarField):
        h = u.grid.spacing
        u = u.values
    u = np.asarray(u, dtype=float)
    alphas = [0.0] * q
    alphas[q - 1] = 1.0
    K = build_joint(alphas, dm, u.shape, h)
    return float(alpha0) * norm_21(K.apply([u])[0])


def operator_norm_bound(K) -> float:
    """Analytic upper bound on ``||K||`` for either operator type."""
    return K.norm_bound()


def composite_norm_bound(levels: list[WeightedLevel]) -> float:
    """Bound on ``||L_q ... L_1||`` as the product of level bounds.

    With identity weights this is ``(8 / h**2) ** (q / 2)``.
    """
    return float(np.prod([lv.norm_bound() for lv in levels]))


def power_iteration(K, iters: int = 100, seed: int = 0, tol: float = 1e-10) -> float:
    """Estimate ``||K||`` by power iteration on ``K^T K``.

    The Rayleigh quotient never exceeds the true norm, so the estimate is a
    lower bound.
    """
    rng = np.random.default_rng(seed)
    z = [rng.standard_normal(s) for s in K.primal_shapes]
    nrm = math.sqrt(sum(float(np.sum(x * x)) for x in z))
    z = [x / nrm for x in z]
    est = 0.0
    for _ in range(iters):
        y = K.apply_adjoint(K.apply(z))
        nrm = math.sqrt(sum(float(np.sum(x * x)) for x in y))
        if nrm == 0:
            return 0.0
        new = math.sqrt(nrm)
        z = [x / nrm for x in y]
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return est
