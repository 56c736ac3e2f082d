"""Isotropic staggered-grid derivatives and transfer operators.

All derivatives are half-step central differences: a forward difference of
pixel values lands midway between the two pixels. Repeating the scheme gives
the higher-order derivatives; a derivative taken ``n`` times along an axis
is shifted by ``n/2`` grid steps along that axis.

``div1`` and ``div_q`` are defined as the exact adjoints of ``grad1`` and
``grad_q``, so ``<grad u, p> == <u, div p>`` holds to round-off. Note that
this makes ``div`` the *negative* of the usual divergence.

Transfer operators average samples from derivative grids onto cell centres
with partition-of-unity weights. They are stored as sparse matrices so the
adjoint is the literal transpose.
"""

from __future__ import annotations

import functools

import numpy as np
import scipy.sparse as sp

from .fields import GridError, GridId, GridKind, ScalarField, TensorFieldStack, multi_indices

__all__ = [
    "UnsupportedOrderError",
    "MAX_ORDER",
    "grad1",
    "div1",
    "grad_q",
    "div_q",
    "TransferOperator",
    "transfer_operator",
    "transfer_to_centres",
    "transfer_adjoint",
]

MAX_ORDER = 3


class UnsupportedOrderError(ValueError):
    pass


def _check_order(q):
    if not 1 <= q <= MAX_ORDER:
        raise UnsupportedOrderError(f"derivative order must be in 1..{MAX_ORDER}, got {q}")


def _grad1_array(u: np.ndarray, h: float) -> np.ndarray:
    # u: (..., M, N) -> (..., 2, M, N)
    out = np.zeros(u.shape[:-2] + (2,) + u.shape[-2:])
    out[..., 0, :-1, :] = (u[..., 1:, :] - u[..., :-1, :]) / h
    out[..., 1, :, :-1] = (u[..., :, 1:] - u[..., :, :-1]) / h
    return out


def _div1_array(p: np.ndarray, h: float) -> np.ndarray:
    # p: (..., 2, M, N) -> (..., M, N); transpose of _grad1_array
    p1 = p[..., 0, :, :]
    p2 = p[..., 1, :, :]
    out = np.zeros(p1.shape)
    out[..., :-1, :] -= p1[..., :-1, :]
    out[..., 1:, :] += p1[..., :-1, :]
    out[..., :, :-1] -= p2[..., :, :-1]
    out[..., :, 1:] += p2[..., :, :-1]
    return out / h


def grad1(u, h: float = 1.0):
    """First-order discrete gradient ``(d1 u, d2 u)``.

    ``d1 u[k, l] = (u[k+1, l] - u[k, l]) / h`` for ``k < M-1`` and zero on the
    last row; likewise for ``d2`` along columns. A ``(C, M, N)`` stack is
    differentiated componentwise into ``(2C, M, N)`` with the new index
    varying fastest.
    """
    if isinstance(u, ScalarField):
        if u.grid.kind is not GridKind.PIXELS:
            raise GridError(f"grad1 expects a pixel-grid field, got {u.grid.kind.value}")
        g = u.grid
        return TensorFieldStack(1, GridId.derivative(g.rows, g.cols, (1,), g.spacing), grad1(u.values, g.spacing))
    u = np.asarray(u, dtype=float)
    g = _grad1_array(u, h)
    if u.ndim == 2:
        return g
    return g.reshape((-1,) + u.shape[-2:])


def div1(p, h: float = 1.0):
    """Adjoint of :func:`grad1`.

    ``p`` of shape ``(2C, M, N)`` is contracted pairwise back to ``(C, M, N)``
    (``(M, N)`` when ``C == 1``).
    """
    if isinstance(p, TensorFieldStack):
        if p.order != 1:
            raise GridError(f"div1 expects an order-1 stack, got order {p.order}")
        if p.grid.kind is not GridKind.DERIVATIVE:
            raise GridError("div1 expects components on derivative grids")
        g = p.grid
        return ScalarField(GridId.pixels(g.rows, g.cols, g.spacing), div1(p.values, g.spacing))
    p = np.asarray(p, dtype=float)
    if p.ndim != 3 or p.shape[0] % 2:
        raise GridError(f"div1 expects an even number of components, got shape {p.shape}")
    out = _div1_array(p.reshape((-1, 2) + p.shape[-2:]), h)
    return out[0] if out.shape[0] == 1 else out


def grad_q(u, q: int, h: float = 1.0):
    """Order-``q`` isotropic derivative: ``2**q`` components in lexicographic order."""
    _check_order(q)
    if isinstance(u, ScalarField):
        if u.grid.kind is not GridKind.PIXELS:
            raise GridError(f"grad_q expects a pixel-grid field, got {u.grid.kind.value}")
        g = u.grid
        base = GridId.derivative(g.rows, g.cols, (1,) * q, g.spacing)
        return TensorFieldStack(q, base, grad_q(u.values, q, g.spacing))
    out = np.asarray(u, dtype=float)
    for _ in range(q):
        out = grad1(out, h)
    return out


def div_q(p, h: float = 1.0):
    """Adjoint of :func:`grad_q`; the order is read from the component count."""
    if isinstance(p, TensorFieldStack):
        g = p.grid
        return ScalarField(GridId.pixels(g.rows, g.cols, g.spacing), div_q(p.values, g.spacing))
    p = np.asarray(p, dtype=float)
    q = int(round(np.log2(p.shape[0]))) if p.ndim == 3 else 0
    if p.ndim != 3 or 2**q != p.shape[0]:
        raise GridError(f"div_q expects 2**q components, got shape {p.shape}")
    _check_order(q)
    out = p
    for _ in range(q):
        out = div1(out, h)
    return out


def _axis_stencil(n_derivs: int, length: int):
    """Source indices and weights along one axis for a transfer to cell centres.

    A sample with ``n`` derivatives along the axis sits at ``i + n/2``; the
    cell centre ``i + 1/2`` is either on a sample (odd ``n``) or midway
    between two (even ``n``). Out-of-range indices are clamped, which
    replicates the boundary sample.
    """
    i = np.arange(length - 1)
    if n_derivs % 2:
        return [np.clip(i - (n_derivs - 1) // 2, 0, length - 1)]
    lo = i - n_derivs // 2
    return [np.clip(lo, 0, length - 1), np.clip(lo + 1, 0, length - 1)]


@functools.lru_cache(maxsize=64)
def _transfer_matrix(index: tuple[int, ...], rows: int, cols: int) -> sp.csr_matrix:
    ax1 = _axis_stencil(index.count(1), rows)
    ax2 = _axis_stencil(index.count(2), cols)
    if len(ax1) == 2 and len(ax2) == 2:
        # two-sample mean along the diagonal through the centre
        pairs = [(ax1[1], ax2[0]), (ax1[0], ax2[1])]
    else:
        pairs = [(a, b) for a in ax1 for b in ax2]
    weight = 1.0 / len(pairs)
    m, n = rows - 1, cols - 1
    target = np.arange(m * n).reshape(m, n)
    rows_idx, cols_idx = [], []
    for a, b in pairs:
        src = a[:, None] * cols + b[None, :]
        rows_idx.append(target.ravel())
        cols_idx.append(src.ravel())
    r = np.concatenate(rows_idx)
    c = np.concatenate(cols_idx)
    mat = sp.csr_matrix((np.full(r.size, weight), (r, c)), shape=(m * n, rows * cols))
    mat.sum_duplicates()
    return mat


class TransferOperator:
    """Transfer ``W^j`` from the order-``j`` derivative grids to cell centres.

    Component ``k`` of a stack (multi-index ``multi_indices(j)[k]``) is mapped
    by its own averaging matrix. ``adjoint`` applies the transposes.
    """

    def __init__(self, level: int, rows: int, cols: int):
        if level < 1:
            raise ValueError(f"transfer level must be >= 1, got {level}")
        if rows < 2 or cols < 2:
            raise GridError("transfer operators need at least 2x2 pixels")
        self.level = level
        self.rows = rows
        self.cols = cols
        self.indices = multi_indices(level)

    @property
    def centre_shape(self):
        return (self.rows - 1, self.cols - 1)

    def matrix(self, k: int) -> sp.csr_matrix:
        return _transfer_matrix(self.indices[k], self.rows, self.cols)

    def matrix_for(self, index) -> sp.csr_matrix:
        index = tuple(index)
        if len(index) != self.level:
            raise GridError(f"multi-index {index} does not belong to level {self.level}")
        return _transfer_matrix(index, self.rows, self.cols)

    def to_centres(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (len(self.indices), self.rows, self.cols):
            raise GridError(f"expected stack of shape {(len(self.indices), self.rows, self.cols)}, got {x.shape}")
        out = np.empty((len(self.indices),) + self.centre_shape)
        for k in range(len(self.indices)):
            out[k] = (self.matrix(k) @ x[k].ravel()).reshape(self.centre_shape)
        return out

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape != (len(self.indices),) + self.centre_shape:
            raise GridError(f"expected stack of shape {(len(self.indices),) + self.centre_shape}, got {y.shape}")
        out = np.empty((len(self.indices), self.rows, self.cols))
        for k in range(len(self.indices)):
            out[k] = (self.matrix(k).T @ y[k].ravel()).reshape(self.rows, self.cols)
        return out

    def norm_bound(self) -> float:
        """Upper bound on the spectral norm: ``sqrt(||W||_1 ||W||_inf)`` over components."""
        best = 0.0
        for k in range(len(self.indices)):
            a = abs(self.matrix(k))
            row = a.sum(axis=1).max()
            col = a.sum(axis=0).max()
            best = max(best, float(np.sqrt(row * col)))
        return best


@functools.lru_cache(maxsize=32)
def transfer_operator(level: int, rows: int, cols: int) -> TransferOperator:
    return TransferOperator(level, rows, cols)


def transfer_to_centres(W: TransferOperator, x, index=None):
    """Average one derivative-grid field onto the cell centres.

    ``x`` is a :class:`ScalarField` on ``X^j_iota`` (its multi-index selects
    the stencil) or a bare ``(M, N)`` array together with ``index``
    (default: the first multi-index of the level).
    """
    if isinstance(x, ScalarField):
        g = x.grid
        if g.kind is not GridKind.DERIVATIVE or g.order != W.level or g.shape != (W.rows, W.cols):
            raise GridError(f"field on {g} does not match transfer level {W.level} for {W.rows}x{W.cols}")
        y = (W.matrix_for(g.index) @ x.values.ravel()).reshape(W.centre_shape)
        return ScalarField(GridId.cell_centres(g.rows, g.cols, g.spacing), y)
    x = np.asarray(x, dtype=float)
    if x.shape != (W.rows, W.cols):
        raise GridError(f"expected ({W.rows}, {W.cols}) array, got {x.shape}")
    mat = W.matrix_for(index if index is not None else W.indices[0])
    return (mat @ x.ravel()).reshape(W.centre_shape)


def transfer_adjoint(W: TransferOperator, y, index=None):
    """Transpose of :func:`transfer_to_centres` for the component ``index``."""
    index = tuple(index) if index is not None else W.indices[0]
    mat = W.matrix_for(index)
    if isinstance(y, ScalarField):
        g = y.grid
        if g.kind is not GridKind.CELL_CENTRES or g.shape != W.centre_shape:
            raise GridError(f"expected a cell-centre field of shape {W.centre_shape}")
        x = (mat.T @ y.values.ravel()).reshape(W.rows, W.cols)
        return ScalarField(GridId.derivative(g.rows, g.cols, index, g.spacing), x)
    y = np.asarray(y, dtype=float)
    if y.shape != W.centre_shape:
        raise GridError(f"expected {W.centre_shape} array, got {y.shape}")
    return (mat.T @ y.ravel()).reshape(W.rows, W.cols)
