"""Grid geometry and field containers for the staggered discretisation.

Three families of grids are used throughout the package:

- ``Pixels``: the image lattice of size ``M x N``;
- ``CellCentres``: the ``(M-1) x (N-1)`` lattice of cell midpoints, where the
  direction fields and weighting matrices live;
- ``Derivative``: one ``M x N`` lattice per multi-index ``iota`` of order
  ``j``, shifted by half steps along each axis once for each partial
  derivative taken along that axis.

The numerical kernels in :mod:`tdv.diffops` and :mod:`tdv.tdvop` operate on
bare ``numpy`` arrays (a stack of order ``j`` is an array of shape
``(2**j, rows, cols)``). :class:`ScalarField` and :class:`TensorFieldStack`
attach grid metadata to those arrays at API boundaries.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GridError",
    "ShapeError",
    "GridKind",
    "GridId",
    "ScalarField",
    "TensorFieldStack",
    "multi_indices",
    "make_field",
    "inner_product",
    "pointwise_norm",
    "norm_21",
]


class GridError(ValueError):
    """Invalid grid description, or a field living on the wrong grid."""


class ShapeError(ValueError):
    """Operands with incompatible shapes."""


class GridKind(enum.Enum):
    PIXELS = "pixels"
    CELL_CENTRES = "cell_centres"
    DERIVATIVE = "derivative"


def multi_indices(order: int) -> list[tuple[int, ...]]:
    """Multi-indices of a given order in lexicographic order.

    ``iota[0]`` is the first partial derivative applied, so for order 2 the
    result is ``[(1, 1), (1, 2), (2, 1), (2, 2)]``. This is also the
    component order of every stack produced by the package.
    """
    if order < 0:
        raise ValueError(f"order must be nonnegative, got {order}")
    return list(itertools.product((1, 2), repeat=order))


@dataclass(frozen=True)
class GridId:
    """Identifies one staggered grid attached to an ``M x N`` pixel image."""

    kind: GridKind
    rows: int
    cols: int
    index: tuple[int, ...] = ()
    spacing: float = 1.0

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise GridError(f"grid dimensions must be positive, got {self.rows}x{self.cols}")
        if self.spacing <= 0:
            raise GridError(f"grid spacing must be positive, got {self.spacing}")
        if self.kind is GridKind.CELL_CENTRES and (self.rows < 2 or self.cols < 2):
            raise GridError("cell-centre grid needs at least 2x2 pixels")
        if self.kind is GridKind.DERIVATIVE:
            if len(self.index) == 0 or any(i not in (1, 2) for i in self.index):
                raise GridError(f"derivative grid needs a multi-index over {{1,2}}, got {self.index}")
        elif self.index:
            raise GridError(f"{self.kind.value} grid carries no multi-index")
        object.__setattr__(self, "index", tuple(int(i) for i in self.index))

    @classmethod
    def pixels(cls, rows: int, cols: int, spacing: float = 1.0) -> "GridId":
        return cls(GridKind.PIXELS, rows, cols, (), spacing)

    @classmethod
    def cell_centres(cls, rows: int, cols: int, spacing: float = 1.0) -> "GridId":
        """Cell-centre grid of an image with ``rows x cols`` pixels."""
        return cls(GridKind.CELL_CENTRES, rows, cols, (), spacing)

    @classmethod
    def derivative(cls, rows: int, cols: int, index, spacing: float = 1.0) -> "GridId":
        return cls(GridKind.DERIVATIVE, rows, cols, tuple(index), spacing)

    @property
    def order(self) -> int:
        return len(self.index)

    @property
    def shape(self) -> tuple[int, int]:
        if self.kind is GridKind.CELL_CENTRES:
            return (self.rows - 1, self.cols - 1)
        return (self.rows, self.cols)

    @property
    def size(self) -> int:
        m, n = self.shape
        return m * n

    @property
    def offset(self) -> tuple[float, float]:
        """Position of sample ``[0, 0]`` relative to pixel ``[0, 0]``, in units of ``h``."""
        if self.kind is GridKind.CELL_CENTRES:
            return (0.5, 0.5)
        return (self.index.count(1) / 2, self.index.count(2) / 2)

    def with_index(self, index) -> "GridId":
        return GridId.derivative(self.rows, self.cols, index, self.spacing)


@dataclass(frozen=True)
class ScalarField:
    """Real samples on one grid."""

    grid: GridId
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != self.grid.shape:
            raise ShapeError(f"values of shape {values.shape} do not match grid shape {self.grid.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class TensorFieldStack:
    """Discrete ``j``-tensor field: ``2**j`` components in lexicographic multi-index order.

    All components share one grid family. For derivative grids the stored
    ``grid`` is the base grid (its multi-index is ignored) and the grid of
    component ``k`` is ``grid_of(k)``.
    """

    order: int
    grid: GridId
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.order < 1:
            raise ValueError(f"stack order must be >= 1, got {self.order}")
        values = np.asarray(self.values, dtype=float)
        expected = (2**self.order, *self.grid.shape)
        if values.shape != expected:
            raise ShapeError(f"stack values of shape {values.shape}, expected {expected}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        values = values.copy()
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def indices(self) -> list[tuple[int, ...]]:
        return multi_indices(self.order)

    def grid_of(self, k: int) -> GridId:
        if self.grid.kind is GridKind.DERIVATIVE:
            return self.grid.with_index(self.indices[k])
        return self.grid

    @property
    def components(self) -> list[ScalarField]:
        return [ScalarField(self.grid_of(k), self.values[k]) for k in range(len(self.values))]

    def __len__(self):
        return len(self.values)


def make_field(grid: GridId, fill: float = 0.0) -> ScalarField:
    """Constant field on ``grid``."""
    return ScalarField(grid, np.full(grid.shape, float(fill)))


def _values(a):
    if isinstance(a, (ScalarField, TensorFieldStack)):
        return a.values
    return np.asarray(a, dtype=float)


def inner_product(a, b) -> float:
    """Euclidean inner product summed over every component and grid point.

    Accepts fields, stacks, bare arrays, or lists of arrays (primal/dual
    tuples); both operands must have matching structure.
    """
    if isinstance(a, (list, tuple)):
        if not isinstance(b, (list, tuple)) or len(a) != len(b):
            raise ShapeError("tuple operands of different length")
        return float(sum(inner_product(x, y) for x, y in zip(a, b)))
    x, y = _values(a), _values(b)
    if x.shape != y.shape:
        raise ShapeError(f"shape mismatch: {x.shape} vs {y.shape}")
    return float(np.dot(x.ravel(), y.ravel()))


def pointwise_norm(s) -> np.ndarray:
    """Euclidean norm across the leading (component) axis."""
    x = _values(s)
    return np.sqrt(np.sum(x * x, axis=0))


def norm_21(s) -> float:
    """Mixed norm: pointwise Euclidean norm across components, summed over the grid."""
    x = _values(s)
    if x.ndim < 2 or x.shape[0] == 0:
        raise ShapeError("norm_21 expects a nonempty stack of components")
    return float(np.sum(pointwise_norm(x)))
