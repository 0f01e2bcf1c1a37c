"""Uniform grids, boundary enumeration and finite-difference operators.

Two spatial domains are supported:

* :class:`IntervalGrid` -- a closed interval whose boundary is its two end
  nodes, with outward normals -1 and +1.
* :class:`StripGrid` -- the periodic strip ``S^1 x [0, height]``.  The
  boundary consists of the rows ``y = 0`` and ``y = height`` (two circles),
  with outward normals ``(0, -1)`` and ``(0, +1)``.

Grid functions are flat arrays with one entry per node.  On the strip the
flat index of node ``(i, j)`` is ``i * n_y + j`` (``i`` along the periodic
direction).  All derivative operators are sparse matrices acting on such
flat arrays; they are second-order accurate everywhere, using one-sided
stencils at non-periodic boundary nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

__all__ = [
    "BoundaryNode",
    "IntervalGrid",
    "StripGrid",
    "TimeGrid",
    "SpaceTimeField",
    "build_interval_grid",
    "build_strip_grid",
    "gradient",
    "second_derivatives",
    "second_derivative_stencil",
    "first_derivative_matrix",
    "second_derivative_matrix",
]

SECOND_PAIRS = {1: ("xx",), 2: ("xx", "xy", "yy")}


@dataclass(frozen=True)
class BoundaryNode:
    index: int
    position: tuple[float, ...]
    normal: tuple[float, ...]


# ---------------------------------------------------------------------------
# 1-D stencil helpers (dense rows of a banded matrix)
# ---------------------------------------------------------------------------


def _d1_matrix(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    for i in range(n):
        if periodic:
            entries = [((i - 1) % n, -0.5 / h), ((i + 1) % n, 0.5 / h)]
        elif i == 0:
            entries = [(0, -1.5 / h), (1, 2.0 / h), (2, -0.5 / h)]
        elif i == n - 1:
            entries = [(n - 1, 1.5 / h), (n - 2, -2.0 / h), (n - 3, 0.5 / h)]
        else:
            entries = [(i - 1, -0.5 / h), (i + 1, 0.5 / h)]
        for c, v in entries:
            rows.append(i)
            cols.append(c)
            vals.append(v)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def _d2_matrix(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    h2 = h * h
    rows, cols, vals = [], [], []
    for i in range(n):
        if periodic:
            entries = [((i - 1) % n, 1.0 / h2), (i, -2.0 / h2), ((i + 1) % n, 1.0 / h2)]
        elif 0 < i < n - 1:
            entries = [(i - 1, 1.0 / h2), (i, -2.0 / h2), (i + 1, 1.0 / h2)]
        elif n == 3:
            # only three nodes: the one-sided 4-point formula does not fit
            entries = [(0, 1.0 / h2), (1, -2.0 / h2), (2, 1.0 / h2)]
        elif i == 0:
            entries = [(0, 2.0 / h2), (1, -5.0 / h2), (2, 4.0 / h2), (3, -1.0 / h2)]
        else:
            entries = [(n - 1, 2.0 / h2), (n - 2, -5.0 / h2), (n - 3, 4.0 / h2), (n - 4, -1.0 / h2)]
        for c, v in entries:
            rows.append(i)
            cols.append(c)
            vals.append(v)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IntervalGrid:
    """Uniform grid on ``[x_lo, x_hi]``."""

    x_lo: float
    x_hi: float
    n_nodes: int

    def __post_init__(self):
        if not (math.isfinite(self.x_lo) and math.isfinite(self.x_hi)):
            raise ValueError("interval endpoints must be finite")
        if not self.x_lo < self.x_hi:
            raise ValueError(f"need x_lo < x_hi, got ({self.x_lo}, {self.x_hi})")
        if int(self.n_nodes) != self.n_nodes or self.n_nodes < 3:
            raise ValueError(f"n_nodes must be an integer >= 3, got {self.n_nodes}")

    dim = 1
    kind = "interval"

    @property
    def h(self) -> float:
        return (self.x_hi - self.x_lo) / (self.n_nodes - 1)

    @property
    def spacings(self) -> tuple[float, ...]:
        return (self.h,)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_nodes,)

    @property
    def size(self) -> int:
        return self.n_nodes

    @cached_property
    def x(self) -> np.ndarray:
        x = self.x_lo + self.h * np.arange(self.n_nodes)
        x[-1] = self.x_hi
        x.flags.writeable = False
        return x

    @property
    def coords(self) -> dict[str, np.ndarray]:
        return {"x": self.x}

    @cached_property
    def boundary_index(self) -> np.ndarray:
        idx = np.array([0, self.n_nodes - 1])
        idx.flags.writeable = False
        return idx

    @cached_property
    def interior_index(self) -> np.ndarray:
        idx = np.arange(1, self.n_nodes - 1)
        idx.flags.writeable = False
        return idx

    @cached_property
    def normals(self) -> np.ndarray:
        """Outward normals at the boundary nodes, shape ``(n_boundary, dim)``."""
        nu = np.array([[-1.0], [1.0]])
        nu.flags.writeable = False
        return nu

    @cached_property
    def boundary_nodes(self) -> tuple[BoundaryNode, ...]:
        return (
            BoundaryNode(0, (self.x_lo,), (-1.0,)),
            BoundaryNode(self.n_nodes - 1, (self.x_hi,), (1.0,)),
        )

    @cached_property
    def is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.size, dtype=bool)
        mask[self.boundary_index] = True
        mask.flags.writeable = False
        return mask

    @cached_property
    def _ops(self) -> dict[str, sp.csr_matrix]:
        n, h = self.n_nodes, self.h
        return {"x": _d1_matrix(n, h, False), "xx": _d2_matrix(n, h, False)}

    def node_index(self, node) -> int:
        node = int(np.asarray(node).ravel()[0]) if np.ndim(node) else int(node)
        if not 0 <= node < self.size:
            raise IndexError(f"node {node} outside grid of {self.size} nodes")
        return node


@dataclass(frozen=True)
class StripGrid:
    """Uniform grid on the periodic strip ``[0, period) x [0, height]``."""

    period: float
    n_x: int
    n_y: int
    height: float = 1.0

    def __post_init__(self):
        if not self.period > 0 or not self.height > 0:
            raise ValueError("period and height must be positive")
        if int(self.n_x) != self.n_x or self.n_x < 3:
            raise ValueError(f"n_x must be an integer >= 3, got {self.n_x}")
        if int(self.n_y) != self.n_y or self.n_y < 3:
            raise ValueError(f"n_y must be an integer >= 3, got {self.n_y}")

    dim = 2
    kind = "strip"

    @property
    def h_x(self) -> float:
        return self.period / self.n_x

    @property
    def h_y(self) -> float:
        return self.height / (self.n_y - 1)

    @property
    def spacings(self) -> tuple[float, ...]:
        return (self.h_x, self.h_y)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_x, self.n_y)

    @property
    def size(self) -> int:
        return self.n_x * self.n_y

    @cached_property
    def x(self) -> np.ndarray:
        x = np.repeat(self.h_x * np.arange(self.n_x), self.n_y)
        x.flags.writeable = False
        return x

    @cached_property
    def y(self) -> np.ndarray:
        yy = self.h_y * np.arange(self.n_y)
        yy[-1] = self.height
        y = np.tile(yy, self.n_x)
        y.flags.writeable = False
        return y

    @property
    def coords(self) -> dict[str, np.ndarray]:
        return {"x": self.x, "y": self.y}

    @cached_property
    def boundary_index(self) -> np.ndarray:
        i = np.arange(self.n_x) * self.n_y
        idx = np.concatenate([i, i + self.n_y - 1])
        idx.flags.writeable = False
        return idx

    @cached_property
    def interior_index(self) -> np.ndarray:
        idx = np.flatnonzero(~self.is_boundary)
        idx.flags.writeable = False
        return idx

    @cached_property
    def is_boundary(self) -> np.ndarray:
        mask = np.zeros(self.shape, dtype=bool)
        mask[:, 0] = True
        mask[:, -1] = True
        mask = mask.ravel()
        mask.flags.writeable = False
        return mask

    @cached_property
    def normals(self) -> np.ndarray:
        nu = np.zeros((2 * self.n_x, 2))
        nu[: self.n_x, 1] = -1.0
        nu[self.n_x :, 1] = 1.0
        nu.flags.writeable = False
        return nu

    @cached_property
    def boundary_nodes(self) -> tuple[BoundaryNode, ...]:
        return tuple(
            BoundaryNode(int(k), (float(self.x[k]), float(self.y[k])), tuple(self.normals[m]))
            for m, k in enumerate(self.boundary_index)
        )

    @cached_property
    def _ops(self) -> dict[str, sp.csr_matrix]:
        ix = sp.identity(self.n_x, format="csr")
        iy = sp.identity(self.n_y, format="csr")
        dx = sp.kron(_d1_matrix(self.n_x, self.h_x, True), iy, format="csr")
        dy = sp.kron(ix, _d1_matrix(self.n_y, self.h_y, False), format="csr")
        dxx = sp.kron(_d2_matrix(self.n_x, self.h_x, True), iy, format="csr")
        dyy = sp.kron(ix, _d2_matrix(self.n_y, self.h_y, False), format="csr")
        return {"x": dx, "y": dy, "xx": dxx, "yy": dyy, "xy": (dx @ dy).tocsr()}

    def node_index(self, node) -> int:
        if np.ndim(node) == 0:
            k = int(node)
        else:
            i, j = node
            if not (0 <= j < self.n_y):
                raise IndexError(f"row {j} outside strip with {self.n_y} rows")
            k = (int(i) % self.n_x) * self.n_y + int(j)
        if not 0 <= k < self.size:
            raise IndexError(f"node {k} outside grid of {self.size} nodes")
        return k


Grid = IntervalGrid | StripGrid


def build_interval_grid(x_lo: float, x_hi: float, n_nodes: int) -> IntervalGrid:
    return IntervalGrid(float(x_lo), float(x_hi), int(n_nodes))


def build_strip_grid(period: float, n_x: int, n_y: int, height: float = 1.0) -> StripGrid:
    return StripGrid(float(period), int(n_x), int(n_y), float(height))


# ---------------------------------------------------------------------------
# Time ladder and space-time fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time ladder ``t0, t0 + dt, ..., t0 + tau`` with ``dt = tau / n_steps``."""

    t0: float
    tau: float
    n_steps: int

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"window length must be positive, got {self.tau}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be an integer >= 1, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.tau / self.n_steps

    @property
    def n_levels(self) -> int:
        return self.n_steps + 1

    @property
    def t_end(self) -> float:
        return self.t0 + self.tau

    @cached_property
    def times(self) -> np.ndarray:
        t = self.t0 + self.dt * np.arange(self.n_steps + 1)
        t[-1] = self.t0 + self.tau
        t.flags.writeable = False
        return t


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Values ``u(t_n, x_i)`` stored as an array of shape ``(n_levels, n_nodes)``.

    ``times`` normally comes from a :class:`TimeGrid`; concatenated fields
    from windowed runs may carry a non-uniform ladder.
    """

    grid: IntervalGrid | StripGrid
    times: np.ndarray
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape != (times.size, self.grid.size):
            raise ValueError(
                f"values must have shape ({times.size}, {self.grid.size}), got {values.shape}"
            )
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("time levels must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    @classmethod
    def on(cls, grid, time: TimeGrid, values) -> "SpaceTimeField":
        return cls(grid, time.times, values)

    @property
    def n_levels(self) -> int:
        return self.times.size

    def __sub__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        _check_same_ladder(self, other)
        return SpaceTimeField(self.grid, self.times, self.values - other.values)

    def __add__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        _check_same_ladder(self, other)
        return SpaceTimeField(self.grid, self.times, self.values + other.values)

    def scaled(self, c: float) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, self.times, c * self.values)

    def boundary_values(self) -> np.ndarray:
        return self.values[:, self.grid.boundary_index]


def _check_same_ladder(a: SpaceTimeField, b: SpaceTimeField) -> None:
    if a.grid != b.grid:
        raise ValueError("fields live on different spatial grids")
    if a.times.shape != b.times.shape or not np.allclose(a.times, b.times, rtol=0, atol=1e-12):
        raise ValueError("fields live on different time ladders")


# ---------------------------------------------------------------------------
# Derivative operators
# ---------------------------------------------------------------------------


def first_derivative_matrix(grid, axis: str) -> sp.csr_matrix:
    """Sparse first-derivative operator along ``axis`` ('x' or 'y')."""
    try:
        return grid._ops[axis]
    except KeyError:
        raise ValueError(f"no '{axis}' direction on a {grid.kind} grid") from None


def second_derivative_matrix(grid, pair: str) -> sp.csr_matrix:
    """Sparse second-derivative operator for ``pair`` in {'xx', 'xy', 'yy'}.

    Rows of boundary nodes use one-sided second-order formulas; the solver
    never uses those rows, but norms and compatibility residuals do.
    """
    pair = _normalize_pair(pair)
    try:
        return grid._ops[pair]
    except KeyError:
        raise ValueError(f"no '{pair}' derivative on a {grid.kind} grid") from None


def _normalize_pair(pair) -> str:
    if not isinstance(pair, str):
        pair = "".join(pair)
    if pair == "yx":
        pair = "xy"
    return pair


def _as_flat(values, grid) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape == grid.shape:
        values = values.reshape(-1)
    if values.shape[-1] != grid.size:
        raise ValueError(f"field has {values.shape[-1]} entries, grid has {grid.size} nodes")
    return values


def gradient(values, grid) -> np.ndarray:
    """Gradient of a grid function; returns an array of shape ``(dim, n_nodes)``.

    Also accepts a stack of fields of shape ``(..., n_nodes)`` and returns
    ``(dim, ..., n_nodes)``.
    """
    v = _as_flat(values, grid)
    axes = ("x",) if grid.dim == 1 else ("x", "y")
    return np.stack([_apply(grid._ops[a], v) for a in axes])


def second_derivatives(values, grid) -> dict[str, np.ndarray]:
    """All second derivatives keyed by 'xx' (and 'xy', 'yy' on the strip)."""
    v = _as_flat(values, grid)
    return {p: _apply(grid._ops[p], v) for p in SECOND_PAIRS[grid.dim]}


def _apply(op: sp.csr_matrix, v: np.ndarray) -> np.ndarray:
    if v.ndim == 1:
        return op @ v
    flat = v.reshape(-1, v.shape[-1])
    return (op @ flat.T).T.reshape(v.shape)


def second_derivative_stencil(grid, node, pair) -> dict[int, float]:
    """Weights of the interior second-derivative stencil at ``node``.

    Returns a mapping from flat node index to weight.  Boundary nodes carry
    the dynamic boundary condition and are rejected.
    """
    k = grid.node_index(node)
    if grid.is_boundary[k]:
        raise ValueError(f"node {node} lies on the boundary; second derivatives are interior only")
    row = second_derivative_matrix(grid, pair).getrow(k).tocoo()
    return {int(c): float(w) for c, w in zip(row.col, row.data) if w != 0.0}
