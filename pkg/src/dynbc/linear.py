"""Linear parabolic problems with a dynamic boundary condition.

The problem on ``(t0, t0 + tau) x Omega`` is::

    D_t u - A(t) u = f      in the interior,
    D_t u + B(t) u = h      on the boundary,
    u(t0) = u0,

with ``A u = a_xx u_xx + 2 a_xy u_xy + a_yy u_yy + a_x u_x + a_y u_y + a_0 u``
and ``B u = b_x u_x + b_y u_y + b_0 u``.  On the interval only the ``x``
terms exist and ``b_x`` plays the role of the normal coefficient.

Both equations are folded into one operator ``L`` acting on all nodes:
interior rows carry ``A`` and boundary rows carry ``-B``, so every step
solves ``(I - c dt L) u^{n+1} = rhs`` with a sparse direct factorization.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from typing import Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import expr as ex
from .geometry import (
    IntervalGrid,
    SpaceTimeField,
    StripGrid,
    TimeGrid,
    first_derivative_matrix,
    second_derivative_matrix,
)
from .holder import NormReport, norm_bundle, space_norm, time_holder_norm

__all__ = [
    "SCHEMES",
    "LinearCoefficients",
    "LinearProblem",
    "DiscreteSolution",
    "ScalingResult",
    "LinearSolveError",
    "PreconditionError",
    "normal_coefficient",
    "check_ellipticity",
    "check_transversality",
    "check_compatibility_linear",
    "solve_linear",
    "norm_report",
    "measure_small_time_scaling",
    "scaling_exponent",
    "loglog_slope",
    "eval_coefficient",
]

SCHEMES = ("implicit-euler", "crank-nicolson")
Coefficient = Union[float, str, "ex.Expr", np.ndarray]

INTERIOR_KEYS = ("a_xx", "a_xy", "a_yy", "a_x", "a_y", "a_0")
BOUNDARY_KEYS = ("b_x", "b_y", "b_0")
LINEAR_VARIABLES = frozenset({"t", "x", "y"})


class PreconditionError(ValueError):
    """Structural hypothesis (ellipticity, transversality, data) violated."""


class LinearSolveError(RuntimeError):
    """The step matrix could not be factorized."""


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------


def _coerce(value, name: str, allowed=LINEAR_VARIABLES):
    if isinstance(value, np.ndarray):
        arr = np.asarray(value, dtype=float)
        if not np.all(np.isfinite(arr)):
            raise PreconditionError(f"coefficient {name} has non-finite entries")
        arr.flags.writeable = False
        return arr
    try:
        e = ex.as_expr(value)
    except ex.ExprError as exc:
        raise PreconditionError(f"coefficient {name}: {exc}") from exc
    bad = ex.variables(e) - allowed
    if bad:
        raise PreconditionError(
            f"coefficient {name} uses {sorted(bad)}; allowed variables are {sorted(allowed)}"
        )
    return e


@dataclass(frozen=True, eq=False)
class LinearCoefficients:
    """Coefficients of the interior operator ``A`` and the boundary operator ``B``.

    Each entry is a number, an expression string or tree in ``t, x, y``, or
    a tabulated array of shape ``(n_nodes,)`` (time independent) or
    ``(n_levels, n_nodes)``.  ``a_xy`` is the off-diagonal entry of the
    symmetric top-order matrix, so the operator term is ``2 a_xy u_xy``.
    Boundary coefficients are read only at boundary nodes.
    """

    a_xx: Coefficient = 1.0
    a_xy: Coefficient = 0.0
    a_yy: Coefficient = 1.0
    a_x: Coefficient = 0.0
    a_y: Coefficient = 0.0
    a_0: Coefficient = 0.0
    b_x: Coefficient = 0.0
    b_y: Coefficient = 0.0
    b_0: Coefficient = 0.0

    def __post_init__(self):
        for f in fields(self):
            object.__setattr__(self, f.name, _coerce(getattr(self, f.name), f.name))

    def is_tabulated(self) -> bool:
        return any(isinstance(getattr(self, k), np.ndarray) for k in INTERIOR_KEYS + BOUNDARY_KEYS)


def normal_coefficient(grid, scale: float = 1.0) -> str:
    """Expression equal to ``scale`` times the outward normal component at the boundary.

    On the interval this is ``x`` mapped affinely onto ``[-1, 1]``; on the
    strip it is ``y`` mapped onto ``[-1, 1]`` (the ``y`` normal component).
    """
    if isinstance(grid, IntervalGrid):
        a, b = grid.x_lo, grid.x_hi
        if (a, b) == (0.0, 1.0):
            core = "(2*x - 1)"
        else:
            core = f"(2*x - ({ex.to_string(ex.Const(a + b))}))/{ex.to_string(ex.Const(b - a))}"
    else:
        core = "(2*y - 1)" if grid.height == 1.0 else f"(2*y/{grid.height!r} - 1)"
    return core if scale == 1.0 else f"{ex.to_string(ex.Const(float(scale)))}*{core}"


def _node_context(grid, index=None) -> dict[str, np.ndarray]:
    if index is None:
        return dict(grid.coords)
    return {k: v[index] for k, v in grid.coords.items()}


def eval_coefficient(coef, grid, level: int, t: float, index=None, extra=None) -> np.ndarray:
    """Values of ``coef`` at time level ``level`` (time ``t``) on the selected nodes.

    ``extra`` supplies additional bindings (``u``, ``p1``, ``p2``) already
    restricted to ``index``.
    """
    n = grid.size if index is None else len(index)
    if isinstance(coef, np.ndarray):
        arr = coef[level] if coef.ndim == 2 else coef
        if arr.shape[-1] != grid.size:
            raise PreconditionError(f"tabulated coefficient has {arr.shape[-1]} nodes, grid has {grid.size}")
        return arr if index is None else arr[index]
    ctx = _node_context(grid, index)
    ctx["t"] = t
    if extra:
        ctx.update(extra)
    try:
        val = ex.evaluate(coef, ctx)
    except ex.ExprEvalError as exc:
        raise PreconditionError(f"coefficient evaluation failed at t={t!r}: {exc}") from exc
    return np.broadcast_to(val, (n,))


# ---------------------------------------------------------------------------
# Problem and solution containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LinearProblem:
    """Linear problem with data ``f``, ``h`` and initial field ``u0``."""

    grid: Union[IntervalGrid, StripGrid]
    time: TimeGrid
    coeffs: LinearCoefficients
    f: Coefficient = 0.0
    h: Coefficient = 0.0
    u0: Coefficient = 0.0

    def __post_init__(self):
        object.__setattr__(self, "f", _coerce(self.f, "f"))
        object.__setattr__(self, "h", _coerce(self.h, "h"))
        u0 = self.u0
        if not isinstance(u0, np.ndarray):
            u0 = eval_coefficient(_coerce(u0, "u0"), self.grid, 0, self.time.t0)
        u0 = np.array(u0, dtype=float).reshape(-1)
        if u0.size != self.grid.size or not np.all(np.isfinite(u0)):
            raise PreconditionError("u0 must be finite and defined on every node")
        u0.flags.writeable = False
        object.__setattr__(self, "u0", u0)
        for name in INTERIOR_KEYS + BOUNDARY_KEYS + ("f", "h"):
            val = getattr(self.coeffs, name, None) if name not in ("f", "h") else getattr(self, name)
            if isinstance(val, np.ndarray) and val.ndim == 2 and val.shape[0] != self.time.n_levels:
                raise PreconditionError(
                    f"tabulated {name} has {val.shape[0]} levels, time grid has {self.time.n_levels}"
                )

    def with_time(self, time: TimeGrid) -> "LinearProblem":
        return replace(self, time=time)


@dataclass(frozen=True, eq=False)
class DiscreteSolution:
    """Discrete solution and its boundary time-derivative trace.

    Attributes
    ----------
    field : SpaceTimeField
        ``u`` on every node and time level; level 0 is ``u0`` exactly.
    boundary_dt : ndarray, shape (n_levels - 1, n_boundary)
        ``(u^{n+1} - u^n) / dt`` at the boundary nodes.
    scheme : str
    seams : tuple of float
        Window boundaries of a windowed run (empty for a single solve).
    """

    field: SpaceTimeField
    boundary_dt: np.ndarray
    scheme: str = "implicit-euler"
    seams: tuple = ()

    @property
    def grid(self):
        return self.field.grid

    @property
    def times(self) -> np.ndarray:
        return self.field.times

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @property
    def final(self) -> np.ndarray:
        return self.field.values[-1]

    def to_csv(self, path) -> None:
        """Write long-format rows ``t, x[, y], u`` with round-trip float formatting."""
        grid = self.grid
        coords = [grid.x] if grid.dim == 1 else [grid.x, grid.y]
        header = ["t", "x"] if grid.dim == 1 else ["t", "x", "y"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header + ["u"])
            for t, row in zip(self.times, self.values):
                for i in range(grid.size):
                    w.writerow([repr(float(t))] + [repr(float(c[i])) for c in coords] + [repr(float(row[i]))])


# ---------------------------------------------------------------------------
# Structural checks
# ---------------------------------------------------------------------------


def _levels(time: TimeGrid):
    return list(enumerate(time.times.tolist()))


def _min_eig(axx, axy, ayy):
    half_tr = 0.5 * (axx + ayy)
    rad = np.sqrt((0.5 * (axx - ayy)) ** 2 + axy**2)
    return half_tr - rad


def check_ellipticity(coeffs: LinearCoefficients, grid, time_grid: TimeGrid) -> float:
    """Smallest eigenvalue of the top-order coefficient matrix over all nodes and levels.

    Returned as is, even when not positive.
    """
    nu = math.inf
    for n, t in _levels(time_grid):
        axx = eval_coefficient(coeffs.a_xx, grid, n, t)
        if grid.dim == 1:
            lam = axx
        else:
            axy = eval_coefficient(coeffs.a_xy, grid, n, t)
            ayy = eval_coefficient(coeffs.a_yy, grid, n, t)
            lam = _min_eig(axx, axy, ayy)
        nu = min(nu, float(np.min(lam)))
    return nu


def _normal_component(coeffs, grid, n, t):
    idx = grid.boundary_index
    nu = grid.normals
    total = eval_coefficient(coeffs.b_x, grid, n, t, idx) * nu[:, 0]
    if grid.dim == 2:
        total = total + eval_coefficient(coeffs.b_y, grid, n, t, idx) * nu[:, 1]
    return total


def check_transversality(coeffs: LinearCoefficients, grid, time_grid: TimeGrid) -> float:
    """Minimum of ``sum_j b_j nu_j`` over boundary nodes and time levels."""
    return min(float(np.min(_normal_component(coeffs, grid, n, t))) for n, t in _levels(time_grid))


def _apply_A(coeffs, grid, n, t, u, index):
    """``A(t) u`` restricted to ``index`` (stencils one-sided at the boundary)."""
    out = eval_coefficient(coeffs.a_xx, grid, n, t, index) * (second_derivative_matrix(grid, "xx") @ u)[index]
    out = out + eval_coefficient(coeffs.a_x, grid, n, t, index) * (first_derivative_matrix(grid, "x") @ u)[index]
    if grid.dim == 2:
        out = out + 2.0 * eval_coefficient(coeffs.a_xy, grid, n, t, index) * (second_derivative_matrix(grid, "xy") @ u)[index]
        out = out + eval_coefficient(coeffs.a_yy, grid, n, t, index) * (second_derivative_matrix(grid, "yy") @ u)[index]
        out = out + eval_coefficient(coeffs.a_y, grid, n, t, index) * (first_derivative_matrix(grid, "y") @ u)[index]
    return out + eval_coefficient(coeffs.a_0, grid, n, t, index) * u[index]


def _apply_B(coeffs, grid, n, t, u, index):
    out = eval_coefficient(coeffs.b_x, grid, n, t, index) * (first_derivative_matrix(grid, "x") @ u)[index]
    if grid.dim == 2:
        out = out + eval_coefficient(coeffs.b_y, grid, n, t, index) * (first_derivative_matrix(grid, "y") @ u)[index]
    return out + eval_coefficient(coeffs.b_0, grid, n, t, index) * u[index]


def compatibility_residual(problem: LinearProblem, level: int = 0, u=None) -> np.ndarray:
    """``A u + f + B u - h`` at the boundary nodes at the given level."""
    grid = problem.grid
    idx = grid.boundary_index
    t = float(problem.time.times[level])
    u = problem.u0 if u is None else np.asarray(u, dtype=float)
    c = problem.coeffs
    f = eval_coefficient(problem.f, grid, level, t, idx)
    h = eval_coefficient(problem.h, grid, level, t, idx)
    return _apply_A(c, grid, level, t, u, idx) + f + _apply_B(c, grid, level, t, u, idx) - h


def check_compatibility_linear(problem: LinearProblem):
    """Compatibility residual at ``t0``.

    Returns
    -------
    residual : ndarray, shape (n_boundary,)
        ``A(t0) u0 + f(t0) + B(t0) u0 - h(t0)`` at each boundary node.
    max_abs : float
    """
    r = compatibility_residual(problem, 0)
    return r, float(np.max(np.abs(r)))


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------


class _Pattern:
    """Union sparsity pattern of all operator terms plus the identity (CSC)."""

    def __init__(self, grid):
        n = grid.size
        names = ["xx", "x", "0"] if grid.dim == 1 else ["xx", "xy", "yy", "x", "y", "0"]
        mats = {
            "xx": second_derivative_matrix(grid, "xx"),
            "x": first_derivative_matrix(grid, "x"),
            "0": sp.identity(n, format="csr"),
        }
        if grid.dim == 2:
            mats.update(
                xy=second_derivative_matrix(grid, "xy"),
                yy=second_derivative_matrix(grid, "yy"),
                y=first_derivative_matrix(grid, "y"),
            )
        self.names = names
        rows, cols, vals, term = [], [], [], []
        for k, name in enumerate(names):
            coo = mats[name].tocoo()
            rows.append(coo.row)
            cols.append(coo.col)
            vals.append(coo.data)
            term.append(np.full(coo.nnz, k))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        keys = cols.astype(np.int64) * n + rows
        ukeys = np.unique(keys)
        self.n = n
        self.rows = rows
        self.vals = np.concatenate(vals)
        self.term = np.concatenate(term)
        self.slots = np.searchsorted(ukeys, keys)
        self.nnz = ukeys.size
        self.indices = (ukeys % n).astype(np.int32)
        self.indptr = np.searchsorted(ukeys // n, np.arange(n + 1)).astype(np.int32)
        self.diag = np.searchsorted(ukeys, np.arange(n, dtype=np.int64) * n + np.arange(n))

    def operator_data(self, coef: np.ndarray) -> np.ndarray:
        """CSC data of ``L``; ``coef`` has one row per term, one column per node."""
        w = coef[self.term, self.rows] * self.vals
        return np.bincount(self.slots, weights=w, minlength=self.nnz)

    def matrix(self, data: np.ndarray) -> sp.csc_matrix:
        return sp.csc_matrix((data, self.indices, self.indptr), shape=(self.n, self.n))


@lru_cache(maxsize=32)
def _pattern(grid) -> _Pattern:
    return _Pattern(grid)


def _level_operator(problem: LinearProblem, n: int, t: float):
    """Term coefficients (rows follow the pattern's term order) and forcing at level n."""
    grid = problem.grid
    c = problem.coeffs
    bidx = grid.boundary_index
    interior = ~grid.is_boundary

    def interior_only(coef, scale=1.0):
        v = eval_coefficient(coef, grid, n, t)
        out = np.where(interior, v, 0.0)
        return out if scale == 1.0 else scale * out

    def merged(a_coef, b_coef):
        out = np.array(eval_coefficient(a_coef, grid, n, t), dtype=float)
        out[bidx] = -eval_coefficient(b_coef, grid, n, t, bidx)
        return out

    if grid.dim == 1:
        rows = [interior_only(c.a_xx), merged(c.a_x, c.b_x), merged(c.a_0, c.b_0)]
    else:
        rows = [
            interior_only(c.a_xx),
            interior_only(c.a_xy, 2.0),
            interior_only(c.a_yy),
            merged(c.a_x, c.b_x),
            merged(c.a_y, c.b_y),
            merged(c.a_0, c.b_0),
        ]
    g = np.array(eval_coefficient(problem.f, grid, n, t), dtype=float)
    g[bidx] = eval_coefficient(problem.h, grid, n, t, bidx)
    return np.vstack(rows), g


def _check_level_structure(problem, n, t):
    grid, c = problem.grid, problem.coeffs
    axx = eval_coefficient(c.a_xx, grid, n, t)
    if grid.dim == 1:
        lam = axx
    else:
        lam = _min_eig(axx, eval_coefficient(c.a_xy, grid, n, t), eval_coefficient(c.a_yy, grid, n, t))
    nu = float(np.min(lam))
    if not nu > 0:
        raise PreconditionError(f"ellipticity fails at time level {n} (t={t!r}): min eigenvalue {nu!r}")
    tr = float(np.min(_normal_component(c, grid, n, t)))
    if not tr > 0:
        raise PreconditionError(f"transversality fails at time level {n} (t={t!r}): min b.nu {tr!r}")


class _StepSolver:
    """Factorize ``I - c dt L`` and reuse the factors while the matrix is unchanged."""

    def __init__(self, pattern: _Pattern):
        self.pattern = pattern
        self._data = None
        self._lu = None
        self.factorizations = 0

    def solve(self, ldata: np.ndarray, cdt: float, rhs: np.ndarray, level: int) -> np.ndarray:
        data = -cdt * ldata
        data[self.pattern.diag] += 1.0
        if self._data is None or not np.array_equal(data, self._data):
            try:
                self._lu = splu(self.pattern.matrix(data))
            except RuntimeError as exc:
                raise LinearSolveError(f"singular step matrix at time level {level}: {exc}") from exc
            self._data = data
            self.factorizations += 1
        out = self._lu.solve(rhs)
        if not np.all(np.isfinite(out)):
            raise LinearSolveError(f"non-finite solution at time level {level}")
        return out


def solve_linear(problem: LinearProblem, scheme: str = "implicit-euler") -> DiscreteSolution:
    """March the coupled interior/boundary system over the problem's time grid.

    Parameters
    ----------
    problem : LinearProblem
    scheme : {'implicit-euler', 'crank-nicolson'}
        Implicit Euler evaluates coefficients and data at ``t_{n+1}``;
        Crank-Nicolson averages the operator and data of both levels.

    Raises
    ------
    PreconditionError
        If ellipticity or transversality fails at any time level.
    LinearSolveError
        If a step matrix is singular.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}, got {scheme!r}")
    grid, time = problem.grid, problem.time
    pattern = _pattern(grid)
    stepper = _StepSolver(pattern)
    dt = time.dt
    times = time.times.tolist()
    U = np.empty((time.n_levels, grid.size))
    U[0] = problem.u0
    _check_level_structure(problem, 0, times[0])
    prev = None
    if scheme == "crank-nicolson":
        coef, g = _level_operator(problem, 0, times[0])
        prev = (pattern.operator_data(coef), g)
    for n in range(time.n_steps):
        t1 = times[n + 1]
        _check_level_structure(problem, n + 1, t1)
        coef, g1 = _level_operator(problem, n + 1, t1)
        ldata = pattern.operator_data(coef)
        if scheme == "implicit-euler":
            rhs = U[n] + dt * g1
            U[n + 1] = stepper.solve(ldata, dt, rhs, n + 1)
        else:
            l0, g0 = prev
            rhs = U[n] + 0.5 * dt * (pattern.matrix(l0) @ U[n] + g0 + g1)
            U[n + 1] = stepper.solve(ldata, 0.5 * dt, rhs, n + 1)
            prev = (ldata, g1)
    bdt = (U[1:, grid.boundary_index] - U[:-1, grid.boundary_index]) / dt
    return DiscreteSolution(SpaceTimeField(grid, time.times, U), bdt, scheme)


# ---------------------------------------------------------------------------
# Norms and scaling
# ---------------------------------------------------------------------------


def norm_report(solution: DiscreteSolution, beta: float) -> NormReport:
    """Discrete norms of ``u`` and of its boundary time-derivative trace."""
    return norm_bundle(solution.field, beta, solution.boundary_dt)


ESTIMATES = ("time", "space", "gradient")


def scaling_exponent(estimate: str, theta: float, beta: float) -> float:
    """Exponent of ``T`` in the small-time bound for the selected norm.

    ``'time'``: ``C^theta(I; C)`` scales like ``T**(1 - theta)``;
    ``'space'``: ``B(I; C^theta)`` like ``T**((2 + beta - theta)/(2 + beta))``;
    ``'gradient'``: ``C^{beta/2}(I; C^1)`` like ``T**(1/2)``.
    """
    if estimate == "time":
        return 1.0 - theta
    if estimate == "space":
        return (2.0 + beta - theta) / (2.0 + beta)
    if estimate == "gradient":
        return 0.5
    raise ValueError(f"estimate must be one of {ESTIMATES}, got {estimate!r}")


def _scaling_norm(sol: DiscreteSolution, estimate: str, theta: float, beta: float) -> float:
    stf = sol.field
    if estimate == "time":
        if not 0 <= theta < 1:
            raise ValueError("time exponent must lie in [0, 1)")
        return time_holder_norm(stf, theta, "sup")
    if estimate == "space":
        if not 0 <= theta <= 2 + beta or theta >= 3:
            raise ValueError("space exponent must lie in [0, 2 + beta]")
        m = int(math.floor(theta))
        return space_norm(stf.values, stf.grid, m, theta - m)
    return time_holder_norm(stf, beta / 2, "c1")


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` against ``log x``."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(lx, ly, 1)[0])


@dataclass(frozen=True)
class ScalingResult:
    estimate: str
    theta: float
    beta: float
    horizons: tuple
    norms: tuple
    slope: float
    exponent: float

    def rows(self):
        return [{"T": T, "norm": v} for T, v in zip(self.horizons, self.norms)]


def measure_small_time_scaling(
    template: LinearProblem,
    theta: float,
    horizons,
    beta: float,
    estimate: str = "time",
    scheme: str = "implicit-euler",
    n_steps: int | None = None,
) -> ScalingResult:
    """Fit the log-log slope of a solution norm against the horizon ``T``.

    Every horizon is solved with the same number of steps (the template's
    unless ``n_steps`` is given), so the time resolution is self-similar.

    Raises
    ------
    PreconditionError
        If ``u0`` is not zero or the data are incompatible at ``t0``.
    ValueError
        For fewer than four horizons or a vanishing norm.
    """
    horizons = [float(T) for T in horizons]
    if len(horizons) < 4:
        raise ValueError("the horizon ladder needs at least four entries")
    scaling_exponent(estimate, theta, beta)
    if np.any(template.u0 != 0):
        raise PreconditionError("small-time scaling requires u0 = 0")
    _, res = check_compatibility_linear(template)
    scale = max(1.0, float(np.max(np.abs(eval_coefficient(template.h, template.grid, 0, template.time.t0, template.grid.boundary_index)))))
    if res > 1e-12 * scale:
        raise PreconditionError(f"data are incompatible at t0 (residual {res!r})")
    steps = n_steps or template.time.n_steps
    norms = []
    for T in horizons:
        sol = solve_linear(template.with_time(TimeGrid(template.time.t0, T, steps)), scheme)
        v = _scaling_norm(sol, estimate, theta, beta)
        if not v > 0:
            raise ValueError(f"norm vanishes at T={T}; the data are degenerate")
        norms.append(v)
    return ScalingResult(
        estimate, float(theta), float(beta), tuple(horizons), tuple(norms),
        loglog_slope(horizons, norms), scaling_exponent(estimate, theta, beta),
    )
