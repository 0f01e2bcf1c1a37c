"""Quasilinear problems solved by frozen-coefficient Picard iteration.

The problem is::

    D_t u = sum_{|a|=2} a_a(t, x, u, grad u) D^a u + f(t, x, u, grad u)   in the interior,
    D_t u + sum_j b_j(t, x, u) D_j u = h(t, x, u)                          on the boundary,

with ``u(0) = u0``.  Each Picard step substitutes the previous iterate into
the coefficients and solves the resulting linear problem with
:func:`dynbc.linear.solve_linear`.  Iterates are compared in the metric of
:func:`dynbc.holder.picard_metric`; the window is halved when an iterate
leaves the ball of radius ``R`` around the first iterate or when successive
distances stop contracting fast enough.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from . import expr as ex
from .geometry import SpaceTimeField, TimeGrid, gradient, second_derivatives
from .holder import (
    boundary_space_norm,
    parabolic_norm,
    picard_metric,
    space_norm,
    time_holder_norm,
)
from .linear import (
    SCHEMES,
    DiscreteSolution,
    LinearCoefficients,
    LinearProblem,
    PreconditionError,
    _min_eig,
    eval_coefficient,
    solve_linear,
)

__all__ = [
    "ProblemSpec",
    "PicardConfig",
    "IterationTrace",
    "PicardError",
    "CompatibilityError",
    "check_AG4",
    "check_compatibility",
    "freeze_coefficients",
    "build_U0",
    "picard_solve",
    "continue_in_time",
    "uniqueness_probe",
    "UniquenessResult",
    "nemytskii_lipschitz_probe",
    "default_radius",
    "default_compat_tol",
    "as_linear_problem",
]

INTERIOR_VARS = frozenset({"t", "x", "y", "u", "p1", "p2"})
BOUNDARY_VARS = frozenset({"t", "x", "y", "u"})
INITIAL_VARS = frozenset({"x", "y"})


class PicardError(RuntimeError):
    """The Picard iteration failed to converge or the window collapsed."""


class CompatibilityError(PreconditionError):
    """Interior and boundary equations disagree on ``D_t u`` at a window start."""


def _check_vars(e, allowed, role: str, dim: int):
    allowed = set(allowed)
    if dim == 1:
        allowed -= {"y", "p2"}
    bad = ex.variables(e) - allowed
    if bad:
        raise PreconditionError(
            f"{role} may not reference {sorted(bad)} (allowed: {sorted(allowed)})"
        )
    return e


def _expr(value, role: str, allowed, dim: int):
    try:
        e = ex.as_expr(value)
    except ex.ExprError as exc:
        raise PreconditionError(f"{role}: {exc}") from exc
    return _check_vars(e, allowed, role, dim)


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """A quasilinear problem on a grid over ``(0, T)``.

    Parameters
    ----------
    grid : IntervalGrid or StripGrid
    T : float
        Horizon.
    n_steps : int
        Number of time steps covering ``(0, T)``; windows use the same step.
    a : mapping
        Top-order coefficients keyed ``'xx'`` (and ``'xy'``, ``'yy'`` on the
        strip) as expressions in ``t, x, y, u, p1, p2``.  ``'xy'`` is the
        symmetric off-diagonal entry.
    f : expression
        Interior source in ``t, x, y, u, p1, p2``.
    b : mapping
        Boundary drift keyed ``'x'`` (and ``'y'``) in ``t, x, y, u``.
    h : expression
        Boundary source in ``t, x, y, u``.
    u0 : expression or array
        Initial field.
    beta : float
        Hölder exponent of the Picard metric.
    scheme : str
    """

    grid: object
    T: float
    n_steps: int
    a: Mapping[str, object]
    f: object = 0.0
    b: Mapping[str, object] = field(default_factory=dict)
    h: object = 0.0
    u0: object = 0.0
    beta: float = 0.5
    scheme: str = "implicit-euler"

    def __post_init__(self):
        dim = self.grid.dim
        if not (self.T > 0 and math.isfinite(self.T)):
            raise PreconditionError(f"horizon must be positive, got {self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise PreconditionError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not 0 < self.beta < 1:
            raise PreconditionError(f"beta must lie in (0, 1), got {self.beta}")
        if self.scheme not in SCHEMES:
            raise PreconditionError(f"scheme must be one of {SCHEMES}")
        a_keys = ("xx",) if dim == 1 else ("xx", "xy", "yy")
        b_keys = ("x",) if dim == 1 else ("x", "y")
        extra = set(self.a) - set(a_keys)
        if extra:
            raise PreconditionError(f"unexpected top-order coefficients {sorted(extra)} for a {self.grid.kind}")
        extra = set(self.b) - set(b_keys)
        if extra:
            raise PreconditionError(f"unexpected boundary coefficients {sorted(extra)} for a {self.grid.kind}")
        defaults_a = {"xx": 1.0, "xy": 0.0, "yy": 1.0}
        a = {k: _expr(self.a.get(k, defaults_a[k]), f"a_{k}", INTERIOR_VARS, dim) for k in a_keys}
        b = {k: _expr(self.b.get(k, 0.0), f"b_{k}", BOUNDARY_VARS, dim) for k in b_keys}
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "f", _expr(self.f, "f", INTERIOR_VARS, dim))
        object.__setattr__(self, "h", _expr(self.h, "h", BOUNDARY_VARS, dim))
        u0 = self.u0
        if not isinstance(u0, np.ndarray):
            e = _expr(u0, "u0", INITIAL_VARS | {"t"}, dim)
            u0 = eval_coefficient(e, self.grid, 0, 0.0)
        u0 = np.array(u0, dtype=float).reshape(-1)
        if u0.size != self.grid.size or not np.all(np.isfinite(u0)):
            raise PreconditionError("u0 must be finite on every node")
        u0.flags.writeable = False
        object.__setattr__(self, "u0", u0)

    @property
    def time(self) -> TimeGrid:
        return TimeGrid(0.0, float(self.T), int(self.n_steps))

    @property
    def dt(self) -> float:
        return self.time.dt

    def expressions(self) -> dict[str, "ex.Expr"]:
        out = {f"a_{k}": v for k, v in self.a.items()}
        out.update({f"b_{k}": v for k, v in self.b.items()})
        out["f"] = self.f
        out["h"] = self.h
        return out

    def is_solution_independent(self) -> bool:
        """True when no coefficient references ``u``, ``p1`` or ``p2``."""
        return all(not (ex.variables(e) & {"u", "p1", "p2"}) for e in self.expressions().values())

    def with_data(self, **changes) -> "ProblemSpec":
        return replace(self, **changes)


@dataclass(frozen=True)
class PicardConfig:
    """Controls for the Picard loop.

    ``R`` and ``compat_tol`` default to data-dependent values (see
    :func:`default_radius` and :func:`default_compat_tol`); ``tau`` defaults
    to the whole horizon.
    """

    R: float | None = None
    tau: float | None = None
    tol: float = 1e-10
    max_iter: int = 50
    rho_max: float = 0.5
    shrink: float = 0.5
    compat_tol: float | None = None
    adaptive: bool = True

    def __post_init__(self):
        if self.R is not None and not self.R > 0:
            raise ValueError("ball radius R must be positive")
        if self.tau is not None and not self.tau > 0:
            raise ValueError("window length must be positive")
        if not self.tol > 0 or not self.max_iter >= 1:
            raise ValueError("tolerance and max_iter must be positive")
        if not 0 < self.rho_max < 1:
            raise ValueError("rho_max must lie in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink factor must lie in (0, 1)")


@dataclass
class IterationTrace:
    """Record of a Picard run.

    ``rows`` has one entry per iterate with keys ``window, t0, tau, k, d,
    ratio, ball``; ``windows`` has one entry per attempted window with keys
    ``start, tau, iterations, converged, reason``.
    """

    rows: list = field(default_factory=list)
    windows: list = field(default_factory=list)
    linear_solves: int = 0
    u0_builds: int = 0

    @property
    def iterations(self) -> int:
        return self.linear_solves - self.u0_builds

    def ratios(self, window: int | None = None) -> list[float]:
        return [
            r["ratio"] for r in self.rows
            if r["ratio"] is not None and (window is None or r["window"] == window)
        ]

    def converged_ratios(self) -> list[float]:
        ok = {i for i, w in enumerate(self.windows) if w["converged"]}
        return [r["ratio"] for r in self.rows if r["ratio"] is not None and r["window"] in ok]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["window", "t0", "tau", "k", "d_k", "r_k", "ball"])
            for r in self.rows:
                ratio = "" if r["ratio"] is None else repr(r["ratio"])
                w.writerow([r["window"], repr(r["t0"]), repr(r["tau"]), r["k"], repr(r["d"]), ratio, repr(r["ball"])])


# ---------------------------------------------------------------------------
# Structural checks
# ---------------------------------------------------------------------------


def _node_ctx(grid, t, u, p, index=None):
    coords = grid.coords if index is None else {k: v[index] for k, v in grid.coords.items()}
    ctx = dict(coords)
    ctx["t"] = t
    ctx["u"] = u
    ctx["p1"] = p[0]
    if grid.dim == 2:
        ctx["p2"] = p[1]
    return ctx


def _eval(e, ctx, what: str):
    try:
        return ex.evaluate(e, ctx)
    except ex.ExprEvalError as exc:
        raise PreconditionError(f"evaluation of {what} failed: {exc}") from exc


def check_AG4(spec: ProblemSpec, box: Mapping[str, tuple], samples: int = 5, time_stride: int = 1):
    """Sampled ellipticity and transversality constants.

    Parameters
    ----------
    box : mapping
        Ranges for ``'u'`` and optionally ``'p1'``, ``'p2'`` as ``(lo, hi)``
        pairs.  Missing gradient ranges default to ``(0, 0)``.
    samples : int
        Lattice points per sampled variable (end points included).

    Returns
    -------
    (nu_interior, nu_boundary) : tuple of float
        Minimum eigenvalue of the top-order matrix and minimum of
        ``sum_j b_j nu_j`` over nodes, time levels and the lattice.
    """
    grid = spec.grid

    def axis(name):
        lo, hi = box.get(name, (0.0, 0.0))
        return np.linspace(float(lo), float(hi), samples if hi > lo else 1)

    if "u" not in box:
        raise ValueError("the sample box must give a range for u")
    us = axis("u")
    pnames = ("p1",) if grid.dim == 1 else ("p1", "p2")
    lattice = np.array(list(itertools.product(us, *(axis(p) for p in pnames))))
    S, N = lattice.shape[0], grid.size
    coords = {k: np.tile(v, S) for k, v in grid.coords.items()}
    vals = {name: np.repeat(lattice[:, i], N) for i, name in enumerate(("u",) + pnames)}
    bidx = grid.boundary_index
    su = np.repeat(us, bidx.size)
    bcoords = {k: np.tile(v[bidx], us.size) for k, v in grid.coords.items()}
    nu_b = np.tile(grid.normals, (us.size, 1))
    nu_i = math.inf
    nu_bd = math.inf
    for t in spec.time.times[::time_stride].tolist():
        ctx = dict(coords, t=t, **vals)
        axx = np.broadcast_to(_eval(spec.a["xx"], ctx, "a_xx"), (S * N,))
        if grid.dim == 1:
            lam = axx
        else:
            axy = _eval(spec.a["xy"], ctx, "a_xy")
            ayy = _eval(spec.a["yy"], ctx, "a_yy")
            lam = _min_eig(axx, axy, ayy)
        nu_i = min(nu_i, float(np.min(lam)))
        bctx = dict(bcoords, t=t, u=su)
        total = np.broadcast_to(_eval(spec.b["x"], bctx, "b_x"), su.shape) * nu_b[:, 0]
        if grid.dim == 2:
            total = total + np.broadcast_to(_eval(spec.b["y"], bctx, "b_y"), su.shape) * nu_b[:, 1]
        nu_bd = min(nu_bd, float(np.min(total)))
    return nu_i, nu_bd


def compatibility_residual(spec: ProblemSpec, u, t: float) -> np.ndarray:
    """Boundary residual ``A(u)u + f(u) + B(u)u - h(u)`` at time ``t`` for the field ``u``."""
    grid = spec.grid
    idx = grid.boundary_index
    u = np.asarray(u, dtype=float)
    p = gradient(u, grid)
    d2 = second_derivatives(u, grid)
    ctx = _node_ctx(grid, t, u[idx], p[:, idx], idx)
    au = _eval(spec.a["xx"], ctx, "a_xx") * d2["xx"][idx]
    if grid.dim == 2:
        au = au + 2.0 * _eval(spec.a["xy"], ctx, "a_xy") * d2["xy"][idx]
        au = au + _eval(spec.a["yy"], ctx, "a_yy") * d2["yy"][idx]
    f = _eval(spec.f, ctx, "f")
    bctx = {k: v for k, v in ctx.items() if k not in ("p1", "p2")}
    bu = _eval(spec.b["x"], bctx, "b_x") * p[0, idx]
    if grid.dim == 2:
        bu = bu + _eval(spec.b["y"], bctx, "b_y") * p[1, idx]
    h = _eval(spec.h, bctx, "h")
    return np.broadcast_to(au + f + bu - h, idx.shape).astype(float)


def check_compatibility(spec: ProblemSpec, u=None, t: float = 0.0):
    """Compatibility residual of the initial field (or ``u`` at time ``t``).

    Returns
    -------
    residual : ndarray, shape (n_boundary,)
    max_abs : float
    """
    r = compatibility_residual(spec, spec.u0 if u is None else u, t)
    return r, float(np.max(np.abs(r)))


def _data_scale(spec: ProblemSpec, u, t: float) -> float:
    grid = spec.grid
    idx = grid.boundary_index
    p = gradient(u, grid)
    ctx = _node_ctx(grid, t, u, p)
    f = np.abs(_eval(spec.f, ctx, "f"))
    bctx = {k: (v[idx] if np.ndim(v) else v) for k, v in ctx.items() if k not in ("p1", "p2")}
    h = np.abs(_eval(spec.h, bctx, "h"))
    return max(1.0, float(np.max(np.abs(u))), float(np.max(f)), float(np.max(h)))


def default_compat_tol(spec: ProblemSpec, u=None, t: float = 0.0) -> float:
    """``10 (h^2 + dt)`` times the magnitude of the data at ``t``."""
    u = spec.u0 if u is None else np.asarray(u, float)
    hmax = max(spec.grid.spacings)
    return 10.0 * (hmax**2 + spec.dt) * _data_scale(spec, u, t)


def default_radius(spec: ProblemSpec) -> float:
    """``1 + 2 ||u0||_{C^{1+beta}}``."""
    return 1.0 + 2.0 * space_norm(spec.u0, spec.grid, 1, spec.beta)


# ---------------------------------------------------------------------------
# Freezing
# ---------------------------------------------------------------------------


def _frozen_arrays(spec: ProblemSpec, U: np.ndarray, times: Sequence[float]):
    """Coefficient tables for the iterate ``U`` (shape ``(L, N)``)."""
    grid = spec.grid
    L, N = U.shape
    idx = grid.boundary_index
    keys = ("xx",) if grid.dim == 1 else ("xx", "xy", "yy")
    bkeys = ("x",) if grid.dim == 1 else ("x", "y")
    a = {k: np.empty((L, N)) for k in keys}
    f = np.empty((L, N))
    b = {k: np.zeros((L, N)) for k in bkeys}
    h = np.zeros((L, N))
    P = gradient(U, grid)  # (dim, L, N)
    for n, t in enumerate(times):
        ctx = _node_ctx(grid, t, U[n], P[:, n])
        for k in keys:
            a[k][n] = _eval(spec.a[k], ctx, f"a_{k}")
        f[n] = _eval(spec.f, ctx, "f")
        bctx = _node_ctx(grid, t, U[n, idx], P[:, n][:, idx], idx)
        bctx.pop("p1"), bctx.pop("p2", None)
        for k in bkeys:
            b[k][n, idx] = _eval(spec.b[k], bctx, f"b_{k}")
        h[n, idx] = _eval(spec.h, bctx, "h")
    return a, f, b, h


def freeze_coefficients(spec: ProblemSpec, U: SpaceTimeField, time: TimeGrid | None = None, u0=None) -> LinearProblem:
    """Linear problem whose coefficients are the spec's evaluated along ``U``.

    Interior coefficients and ``f`` see ``U`` and its stencil gradient
    (one-sided at boundary nodes); boundary coefficients and ``h`` see only
    the trace of ``U``.

    Parameters
    ----------
    U : SpaceTimeField
        The iterate; its first level must equal the initial field.
    time : TimeGrid, optional
        Ladder of the window; defaults to the one implied by ``U.times``.
    u0 : array, optional
        Initial field of the window (defaults to ``spec.u0``).
    """
    if U.grid != spec.grid:
        raise PreconditionError("iterate lives on a different grid")
    if time is None:
        time = TimeGrid(float(U.times[0]), float(U.times[-1] - U.times[0]), U.n_levels - 1)
    elif time.n_levels != U.n_levels:
        raise PreconditionError("iterate and time grid have different numbers of levels")
    u0 = spec.u0 if u0 is None else np.asarray(u0, float)
    if not np.array_equal(U.values[0], u0):
        raise PreconditionError("iterate does not satisfy the initial condition")
    a, f, b, h = _frozen_arrays(spec, U.values, time.times.tolist())
    kw = {f"a_{k}": v for k, v in a.items()}
    kw.update({f"b_{k}": v for k, v in b.items()})
    return LinearProblem(spec.grid, time, LinearCoefficients(**kw), f=f, h=h, u0=u0)


def _window_time(spec: ProblemSpec, start: int, n: int) -> TimeGrid:
    g = spec.time.times
    t0 = float(g[start])
    return TimeGrid(t0, float(g[start + n]) - t0, n)


def build_U0(spec: ProblemSpec, time: TimeGrid | None = None, u_start=None, compat_tol: float | None = None) -> DiscreteSolution:
    """Solve the problem with coefficients frozen at the initial field.

    Raises
    ------
    CompatibilityError
        If the compatibility residual exceeds ``compat_tol``.
    """
    time = time or spec.time
    u = spec.u0 if u_start is None else np.asarray(u_start, float)
    _, res = check_compatibility(spec, u, time.t0)
    tol = default_compat_tol(spec, u, time.t0) if compat_tol is None else compat_tol
    if res > tol:
        raise CompatibilityError(
            f"compatibility residual {res:.3e} exceeds tolerance {tol:.3e} at t={time.t0!r}"
        )
    frozen = SpaceTimeField(spec.grid, time.times, np.broadcast_to(u, (time.n_levels, u.size)))
    return solve_linear(freeze_coefficients(spec, frozen, time, u), spec.scheme)


# ---------------------------------------------------------------------------
# Picard iteration
# ---------------------------------------------------------------------------


def _fixed_offset(offset, spec, time, magnitude):
    if offset is None:
        return None
    if isinstance(offset, np.ndarray):
        vals = np.asarray(offset, float)
        if vals.shape != (time.n_levels, spec.grid.size):
            raise PreconditionError("offset array does not match the window")
    else:
        e = _expr(offset, "offset", {"t", "x", "y"}, spec.grid.dim)
        vals = np.stack([eval_coefficient(e, spec.grid, n, t) for n, t in enumerate(time.times.tolist())])
    if np.max(np.abs(vals[0])) > 0:
        raise PreconditionError("offsets must vanish at the start of the window")
    if magnitude is not None:
        zero = SpaceTimeField(spec.grid, time.times, np.zeros_like(vals))
        size = picard_metric(SpaceTimeField(spec.grid, time.times, vals), zero, beta=spec.beta)
        if size == 0:
            raise PreconditionError("offset is identically zero; cannot rescale")
        vals = vals * (magnitude / size)
    return vals


def picard_solve(
    spec: ProblemSpec,
    config: PicardConfig = PicardConfig(),
    *,
    start: int = 0,
    u_start=None,
    offset=None,
    offset_magnitude: float | None = None,
    trace: IterationTrace | None = None,
):
    """Frozen-coefficient Picard iteration on one window starting at step ``start``.

    The first iterate is :func:`build_U0` (optionally shifted by ``offset``,
    an expression in ``t, x, y`` or an array vanishing at the window start).
    Iteration stops when the metric distance of consecutive iterates is at
    most ``config.tol``.  If an iterate leaves the ball of radius ``R``
    around ``U0`` or a ratio of consecutive distances reaches ``rho_max``,
    the window is shrunk and the iteration restarted.

    Returns
    -------
    solution : DiscreteSolution
        The converged iterate on the accepted window.
    trace : IterationTrace
    """
    trace = IterationTrace() if trace is None else trace
    u = spec.u0 if u_start is None else np.asarray(u_start, float)
    R = config.R if config.R is not None else default_radius(spec)
    dt = spec.dt
    remaining = spec.n_steps - start
    if remaining < 1:
        raise PicardError("no time steps left in the horizon")
    n_win = remaining if config.tau is None else min(remaining, max(1, int(round(config.tau / dt))))
    compat_tol = config.compat_tol
    while True:
        time = _window_time(spec, start, n_win)
        wrec = {"start": time.t0, "tau": time.tau, "iterations": 0, "converged": False, "reason": ""}
        trace.windows.append(wrec)
        widx = len(trace.windows) - 1
        U0 = build_U0(spec, time, u, compat_tol)
        trace.linear_solves += 1
        trace.u0_builds += 1
        current = U0
        shift = _fixed_offset(offset, spec, time, offset_magnitude)
        if shift is not None:
            seeded = SpaceTimeField(spec.grid, time.times, U0.values + shift)
            ball0 = picard_metric(seeded, U0.field, beta=spec.beta)
            if ball0 > R:
                raise PreconditionError(f"seeded iterate lies outside the ball: d={ball0:.3e} > R={R:.3e}")
            current = DiscreteSolution(seeded, U0.boundary_dt, U0.scheme)
        prev_d = None
        restart = False
        for k in range(1, config.max_iter + 1):
            nxt = solve_linear(freeze_coefficients(spec, current.field, time, u), spec.scheme)
            trace.linear_solves += 1
            wrec["iterations"] = k
            d = picard_metric(nxt.field, current.field, beta=spec.beta)
            ball = picard_metric(nxt.field, U0.field, beta=spec.beta)
            ratio = d / prev_d if prev_d else None
            trace.rows.append({"window": widx, "t0": time.t0, "tau": time.tau, "k": k, "d": d, "ratio": ratio, "ball": ball})
            current = nxt
            if d <= config.tol:
                wrec["converged"] = True
                wrec["reason"] = "converged"
                return current, trace
            if config.adaptive and (ball > R or (ratio is not None and ratio >= config.rho_max)):
                wrec["reason"] = "left ball" if ball > R else "slow contraction"
                restart = True
                break
            prev_d = d
        if not restart:
            wrec["reason"] = "max_iter"
            raise PicardError(
                f"no convergence within {config.max_iter} iterations on window "
                f"[{time.t0!r}, {time.t_end!r}] (last distance {d:.3e})"
            )
        smaller = int(n_win * config.shrink)
        if smaller < 1:
            raise PicardError(f"window shrunk below one time step at t={time.t0!r} ({wrec['reason']})")
        n_win = smaller


def continue_in_time(spec: ProblemSpec, config: PicardConfig = PicardConfig(), trace: IterationTrace | None = None):
    """Cover ``(0, T]`` by consecutive Picard windows.

    Each window starts from the previous window's final field; the
    compatibility residual is re-checked at every seam with the data at the
    seam time.

    Returns
    -------
    solution : DiscreteSolution
        Concatenated field with ``seams`` holding the interior window
        boundaries.
    trace : IterationTrace
    """
    trace = IterationTrace() if trace is None else trace
    start = 0
    u = spec.u0
    times = [0.0]
    values = [u]
    bdt = []
    seams = []
    while start < spec.n_steps:
        t0 = float(spec.time.times[start])
        try:
            sol, _ = picard_solve(spec, config, start=start, u_start=u, trace=trace)
        except CompatibilityError as exc:
            if start == 0:
                raise
            raise CompatibilityError(f"seam at t={t0!r}: {exc}") from exc
        n = sol.field.n_levels - 1
        if start:
            seams.append(t0)
        times.extend(sol.times[1:].tolist())
        values.extend(sol.values[1:])
        bdt.append(sol.boundary_dt)
        u = sol.final
        start += n
    field_ = SpaceTimeField(spec.grid, np.array(times), np.array(values))
    return DiscreteSolution(field_, np.concatenate(bdt), spec.scheme, tuple(seams)), trace


@dataclass(frozen=True)
class UniquenessResult:
    deviation: float
    solutions: tuple
    traces: tuple


def _common_prefix(fields_):
    n = min(f.n_levels for f in fields_)
    return [SpaceTimeField(f.grid, f.times[:n], f.values[:n]) for f in fields_]


def uniqueness_probe(spec: ProblemSpec, config: PicardConfig, offsets, magnitudes=None) -> UniquenessResult:
    """Run Picard from several perturbed first iterates and compare the limits.

    Parameters
    ----------
    offsets : sequence
        Expressions in ``t, x, y`` (or arrays on the window) vanishing at
        ``t = 0``.
    magnitudes : sequence of float, optional
        If given, each offset is rescaled to this metric distance from zero.

    Returns
    -------
    UniquenessResult
        ``deviation`` is the largest metric distance between any two
        converged solutions.

    Raises
    ------
    PreconditionError
        If an offset does not vanish initially or pushes the seed outside the ball.
    PicardError
        If a seeded run fails to converge.
    """
    offsets = list(offsets)
    if magnitudes is None:
        magnitudes = [None] * len(offsets)
    sols, traces = [], []
    for off, mag in zip(offsets, magnitudes):
        sol, tr = picard_solve(spec, config, offset=off, offset_magnitude=mag)
        sols.append(sol)
        traces.append(tr)
    fields_ = _common_prefix([s.field for s in sols])
    dev = 0.0
    for i in range(len(fields_)):
        for j in range(i + 1, len(fields_)):
            dev = max(dev, picard_metric(fields_[i], fields_[j], beta=spec.beta))
    return UniquenessResult(dev, tuple(sols), tuple(traces))


# ---------------------------------------------------------------------------
# Nemytskii operators
# ---------------------------------------------------------------------------


def _boundary_parabolic_norm(values_b: np.ndarray, times, grid, beta: float) -> float:
    """``C^{beta/2, 1+beta}`` norm of a function on ``(0, tau) x boundary``."""
    full = np.zeros((values_b.shape[0], grid.size))
    full[:, grid.boundary_index] = values_b
    stf = SpaceTimeField(grid, times, full)
    time_part = time_holder_norm(stf, beta / 2, "boundary")
    space_part = boundary_space_norm(values_b, grid, 1, beta)
    return max(time_part, space_part)


def nemytskii_lipschitz_probe(spec: ProblemSpec, pairs, beta: float | None = None):
    """Measured Lipschitz ratios of the coefficient substitution maps.

    For each pair ``(U, V)`` the interior ratio is
    ``max_c ||c(U) - c(V)||_{C^{beta/2, beta}} / d(U, V)`` over the interior
    coefficients ``c`` (top-order entries and ``f``), and the boundary ratio
    is ``max_c ||c(U) - c(V)||_{C^{beta/2, 1+beta}(boundary)} /
    ||U - V||_{C^{beta/2, 1+beta}}`` over ``b_j`` and ``h``.

    Returns
    -------
    dict
        ``interior`` and ``boundary`` (max ratios), ``ratios`` (per pair),
        ``skipped`` (indices of coincident pairs).
    """
    beta = spec.beta if beta is None else float(beta)
    grid = spec.grid
    idx = grid.boundary_index
    out = {"interior": 0.0, "boundary": 0.0, "ratios": [], "skipped": []}
    for i, (U, V) in enumerate(pairs):
        W = U - V
        if not np.any(W.values):
            out["skipped"].append(i)
            continue
        times = U.times.tolist()
        aU, fU, bU, hU = _frozen_arrays(spec, U.values, times)
        aV, fV, bV, hV = _frozen_arrays(spec, V.values, times)
        dist = picard_metric(U, V, beta=beta)
        interior = max(
            parabolic_norm(SpaceTimeField(grid, U.times, cu - cv), beta / 2, beta)
            for cu, cv in [(aU[k], aV[k]) for k in aU] + [(fU, fV)]
        ) / dist
        wnorm = max(time_holder_norm(W, beta / 2, "sup"), space_norm(W.values, grid, 1, beta))
        boundary = max(
            _boundary_parabolic_norm((cu - cv)[:, idx], U.times, grid, beta)
            for cu, cv in [(bU[k], bV[k]) for k in bU] + [(hU, hV)]
        ) / wnorm
        out["ratios"].append({"pair": i, "interior": interior, "boundary": boundary})
        out["interior"] = max(out["interior"], interior)
        out["boundary"] = max(out["boundary"], boundary)
    return out


def as_linear_problem(spec: ProblemSpec) -> LinearProblem:
    """The spec as a linear problem; only valid when it is solution independent."""
    if not spec.is_solution_independent():
        raise PreconditionError("spec references u or its gradient; it is not linear")
    kw = {f"a_{k}": v for k, v in spec.a.items()}
    kw.update({f"b_{k}": v for k, v in spec.b.items()})
    return LinearProblem(spec.grid, spec.time, LinearCoefficients(**kw), spec.f, spec.h, spec.u0)
