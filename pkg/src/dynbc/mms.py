"""Manufactured solutions and refinement studies.

Given an exact solution ``u*(t, x[, y])`` the forcing terms ``g_f`` and
``g_h`` are built symbolically so that ``u*`` solves the problem with
``f + g_f`` and ``h + g_h``.  The refinement study then measures observed
orders of the final-time max-node error.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .quasilinear import PicardConfig, ProblemSpec, continue_in_time
from .linear import eval_coefficient, loglog_slope

__all__ = [
    "ExactSolution",
    "derive_forcing",
    "augment",
    "convergence_study",
    "StudyResult",
    "residuals",
]

EXACT_ERROR = 1e-12


class ExactSolution:
    """An exact solution with symbolic derivatives.

    Parameters
    ----------
    expression : str or expression tree
        ``u*`` in the variables ``t, x`` (and ``y`` on the strip).
    """

    def __init__(self, expression):
        self.expr = ex.as_expr(expression)
        bad = ex.variables(self.expr) - {"t", "x", "y"}
        if bad:
            raise ValueError(f"exact solution may only use t, x, y; found {sorted(bad)}")
        d = ex.differentiate
        e = self.expr
        self.dt = d(e, "t")
        self.dx = d(e, "x")
        self.dy = d(e, "y")
        self.dxx = d(self.dx, "x")
        self.dxy = d(self.dx, "y")
        self.dyy = d(self.dy, "y")

    def __repr__(self) -> str:
        return f"ExactSolution({ex.to_string(self.expr)!r})"

    def values(self, grid, t: float) -> np.ndarray:
        return np.array(eval_coefficient(self.expr, grid, 0, t), dtype=float)


def _sub(e, exact: ExactSolution):
    return ex.substitute(e, {"u": exact.expr, "p1": exact.dx, "p2": exact.dy})


def derive_forcing(spec: ProblemSpec, exact: ExactSolution):
    """Symbolic forcing terms making ``exact`` a solution.

    Returns
    -------
    g_f, g_h : expression trees in ``t, x, y``
        ``g_f = D_t u* - sum a(u*, grad u*) D^a u* - f(u*, grad u*)`` and
        ``g_h = D_t u* + sum b_j(u*) D_j u* - h(u*)``.
    """
    add, sub, mul = ex._add, ex._sub, ex._mul
    top = mul(_sub(spec.a["xx"], exact), exact.dxx)
    if spec.grid.dim == 2:
        top = add(top, mul(mul(ex.Const(2.0), _sub(spec.a["xy"], exact)), exact.dxy))
        top = add(top, mul(_sub(spec.a["yy"], exact), exact.dyy))
    g_f = sub(sub(exact.dt, top), _sub(spec.f, exact))
    drift = mul(_sub(spec.b["x"], exact), exact.dx)
    if spec.grid.dim == 2:
        drift = add(drift, mul(_sub(spec.b["y"], exact), exact.dy))
    g_h = sub(add(exact.dt, drift), _sub(spec.h, exact))
    return g_f, g_h


def augment(spec: ProblemSpec, exact: ExactSolution) -> ProblemSpec:
    """The spec with additive forcing and ``u0 = u*(0)``."""
    g_f, g_h = derive_forcing(spec, exact)
    return spec.with_data(
        f=ex._add(spec.f, g_f),
        h=ex._add(spec.h, g_h),
        u0=exact.values(spec.grid, 0.0),
    )


def residuals(spec: ProblemSpec, exact: ExactSolution, points: dict):
    """Continuum residuals of the augmented problem at ``u*`` on sample points.

    ``points`` maps ``t, x[, y]`` to equal-length arrays.  Returns the
    interior and boundary residual arrays (the boundary one evaluated with
    the outward normal implied by ``spec.b`` at the same points).
    """
    aug_f, aug_h = derive_forcing(spec, exact)
    ctx = dict(points)
    ctx["u"] = ex.evaluate(exact.expr, points)
    ctx["p1"] = ex.evaluate(exact.dx, points)
    if spec.grid.dim == 2:
        ctx["p2"] = ex.evaluate(exact.dy, points)
    ut = ex.evaluate(exact.dt, points)
    top = ex.evaluate(spec.a["xx"], ctx) * ex.evaluate(exact.dxx, points)
    if spec.grid.dim == 2:
        top = top + 2 * ex.evaluate(spec.a["xy"], ctx) * ex.evaluate(exact.dxy, points)
        top = top + ex.evaluate(spec.a["yy"], ctx) * ex.evaluate(exact.dyy, points)
    f_aug = ex.evaluate(spec.f, ctx) + ex.evaluate(aug_f, points)
    r_int = ut - top - f_aug
    drift = ex.evaluate(spec.b["x"], ctx) * ctx["p1"]
    if spec.grid.dim == 2:
        drift = drift + ex.evaluate(spec.b["y"], ctx) * ctx["p2"]
    h_aug = ex.evaluate(spec.h, ctx) + ex.evaluate(aug_h, points)
    r_bnd = ut + drift - h_aug
    return np.asarray(r_int, float), np.asarray(r_bnd, float)


@dataclass(frozen=True)
class StudyResult:
    """Observed orders of a refinement study.

    ``spatial_order`` / ``temporal_order`` are fitted slopes, or the string
    ``'exact'`` when every error is at roundoff level.
    """

    spatial_order: object
    temporal_order: object
    spatial_rows: tuple
    temporal_rows: tuple
    spatial_monotone: bool
    temporal_monotone: bool

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["study", "level", "h", "dt", "error", "local_order", "windows"])
            for name, rows in (("space", self.spatial_rows), ("time", self.temporal_rows)):
                for r in rows:
                    lo = "" if r["local_order"] is None else repr(r["local_order"])
                    w.writerow([name, r["level"], repr(r["h"]), repr(r["dt"]), repr(r["error"]), lo, r["windows"]])


def _order(steps, errors, scale):
    if max(errors) <= EXACT_ERROR * scale:
        return "exact"
    if min(errors) <= 0:
        return float("inf")
    return loglog_slope(steps, errors)


def _rows(levels, hs, dts, errors, key, windows):
    rows = []
    for i, (lv, h, dt, e, nw) in enumerate(zip(levels, hs, dts, errors, windows)):
        lo = None
        if i and e > 0 and errors[i - 1] > 0:
            s_prev = (hs if key == "h" else dts)[i - 1]
            s_cur = h if key == "h" else dt
            lo = math.log(errors[i - 1] / e) / math.log(s_prev / s_cur)
        rows.append({"level": lv, "h": h, "dt": dt, "error": e, "local_order": lo, "windows": nw})
    return tuple(rows)


def _final_error(spec: ProblemSpec, exact: ExactSolution, config: PicardConfig):
    """Final-time max error and the number of accepted windows."""
    sol, trace = continue_in_time(augment(spec, exact), config)
    err = float(np.max(np.abs(sol.final - exact.values(spec.grid, float(sol.times[-1])))))
    return err, sum(1 for w in trace.windows if w["converged"])


def convergence_study(
    spec: ProblemSpec,
    exact: ExactSolution,
    grids,
    steps,
    scheme: str | None = None,
    config: PicardConfig = PicardConfig(),
    temporal_exact: ExactSolution | None = None,
) -> StudyResult:
    """Refine in space and in time separately and fit the observed orders.

    Parameters
    ----------
    spec : ProblemSpec
        Template; its grid and step count are replaced per level.
    exact : ExactSolution
        Manufactured solution used for the spatial leg (and the temporal
        leg unless ``temporal_exact`` is given).
    grids : sequence of grids
        Spatial ladder (at least three), coarse to fine.  The temporal leg
        runs on the finest grid.
    steps : sequence of int
        Step counts over ``(0, T)`` (at least three), coarse to fine.  The
        spatial leg runs with the largest count.
    config : PicardConfig
        Passed to :func:`dynbc.quasilinear.continue_in_time`.

    Returns
    -------
    StudyResult
        Non-monotone error sequences are flagged but still fitted.
    """
    grids, steps = list(grids), list(steps)
    if len(grids) < 3 or len(steps) < 3:
        raise ValueError("a refinement study needs at least three levels per direction")
    scheme = scheme or spec.scheme
    t_exact = temporal_exact or exact
    T = float(spec.T)
    s_err, s_win = [], []
    for g in grids:
        s = spec.with_data(grid=g, n_steps=steps[-1], u0=0.0, scheme=scheme)
        e, nw = _final_error(s, exact, config)
        s_err.append(e)
        s_win.append(nw)
    t_err, t_win = [], []
    for n in steps:
        s = spec.with_data(grid=grids[-1], n_steps=n, u0=0.0, scheme=scheme)
        e, nw = _final_error(s, t_exact, config)
        t_err.append(e)
        t_win.append(nw)
    hs = [max(g.spacings) for g in grids]
    scale = max(1.0, float(np.max(np.abs(exact.values(grids[-1], T)))))
    s_rows = _rows(range(len(grids)), hs, [T / steps[-1]] * len(grids), s_err, "h", s_win)
    t_rows = _rows(range(len(steps)), [hs[-1]] * len(steps), [T / n for n in steps], t_err, "dt", t_win)
    return StudyResult(
        _order(hs, s_err, scale),
        _order([T / n for n in steps], t_err, scale),
        s_rows,
        t_rows,
        all(b < a for a, b in zip(s_err, s_err[1:])),
        all(b < a for a, b in zip(t_err, t_err[1:])),
    )
