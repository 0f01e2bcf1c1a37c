"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Thresholds and runtime budgets are the stated ones; nothing is relaxed.
Experiment-based criteria go through :func:`dynbc.cli.run` so the command
line path is what gets checked.
"""

import math
import time

import numpy as np

from dynbc import expr as ex
from dynbc.cli import run
from dynbc.config import from_preset, loads_config
from dynbc.geometry import TimeGrid, build_interval_grid, build_strip_grid
from dynbc.holder import interpolation_check, space_seminorm
from dynbc.linear import (
    LinearCoefficients,
    LinearProblem,
    check_transversality,
    normal_coefficient,
    solve_linear,
)
from dynbc.quasilinear import PicardConfig, ProblemSpec, as_linear_problem, picard_solve
from _oracles import line_seminorm, py_eval

NU = "2*x - 1"


def _finish(record, number, ok, detail, t0, budget):
    elapsed = time.perf_counter() - t0
    within = budget is None or elapsed < budget
    if budget is not None:
        detail = f"{detail}; runtime budget {budget:.0f} s"
    record(number, ok and within, detail, elapsed)
    assert ok, detail
    assert within, f"runtime {elapsed:.1f} s exceeds {budget} s"


# ---------------------------------------------------------------------------
# 1. Hölder calculus
# ---------------------------------------------------------------------------


def test_criterion_01_holder_calculus(record):
    t0 = time.perf_counter()
    g = build_interval_grid(0, 1, 257)
    rng = np.random.default_rng(2024)
    worst_slack, equal = -math.inf, True
    for _ in range(100):
        k = rng.uniform(0.5, 12.0, 5)
        c = rng.normal(size=5)
        ph = rng.uniform(0, 2 * np.pi, 5)
        f = np.sum(c[:, None] * np.sin(k[:, None] * g.x[None, :] + ph[:, None]), axis=0)
        lhs, rhs, _ = interpolation_check(f, g, 0.25, 0.5, 0.75)
        worst_slack = max(worst_slack, (lhs - rhs) / rhs)
        equal = equal and space_seminorm(f, g, 0.5) == line_seminorm(f, g.h, 0.5)
    ok = worst_slack <= 1e-12 and equal
    _finish(record, 1, ok, f"max relative excess {worst_slack:.2e} (<= 1e-12), oracle equality {equal}", t0, 30)


# ---------------------------------------------------------------------------
# 2. linear solver
# ---------------------------------------------------------------------------


def _heat(f=0.0, h=0.0, u0=0.0):
    g = build_interval_grid(0, 1, 65)
    return LinearProblem(g, TimeGrid(0, 0.1, 32), LinearCoefficients(a_xx=1.0, b_x=NU), f=f, h=h, u0=u0)


def test_criterion_02_linear_solver(record):
    t0 = time.perf_counter()
    const = max(
        float(np.max(np.abs(solve_linear(_heat(u0=1.75), s).values - 1.75)))
        for s in ("implicit-euler", "crank-nicolson")
    )
    sup = 0.0
    for s in ("implicit-euler", "crank-nicolson"):
        a = solve_linear(_heat("sin(2*x)*exp(t)", "1 + t", "x^2"), s).values
        b = solve_linear(_heat("cos(x) + t", "x - t^2", "exp(x)"), s).values
        ab = solve_linear(_heat("sin(2*x)*exp(t) + cos(x) + t", "1 + t + x - t^2", "x^2 + exp(x)"), s).values
        sup = max(sup, float(np.max(np.abs(a + b - ab)) / np.max(np.abs(ab))))
    rep = run(from_preset("mms-converge", "heat-dynbc"))
    so, to = rep.outputs["spatial_order"], rep.outputs["temporal_order"]
    ok = const <= 1e-12 and sup <= 1e-12 and rep.passed
    detail = f"constants {const:.1e}, superposition {sup:.1e}, spatial order {so:.3f} (>= 1.8), temporal order {to:.3f} in [0.85, 1.15]"
    _finish(record, 2, ok, detail, t0, 120)


# ---------------------------------------------------------------------------
# 3. compatibility necessity
# ---------------------------------------------------------------------------


def test_criterion_03_compatibility_necessity(record):
    t0 = time.perf_counter()
    rep = run(from_preset("compat-necessity"))
    o = rep.outputs
    growth = ", ".join(f"{g:.3f}" for g in o["growth"])
    detail = (
        f"incompatible seminorm growth per 4x refinement [{growth}] (need >= 2 each), "
        f"compatible variation {o['compatible_variation']:.1e} (< 0.1)"
    )
    _finish(record, 3, rep.passed, detail, t0, 120)


# ---------------------------------------------------------------------------
# 4. small-time scaling
# ---------------------------------------------------------------------------


def test_criterion_04_small_time_scaling(record):
    t0 = time.perf_counter()
    rep = run(from_preset("scaling", "heat-dynbc"))
    o = rep.outputs
    detail = f"sup-norm slope {o['sup_slope']:.3f} in [0.85, 1.15], gradient-norm slope {o['gradient_slope']:.3f} in [0.35, 0.7]"
    _finish(record, 4, rep.passed, detail, t0, 120)


# ---------------------------------------------------------------------------
# 5. Picard contraction
# ---------------------------------------------------------------------------


def test_criterion_05_picard_contraction(record):
    t0 = time.perf_counter()
    rep = run(from_preset("contraction", "quasilinear-1+u2", seed=0))
    o = rep.outputs
    detail = (
        f"median-ratio quotient {o['quotient']:.3f} in [1.5, 2.7], "
        f"max iterations {o['max_iterations_used']} (<= 8), shrunk windows {o['shrunk_windows']}"
    )
    _finish(record, 5, rep.passed, detail, t0, 180)


# ---------------------------------------------------------------------------
# 6. degenerate reduction
# ---------------------------------------------------------------------------


def test_criterion_06_degenerate_reduction(record):
    t0 = time.perf_counter()
    results = []
    for scheme in ("implicit-euler", "crank-nicolson"):
        g = build_interval_grid(0, 1, 65)
        s = ProblemSpec(
            g, 0.16, 64, {"xx": "1 + 0.5*sin(3*x)*exp(-t)"},
            f="sqrt(sqrt((x - 0.5)^2))", b={"x": "(2*x - 1)*(1 + t)"}, h="sqrt(sqrt((x - 0.5)^2))", scheme=scheme,
        )
        sol, trace = picard_solve(s, PicardConfig())
        direct = solve_linear(as_linear_problem(s), scheme)
        results.append((trace.linear_solves, bool(np.array_equal(sol.values, direct.values))))
    ok = all(n == 2 and same for n, same in results)
    detail = ", ".join(f"{n} linear solves, bit-identical {same}" for n, same in results)
    _finish(record, 6, ok, detail, t0, None)


# ---------------------------------------------------------------------------
# 7. uniqueness
# ---------------------------------------------------------------------------


def test_criterion_07_uniqueness(record):
    t0 = time.perf_counter()
    rep = run(from_preset("uniqueness", "quasilinear-1+u2"))
    o = rep.outputs
    detail = f"deviation {o['deviation']:.2e} (<= {rep.thresholds['max_deviation']:.0e}), radius {o['radius']:.3f}"
    _finish(record, 7, rep.passed, detail, t0, 120)


# ---------------------------------------------------------------------------
# 8. quasilinear manufactured solution over four windows
# ---------------------------------------------------------------------------


def test_criterion_08_quasilinear_mms(record):
    t0 = time.perf_counter()
    cfg = loads_config("[problem]\npreset = quasilinear-1+u2\n[experiment]\nname = mms-converge\nwindows = 4\n")
    rep = run(cfg)
    o = rep.outputs
    four = all(w == 4 for w in o["windows"])
    ok = rep.passed and four
    detail = (
        f"spatial order {o['spatial_order']:.3f} (>= 1.8), temporal order {o['temporal_order']:.3f} in [0.85, 1.15], "
        f"windows per run {sorted(set(o['windows']))}"
    )
    _finish(record, 8, ok, detail, t0, 180)


# ---------------------------------------------------------------------------
# 9. expression layer
# ---------------------------------------------------------------------------

_VARS = ("t", "x", "y", "u", "p1", "p2")


def _random_tree(rng, depth):
    """Unrestricted random tree for parsing and evaluation."""
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.6:
            return ex.Var(_VARS[rng.integers(len(_VARS))])
        return ex.Const(round(float(rng.uniform(-5, 5)), 3))
    r = rng.random()
    if r < 0.15:
        return ex.Neg(_random_tree(rng, depth - 1))
    if r < 0.4:
        fn = ("sin", "cos", "exp", "tanh", "sqrt")[rng.integers(5)]
        return ex.Call(fn, _random_tree(rng, depth - 1))
    if r < 0.55:
        return ex.BinOp("^", _random_tree(rng, depth - 1), ex.Const((2.0, 3.0, 0.5, -1.0, 1.5)[rng.integers(5)]))
    op = "+-*/"[rng.integers(4)]
    return ex.BinOp(op, _random_tree(rng, depth - 1), _random_tree(rng, depth - 1))


def _smooth_tree(rng, depth):
    """Random tree that is smooth and moderate on the sampling box."""
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.7:
            return ex.Var(("t", "x", "u", "p1")[rng.integers(4)])
        return ex.Const(round(float(rng.uniform(-2, 2)), 3))
    a = _smooth_tree(rng, depth - 1)
    r = rng.integers(9)
    one = ex.Const(1.0)
    if r == 0:
        return ex.Call("sin", a)
    if r == 1:
        return ex.Call("cos", a)
    if r == 2:
        return ex.Call("tanh", a)
    if r == 3:
        return ex.Call("exp", ex.Call("tanh", a))
    if r == 4:
        return ex.Call("sqrt", ex.BinOp("+", one, ex.BinOp("^", a, ex.Const(2.0))))
    if r == 5:
        return ex.BinOp("/", a, ex.BinOp("+", one, ex.BinOp("^", a, ex.Const(2.0))))
    b = _smooth_tree(rng, depth - 1)
    return ex.BinOp("+-*"[r - 6], a, b)


def test_criterion_09_expression_layer(record):
    t0 = time.perf_counter()
    rng = np.random.default_rng(9)
    # derivative against a central difference, one random point per tree
    worst, n_pts = 0.0, 0
    step = 1e-6
    while n_pts < 1000:
        tree = _smooth_tree(rng, 4)
        var = ("t", "x", "u", "p1")[rng.integers(4)]
        ctx = {v: float(rng.uniform(0.1, 1.5)) for v in _VARS}
        d = float(ex.evaluate(ex.differentiate(tree, var), ctx))
        up, dn = dict(ctx), dict(ctx)
        up[var] += step
        dn[var] -= step
        fd = (float(ex.evaluate(tree, up)) - float(ex.evaluate(tree, dn))) / (2 * step)
        worst = max(worst, abs(d - fd) / max(abs(d), 1.0))
        n_pts += 1
    # round trip and dual evaluation on valid random trees
    n_trees, round_trip, dual = 0, True, True
    while n_trees < 1000:
        tree = _random_tree(rng, 5)
        ctx = {v: rng.uniform(0.1, 1.5, 16) for v in _VARS}
        try:
            ours = np.broadcast_to(ex.evaluate(tree, ctx), (16,))
        except ex.ExprEvalError:
            continue
        text = ex.to_string(tree)
        round_trip = round_trip and ex.parse(text) == tree
        dual = dual and bool(np.array_equal(ours, np.broadcast_to(py_eval(text, ctx), (16,))))
        n_trees += 1
    ok = worst < 1e-6 and round_trip and dual
    detail = f"max relative derivative error {worst:.1e} (< 1e-6) over {n_pts} points, round trip {round_trip}, dual evaluator {dual} over {n_trees} trees"
    _finish(record, 9, ok, detail, t0, 10)


# ---------------------------------------------------------------------------
# 10. strip geometry
# ---------------------------------------------------------------------------


def test_criterion_10_strip_geometry(record):
    t0 = time.perf_counter()
    g = build_strip_grid(2 * math.pi, 16, 9)
    tg = TimeGrid(0, 0.2, 4)
    normal = normal_coefficient(g)
    base = check_transversality(LinearCoefficients(b_y=normal), g, tg)
    tangential = [0.5, "0.5 + 0.25*sin(x)", "-40*cos(3*x)*t", 1e6]
    same = all(check_transversality(LinearCoefficients(b_x=bx, b_y=normal), g, tg) == base for bx in tangential)
    rep = run(from_preset("mms-converge", "strip-tangential"))
    o = rep.outputs
    ok = same and base == 1.0 and rep.passed
    detail = (
        f"transversality {base} regardless of tangential drift: {same}; "
        f"strip spatial order {o['spatial_order']:.3f} (>= 1.8), temporal order {o['temporal_order']:.3f} in [0.85, 1.15]"
    )
    _finish(record, 10, ok, detail, t0, 180)
