import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynbc import expr as ex
from dynbc.geometry import SpaceTimeField, TimeGrid, build_interval_grid, build_strip_grid, gradient
from dynbc.holder import parabolic_norm, picard_metric
from dynbc.linear import PreconditionError, normal_coefficient, solve_linear
from dynbc.quasilinear import (
    CompatibilityError,
    IterationTrace,
    PicardConfig,
    PicardError,
    ProblemSpec,
    as_linear_problem,
    build_U0,
    check_AG4,
    check_compatibility,
    continue_in_time,
    default_radius,
    freeze_coefficients,
    nemytskii_lipschitz_probe,
    picard_solve,
    uniqueness_probe,
)

NU = "2*x - 1"


def _spec(n=17, steps=16, T=0.1, a_xx="1 + u^2", f="0", h="0", u0="0", b_x=NU, **kw):
    g = build_interval_grid(0, 1, n)
    return ProblemSpec(g, T, steps, {"xx": a_xx}, f=f, b={"x": b_x}, h=h, u0=u0, **kw)


# a compatible quasilinear problem with a nontrivial solution: the data are
# constant-in-space sources with f = h so the boundary residual vanishes at u0 = 0
def _driven(**kw):
    kw.setdefault("f", "1 + 0.5*sin(3*t)")
    kw.setdefault("h", "1 + 0.5*sin(3*t)")
    return _spec(**kw)


# ---------------------------------------------------------------------------
# structural checks
# ---------------------------------------------------------------------------


def test_structure_constants_examples():
    nu_i, nu_b = check_AG4(_spec(), {"u": (-1, 1)})
    assert nu_i == 1.0 and nu_b == 1.0
    s = _spec(a_xx="0.5*(2 + sin(u))")
    nu_i, _ = check_AG4(s, {"u": (-math.pi / 2, math.pi / 2)})
    assert nu_i == 0.5


def test_transversality_constant_depends_on_u():
    s = _spec(b_x="(2*x - 1)*(2 + sin(u))")
    assert check_AG4(s, {"u": (-math.pi / 2, math.pi / 2)})[1] == 1.0
    s = _spec(b_x="(2*x - 1)*(1 + u^2)")
    assert check_AG4(s, {"u": (-2, 2)})[1] == 1.0
    s = _spec(b_x="(2*x - 1)*u")
    assert check_AG4(s, {"u": (-1, 1)})[1] == -1.0


def test_structure_constants_require_u_range():
    with pytest.raises(ValueError):
        check_AG4(_spec(), {"p1": (0, 1)})


def test_ellipticity_constant_matches_eigenvalue_formula():
    g = build_strip_grid(2 * math.pi, 6, 5)
    s = ProblemSpec(
        g, 0.1, 2, {"xx": "1 + u^2", "xy": "u/2", "yy": "1"},
        b={"x": "sin(x)", "y": normal_coefficient(g)},
    )
    nu_i, nu_b = check_AG4(s, {"u": (-1, 1)}, samples=9)
    # closed form of the smaller eigenvalue of [[1 + u^2, u/2], [u/2, 1]]
    formula = min(
        (2 + u * u - math.sqrt(u**4 + u * u)) / 2 for u in np.linspace(-1, 1, 9).tolist()
    )
    dense = min(
        np.linalg.eigvalsh([[1 + u * u, u / 2], [u / 2, 1]])[0] for u in np.linspace(-1, 1, 9)
    )
    assert nu_i == pytest.approx(formula, abs=1e-14)
    assert nu_i == pytest.approx(dense, abs=1e-14)
    assert nu_b == 1.0


def test_ellipticity_constant_gradient_lattice():
    g = build_strip_grid(2 * math.pi, 6, 5)
    s = ProblemSpec(
        g, 0.1, 2, {"xx": "1 + p1^2", "xy": "0.5*u*cos(x)", "yy": "1 + 0.2*p2"},
        b={"x": "sin(x)", "y": normal_coefficient(g)},
    )
    box = {"u": (-1, 1), "p1": (-1, 1), "p2": (0, 1)}
    nu_i, _ = check_AG4(s, box, samples=3)
    best = math.inf
    for u, p1, p2 in itertools.product(np.linspace(-1, 1, 3), np.linspace(-1, 1, 3), np.linspace(0, 1, 3)):
        for x in g.x:
            m = np.array([[1 + p1**2, 0.5 * u * math.cos(x)], [0.5 * u * math.cos(x), 1 + 0.2 * p2]])
            best = min(best, np.linalg.eigvalsh(m)[0])
    assert nu_i == pytest.approx(best, abs=1e-12)


def test_boundary_coefficients_reject_gradient():
    with pytest.raises(PreconditionError, match="b_x"):
        _spec(b_x="p1")
    with pytest.raises(PreconditionError):
        _spec(h="u + p1")


def test_compatibility_examples():
    _, m = check_compatibility(_spec(f="1", h="1"))
    assert m == 0.0
    r, _ = check_compatibility(_spec(u0="x*(1 - x)", a_xx="1"))
    np.testing.assert_allclose(r, [-3.0, -3.0], rtol=0, atol=1e-12)
    # with a_xx = 1 + u^2 the boundary values u = 0 leave the same residual
    r, _ = check_compatibility(_spec(u0="x*(1 - x)"))
    np.testing.assert_allclose(r, [-3.0, -3.0], rtol=0, atol=1e-12)


def test_incompatible_data_rejected_before_iterating():
    with pytest.raises(CompatibilityError, match="compatibility residual"):
        build_U0(_spec(f="1", h="0"))
    trace = IterationTrace()
    with pytest.raises(CompatibilityError):
        picard_solve(_spec(f="1", h="0"), trace=trace)
    assert trace.linear_solves == 0


def test_default_radius():
    assert default_radius(_spec()) == 1.0
    assert default_radius(_spec(u0="2")) == 5.0


# ---------------------------------------------------------------------------
# freezing
# ---------------------------------------------------------------------------


def test_freeze_matches_direct_evaluation():
    s = _spec(n=9, steps=3, a_xx="1 + u^2 + 0.1*p1", f="t*u - p1", b_x="(2*x - 1)*(2 + u)", h="x*u")
    g = s.grid
    tg = s.time
    rng = np.random.default_rng(7)
    vals = rng.normal(size=(tg.n_levels, g.size))
    vals[0] = s.u0
    U = SpaceTimeField(g, tg.times, vals)
    lp = freeze_coefficients(s, U)
    c = lp.coeffs
    for n, t in enumerate(tg.times):
        u = vals[n]
        p = gradient(u, g)[0]
        np.testing.assert_array_equal(np.broadcast_to(c.a_xx, vals.shape)[n], 1 + u**2 + 0.1 * p)
        np.testing.assert_array_equal(np.broadcast_to(lp.f, vals.shape)[n], t * u - p)
        bx = np.broadcast_to(c.b_x, vals.shape)[n]
        hh = np.broadcast_to(lp.h, vals.shape)[n]
        for i in g.boundary_index:
            assert bx[i] == (2 * g.x[i] - 1) * (2 + u[i])
            assert hh[i] == g.x[i] * u[i]


def test_freeze_requires_initial_condition():
    s = _spec(n=9, steps=2)
    U = SpaceTimeField(s.grid, s.time.times, np.ones((3, 9)))
    with pytest.raises(PreconditionError, match="initial"):
        freeze_coefficients(s, U)


def test_build_U0_solves_with_initial_coefficients():
    s = _spec(u0="0.5", f="0", h="0")
    U0 = build_U0(s)
    # constants are stationary for the frozen problem
    assert np.max(np.abs(U0.values - 0.5)) <= 1e-12


# ---------------------------------------------------------------------------
# Picard iteration
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("scheme", ["implicit-euler", "crank-nicolson"])
def test_degenerate_reduction_is_one_linear_solve(scheme):
    s = _spec(a_xx="1 + 0.5*sin(x)", f="sin(3*x)*exp(-t) + 1", h="1 + t", b_x="(2*x - 1)*(1 + t)", u0="0", scheme=scheme)
    sol, trace = picard_solve(s, PicardConfig())
    assert trace.linear_solves == 2
    assert trace.iterations == 1
    direct = solve_linear(as_linear_problem(s), scheme)
    assert np.array_equal(sol.values, direct.values)
    assert trace.rows[0]["d"] == 0.0


def test_picard_fixed_point_consistency():
    s = _driven()
    cfg = PicardConfig(tol=1e-10)
    sol, trace = picard_solve(s, cfg)
    assert trace.windows[-1]["converged"]
    again = solve_linear(freeze_coefficients(s, sol.field, s.time), s.scheme)
    assert picard_metric(again.field, sol.field, beta=s.beta) <= 2 * cfg.tol


def test_trace_accounting():
    s = _driven()
    sol, trace = continue_in_time(s, PicardConfig(tau=0.025))
    assert trace.u0_builds == len(trace.windows)
    assert trace.linear_solves == trace.u0_builds + sum(w["iterations"] for w in trace.windows)
    assert len(trace.rows) == sum(w["iterations"] for w in trace.windows)
    by_window = {}
    for r in trace.rows:
        by_window.setdefault(r["window"], []).append(r)
    for rows in by_window.values():
        assert [r["k"] for r in rows] == list(range(1, len(rows) + 1))
        assert rows[0]["ratio"] is None
        for a, b in zip(rows, rows[1:]):
            assert b["ratio"] == b["d"] / a["d"]
    assert all(w["converged"] for w in trace.windows)


def test_trace_csv(tmp_path):
    _, trace = picard_solve(_driven(), PicardConfig())
    path = tmp_path / "trace.csv"
    trace.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "window,t0,tau,k,d_k,r_k,ball"
    assert len(lines) == 1 + len(trace.rows)


def test_windows_agree_with_single_window():
    # the time stepping is causal, so the windowed fixed point matches the
    # full horizon one up to the iteration tolerance
    s = _driven()
    one, _ = picard_solve(s, PicardConfig(tol=1e-12))
    many, trace = continue_in_time(s, PicardConfig(tol=1e-12, tau=0.025))
    assert many.seams == pytest.approx((0.025, 0.05, 0.075), abs=1e-15)
    np.testing.assert_allclose(many.times, one.times, rtol=0, atol=1e-15)
    assert np.max(np.abs(many.values - one.values)) <= 1e-10


def test_window_restart_reproduces_tail():
    s = _driven()
    full, trace = continue_in_time(s, PicardConfig(tau=0.05, tol=1e-12))
    k = s.n_steps // 2
    tail, _ = picard_solve(s, PicardConfig(tol=1e-12), start=k, u_start=full.values[k])
    assert np.max(np.abs(tail.values - full.values[k:])) <= 1e-10


def test_adaptive_window_halves():
    # a strongly nonlinear diffusion on a long horizon forces shrinking
    s = _driven(a_xx="1 + 4*u^2", T=0.8, steps=32, f="4*cos(5*x)", h="4*cos(5*x)")
    sol, trace = continue_in_time(s, PicardConfig(rho_max=0.2))
    reasons = [w["reason"] for w in trace.windows]
    assert "converged" in reasons
    assert any(r in ("slow contraction", "left ball") for r in reasons)
    shrunk = [w for w in trace.windows if not w["converged"]]
    assert all(w["tau"] > 0 for w in shrunk)
    assert sol.times[-1] == pytest.approx(0.8, abs=1e-14)


def test_non_adaptive_failure_is_reported():
    s = _driven(a_xx="1 + 4*u^2", T=0.8, steps=32, f="4*cos(5*x)", h="4*cos(5*x)")
    with pytest.raises(PicardError, match="no convergence"):
        picard_solve(s, PicardConfig(adaptive=False, max_iter=3))


def test_seam_compatibility_is_rechecked():
    # h switches on sharply at the seam, f stays zero
    s = _spec(T=0.1, steps=20, a_xx="1", f="0", h="tanh(1000*(t - 0.05)) + 1")
    with pytest.raises(CompatibilityError, match="seam"):
        continue_in_time(s, PicardConfig(tau=0.05))


# ---------------------------------------------------------------------------
# uniqueness and the substitution maps
# ---------------------------------------------------------------------------


def test_uniqueness_probe_converges_to_one_solution():
    s = _driven()
    cfg = PicardConfig(tol=1e-11)
    R = default_radius(s)
    res = uniqueness_probe(s, cfg, [None, "t*sin(3*x + 1)", "-t*sin(3*x + 1)"], [None, R / 2, R / 2])
    assert res.deviation <= 10 * cfg.tol
    assert len(res.solutions) == 3


def test_uniqueness_rejects_offsets_outside_the_ball():
    s = _driven()
    R = default_radius(s)
    with pytest.raises(PreconditionError, match="outside the ball"):
        uniqueness_probe(s, PicardConfig(), ["t*x"], [2 * R])


def test_uniqueness_rejects_offsets_nonzero_initially():
    with pytest.raises(PreconditionError, match="vanish"):
        uniqueness_probe(_driven(), PicardConfig(), ["1 + t"])


def test_nemytskii_probe_linear_source_oracle():
    s = _spec(n=9, steps=4, a_xx="1", f="3*u", h="0")
    g, tg = s.grid, s.time
    rng = np.random.default_rng(11)
    pairs = []
    for _ in range(3):
        a, b = rng.normal(size=(2, tg.n_levels, g.size))
        a[0] = b[0] = s.u0
        pairs.append((SpaceTimeField(g, tg.times, a), SpaceTimeField(g, tg.times, b)))
    pairs.append((pairs[0][0], pairs[0][0]))
    out = nemytskii_lipschitz_probe(s, pairs)
    assert out["skipped"] == [3]
    assert out["boundary"] == 0.0
    for r, (U, V) in zip(out["ratios"], pairs):
        W = (U - V).values
        expect = parabolic_norm(SpaceTimeField(g, tg.times, 3 * W), 0.25, 0.5) / picard_metric(U, V, beta=0.5)
        assert r["interior"] == pytest.approx(expect, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(st.floats(0.01, 0.5), st.integers(0, 1000))
def test_nemytskii_ratio_bounded_for_small_pairs(scale, seed):
    # 1 + u^2 is Lipschitz on bounded sets, so small pairs give bounded ratios
    s = _spec(n=9, steps=4, f="0", h="u^2", b_x="(2*x - 1)*(1 + u^2)")
    g, tg = s.grid, s.time
    rng = np.random.default_rng(seed)
    base = np.sin(np.outer(tg.times, g.x) * 3)
    pert = scale * np.outer(tg.times, np.cos(g.x * rng.uniform(1, 3)))
    U = SpaceTimeField(g, tg.times, base)
    V = SpaceTimeField(g, tg.times, base + pert)
    out = nemytskii_lipschitz_probe(s, [(U, V)])
    assert 0 < out["interior"] < 50
    assert 0 < out["boundary"] < 50


def test_as_linear_problem_rejects_nonlinear():
    with pytest.raises(PreconditionError, match="not linear"):
        as_linear_problem(_spec())


def test_spec_validation():
    with pytest.raises(PreconditionError):
        _spec(beta=1.0)
    with pytest.raises(PreconditionError):
        _spec(T=-1)
    with pytest.raises(PreconditionError):
        _spec(scheme="leapfrog")
    g = build_interval_grid(0, 1, 5)
    with pytest.raises(PreconditionError, match="unexpected"):
        ProblemSpec(g, 1.0, 2, {"xx": 1, "yy": 1})
    with pytest.raises(ValueError):
        PicardConfig(rho_max=1.0)
    assert ex.variables(_spec().a["xx"]) == {"u"}
