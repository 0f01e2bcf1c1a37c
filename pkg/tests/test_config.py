import math
import pathlib
import textwrap

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dynbc.config import (
    DEFAULT_PRESETS,
    EXPERIMENTS,
    ConfigError,
    build_picard,
    build_spec,
    from_preset,
    load_config,
    loads_config,
    serialize,
)
from dynbc.presets import PRESETS


def _load(text, **kw):
    return loads_config(textwrap.dedent(text), "run.ini", **kw)


MINIMAL = """\
[problem]
geometry = interval
n_nodes = 17
a_xx = "1 + u^2"
b_x = "2*x - 1"
T = 0.1

[solver]
n_steps = 8

[experiment]
name = solve
"""


def test_minimal_config_fills_defaults():
    cfg = _load(MINIMAL)
    assert cfg.name == "solve" and cfg.seed == 0
    p = cfg.problem
    assert (p["x_lo"], p["x_hi"], p["f"], p["h"], p["u0"], p["beta"]) == (0.0, 1.0, "0", "0", "0", 0.5)
    assert cfg.solver == {
        "scheme": "implicit-euler", "tol": 1e-10, "max_iter": 50, "rho_max": 0.5,
        "shrink": 0.5, "adaptive": True, "n_steps": 8,
    }
    assert cfg.experiment == {"manufactured": None}
    spec = build_spec(cfg)
    assert spec.grid.n_nodes == 17 and spec.n_steps == 8
    assert build_picard(cfg).R is None


def test_boundary_gradient_rejected_with_location():
    text = MINIMAL.replace('b_x = "2*x - 1"', 'b_1 = "2*x - 1 + p1"')
    with pytest.raises(ConfigError) as err:
        _load(text)
    msg = str(err.value)
    assert msg.startswith("run.ini:5:")
    assert "gradient" in msg and "b_1" in msg


def test_h_gradient_rejected():
    with pytest.raises(ConfigError, match="gradient"):
        _load(MINIMAL.replace("T = 0.1", 'T = 0.1\nh = "p1"'))


def test_alias_is_accepted():
    cfg = _load(MINIMAL.replace("a_xx", "a_2").replace("b_x", "b_1"))
    assert cfg.problem["a_xx"] == "1 + u^2" and cfg.problem["b_x"] == "2*x - 1"


def test_alias_conflict():
    text = MINIMAL.replace("T = 0.1", 'T = 0.1\na_2 = "2"')
    with pytest.raises(ConfigError, match=r"run.ini:7: 'a_2' conflicts with 'a_xx'"):
        _load(text)


def test_dt_and_n_steps_conflict():
    with pytest.raises(ConfigError, match="either 'dt' or 'n_steps'"):
        _load(MINIMAL.replace("n_steps = 8", "n_steps = 8\ndt = 0.0125"))


def test_dt_must_divide_horizon():
    cfg = _load(MINIMAL.replace("n_steps = 8", "dt = 0.025"))
    assert cfg.solver["n_steps"] == 4
    with pytest.raises(ConfigError, match="does not divide"):
        _load(MINIMAL.replace("n_steps = 8", "dt = 0.03"))


def test_duplicate_key_and_section():
    # the second occurrence is on line 4
    with pytest.raises(ConfigError, match=r"run.ini:4: key 'n_nodes' appears twice"):
        _load(MINIMAL.replace("a_xx", "n_nodes = 9\na_xx", 1))
    with pytest.raises(ConfigError, match="appears twice"):
        _load(MINIMAL + "\n[solver]\ntol = 1e-8\n")


@pytest.mark.parametrize(
    "change, pattern",
    [
        (("T = 0.1", "T = 0.1\nspeed = 3"), r"run.ini:7: unknown key 'speed'"),
        (("T = 0.1", "T = -0.1"), "T must be positive"),
        (("T = 0.1", "T = 0.1\nbeta = 1.0"), "beta"),
        (('a_xx = "1 + u^2"', "a_xx = 1 + u^2"), "double-quoted"),
        (('a_xx = "1 + u^2"', 'a_xx = "1 + + u"'), "cannot parse"),
        (("n_nodes = 17", "n_nodes = many"), "invalid int"),
        (("n_steps = 8", "n_steps = 8\nscheme = rk4"), "scheme"),
        (("name = solve", "name = fly"), "unknown experiment"),
        (("name = solve", "name = solve\nlevels = 3"), "does not apply"),
        (("geometry = interval", "geometry = sphere"), "geometry"),
        (("T = 0.1", "T = 0.1\nn_x = 8"), "does not apply to interval problems"),
    ],
)
def test_rejections(change, pattern):
    text = MINIMAL.replace(*change)
    with pytest.raises(ConfigError, match=pattern):
        _load(text)


def test_unknown_section():
    with pytest.raises(ConfigError, match=r"run.ini:\d+: unknown section \[output\]"):
        _load(MINIMAL + "\n[output]\ndir = x\n")


def test_missing_required_key():
    with pytest.raises(ConfigError, match="missing key 'n_nodes'"):
        _load(MINIMAL.replace("n_nodes = 17\n", ""))


def test_experiment_name_must_agree():
    with pytest.raises(ConfigError, match="was requested"):
        _load(MINIMAL, experiment="validate")
    assert _load(MINIMAL.replace("name = solve\n", ""), experiment="validate").name == "validate"


def test_seed_precedence():
    assert _load(MINIMAL).seed == 0
    text = MINIMAL + "seed = 4\n"
    assert _load(text).seed == 4
    assert _load(text, seed=9).seed == 9


def test_mms_needs_exact():
    with pytest.raises(ConfigError, match="exact"):
        _load(MINIMAL.replace("name = solve", "name = mms-converge"))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.ini")


def test_load_config_reports_path(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text(MINIMAL.replace("T = 0.1", "T = 0.1\nspeed = 3"))
    with pytest.raises(ConfigError, match=r"bad.ini:7:"):
        load_config(path)


def test_preset_with_override():
    cfg = _load("[problem]\npreset = heat-dynbc\nn_nodes = 33\n[solver]\nn_steps = 16\n", experiment="validate")
    assert cfg.problem["n_nodes"] == 33 and cfg.solver["n_steps"] == 16
    assert cfg.problem["a_xx"] == PRESETS["heat-dynbc"]["a_xx"]


@pytest.mark.parametrize("experiment", EXPERIMENTS)
def test_every_default_preset_round_trips(experiment):
    cfg = from_preset(experiment)
    assert cfg.problem["preset"] == DEFAULT_PRESETS[experiment]
    again = loads_config(serialize(cfg))
    assert again == cfg
    assert serialize(again) == serialize(cfg)


_EXPRS = ["1", "1 + u^2", "2 + sin(u)*p1^2", "exp(-t)*x", "0.5"]
_BEXPRS = ["2*x - 1", "(2*x - 1)*(1 + u^2)", "(2*x - 1)*(2 + cos(t))"]


@settings(max_examples=60, deadline=None)
@given(
    st.integers(3, 300),
    st.floats(1e-3, 10, allow_nan=False),
    st.floats(0.01, 0.99),
    st.sampled_from(_EXPRS),
    st.sampled_from(_BEXPRS),
    st.sampled_from(["implicit-euler", "crank-nicolson"]),
    st.integers(1, 500),
    st.floats(1e-14, 1e-4),
    st.booleans(),
    st.integers(0, 2**31),
)
def test_round_trip_property(n, T, beta, a, b, scheme, steps, tol, adaptive, seed):
    text = (
        f'[problem]\ngeometry = interval\nn_nodes = {n}\na_xx = "{a}"\nb_x = "{b}"\nT = {T!r}\nbeta = {beta!r}\n'
        f"[solver]\nscheme = {scheme}\nn_steps = {steps}\ntol = {tol!r}\nadaptive = {str(adaptive).lower()}\n"
        f"[experiment]\nname = validate\nseed = {seed}\n"
    )
    cfg = loads_config(text)
    again = loads_config(serialize(cfg))
    assert again == cfg
    assert again.problem["T"] == T and again.solver["tol"] == tol


def test_strip_config():
    cfg = from_preset("solve", "strip-tangential")
    spec = build_spec(cfg)
    assert spec.grid.dim == 2
    assert cfg.problem["period"] == 2 * math.pi
    with pytest.raises(ConfigError, match="does not apply"):
        _load("[problem]\npreset = strip-tangential\nn_nodes = 5\n", experiment="solve")


_CONFIG_DIR = pathlib.Path(__file__).resolve().parent.parent / "configs"


@pytest.mark.parametrize("path", sorted(_CONFIG_DIR.glob("*.ini")), ids=lambda p: p.name)
def test_shipped_configs_load(path):
    cfg = load_config(path)
    assert loads_config(serialize(cfg)) == cfg
    build_spec(cfg)
