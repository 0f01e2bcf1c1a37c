"""INI-style run configuration.

A config has ``[problem]``, ``[solver]`` and ``[experiment]`` sections of
``key = value`` lines.  Expression values are double-quoted strings;
numbers and lists (comma separated) are bare.  ``preset = NAME`` in
``[problem]`` pulls in a named preset whose keys can then be overridden.

Example
-------
::

    [problem]
    preset = heat-dynbc
    a_xx = "1 + u^2"

    [solver]
    n_steps = 32

    [experiment]
    name = solve
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field

from . import expr as ex
from .geometry import build_interval_grid, build_strip_grid
from .linear import SCHEMES
from .presets import PRESETS, preset

__all__ = [
    "ConfigError",
    "RunConfig",
    "EXPERIMENTS",
    "DEFAULT_PRESETS",
    "load_config",
    "loads_config",
    "from_preset",
    "serialize",
    "build_grid",
    "build_spec",
    "build_picard",
    "exact_solutions",
]

EXPERIMENTS = ("validate", "solve", "mms-converge", "scaling", "contraction", "uniqueness", "compat-necessity")

# preset used when an experiment is run without a config file
DEFAULT_PRESETS = {
    "validate": "heat-dynbc",
    "solve": "quasilinear-1+u2",
    "mms-converge": "heat-dynbc",
    "scaling": "heat-dynbc",
    "contraction": "quasilinear-1+u2",
    "uniqueness": "quasilinear-1+u2",
    "compat-necessity": "heat-dynbc",
}


class ConfigError(ValueError):
    """Invalid configuration; the message carries ``file:line`` when known."""


# key -> kind; kinds: expr, float, int, str, floats, ints, bool
_PROBLEM = {
    "preset": "str",
    "geometry": "str",
    "x_lo": "float",
    "x_hi": "float",
    "n_nodes": "int",
    "period": "float",
    "n_x": "int",
    "n_y": "int",
    "height": "float",
    "a_xx": "expr",
    "a_xy": "expr",
    "a_yy": "expr",
    "b_x": "expr",
    "b_y": "expr",
    "f": "expr",
    "h": "expr",
    "u0": "expr",
    "T": "float",
    "beta": "float",
    "exact": "expr",
    "exact_time": "expr",
}
_ALIASES = {"a_2": "a_xx", "b_1": "b_x", "b_2": "b_y"}
_SOLVER = {
    "scheme": "str",
    "n_steps": "int",
    "dt": "float",
    "R": "float",
    "tau": "float",
    "tol": "float",
    "max_iter": "int",
    "rho_max": "float",
    "shrink": "float",
    "compat_tol": "float",
    "adaptive": "bool",
}
_SOLVER_DEFAULTS = {"scheme": "implicit-euler", "tol": 1e-10, "max_iter": 50, "rho_max": 0.5, "shrink": 0.5, "adaptive": True}

_EXPERIMENT_KEYS = {
    "validate": {"samples": ("int", 5)},
    # manufactured: None means "use the exact solution when one is set"
    "solve": {"manufactured": ("bool", None)},
    "mms-converge": {
        "levels": ("int", 4),
        "windows": ("int", 1),
        "min_spatial_order": ("float", 1.8),
        "temporal_order_min": ("float", 0.85),
        "temporal_order_max": ("float", 1.15),
    },
    "scaling": {
        "horizons": ("floats", (0.02, 0.04, 0.08, 0.16)),
        "thetas": ("floats", (0.0,)),
        "time_slope_min": ("float", 0.85),
        "time_slope_max": ("float", 1.15),
        "gradient_slope_min": ("float", 0.35),
        "gradient_slope_max": ("float", 0.7),
    },
    "contraction": {
        "taus": ("floats", (0.04, 0.01)),
        "runs": ("int", 8),
        "quotient_min": ("float", 1.5),
        "quotient_max": ("float", 2.7),
        "max_iterations": ("int", 8),
    },
    "uniqueness": {
        "offset": ("expr", "t*sin(3*x + 1)"),
        "manufactured": ("bool", None),
        "factor": ("float", 10.0),
    },
    "compat-necessity": {
        "steps": ("ints", (8, 32, 128)),
        "T": ("float", 0.1),
        "f_bad": ("expr", "1"),
        "h_bad": ("expr", "0"),
        "f_good": ("expr", "1"),
        "h_good": ("expr", "1"),
        "min_growth": ("float", 2.0),
        "max_variation": ("float", 0.1),
    },
}

# variables each expression may reference (y and p2 only on the strip)
_ROLE_VARS = {
    "a_xx": {"t", "x", "y", "u", "p1", "p2"},
    "a_xy": {"t", "x", "y", "u", "p1", "p2"},
    "a_yy": {"t", "x", "y", "u", "p1", "p2"},
    "f": {"t", "x", "y", "u", "p1", "p2"},
    "b_x": {"t", "x", "y", "u"},
    "b_y": {"t", "x", "y", "u"},
    "h": {"t", "x", "y", "u"},
    "u0": {"x", "y"},
    "exact": {"t", "x", "y"},
    "exact_time": {"t", "x", "y"},
    "offset": {"t", "x", "y"},
    "f_bad": {"t", "x", "y"},
    "h_bad": {"t", "x", "y"},
    "f_good": {"t", "x", "y"},
    "h_good": {"t", "x", "y"},
}
_INTERVAL_ONLY = ("x_lo", "x_hi", "n_nodes")
_STRIP_ONLY = ("period", "n_x", "n_y", "height", "a_xy", "a_yy", "b_y")


@dataclass(frozen=True)
class RunConfig:
    """A validated configuration with defaults filled.

    ``problem`` and ``solver`` hold resolved values (expressions as
    strings); ``experiment`` holds the experiment parameters, ``name`` is the
    selected experiment.
    """

    name: str
    problem: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    seed: int = 0
    source: str = "<string>"

    def __eq__(self, other):
        if not isinstance(other, RunConfig):
            return NotImplemented
        return (self.name, self.problem, self.solver, self.experiment, self.seed) == (
            other.name, other.problem, other.solver, other.experiment, other.seed)

    def with_seed(self, seed: int) -> "RunConfig":
        return RunConfig(self.name, self.problem, self.solver, self.experiment, int(seed), self.source)


class _Locator:
    """Map ``(section, key)`` to line numbers of the raw text."""

    def __init__(self, text: str, source: str):
        self.source = source
        self.lines: dict[tuple[str, str], int] = {}
        self.sections: dict[str, int] = {}
        sec = None
        for i, line in enumerate(text.splitlines(), 1):
            s = line.strip()
            m = re.match(r"\[([^\]]+)\]", s)
            if m:
                sec = m.group(1).strip()
                self.sections.setdefault(sec, i)
                continue
            m = re.match(r"([^=:#;\s][^=:]*?)\s*[=:]", s)
            if m and sec is not None:
                self.lines.setdefault((sec, m.group(1).strip()), i)

    def error(self, msg: str, section: str | None = None, key: str | None = None) -> ConfigError:
        line = self.lines.get((section, key)) if key else self.sections.get(section)
        where = f"{self.source}:{line}" if line else self.source
        return ConfigError(f"{where}: {msg}")


def _split_list(raw: str) -> list[str]:
    return [p.strip() for p in raw.split(",") if p.strip()]


def _convert(raw: str, kind: str, loc: _Locator, section: str, key: str):
    raw = raw.strip()
    try:
        if kind == "expr":
            if len(raw) >= 2 and raw[0] == raw[-1] == '"':
                text = raw[1:-1]
            else:
                try:
                    float(raw)
                except ValueError:
                    raise loc.error(f"expression value for {key!r} must be a double-quoted string", section, key) from None
                text = raw
            try:
                ex.parse(text)
            except ex.ExprSyntaxError as exc:
                raise loc.error(f"cannot parse {key!r}: {exc}", section, key) from None
            return text
        if kind == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
        if kind == "int":
            return int(raw)
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError
        if kind == "floats":
            vals = tuple(float(p) for p in _split_list(raw))
            if not vals or not all(math.isfinite(v) for v in vals):
                raise ValueError
            return vals
        if kind == "ints":
            vals = tuple(int(p) for p in _split_list(raw))
            if not vals:
                raise ValueError
            return vals
        return raw.strip('"')
    except ConfigError:
        raise
    except ValueError:
        raise loc.error(f"invalid {kind} value for {key!r}: {raw!r}", section, key) from None


def _check_vars(key: str, text: str, dim: int, loc, section, src_key):
    used = ex.variables(ex.parse(text))
    allowed = set(_ROLE_VARS[key])
    if dim == 1:
        allowed -= {"y", "p2"}
    bad = used - allowed
    if not bad:
        return
    if key in ("b_x", "b_y", "h") and bad & {"p1", "p2"}:
        msg = f"boundary coefficients may not use gradient variables ({', '.join(sorted(bad & {'p1', 'p2'}))}) in {src_key!r}"
    else:
        msg = f"{src_key!r} may not reference {sorted(bad)}"
    raise loc.error(msg, section, src_key)


def _resolve(parser: configparser.ConfigParser, loc: _Locator, experiment: str | None, seed: int | None) -> RunConfig:
    for sec in parser.sections():
        if sec not in ("problem", "solver", "experiment"):
            raise loc.error(f"unknown section [{sec}]", sec)
    psec = dict(parser["problem"]) if parser.has_section("problem") else {}
    ssec = dict(parser["solver"]) if parser.has_section("solver") else {}
    esec = dict(parser["experiment"]) if parser.has_section("experiment") else {}

    # problem: preset first, then explicit keys
    problem: dict = {}
    src_key: dict = {}
    solver: dict = dict(_SOLVER_DEFAULTS)
    if "preset" in psec:
        name = psec["preset"].strip().strip('"')
        if name not in PRESETS:
            raise loc.error(f"unknown preset {name!r}; choose from {sorted(PRESETS)}", "problem", "preset")
        base = preset(name)
        if "n_steps" in base:
            solver["n_steps"] = base.pop("n_steps")
        problem.update(base)
        problem["preset"] = name
    explicit = set()
    for raw_key, raw in psec.items():
        if raw_key == "preset":
            continue
        key = _ALIASES.get(raw_key, raw_key)
        if key not in _PROBLEM:
            raise loc.error(f"unknown key {raw_key!r} in [problem]", "problem", raw_key)
        if key in explicit:
            raise loc.error(f"{raw_key!r} conflicts with {src_key[key]!r}", "problem", raw_key)
        explicit.add(key)
        src_key[key] = raw_key
        problem[key] = _convert(raw, _PROBLEM[key], loc, "problem", raw_key)

    geom = problem.get("geometry")
    if geom is None:
        raise loc.error("missing key 'geometry' in [problem]", "problem")
    if geom not in ("interval", "strip"):
        raise loc.error(f"geometry must be 'interval' or 'strip', got {geom!r}", "problem", src_key.get("geometry", "geometry"))
    dim = 1 if geom == "interval" else 2
    wrong = _STRIP_ONLY if dim == 1 else _INTERVAL_ONLY
    for key in wrong:
        if key in explicit:
            raise loc.error(f"{src_key[key]!r} does not apply to {geom} problems", "problem", src_key[key])
        problem.pop(key, None)
    defaults = {"f": "0", "h": "0", "u0": "0", "beta": 0.5}
    if dim == 1:
        defaults.update(x_lo=0.0, x_hi=1.0)
        required = ("n_nodes", "a_xx", "b_x", "T")
    else:
        defaults.update(period=2 * math.pi, height=1.0, a_xy="0", a_yy="1", b_x="0")
        required = ("n_x", "n_y", "a_xx", "b_y", "T")
    for k, v in defaults.items():
        problem.setdefault(k, v)
    for k in required:
        if k not in problem:
            raise loc.error(f"missing key {k!r} in [problem]", "problem")
    for key, kind in _PROBLEM.items():
        if kind == "expr" and key in problem:
            problem[key] = str(problem[key])
            _check_vars(key, problem[key], dim, loc, "problem", src_key.get(key, key))
    if not problem["T"] > 0:
        raise loc.error("T must be positive", "problem", src_key.get("T", "T"))
    if not 0 < problem["beta"] < 1:
        raise loc.error("beta must lie in (0, 1)", "problem", src_key.get("beta", "beta"))

    # solver
    for key, raw in ssec.items():
        if key not in _SOLVER:
            raise loc.error(f"unknown key {key!r} in [solver]", "solver", key)
        solver[key] = _convert(raw, _SOLVER[key], loc, "solver", key)
    if "dt" in ssec and "n_steps" in ssec:
        raise loc.error("give either 'dt' or 'n_steps', not both", "solver", "dt")
    if "dt" in solver:
        dt = solver.pop("dt")
        n = round(problem["T"] / dt)
        if n < 1 or not math.isclose(n * dt, problem["T"], rel_tol=1e-9):
            raise loc.error(f"dt={dt!r} does not divide T={problem['T']!r}", "solver", "dt")
        solver["n_steps"] = int(n)
    if "n_steps" not in solver:
        raise loc.error("missing key 'n_steps' (or 'dt') in [solver]", "solver")
    if solver["n_steps"] < 1:
        raise loc.error("n_steps must be positive", "solver", "n_steps")
    if solver["scheme"] not in SCHEMES:
        raise loc.error(f"scheme must be one of {SCHEMES}", "solver", "scheme")

    # experiment
    name = esec.pop("name", None)
    name = name.strip().strip('"') if name is not None else None
    if experiment is not None:
        if name is not None and name != experiment:
            raise loc.error(f"config selects experiment {name!r} but {experiment!r} was requested", "experiment", "name")
        name = experiment
    if name is None:
        raise loc.error("no experiment selected; set 'name' in [experiment]", "experiment")
    if name not in EXPERIMENTS:
        raise loc.error(f"unknown experiment {name!r}; choose from {EXPERIMENTS}", "experiment", "name")
    cfg_seed = 0
    if "seed" in esec:
        cfg_seed = _convert(esec.pop("seed"), "int", loc, "experiment", "seed")
    spec_keys = _EXPERIMENT_KEYS[name]
    params = {k: v for k, (_, v) in spec_keys.items()}
    for key, raw in esec.items():
        if key not in spec_keys:
            raise loc.error(f"key {key!r} does not apply to experiment {name!r}", "experiment", key)
        params[key] = _convert(raw, spec_keys[key][0], loc, "experiment", key)
        if spec_keys[key][0] == "expr":
            _check_vars(key, params[key], dim, loc, "experiment", key)
    if name == "mms-converge" and "exact" not in problem:
        raise loc.error("mms-converge needs an 'exact' solution in [problem]", "problem")
    return RunConfig(name, problem, solver, params, cfg_seed if seed is None else int(seed), loc.source)


def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#",))
    p.optionxform = str  # keys are case sensitive (T)
    return p


def loads_config(text: str, source: str = "<string>", experiment: str | None = None, seed: int | None = None) -> RunConfig:
    """Parse config text; see :func:`load_config`."""
    loc = _Locator(text, source)
    parser = _parser()
    try:
        parser.read_string(text, source=source)
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: section [{exc.section}] appears twice") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: key {exc.option!r} appears twice in [{exc.section}]") from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError(f"{source}:{exc.lineno}: expected a [section] header") from None
    except configparser.ParsingError as exc:
        lineno = exc.errors[0][0] if exc.errors else "?"
        raise ConfigError(f"{source}:{lineno}: malformed line") from None
    return _resolve(parser, loc, experiment, seed)


def load_config(path, experiment: str | None = None, seed: int | None = None) -> RunConfig:
    """Read and validate a config file.

    Parameters
    ----------
    path : path-like
    experiment : str, optional
        Experiment requested on the command line; must agree with the
        file's ``[experiment] name`` if that is set.
    seed : int, optional
        Overrides the file's seed.

    Raises
    ------
    ConfigError
        With ``file:line`` for syntax errors, unknown or conflicting keys,
        unparsable expressions and forbidden variables.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from None
    return loads_config(text, str(path), experiment, seed)


def from_preset(experiment: str, name: str | None = None, seed: int | None = None) -> RunConfig:
    """Config built from a preset alone (the default for each experiment)."""
    name = name or DEFAULT_PRESETS[experiment]
    return loads_config(f"[problem]\npreset = {name}\n", f"<preset {name}>", experiment, seed)


def _fmt(kind: str, v) -> str:
    if kind == "expr":
        return f'"{v}"'
    if kind in ("floats", "ints"):
        return ", ".join(repr(x) for x in v)
    if kind == "bool":
        return "true" if v else "false"
    return repr(v) if kind in ("float", "int") else str(v)


def serialize(cfg: RunConfig) -> str:
    """Config text that loads back to an equal :class:`RunConfig`.

    All values are written explicitly, so the output does not depend on
    preset contents.
    """
    out = ["[problem]"]
    if "preset" in cfg.problem:
        out.append(f"preset = {cfg.problem['preset']}")
    for key, kind in _PROBLEM.items():
        if key in cfg.problem and key != "preset":
            out.append(f"{key} = {_fmt(kind, cfg.problem[key])}")
    out += ["", "[solver]"]
    for key, kind in _SOLVER.items():
        if key in cfg.solver:
            out.append(f"{key} = {_fmt(kind, cfg.solver[key])}")
    out += ["", "[experiment]", f"name = {cfg.name}", f"seed = {cfg.seed!r}"]
    for key, (kind, _) in _EXPERIMENT_KEYS[cfg.name].items():
        if cfg.experiment[key] is None:
            continue
        out.append(f"{key} = {_fmt(kind, cfg.experiment[key])}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------


def build_grid(problem: dict, scale: int = 1):
    """Grid from a resolved problem section, coarsened by ``scale`` (a power of two)."""
    if problem["geometry"] == "interval":
        n = (problem["n_nodes"] - 1) // scale + 1
        return build_interval_grid(problem["x_lo"], problem["x_hi"], n)
    return build_strip_grid(problem["period"], problem["n_x"] // scale, (problem["n_y"] - 1) // scale + 1, problem["height"])


def build_spec(cfg: RunConfig):
    from .quasilinear import ProblemSpec

    p = cfg.problem
    grid = build_grid(p)
    if grid.dim == 1:
        a, b = {"xx": p["a_xx"]}, {"x": p["b_x"]}
    else:
        a = {"xx": p["a_xx"], "xy": p["a_xy"], "yy": p["a_yy"]}
        b = {"x": p["b_x"], "y": p["b_y"]}
    return ProblemSpec(
        grid, p["T"], cfg.solver["n_steps"], a, f=p["f"], b=b, h=p["h"], u0=p["u0"],
        beta=p["beta"], scheme=cfg.solver["scheme"],
    )


def build_picard(cfg: RunConfig):
    from .quasilinear import PicardConfig

    s = cfg.solver
    return PicardConfig(
        R=s.get("R"), tau=s.get("tau"), tol=s["tol"], max_iter=s["max_iter"],
        rho_max=s["rho_max"], shrink=s["shrink"], compat_tol=s.get("compat_tol"), adaptive=s["adaptive"],
    )


def exact_solutions(cfg: RunConfig):
    """``(exact, exact_time)`` manufactured solutions, ``None`` where unset."""
    from .mms import ExactSolution

    p = cfg.problem
    e = ExactSolution(p["exact"]) if "exact" in p else None
    et = ExactSolution(p["exact_time"]) if "exact_time" in p else None
    return e, et
