"""Command line entry point.

Usage::

    dynbc EXPERIMENT [--config PATH] [--preset NAME] [--out DIR] [--seed N] [--quiet]

Writes ``report.json`` and one CSV per table to ``--out`` (if given).
Exit status: 0 pass, 1 threshold failure, 2 configuration error, 3 solver
error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field

from . import experiments as xp
from .config import (
    EXPERIMENTS,
    ConfigError,
    RunConfig,
    build_grid,
    build_picard,
    build_spec,
    exact_solutions,
    from_preset,
    load_config,
    serialize,
)
from .expr import ExprError
from .mms import augment
from .linear import LinearSolveError, PreconditionError
from .quasilinear import CompatibilityError, PicardError

__all__ = ["RunReport", "SolverError", "run", "write_report", "main"]

log = logging.getLogger("dynbc")

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


class SolverError(RuntimeError):
    """A module error raised while running an experiment, with context."""


@dataclass
class RunReport:
    experiment: str
    digest: str
    seed: int
    passed: bool
    outputs: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    checks: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return EXIT_PASS if self.passed else EXIT_FAIL

    def to_record(self) -> dict:
        rec = {"experiment": self.experiment, "input_digest": self.digest, "seed": self.seed, "passed": self.passed}
        rec.update({f"threshold.{k}": v for k, v in self.thresholds.items()})
        rec.update({f"check.{k}": v for k, v in self.checks.items()})
        for k, v in self.outputs.items():
            if isinstance(v, (list, tuple)):
                rec.update({f"{k}.{i}": x for i, x in enumerate(v)})
            else:
                rec[k] = v
        rec["tables"] = sorted(self.tables)
        return rec


def _digest(cfg: RunConfig) -> str:
    return hashlib.sha256(serialize(cfg).encode()).hexdigest()


def _ladder(cfg: RunConfig, levels: int):
    grids, steps = [], []
    n = cfg.solver["n_steps"]
    for k in reversed(range(levels)):
        s = 2**k
        if n % s:
            raise ConfigError(f"{cfg.source}: n_steps={n} cannot be halved {levels - 1} times")
        grids.append(build_grid(cfg.problem, s))
        steps.append(n // s)
    p = cfg.problem
    sizes = [p["n_nodes"] - 1] if p["geometry"] == "interval" else [p["n_x"], p["n_y"] - 1]
    if any(m % 2 ** (levels - 1) for m in sizes):
        raise ConfigError(f"{cfg.source}: grid cannot be coarsened {levels - 1} times")
    return grids, steps


def _manufactured(cfg: RunConfig):
    want = cfg.experiment.get("manufactured")
    exact = exact_solutions(cfg)[0]
    if want and exact is None:
        raise ConfigError(f"{cfg.source}: 'manufactured = true' needs 'exact' in [problem]")
    return exact if want or want is None else None


def _dispatch(cfg: RunConfig) -> xp.ExperimentResult:
    from dataclasses import replace

    spec = build_spec(cfg)
    pc = build_picard(cfg)
    e = cfg.experiment
    name = cfg.name
    if name == "validate":
        return xp.validate(spec, pc, samples=e["samples"])
    if name == "solve":
        return xp.solve(spec, pc, _manufactured(cfg))
    if name == "mms-converge":
        exact, exact_time = exact_solutions(cfg)
        grids, steps = _ladder(cfg, e["levels"])
        if e["windows"] > 1:
            pc = replace(pc, tau=spec.T / e["windows"])
        return xp.mms_converge(
            spec, pc, exact, grids, steps, exact_time,
            e["min_spatial_order"], (e["temporal_order_min"], e["temporal_order_max"]),
        )
    if name == "scaling":
        return xp.scaling(
            spec, e["horizons"], e["thetas"], (e["time_slope_min"], e["time_slope_max"]),
            (e["gradient_slope_min"], e["gradient_slope_max"]),
        )
    if name == "contraction":
        return xp.contraction(
            spec, pc, e["taus"], e["runs"], cfg.seed, (e["quotient_min"], e["quotient_max"]), e["max_iterations"],
        )
    if name == "uniqueness":
        exact = _manufactured(cfg)
        if exact is not None:
            spec = augment(spec, exact)
        return xp.uniqueness(spec, pc, e["offset"], e["factor"])
    if name == "compat-necessity":
        return xp.compat_necessity(
            spec, e["steps"], e["T"], (e["f_bad"], e["h_bad"]), (e["f_good"], e["h_good"]),
            e["min_growth"], e["max_variation"],
        )
    raise ConfigError(f"unknown experiment {name!r}")


def run(cfg: RunConfig, out_dir=None) -> RunReport:
    """Run the configured experiment and optionally write its artifacts.

    Raises
    ------
    ConfigError
        For settings the problem modules reject.
    SolverError
        For solver or expression failures, with the experiment name.
    """
    try:
        result = _dispatch(cfg)
    except ConfigError:
        raise
    except CompatibilityError as exc:
        raise SolverError(f"{cfg.name}: {exc}") from exc
    except PreconditionError as exc:
        raise ConfigError(f"{cfg.source}: {exc}") from exc
    except (PicardError, LinearSolveError, ExprError, ArithmeticError) as exc:
        raise SolverError(f"{cfg.name}: {exc}") from exc
    report = RunReport(
        cfg.name, _digest(cfg), cfg.seed, result.passed, result.outputs, result.thresholds, result.checks, result.tables,
    )
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(rows, path) -> None:
    cols: list[str] = []
    for r in rows:
        cols += [k for k in r if k not in cols]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([_cell(r.get(c)) for c in cols])


def write_report(report: RunReport, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "report.json"), "w") as fh:
        json.dump(report.to_record(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    for name, rows in report.tables.items():
        write_table(rows, os.path.join(out_dir, f"{name}.csv"))


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dynbc", description="Parabolic problems with dynamic boundary conditions.")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", metavar="PATH", help="INI config file (default: the experiment's preset)")
    p.add_argument("--preset", metavar="NAME", help="preset to use when no config is given")
    p.add_argument("--out", metavar="DIR", help="directory for report.json and CSV tables")
    p.add_argument("--seed", type=int, default=None, help="random seed (overrides the config)")
    p.add_argument("--quiet", action="store_true", help="only print errors")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO, format="%(message)s")
    try:
        if args.config:
            if args.preset:
                raise ConfigError("--preset cannot be combined with --config; set 'preset' in the file")
            cfg = load_config(args.config, args.experiment, args.seed)
        else:
            cfg = from_preset(args.experiment, args.preset, args.seed)
        report = run(cfg, args.out)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except KeyError as exc:  # unknown preset from the command line
        log.error("configuration error: %s", exc.args[0])
        return EXIT_CONFIG
    except SolverError as exc:
        log.error("solver error: %s", exc)
        return EXIT_SOLVER
    for k, v in report.outputs.items():
        log.info("%s = %s", k, v)
    for k, ok in report.checks.items():
        log.info("check %s: %s", k, "pass" if ok else "FAIL")
    log.info("%s: %s", report.experiment, "PASS" if report.passed else "FAIL")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
