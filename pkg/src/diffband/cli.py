"""Command line entry point: ``diffband run | study | verify``.

Configuration files are INI-style with one section per module::

    [levelset]
    problem = ex1
    final_time = 0.1

    [phasefield]
    eps = 0.4
    gamma = 0.01

    [mesh]
    cells = 724

    [linalg]
    rel_tol = 1e-10

    [study]
    eps = 0.4, 0.2*sqrt(2)
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ERROR_NAMES, ConvergenceTable
from .levelset import PROBLEMS, get_problem
from .stepper import RunConfig, run

log = logging.getLogger("diffband")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2

# eps ladder of the convergence tables
DEFAULT_LADDER = (0.4, 0.2 * math.sqrt(2), 0.2, 0.1 * math.sqrt(2), 0.1)

# which RunConfig field each (section, key) pair feeds
CONFIG_KEYS = {
    "levelset": {"problem": "problem", "final_time": "final_time"},
    "phasefield": {"eps": "eps", "eps_to_h": "eps_to_h", "gamma": "gamma"},
    "mesh": {"cells": "cells", "level": "level", "h": "h"},
    "band": {"check_connectivity": "check_connectivity"},
    "fem": {},
    "linalg": {"rel_tol": "rel_tol", "restart": "restart", "max_iters": "max_iters",
               "precond_side": "precond_side"},
    "stepper": {"tau_rule": "tau_rule", "tau_factor": "tau_factor", "tau": "tau",
                "warm_start": "warm_start", "warm_order": "warm_order",
                "check_coupling": "check_coupling"},
    "errors": {"quad_points": "quad_points", "compute_errors": "compute_errors"},
}
STUDY_KEYS = {"eps", "levels", "errors"}


class ConfigError(ValueError):
    """Malformed configuration; the message names the offending key."""


@dataclass
class StudySpec:
    """A convergence study: one run per ``eps`` on the ladder, finest last."""

    base: RunConfig
    eps: list = field(default_factory=lambda: list(DEFAULT_LADDER))
    errors: tuple = ERROR_NAMES

    def __post_init__(self):
        if len(self.eps) < 2:
            raise ConfigError("study.eps: a study needs at least two levels")
        if any(b >= a for a, b in zip(self.eps, self.eps[1:])):
            raise ConfigError("study.eps: the ladder must be strictly decreasing")
        unknown = [e for e in self.errors if e not in ERROR_NAMES]
        if unknown:
            raise ConfigError(f"study.errors: unknown error names {unknown}")

    def level_configs(self):
        return [dataclasses.replace(self.base, eps=float(e), cells=None, level=None, h=None)
                for e in self.eps]


def _parse_number(text):
    """Floats, with ``sqrt(...)`` and products allowed (``0.2*sqrt(2)``)."""
    allowed = {"sqrt": math.sqrt, "pi": math.pi}
    try:
        return float(eval(text, {"__builtins__": {}}, allowed))  # noqa: S307 - restricted namespace
    except Exception as exc:
        raise ValueError(f"not a number: {text!r}") from exc


def _coerce(name, text):
    ftype = {f.name: f.type for f in dataclasses.fields(RunConfig)}[name]
    text = text.strip()
    if "bool" in ftype:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if "str" in ftype:
        return text
    if "int" in ftype:
        value = _parse_number(text)
        if value != int(value):
            raise ValueError(f"not an integer: {text!r}")
        return int(value)
    return _parse_number(text)


def parse_config(text, require_problem=True):
    """Return ``(RunConfig, study_options)`` from INI text."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    values, study = {}, {}
    for section in cp.sections():
        if section == "study":
            for key, raw in cp.items(section):
                if key not in STUDY_KEYS:
                    raise ConfigError(f"study.{key}: unknown key")
                study[key] = raw
            continue
        if section not in CONFIG_KEYS:
            raise ConfigError(f"[{section}]: unknown section")
        for key, raw in cp.items(section):
            if key not in CONFIG_KEYS[section]:
                raise ConfigError(f"{section}.{key}: unknown key")
            name = CONFIG_KEYS[section][key]
            try:
                values[name] = _coerce(name, raw)
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}: {exc}") from None
    if "problem" not in values:
        if require_problem:
            raise ConfigError("levelset.problem: missing problem id")
    elif values["problem"].lower() not in PROBLEMS:
        raise ConfigError(f"levelset.problem: unknown problem id {values['problem']!r}")
    else:
        values["problem"] = values["problem"].lower()
    try:
        cfg = RunConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg, study


def load_config(path, require_problem=True):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, require_problem)


def study_from_config(cfg: RunConfig, options, levels=None) -> StudySpec:
    if "eps" in options:
        try:
            ladder = [_parse_number(s) for s in options["eps"].split(",") if s.strip()]
        except ValueError as exc:
            raise ConfigError(f"study.eps: {exc}") from None
    else:
        ladder = list(DEFAULT_LADDER)
    if levels is None and "levels" in options:
        try:
            levels = int(options["levels"])
        except ValueError:
            raise ConfigError("study.levels: not an integer") from None
    if levels is not None:
        ladder = ladder[:levels]
    errors = ERROR_NAMES
    if "errors" in options:
        errors = tuple(s.strip().upper() for s in options["errors"].split(",") if s.strip())
    return StudySpec(cfg, ladder, errors)


# ----------------------------------------------------------------------------- run


def run_single(cfg: RunConfig, out: Path | None = None):
    """Run one configuration; write ``diagnostics.csv`` and ``summary.json`` into ``out``."""
    result = run(cfg.problem, cfg)
    summary = result.summary()
    summary["warnings"] = result.warnings
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        result.write_diagnostics(out / "diagnostics.csv")
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return result, summary


def _run_level(cfg: RunConfig):
    try:
        result = run(cfg.problem, cfg)
    except Exception as exc:  # a failed level is reported, the study continues
        return {"failed": f"{type(exc).__name__}: {exc}", "eps": cfg.eps}
    out = result.summary()
    out["h"] = result.params.h
    return out


def run_study(spec: StudySpec, out: Path | None = None, threads: int = 1):
    """Run every ladder level and build the convergence table.

    Failed levels appear as ``nan`` rows ("failed" in markdown).
    """
    configs = spec.level_configs()
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_run_level, configs))
    else:
        rows = [_run_level(c) for c in configs]
    problem = get_problem(spec.base.problem)
    hs, eps = [], []
    for cfg, row in zip(configs, rows):
        eps.append(cfg.eps)
        if "h" in row:
            hs.append(row["h"])
        else:
            from .stepper import resolve
            hs.append(resolve(problem, cfg).h)
    errors = {name: [row.get(name, math.nan) if "failed" not in row else math.nan
                     for row in rows] for name in spec.errors}
    table = ConvergenceTable(hs, eps, errors, tuple(spec.errors))
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "table.csv").write_text(table.to_csv())
        (out / "table.md").write_text(table.to_markdown())
        for name in spec.errors:
            single = ConvergenceTable(hs, eps, {name: errors[name]}, (name,))
            (out / f"{name}.csv").write_text(single.to_csv())
        levels = [{k: v for k, v in row.items() if k != "elapsed_s"} for row in rows]
        (out / "levels.json").write_text(json.dumps(levels, indent=2, sort_keys=True) + "\n")
    return table, rows


# ----------------------------------------------------------------------------- main


def _build_parser():
    ap = argparse.ArgumentParser(prog="diffband", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one configuration")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("study", help="convergence study over the eps ladder")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--levels", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)

    p = sub.add_parser("verify", help="run invariant checks")
    p.add_argument("selector", nargs="?", default="all")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    return ap


def _fmt(v):
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.5e}"
    return str(v)


def main(argv=None):
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg, _ = load_config(args.config)
            _, summary = run_single(cfg, Path(args.out) if args.out else None)
            for key in sorted(summary):
                print(f"{key}: {_fmt(summary[key])}")
            return EXIT_OK
        if args.command == "study":
            cfg, options = load_config(args.config)
            spec = study_from_config(cfg, options, args.levels)
            table, rows = run_study(spec, Path(args.out) if args.out else None, args.threads)
            print(table.to_markdown(), end="")
            return EXIT_FAIL if any("failed" in r for r in rows) else EXIT_OK
        from .verify import SUITES, run_suites
        if args.selector != "all" and args.selector not in SUITES:
            print(f"unknown verify selector {args.selector!r}; expected 'all' or one of "
                  f"{sorted(SUITES)}", file=sys.stderr)
            return EXIT_USAGE
        checks = run_suites(args.selector, seed=args.seed)
        lines = [c.line() for c in checks]
        print("\n".join(lines))
        if args.out:
            Path(args.out).write_text("\n".join(lines) + "\n")
        return EXIT_OK if all(c.passed for c in checks) else EXIT_FAIL
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
