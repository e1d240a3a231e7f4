"""Convergence-table studies with a content-addressed result cache.

A cached summary is reused only when both the run configuration and the
source of every module on the solve path are unchanged.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

from .cli import DEFAULT_LADDER
from .errors import ERROR_NAMES, ConvergenceTable
from .stepper import RunConfig, run

# modules whose source determines a run's numbers
SOLVE_PATH = ("levelset", "phasefield", "mesh", "band", "quadrature", "fem", "linalg",
              "stepper", "errors")


@dataclass(frozen=True)
class SolverProfile:
    """Krylov settings applied on top of a :class:`RunConfig`."""

    name: str
    precond_side: str
    warm_start: bool
    warm_order: int = 2

    def apply(self, cfg: RunConfig) -> RunConfig:
        return dataclasses.replace(cfg, precond_side=self.precond_side,
                                   warm_start=self.warm_start, warm_order=self.warm_order)


# left Jacobi scaling, zero initial guess: the solver's default contract
CONTRACT = SolverProfile("contract", "left", False)
# right scaling with extrapolated initial guesses; same residual bound on ||b - Ax||
FAST = SolverProfile("fast", "right", True)
PROFILES = {p.name: p for p in (CONTRACT, FAST)}


@dataclass(frozen=True)
class TableStudy:
    """One convergence table: a problem run at each ``eps`` of a ladder."""

    problem: str
    eps: tuple = DEFAULT_LADDER[:2]
    profile: SolverProfile = FAST
    final_time: float | None = None
    check_coupling: bool = True

    def configs(self):
        return [self.profile.apply(RunConfig(problem=self.problem, eps=float(e),
                                             final_time=self.final_time,
                                             check_coupling=self.check_coupling))
                for e in self.eps]


def source_fingerprint() -> str:
    h = hashlib.sha256()
    here = Path(__file__).parent
    for name in SOLVE_PATH:
        h.update((here / f"{name}.py").read_bytes())
    return h.hexdigest()[:16]


def default_cache_dir() -> Path | None:
    value = os.environ.get("DIFFBAND_CACHE_DIR")
    if value == "":
        return None
    return Path(value) if value else None


def _cache_path(cache_dir: Path, cfg: RunConfig) -> Path:
    blob = json.dumps(dataclasses.asdict(cfg), sort_keys=True) + source_fingerprint()
    key = hashlib.sha256(blob.encode()).hexdigest()[:20]
    return cache_dir / f"{cfg.problem}-{key}.json"


def run_summary(cfg: RunConfig, cache_dir: Path | None = None, callback=None) -> dict:
    """Summary of one run (``diffband run`` fields plus ``h``), cached when asked."""
    path = _cache_path(Path(cache_dir), cfg) if cache_dir is not None else None
    if path is not None and path.exists():
        return json.loads(path.read_text())
    result = run(cfg.problem, cfg, callback)
    out = result.summary()
    out["h"] = result.params.h
    out["max_iterations"] = max(r.iterations for r in result.records)
    out["warnings"] = result.warnings
    out["config"] = dataclasses.asdict(cfg)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(out, indent=2, sort_keys=True) + "\n")
    return out


def run_table(study: TableStudy, cache_dir: Path | None = None, out: Path | None = None):
    """Run every level; return ``(ConvergenceTable, summaries)`` and optionally write files."""
    rows = [run_summary(cfg, cache_dir) for cfg in study.configs()]
    table = ConvergenceTable([r["h"] for r in rows], [r["eps"] for r in rows],
                             {n: [r[n] if r[n] is not None else math.nan for r in rows]
                              for n in ERROR_NAMES})
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "table.csv").write_text(table.to_csv())
        (out / "table.md").write_text(table.to_markdown())
        slim = [{k: v for k, v in r.items() if k != "elapsed_s"} for r in rows]
        (out / "levels.json").write_text(json.dumps(slim, indent=2, sort_keys=True) + "\n")
    return table, rows
