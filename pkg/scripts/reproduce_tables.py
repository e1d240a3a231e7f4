"""Reproduce the convergence tables (first levels of the eps ladder).

    python scripts/reproduce_tables.py --problem ex1 --levels 2
    python scripts/reproduce_tables.py --problem all --out results/tables

Each level's summary is cached under ``--cache`` so a table can be rebuilt
without rerunning unchanged levels.
"""
from __future__ import annotations

import argparse
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

from diffband.cli import DEFAULT_LADDER
from diffband.experiments import PROFILES, TableStudy, run_table

log = logging.getLogger("reproduce")


@dataclass
class ReproConfig:
    problems: list = field(default_factory=lambda: ["ex1", "ex2", "ex3", "ex4"])
    levels: int = 2
    profile: str = "fast"
    out: Path = Path("results/tables")
    cache: Path | None = Path(".cache/runs")

    def studies(self):
        ladder = tuple(DEFAULT_LADDER[: self.levels])
        return [TableStudy(p, ladder, PROFILES[self.profile]) for p in self.problems]


def parse_args(argv=None) -> ReproConfig:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--problem", default="all", help="ex1..ex4 or 'all'")
    ap.add_argument("--levels", type=int, default=2)
    ap.add_argument("--profile", choices=sorted(PROFILES), default="fast")
    ap.add_argument("--out", type=Path, default=Path("results/tables"))
    ap.add_argument("--cache", type=Path, default=Path(".cache/runs"))
    ap.add_argument("--no-cache", action="store_true")
    a = ap.parse_args(argv)
    probs = ["ex1", "ex2", "ex3", "ex4"] if a.problem == "all" else [a.problem]
    return ReproConfig(probs, a.levels, a.profile, a.out, None if a.no_cache else a.cache)


def main(argv=None):
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    cfg = parse_args(argv)
    for study in cfg.studies():
        start = time.perf_counter()
        table, rows = run_table(study, cfg.cache, cfg.out / study.problem)
        log.info("%s done in %.0f s", study.problem, time.perf_counter() - start)
        print(f"## {study.problem}\n")
        print(table.to_markdown())


if __name__ == "__main__":
    main()
