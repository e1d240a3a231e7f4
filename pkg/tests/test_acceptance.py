"""Acceptance criteria, each checked at its stated tolerance.

Every test prints one ``PASS``/``FAIL`` line (visible with ``pytest -v``
thanks to ``capsys.disabled``). Table runs are cached on disk, keyed by
configuration and solver source (see :mod:`diffband.experiments`); set
``DIFFBAND_CACHE_DIR`` to move the cache or to an empty string to disable it.

The table criteria (1, 2, 3, 5 and 8) are marked ``slow``; deselect them with
``pytest -m "not slow"`` for a quick pass.
"""
from __future__ import annotations

import math
import os
from pathlib import Path

import numpy as np
import pytest

from diffband import oracles
from diffband.errors import eoc
from diffband.fem import assemble_matrix, element_contribution
from diffband.experiments import CONTRACT, FAST, TableStudy, run_summary
from diffband.levelset import PROBLEMS, closest_point, get_problem
from diffband.linalg import solve_gmres
from diffband.stepper import Stepper, run
from diffband.verify import (band_samples, coarse_config, exact_substituted_e3,
                             random_shaped_simplex)

REPO = Path(__file__).resolve().parents[1]
_env = os.environ.get("DIFFBAND_CACHE_DIR")
CACHE = None if _env == "" else Path(_env) if _env else REPO / ".cache" / "runs"

LADDER = (0.4, 0.2 * math.sqrt(2))
# reference E2 values of the first two Ex1 levels
EX1_E2_REFERENCE = (2.3461e-4, 5.8552e-5)

_runs = {}


def table_rows(problem):
    """Summaries of the first two ladder levels, computed once per session."""
    if problem not in _runs:
        study = TableStudy(problem, LADDER, FAST)
        _runs[problem] = [run_summary(cfg, CACHE) for cfg in study.configs()]
    return _runs[problem]


def rates(rows, name):
    return float(eoc([rows[0][name], rows[1][name]], [rows[0]["h"], rows[1]["h"]])[0])


def report(capsys, criterion, passed, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if passed else 'FAIL'}] criterion {criterion}: {detail}")
    assert passed, detail


def inside(x, lo, hi):
    return lo <= x <= hi


@pytest.mark.slow
def test_criterion_1_ex1_table(capsys):
    rows = table_rows("ex1")
    ratios = [r["E2"] / ref for r, ref in zip(rows, EX1_E2_REFERENCE)]
    e2, e3 = rates(rows, "E2"), rates(rows, "E3")
    ok = all(0.5 <= q <= 2.0 for q in ratios) and inside(e2, 3.7, 4.3) and inside(e3, 3.0, 3.8)
    report(capsys, 1, ok,
           f"E2 = {rows[0]['E2']:.4e}, {rows[1]['E2']:.4e} (x{ratios[0]:.2f}, x{ratios[1]:.2f} "
           f"of reference, need [0.5, 2]); eoc2 = {e2:.3f} in [3.7, 4.3]; "
           f"eoc3 = {e3:.3f} in [3.0, 3.8]")


@pytest.mark.slow
@pytest.mark.parametrize("problem", ["ex2", "ex3"])
def test_criterion_2_moving_examples(capsys, problem):
    rows = table_rows(problem)
    e2, e3 = rates(rows, "E2"), rates(rows, "E3")
    ok = inside(e2, 3.6, 4.3) and inside(e3, 3.1, 3.9)
    report(capsys, f"2 ({problem})", ok,
           f"eoc2 = {e2:.3f} in [3.6, 4.3]; eoc3 = {e3:.3f} in [3.1, 3.9]")


@pytest.mark.slow
def test_criterion_3_sphere_table(capsys):
    rows = table_rows("ex4")
    e3, e4 = rates(rows, "E3"), rates(rows, "E4")
    ok = inside(e3, 3.5, 5.0) and inside(e4, 1.5, 2.3)
    report(capsys, 3, ok, f"eoc3 = {e3:.3f} in [3.5, 5.0]; eoc4 = {e4:.3f} in [1.5, 2.3] "
                          f"(h = {rows[0]['h']:.5f}, {rows[1]['h']:.5f}; T = 0.1)")


def test_criterion_4_mass_conservation(capsys):
    parts, ok = [], True
    for pid in ("ex1", "ex3"):
        res = run(pid, CONTRACT.apply(coarse_config(pid)))
        step, cum = res.max_step_drift, res.cumulative_drift
        ok &= step <= 1e-8 and cum <= 1e-6
        parts.append(f"{pid}: per-step {step:.2e} <= 1e-8, cumulative {cum:.2e} <= 1e-6 "
                     f"({res.params.n_steps} steps)")
    report(capsys, 4, ok, "; ".join(parts))


@pytest.mark.slow
def test_criterion_5_energy_stability(capsys):
    ratios = {pid: table_rows(pid)[0]["max_energy_ratio"] for pid in ("ex1", "ex2", "ex3")}
    ex4 = TableStudy("ex4", LADDER[:1], FAST).configs()[0]
    ratios["ex4"] = run_summary(ex4, CACHE)["max_energy_ratio"]
    ok = all(r <= 1.1 for r in ratios.values())
    report(capsys, 5, ok, "max_m energy / energy_0 = "
           + ", ".join(f"{k} {v:.6f}" for k, v in ratios.items()) + " (<= 1.1)")


def test_criterion_6_oracle_equivalence(capsys):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for d in (2, 3):
        for _ in range(100):
            n = d + 1
            data = (random_shaped_simplex(rng, d), rng.uniform(0, 1, n), rng.uniform(0, 1, n),
                    rng.normal(size=n), rng.normal(size=(n, d)), rng.normal(size=n))
            fast = element_contribution(*data)
            ref = oracles.element_terms(*data)
            for a, b in zip((fast.M_w, fast.K_w, fast.B_w, fast.S, fast.F_w), ref):
                worst = max(worst, float(np.abs(a - b).max()))
    # one full step of Ex1 on a band of at most 2000 DOFs
    cfg = CONTRACT.apply(coarse_config("ex1", cells=40, rel_tol=1e-12))
    st = Stepper(get_problem("ex1"), cfg)
    s0 = st.initial_state()
    s1 = st.advance(s0, st.p.tau, 1)
    ud, _, b_dense = oracles.dense_step(s1.band, s0.band, s0.u, st.p.gamma, st.p.tau)
    step_dev = float(np.abs(s1.u - ud).max())
    # Krylov vs LU on the sparse system of that step
    A = assemble_matrix(s1.band, st.p.gamma, st.p.tau)
    xk, _ = solve_gmres(A, b_dense, rel_tol=1e-12)
    krylov_dev = float(np.abs(xk - np.linalg.solve(A.toarray(), b_dense)).max())
    ok = worst <= 1e-13 and step_dev <= 1e-9 and krylov_dev <= 1e-9 and s1.band.n_dofs <= 2000
    report(capsys, 6, ok,
           f"(a) element terms max dev {worst:.2e} <= 1e-13 over 200 elements; "
           f"(b) step vs dense LU {step_dev:.2e} <= 1e-9 ({s1.band.n_dofs} DOFs); "
           f"(c) GMRES vs LU {krylov_dev:.2e} <= 1e-9")


def test_criterion_7_geometry_and_quadrature(capsys):
    worst_cp = 0.0
    for pid in sorted(PROBLEMS):
        p = get_problem(pid)
        for t in (0.0, 0.05):
            x = band_samples(p, 0.4, 1000, t)
            worst_cp = max(worst_cp, float(np.abs(p.phi(closest_point(p, x, t), t)).max()))
    p4 = get_problem("ex4")
    _, w = p4.sphere_quadrature(0.0, 200)
    area_dev = abs(np.sum(w) / (4 * np.pi) - 1)
    e3_exact = exact_substituted_e3()
    ok = worst_cp <= 1e-12 and area_dev <= 1e-3 and e3_exact <= 1e-14
    report(capsys, 7, ok,
           f"closest-point residual {worst_cp:.2e} <= 1e-12 (1000 samples x 4 examples x 2 "
           f"times); sphere weight sum rel dev {area_dev:.2e} <= 1e-3 at L=200; "
           f"E3 with exact solution {e3_exact:.1e} <= 1e-14")


@pytest.mark.slow
def test_criterion_8_initial_projection_order(capsys):
    rows = table_rows("ex1")
    ratio = rows[0]["initial_E3"] / rows[1]["initial_E3"]
    expected = (rows[0]["h"] / rows[1]["h"]) ** 4
    report(capsys, 8, inside(ratio, 3.0, 5.0),
           f"initial surface error ratio {ratio:.3f} in [3, 5] "
           f"((h1/h2)^4 = {expected:.3f}; L = 200 points)")
