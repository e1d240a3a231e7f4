import dataclasses
import math

import numpy as np
import pytest

from diffband import oracles
from diffband.levelset import get_problem
from diffband.stepper import RunConfig, Stepper, resolve, run
from diffband.verify import coarse_config


def test_resolve_table_parameters():
    p = resolve(get_problem("ex1"), RunConfig(problem="ex1", eps=0.4))
    assert p.grid.cells == (724, 724)
    assert p.h == pytest.approx(4.6880e-3, rel=1e-4)
    assert p.eps / p.h == pytest.approx(85.33, rel=1e-3)
    assert p.tau == pytest.approx(0.0025 * 0.16)
    assert p.n_steps == 250
    p3 = resolve(get_problem("ex4"), RunConfig(problem="ex4", eps=0.4))
    assert p3.grid.cells == (64, 64, 64)
    assert p3.h == pytest.approx(0.21651, rel=1e-4)
    assert p3.tau == pytest.approx(0.5 * p3.h ** 2)


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(problem="ex1", cells=10, level=3)
    with pytest.raises(ValueError):
        RunConfig(problem="ex1", tau_rule="explicit")
    with pytest.raises(ValueError):
        RunConfig(problem="ex1", precond_side="both")
    with pytest.raises(ValueError):
        RunConfig(problem="ex1", warm_order=3)


def test_defaults_follow_solver_contract():
    cfg = RunConfig(problem="ex1")
    assert cfg.rel_tol == 1e-10 and cfg.restart == 30 and cfg.max_iters == 10000
    assert cfg.precond_side == "left" and not cfg.warm_start


def test_constant_is_preserved_on_stationary_band():
    st = Stepper(get_problem("ex1"), coarse_config("ex1", rel_tol=1e-12))
    s0 = st.initial_state()
    s0 = dataclasses.replace(s0, u=np.full(s0.band.n_dofs, 2.5))
    s1 = st.advance(s0, st.p.tau, 1)
    assert np.abs(s1.u - 2.5).max() < 1e-8


@pytest.mark.parametrize("pid", ["ex1", "ex3"])
def test_step_matches_dense_oracle(pid):
    st = Stepper(get_problem(pid), coarse_config(pid, cells=40 if pid == "ex1" else 60,
                                                 rel_tol=1e-12))
    s0 = st.initial_state()
    s1 = st.advance(s0, st.p.tau, 1)
    assert s1.band.n_dofs <= 2000
    ud, *_ = oracles.dense_step(s1.band, s0.band, s0.u, st.p.gamma, st.p.tau)
    assert np.abs(s1.u - ud).max() <= 1e-9


def test_warm_start_gives_same_solution():
    cfg = coarse_config("ex3", final_time=0.01)
    a = run("ex3", cfg)
    b = run("ex3", dataclasses.replace(cfg, warm_start=True))
    assert np.abs(a.final.u - b.final.u).max() < 1e-8
    assert sum(r.iterations for r in b.records) < sum(r.iterations for r in a.records)


def test_zero_final_time_has_no_steps():
    res = run("ex1", coarse_config("ex1", final_time=0.0))
    assert len(res.records) == 1
    s = res.summary()
    assert s["steps"] == 0 and s["E1"] is None and s["initial_E3"] > 0


def test_diagnostics_file(tmp_path):
    res = run("ex3", coarse_config("ex3", final_time=0.005))
    res.write_diagnostics(tmp_path / "d.csv")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0].startswith("m,t_m,n_dofs,solver_iters")
    assert len(lines) == 1 + len(res.records)


def test_step_count_lands_on_final_time():
    p = resolve(get_problem("ex2"), RunConfig(problem="ex2", cells=100, tau_rule="explicit",
                                              tau=0.03, final_time=0.1))
    t = p.times()
    assert t[-1] == 0.1 and np.all(np.diff(t) > 0) and np.diff(t).max() <= 0.03 + 1e-15


def test_ex4_initial_data_is_antisymmetric_in_x1():
    # u0 ~ x1 x3; mirrored nodes that both lie in the band carry opposite values
    st = Stepper(get_problem("ex4"), coarse_config("ex4", rel_tol=1e-12))
    s0 = st.initial_state()
    coords = s0.band.coords
    index = {tuple(np.round(c, 9)): i for i, c in enumerate(coords)}
    pairs = [(i, index[key]) for i, c in enumerate(coords)
             if (key := tuple(np.round(c * [-1, 1, 1], 9))) in index]
    assert len(pairs) > 0.9 * len(coords)
    i, j = np.array(pairs).T
    assert np.abs(s0.u[i] + s0.u[j]).max() <= 1e-9 * np.abs(s0.u).max()
