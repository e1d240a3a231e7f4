import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from diffband.levelset import BandRegularityReport, get_problem
from diffband.phasefield import (COUPLING_CONST, PhaseFieldParams, check_coupling, g_eval,
                                 g_prime, rho, rho_tilde)

reals = st.floats(-10, 10, allow_nan=False)


@given(r=reals)
def test_g_range_and_support(r):
    v = float(g_eval(r))
    assert 0.0 <= v <= 1.0
    if abs(r) > math.pi / 2:
        assert v == 0.0


@given(a=reals, b=reals)
def test_g_is_lipschitz_with_constant_one(a, b):
    assert abs(float(g_eval(a) - g_eval(b))) <= abs(a - b) + 1e-15


@given(r=st.floats(-1.5, 1.5, allow_nan=False))
def test_g_prime_matches_difference_quotient(r):
    dr = 1e-6
    fd = (g_eval(r + dr) - g_eval(r - dr)) / (2 * dr)
    assert abs(float(fd - g_prime(r))) < 1e-8


def test_g_values():
    assert g_eval(0.0) == 1.0
    assert g_eval(math.pi / 2) == pytest.approx(0.0, abs=1e-30)
    assert g_eval(math.pi / 4) == pytest.approx(0.5)
    assert g_eval(-3.0) == 0.0


def test_narrow_support_inside_wide_support():
    p = get_problem("ex1")
    x = np.random.default_rng(0).uniform(0, 2.4, size=(5000, 2))
    params = PhaseFieldParams(0.2)
    narrow = rho(p, params, x, 0.0) > 0
    wide = rho_tilde(p, params, x, 0.0) > 0
    assert np.all(wide[narrow])
    assert wide.sum() > narrow.sum()


def test_rho_on_surface_is_one():
    p = get_problem("ex3")
    pts = p.surface_points(0.07, 50)
    assert np.allclose(rho(p, PhaseFieldParams(0.1), pts, 0.07), 1.0)


def test_coarea_approximates_circumference():
    # (2 / (eps pi)) int rho |grad phi| approximates |Gamma| = 2 pi
    p = get_problem("ex2")
    eps = 0.05
    n = 1601
    xs = np.linspace(-1.5, 1.5, n)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    x = np.stack([X.ravel(), Y.ravel()], axis=1)
    w = rho(p, PhaseFieldParams(eps), x, 0.0) * np.linalg.norm(p.grad_phi(x, 0.0), axis=1)
    total = 2 / (eps * np.pi) * w.sum() * (xs[1] - xs[0]) ** 2
    assert total == pytest.approx(2 * np.pi, rel=0.02)


def test_params_validation():
    with pytest.raises(ValueError):
        PhaseFieldParams(0.0)
    with pytest.raises(ValueError):
        PhaseFieldParams(0.1, gamma=-1.0)


def test_coupling_bounds():
    rep = BandRegularityReport(1.0, 2.0, 2.0, 100)
    eps = 0.4
    checks = {c.name: c for c in check_coupling(1e-3, 1e-3, eps, rep, safety=0.0)}
    assert checks["h"].bound == pytest.approx(COUPLING_CONST * eps / 4)
    assert checks["tau_eps2"].bound == pytest.approx(eps ** 2)
    assert all(c.ok for c in checks.values())
    bad = {c.name: c for c in check_coupling(1.0, 1.0, eps, rep)}
    assert not bad["h"].ok and bad["h"].margin < 0
