import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from diffband.levelset import (PROBLEMS, DegeneratePoint, closest_point, estimate_band_constants,
                               exact_time_integral_ex4, extend_from_surface, get_problem)

angles = st.floats(0, 2 * math.pi, allow_nan=False)
offsets = st.floats(-0.3, 0.3, allow_nan=False)
times = st.floats(0, 0.1, allow_nan=False)


@pytest.mark.parametrize("pid", sorted(PROBLEMS))
def test_surface_points_are_zeros_of_phi(pid):
    p = get_problem(pid)
    for t in (0.0, 0.037, 0.1):
        if p.dim == 2:
            pts = p.surface_points(t, 64)
        else:
            pts, _ = p.sphere_quadrature(t, 16)
        assert np.abs(p.phi(pts, t)).max() < 1e-13


@pytest.mark.parametrize("pid", sorted(PROBLEMS))
def test_grad_phi_matches_central_differences(pid, rng):
    p = get_problem(pid)
    x = p.surface_points(0.05, 20) * 1.1 if p.dim == 2 else rng.normal(size=(20, 3))
    dx = 1e-6
    g = p.grad_phi(x, 0.05)
    for k in range(p.dim):
        e = np.zeros(p.dim)
        e[k] = dx
        fd = (p.phi(x + e, 0.05) - p.phi(x - e, 0.05)) / (2 * dx)
        assert np.allclose(fd, g[:, k], rtol=1e-6, atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(a=angles, s=offsets, t=times)
def test_closest_point_on_moving_circle(a, s, t):
    p = get_problem("ex3")
    c = p.center(t)
    x = c + (1 + s) * np.array([[math.cos(a), math.sin(a)]])
    y = closest_point(p, x, t)
    assert abs(p.phi(y, t)[0]) < 1e-12
    # x - y is parallel to the normal at y
    n = p.normal(y, t)[0]
    r = (x - y)[0]
    assert abs(r[0] * n[1] - r[1] * n[0]) < 1e-12


@settings(max_examples=40, deadline=None)
@given(v=st.tuples(*(st.floats(-1, 1, allow_nan=False),) * 3).filter(
    lambda v: 0.3 < math.sqrt(sum(c * c for c in v))), t=times)
def test_closest_point_sphere(v, t):
    p = get_problem("ex4")
    x = np.array([v]) * 2.0
    y = closest_point(p, x, t)
    assert abs(np.linalg.norm(y) - p.radius(t)) < 1e-13


def test_closest_point_center_is_degenerate():
    with pytest.raises(DegeneratePoint):
        closest_point(get_problem("ex1"), np.zeros((1, 2)), 0.0)


def test_newton_fallback_agrees_with_radial_formula(rng):
    from diffband.levelset import _closest_point_newton
    p = get_problem("ex3")
    x = p.center(0.05) + rng.uniform(0.8, 1.2, size=(30, 1)) * np.stack(
        [np.cos(a := rng.uniform(0, 2 * np.pi, 30)), np.sin(a)], axis=1)
    assert np.abs(_closest_point_newton(p, x, 0.05) - closest_point(p, x, 0.05)).max() < 1e-12


def test_extension_is_constant_along_normals():
    p = get_problem("ex2")
    a = np.linspace(0, 2 * np.pi, 17)
    dirs = np.stack([np.cos(a), np.sin(a)], axis=1)
    near = extend_from_surface(p, "u0", 0.9 * dirs)
    far = extend_from_surface(p, "u0", 1.2 * dirs)
    assert np.allclose(near, far, atol=1e-14)
    assert np.allclose(near, p.u0(dirs), atol=1e-14)
    with pytest.raises(ValueError):
        extend_from_surface(p, "pressure", dirs)


def test_unknown_problem_id():
    with pytest.raises(KeyError):
        get_problem("ex9")


def test_ex4_time_integral_matches_fine_simpson():
    t = 0.1
    s = np.linspace(0, t, 200001)
    f = 1 / (1 + np.sin(np.pi * s) ** 2) ** 2
    simpson = (s[1] - s[0]) / 3 * (f[0] + f[-1] + 4 * f[1:-1:2].sum() + 2 * f[2:-1:2].sum())
    assert abs(exact_time_integral_ex4(t) - simpson) < 1e-12
    assert exact_time_integral_ex4(0.0) == 0.0


@pytest.mark.parametrize("pid", ["ex1", "ex2", "ex3"])
def test_exact_solutions_solve_the_surface_pde(pid):
    from diffband.verify import surface_pde_residual
    p = get_problem(pid)
    xs = p.surface_points(0.05, 32)
    if hasattr(p, "fold"):
        xs = p.fold(xs)
    assert np.abs(surface_pde_residual(p, xs, 0.05)).max() < 1e-4


def test_ex4_velocity_is_normal_speed_on_sphere():
    p = get_problem("ex4")
    t = 0.03
    pts, _ = p.sphere_quadrature(t, 10)
    v = p.velocity(pts, t)
    vn = np.sum(v * p.normal(pts, t), axis=1)
    # V = -phi_t / |grad phi|
    expected = -p.phi_t(pts, t) / np.linalg.norm(p.grad_phi(pts, t), axis=1)
    assert np.allclose(vn, expected, atol=1e-12)


def test_band_constants_for_unit_circle():
    rep = estimate_band_constants(get_problem("ex1"), 0.1, n_samples=500)
    # |grad phi| = 2|x| on a band of half-width 0.15 pi around the unit circle
    assert 0 < rep.c0_est <= rep.c1_est
    assert rep.c1_est <= 2 * math.sqrt(1 + 0.15 * math.pi) * 1.01
    assert rep.c2_est >= 2.0
