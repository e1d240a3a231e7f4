import dataclasses
import math

import numpy as np
import pytest

from diffband.band import (EmptyBand, GridMismatch, check_connected, extract_band, shared_dofs,
                           shared_elements)
from diffband.levelset import get_problem
from diffband.mesh import VirtualGrid, materialize_band_mesh
from diffband.phasefield import COUPLING_CONST, PhaseFieldParams, g_eval
from diffband.errors import evaluate_discrete


def test_band_definition(coarse_ex1_state):
    st, s0 = coarse_ex1_state
    band = s0.band
    # every band element has a vertex with rho_tilde > 0
    assert np.all((band.rho_tilde[band.elements] > 0).any(axis=1))
    # every mesh element with such a vertex is in the band
    mesh = band.mesh
    phi = st.problem.phi(mesh.coords, 0.0)
    wide = (g_eval(phi / (2 * band.eps)) > 0)[mesh.elements].any(axis=1)
    assert np.array_equal(np.sort(mesh.element_keys[wide]), band.element_keys)


def test_rho_support_is_inside_band(coarse_ex1_state):
    _, s0 = coarse_ex1_state
    band = s0.band
    narrow = band.rho[band.elements].any(axis=1)
    assert narrow.sum() < band.n_elements
    assert check_connected(band)


def test_band_inclusion_constant(coarse_ex1_state):
    st, s0 = coarse_ex1_state
    band = s0.band
    pts = st.problem.fold(st.problem.surface_points(0.0, 200))
    rt, _ = evaluate_discrete(band, band.rho_tilde, pts)
    assert rt.min() >= 0.5 * COUPLING_CONST


def test_shared_dofs_identity_and_symmetry(coarse_ex3_states):
    _, s0, s1 = coarse_ex3_states
    ia, ib = shared_dofs(s0.band, s0.band)
    assert np.array_equal(ia, np.arange(s0.band.n_dofs)) and np.array_equal(ia, ib)
    a, b = shared_dofs(s0.band, s1.band)
    b2, a2 = shared_dofs(s1.band, s0.band)
    assert np.array_equal(a, a2) and np.array_equal(b, b2)
    assert np.array_equal(s0.band.dof_keys[a], s1.band.dof_keys[b])
    ea, eb = shared_elements(s0.band, s1.band)
    assert np.array_equal(s0.band.element_keys[ea], s1.band.element_keys[eb])


def test_moving_band_mostly_overlaps(coarse_ex3_states):
    _, s0, s1 = coarse_ex3_states
    ia, _ = shared_dofs(s0.band, s1.band)
    assert len(ia) > 0.9 * s0.band.n_dofs


def test_grid_mismatch(coarse_ex1_state, coarse_ex3_states):
    with pytest.raises(GridMismatch):
        shared_dofs(coarse_ex1_state[1].band, coarse_ex3_states[1].band)


def test_disconnected_components_are_detected():
    class TwoCircles:
        dim = 2

        def phi(self, x, t):
            a = np.linalg.norm(x - [-0.5, 0], axis=1) - 0.2
            b = np.linalg.norm(x - [0.5, 0], axis=1) - 0.2
            return np.minimum(a, b)

        def center(self, t):
            return None

        def grad_phi(self, x, t):
            return np.ones_like(x)

        def hess_phi(self, x, t):
            return np.zeros(x.shape + (2,))

        def velocity(self, x, t):
            return np.zeros_like(x)

        def source(self, x, t):
            return np.zeros(len(x))

    p = TwoCircles()
    g = VirtualGrid.uniform((-1, -1), (1, 1), 64)
    eps = 0.02
    mesh = materialize_band_mesh(g, lambda x: np.abs(p.phi(x, 0)) < eps * np.pi)
    from unittest import mock
    with mock.patch("diffband.band.safe_closest_point", lambda prob, x, t: x):
        band = extract_band(mesh, p, PhaseFieldParams(eps), 0.0)
    assert not check_connected(band)
    one = dataclasses.replace(band, element_keys=band.element_keys[:1], elements=band.elements[:1])
    assert check_connected(one)


def test_empty_band_raises():
    p = get_problem("ex1")
    g = VirtualGrid.uniform((0, 0), (2.4, 2.4), 24)
    mesh = materialize_band_mesh(g, lambda x: np.linalg.norm(x, axis=1) < 0.0)
    with pytest.raises(EmptyBand):
        extract_band(mesh, p, PhaseFieldParams(0.1), 0.0)


def test_stationary_band_reuse(coarse_ex1_state):
    _, s0 = coarse_ex1_state
    b = s0.band.at_time(3, 0.3)
    assert b.m == 3 and b.t == 0.3
    assert b.rho is s0.band.rho
