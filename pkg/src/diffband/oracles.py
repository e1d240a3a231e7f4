"""Slow reference implementations used to cross-check the production code.

Everything here works element by element with a high-degree collapsed
Gauss rule and dense linear algebra; nothing is shared with the closed-form
moment kernels of :mod:`diffband.fem`.
"""
from __future__ import annotations

import numpy as np

from .mesh import barycentric_gradients
from .quadrature import collapsed_gauss


def element_terms(verts, rho, rho_tilde, phi, vel, f, degree=8):
    """The five local terms by quadrature: ``(M_w, K_w, B_w, S, F_w)``."""
    verts = np.asarray(verts, float)
    d = verts.shape[1]
    G, vol = barycentric_gradients(verts)
    rule = collapsed_gauss(d, degree)
    w = rule.weights * vol * _factorial(d)
    lam = rule.points
    grad_phi = np.asarray(phi, float) @ G
    wphi = np.linalg.norm(grad_phi)
    rho_q = lam @ np.asarray(rho, float)
    rt_q = lam @ np.asarray(rho_tilde, float)
    vel_q = lam @ np.asarray(vel, float)
    f_q = lam @ np.asarray(f, float)
    n = d + 1
    M = np.zeros((n, n))
    K = np.zeros((n, n))
    B = np.zeros((n, n))
    S = np.zeros((n, n))
    F = np.zeros(n)
    for q in range(len(w)):
        weight = rho_q[q] * wphi * w[q]
        for i in range(n):
            F[i] += f_q[q] * lam[q, i] * weight
            for j in range(n):
                M[i, j] += lam[q, i] * lam[q, j] * weight
                K[i, j] += G[i] @ G[j] * weight
                B[i, j] += lam[q, j] * (vel_q[q] @ G[i]) * weight
                S[i, j] += G[i] @ G[j] * rt_q[q] * w[q]
    return M, K, B, S, F


def _factorial(d):
    out = 1
    for k in range(2, d + 1):
        out *= k
    return out


def _band_element_terms(band, e):
    el = band.elements[e]
    return element_terms(band.coords[el], band.rho[el], band.rho_tilde[el], band.phi[el],
                         band.velocity[el], band.source[el])


def dense_system(band, gamma, tau):
    """Dense system matrix and load by element loop."""
    n = band.n_dofs
    A = np.zeros((n, n))
    load = np.zeros(n)
    for e in range(band.n_elements):
        M, K, B, S, F = _band_element_terms(band, e)
        el = band.elements[e]
        A[np.ix_(el, el)] += M + tau * (K - B) + gamma * tau ** 2 * S
        load[el] += tau * F
    return A, load


def dense_transfer(band, band_prev, u_prev):
    """``int u_prev v I rho_prev |grad I phi_prev|`` via key lookups."""
    key_to_dof = {int(k): i for i, k in enumerate(band.dof_keys)}
    out = np.zeros(band.n_dofs)
    for e in range(band_prev.n_elements):
        el = band_prev.elements[e]
        if not np.any(band_prev.rho[el] > 0):
            continue
        M, *_ = _band_element_terms(band_prev, e)
        loc = M @ u_prev[el]
        for i, v in enumerate(el):
            out[key_to_dof[int(band_prev.dof_keys[v])]] += loc[i]
    return out


def dense_step(band, band_prev, u_prev, gamma, tau):
    """Solve one step of the scheme with dense assembly and LU."""
    A, load = dense_system(band, gamma, tau)
    b = dense_transfer(band, band_prev, np.asarray(u_prev, float)) + load
    return np.linalg.solve(A, b), A, b


def dense_projection(band, u0_nodal):
    """Unweighted L2 projection of a P1 function onto the band space."""
    n = band.n_dofs
    d = band.dim
    M = np.zeros((n, n))
    rule = collapsed_gauss(d, 4)
    lam = rule.points
    local = (lam.T * rule.weights) @ lam * band.volume * _factorial(d)
    for e in range(band.n_elements):
        el = band.elements[e]
        M[np.ix_(el, el)] += local
    return np.linalg.solve(M, M @ np.asarray(u0_nodal, float))
