"""Element integrals and global assembly for the interpolated-weight scheme.

On a simplex ``I_h phi`` is affine, so ``|grad I_h phi|`` is constant per
element and every integrand below is a polynomial of degree at most three
in the barycentric coordinates. All integrals are evaluated exactly with
the closed-form moments ``int lambda^alpha``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .band import BandSpace, shared_elements
from .linalg import SparseMatrix
from .quadrature import moment_tensor


class DegenerateElement(ValueError):
    pass


class MissingTransferDof(RuntimeError):
    pass


@lru_cache(maxsize=None)
def _moments(dim):
    return moment_tensor(2, dim), moment_tensor(3, dim)


@dataclass
class ElementContribution:
    """Local matrices, rows indexed by the test function."""

    M_w: np.ndarray
    K_w: np.ndarray
    B_w: np.ndarray
    S: np.ndarray
    F_w: np.ndarray

    def system(self, gamma, tau):
        return self.M_w + tau * (self.K_w - self.B_w) + gamma * tau ** 2 * self.S


def _weight_grad(G, phi):
    """``|grad I_h phi|`` per element for gradients ``(n, d+1, d)``."""
    return np.linalg.norm(np.matmul(phi[:, None, :], G)[:, 0, :], axis=1)


def _rho_moments(rho):
    """``R[e, i, j] = sum_k P3[i, j, k] rho[e, k]``, the mass matrix with weight ``I_h rho``."""
    n = rho.shape[1]
    _, P3 = _moments(n - 1)
    return (rho @ P3.reshape(n * n, n).T).reshape(-1, n, n)


def _gram(G):
    return np.matmul(G, G.transpose(0, 2, 1))


def local_weighted_mass(G, vol, rho, phi):
    c = _weight_grad(G, phi) * vol
    return c[:, None, None] * _rho_moments(rho)


def local_weighted_stiffness(G, vol, rho, phi):
    c = _weight_grad(G, phi) * vol * rho.mean(axis=1)
    return c[:, None, None] * _gram(G)


def local_advection(G, vol, rho, phi, vel):
    """``B[i, j] = int lambda_j (I_h v . grad lambda_i) I_h rho |grad I_h phi|``."""
    c = _weight_grad(G, phi) * vol
    vg = np.matmul(vel, G.transpose(0, 2, 1))
    return c[:, None, None] * np.matmul(_rho_moments(rho), vg).transpose(0, 2, 1)


def local_stabilization(G, vol, rho_tilde):
    c = vol * rho_tilde.mean(axis=1)
    return c[:, None, None] * _gram(G)


def local_load(G, vol, rho, phi, f):
    c = _weight_grad(G, phi) * vol
    return c[:, None] * np.matmul(_rho_moments(rho), f[:, :, None])[:, :, 0]


def element_contribution(verts, rho, rho_tilde, phi, vel, f, gamma=0.0, tau=0.0):
    """All local terms on one simplex with vertices ``verts`` ``(d+1, d)``."""
    from .mesh import barycentric_gradients

    verts = np.asarray(verts, dtype=float)
    J = (verts[1:] - verts[0]).T
    if np.linalg.det(J) == 0:
        raise DegenerateElement("element has zero volume")
    G, vol = barycentric_gradients(verts)
    G = G[None]
    rho = np.asarray(rho, float)[None]
    phi = np.asarray(phi, float)[None]
    return ElementContribution(
        local_weighted_mass(G, vol, rho, phi)[0],
        local_weighted_stiffness(G, vol, rho, phi)[0],
        local_advection(G, vol, rho, phi, np.asarray(vel, float)[None])[0],
        local_stabilization(G, vol, np.asarray(rho_tilde, float)[None])[0],
        local_load(G, vol, rho, phi, np.asarray(f, float)[None])[0],
    )


def _chunks(n, size=1 << 18):
    for s in range(0, n, size):
        yield slice(s, min(n, s + size))


def _scatter_matrix(n, elements, local_fn):
    """Assemble ``sum_e P_e^T A_e P_e`` from chunked local matrices."""
    n_el, k = elements.shape
    rows = np.empty(n_el * k * k, dtype=np.int32)
    cols = np.empty(n_el * k * k, dtype=np.int32)
    vals = np.empty(n_el * k * k)
    for sl in _chunks(n_el):
        loc = local_fn(sl)
        el = elements[sl].astype(np.int32)
        a, b = sl.start * k * k, sl.stop * k * k
        rows[a:b] = np.repeat(el, k, axis=1).reshape(-1)
        cols[a:b] = np.tile(el, (1, k)).reshape(-1)
        vals[a:b] = loc.reshape(-1)
    return SparseMatrix.from_triplets(n, rows, cols, vals)


def _band_local(band: BandSpace, sl):
    el = band.elements[sl]
    return band.grads[sl], band.volume, band.rho[el], band.phi[el]


def local_system(band: BandSpace, sl, gamma, tau):
    G, vol, rho, phi = _band_local(band, sl)
    el = band.elements[sl]
    c = (_weight_grad(G, phi) * vol)[:, None, None]
    R = _rho_moments(rho)
    gram = _gram(G)
    vg = np.matmul(band.velocity[el], G.transpose(0, 2, 1))
    A = c * R
    A += (tau * c * rho.mean(axis=1)[:, None, None]
          + gamma * tau ** 2 * vol * band.rho_tilde[el].mean(axis=1)[:, None, None]) * gram
    A -= tau * c * np.matmul(R, vg).transpose(0, 2, 1)
    return A


def assemble_matrix(band: BandSpace, gamma: float, tau: float) -> SparseMatrix:
    """Weighted mass + tau (stiffness - advection) + gamma tau^2 stabilization."""
    return _scatter_matrix(band.n_dofs, band.elements, lambda sl: local_system(band, sl, gamma, tau))


def assemble_weighted_mass(band: BandSpace) -> SparseMatrix:
    return _scatter_matrix(band.n_dofs, band.elements,
                           lambda sl: local_weighted_mass(*_band_local(band, sl)))


def assemble_weighted_stiffness(band: BandSpace) -> SparseMatrix:
    return _scatter_matrix(band.n_dofs, band.elements,
                           lambda sl: local_weighted_stiffness(*_band_local(band, sl)))


def assemble_load(band: BandSpace, tau: float):
    out = np.zeros(band.n_dofs)
    if not np.any(band.source):
        return out
    for sl in _chunks(band.n_elements):
        G, vol, rho, phi = _band_local(band, sl)
        el = band.elements[sl]
        loc = local_load(G, vol, rho, phi, band.source[el])
        out += np.bincount(el.reshape(-1), loc.reshape(-1), minlength=band.n_dofs)
    return tau * out


def assemble_transfer(band: BandSpace, band_prev: BandSpace, u_prev):
    """``int u_prev v I rho_prev |grad I phi_prev|`` tested against ``band``'s basis.

    Only elements carrying a nonzero previous weight contribute; each must
    also belong to the current band.
    """
    u_prev = np.asarray(u_prev, dtype=float)
    if u_prev.shape != (band_prev.n_dofs,):
        raise ValueError("u_prev does not match the previous band")
    active = (band_prev.rho[band_prev.elements] > 0).any(axis=1)
    ia, ib = shared_elements(band, band_prev)
    covered = np.zeros(band_prev.n_elements, bool)
    covered[ib] = True
    missing = active & ~covered
    if missing.any():
        raise MissingTransferDof(
            f"{int(missing.sum())} element(s) with nonzero previous weight lie outside the new band")
    keep = active[ib]
    ia, ib = ia[keep], ib[keep]
    out = np.zeros(band.n_dofs)
    for sl in _chunks(len(ia)):
        pe = ib[sl]
        el_prev = band_prev.elements[pe]
        M = local_weighted_mass(band_prev.grads[pe], band_prev.volume,
                                band_prev.rho[el_prev], band_prev.phi[el_prev])
        loc = np.einsum("eij,ej->ei", M, u_prev[el_prev])
        el = band.elements[ia[sl]]
        out += np.bincount(el.reshape(-1), loc.reshape(-1), minlength=band.n_dofs)
    return out


def assemble_step_system(band: BandSpace, band_prev: BandSpace, u_prev, gamma: float, tau: float):
    """Matrix and right-hand side of one implicit step (natural boundary conditions)."""
    A = assemble_matrix(band, gamma, tau)
    b = assemble_transfer(band, band_prev, u_prev) + assemble_load(band, tau)
    return A, b


def assemble_initial_projection(band: BandSpace, u0_nodal):
    """Unweighted mass matrix on the band and the load of the interpolated data."""
    P2, _ = _moments(band.dim)
    loc = band.volume * P2
    M = _scatter_matrix(band.n_dofs, band.elements,
                        lambda sl: np.broadcast_to(loc, (sl.stop - sl.start,) + loc.shape))
    return M, M.matvec(np.asarray(u0_nodal, dtype=float))


def weighted_mass(band: BandSpace, u):
    """``int u I_h rho |grad I_h phi|``."""
    P2, _ = _moments(band.dim)
    total = 0.0
    for sl in _chunks(band.n_elements):
        G, vol, rho, phi = _band_local(band, sl)
        c = _weight_grad(G, phi) * vol
        total += float(np.sum(c * np.einsum("ek,kj,ej->e", rho, P2, u[band.elements[sl]])))
    return total


def weighted_abs_mass(band: BandSpace, u):
    """``int |u| I_h rho |grad I_h phi|`` (an upper bound scale for mass drift)."""
    u = np.asarray(u)
    return weighted_mass(band, np.abs(u))


def weighted_l2_sq(band: BandSpace, w):
    """``int w^2 I_h rho |grad I_h phi|`` for a nodal vector ``w``."""
    total = 0.0
    for sl in _chunks(band.n_elements):
        M = local_weighted_mass(*_band_local(band, sl))
        we = w[band.elements[sl]]
        total += float(np.einsum("ei,eij,ej->", we, M, we))
    return total


def weighted_h1_sq(band: BandSpace, w):
    """``int |grad w|^2 I_h rho |grad I_h phi|`` for a nodal vector ``w``."""
    total = 0.0
    for sl in _chunks(band.n_elements):
        G, vol, rho, phi = _band_local(band, sl)
        c = _weight_grad(G, phi) * vol * rho.mean(axis=1)
        gw = np.einsum("eid,ei->ed", G, w[band.elements[sl]])
        total += float(np.sum(c * np.sum(gw * gw, axis=1)))
    return total
