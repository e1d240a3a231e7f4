"""Time-indexed narrow band finite element spaces."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .levelset import LevelSetProblem, closest_point, DegeneratePoint
from .mesh import BandMesh
from .phasefield import PhaseFieldParams, g_eval


class EmptyBand(ValueError):
    pass


class GridMismatch(ValueError):
    pass


def safe_closest_point(problem: LevelSetProblem, x, t):
    """Closest points with a fixed choice (first axis direction) at the center.

    Nodes sitting exactly on the center of a circle or sphere occur on
    symmetric grids; their extended data only enters through elements on
    which the narrow phase field vanishes.
    """
    try:
        return closest_point(problem, x, t)
    except DegeneratePoint:
        c = problem.center(t)
        y = np.asarray(x, dtype=float) - c
        bad = np.sqrt(np.sum(y * y, axis=-1)) == 0
        y[bad, 0] = 1.0
        return closest_point(problem, c + y, t)


@dataclass
class BandSpace:
    """P1 space on the union of elements with a vertex where ``rho_tilde > 0``.

    ``elements`` indexes the DOFs (``dof_keys`` sorted lattice keys);
    ``element_keys`` are the global element keys of the band elements,
    sorted. Nodal arrays hold the Lagrange interpolants of the extended data.
    """

    m: int
    t: float
    mesh: BandMesh
    element_keys: np.ndarray
    elements: np.ndarray
    dof_keys: np.ndarray
    coords: np.ndarray
    rho: np.ndarray
    rho_tilde: np.ndarray
    phi: np.ndarray
    velocity: np.ndarray
    source: np.ndarray
    eps: float
    _grads: np.ndarray = field(default=None, repr=False)

    @property
    def n_dofs(self):
        return len(self.dof_keys)

    @property
    def n_elements(self):
        return len(self.element_keys)

    @property
    def grid(self):
        return self.mesh.grid

    @property
    def dim(self):
        return self.mesh.grid.dim

    @property
    def volume(self):
        return self.mesh.volume

    @property
    def etype(self):
        return self.element_keys % self.grid.n_simplices

    @property
    def grads(self):
        """Barycentric gradients per element, ``(n_el, d + 1, d)``."""
        if self._grads is None:
            self._grads = self.mesh.grads[self.etype]
        return self._grads

    def at_time(self, m, t):
        """Same band relabelled with a new step index (stationary problems)."""
        return BandSpace(m, t, self.mesh, self.element_keys, self.elements, self.dof_keys,
                         self.coords, self.rho, self.rho_tilde, self.phi, self.velocity,
                         self.source, self.eps, self._grads)

    def find_elements(self, keys):
        keys = np.asarray(keys)
        if self.n_elements == 0:
            return np.full(keys.shape, -1, dtype=np.int64)
        pos = np.minimum(np.searchsorted(self.element_keys, keys), self.n_elements - 1)
        return np.where(self.element_keys[pos] == keys, pos, -1)


def extract_band(mesh: BandMesh, problem: LevelSetProblem, params: PhaseFieldParams,
                 t: float, m: int = 0) -> BandSpace:
    """Select band elements and precompute nodal data at time ``t``."""
    eps = params.eps
    phi_v = problem.phi(mesh.coords, t) if mesh.n_vertices else np.zeros(0)
    wide = g_eval(phi_v / (2 * eps)) > 0
    sel = wide[mesh.elements].any(axis=1) if mesh.n_elements else np.zeros(0, bool)
    if not sel.any():
        raise EmptyBand(f"no element has a vertex with rho_tilde > 0 at t={t}")
    el_mesh = mesh.elements[sel]
    used, inv = np.unique(el_mesh, return_inverse=True)
    elements = inv.reshape(el_mesh.shape)
    x = mesh.coords[used]
    phi = phi_v[used]
    p = safe_closest_point(problem, x, t)
    return BandSpace(
        m=m, t=float(t), mesh=mesh,
        element_keys=mesh.element_keys[sel],
        elements=elements,
        dof_keys=mesh.vertex_keys[used],
        coords=x,
        rho=g_eval(phi / eps),
        rho_tilde=g_eval(phi / (2 * eps)),
        phi=phi,
        velocity=problem.velocity(p, t),
        source=problem.source(p, t),
        eps=eps,
    )


def element_faces(elements, n_vertices):
    """Integer-encoded faces ``(n_el, d + 1)``; face ``i`` omits local vertex ``i``."""
    n_el, k = elements.shape
    if float(n_vertices) ** (k - 1) >= 2.0 ** 62:
        raise OverflowError("too many vertices for integer face codes")
    srt = np.sort(elements, axis=1)
    codes = np.zeros((n_el, k), dtype=np.int64)
    base = np.int64(n_vertices)
    for i in range(k):
        cols = [j for j in range(k) if j != i]
        c = np.zeros(n_el, dtype=np.int64)
        for j in cols:
            c = c * base + srt[:, j]
        codes[:, i] = c
    return codes


def check_connected(band: BandSpace) -> bool:
    """True iff band elements form one component under face adjacency."""
    n = band.n_elements
    if n == 0:
        raise EmptyBand("connectivity of an empty band")
    if n == 1:
        return True
    faces = element_faces(band.elements, band.n_dofs).reshape(-1)
    owner = np.repeat(np.arange(n), band.elements.shape[1])
    order = np.argsort(faces, kind="stable")
    f = faces[order]
    o = owner[order]
    same = f[1:] == f[:-1]
    a, b = o[:-1][same], o[1:][same]
    g = coo_matrix((np.ones(len(a)), (a, b)), shape=(n, n))
    ncomp, _ = connected_components(g, directed=False)
    return ncomp == 1


def shared_dofs(band_a: BandSpace, band_b: BandSpace):
    """Index pairs ``(ia, ib)`` of DOFs with equal lattice keys."""
    if band_a.grid != band_b.grid:
        raise GridMismatch("bands come from different grids")
    _, ia, ib = np.intersect1d(band_a.dof_keys, band_b.dof_keys, assume_unique=True,
                               return_indices=True)
    return ia, ib


def shared_elements(band_a: BandSpace, band_b: BandSpace):
    if band_a.grid != band_b.grid:
        raise GridMismatch("bands come from different grids")
    _, ia, ib = np.intersect1d(band_a.element_keys, band_b.element_keys, assume_unique=True,
                               return_indices=True)
    return ia, ib
