"""Virtual uniform simplicial grid and band-local mesh materialization.

The grid is never stored globally. Vertices are identified by the flat
index of their lattice multi-index, so the same lattice point carries the
same key in every mesh cut from the grid. Each cell is split into ``d!``
Kuhn simplices (two triangles sharing the main diagonal in 2D, six
tetrahedra in 3D), which yields a conforming triangulation without any
case analysis.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage


class BandTouchesBoundary(ValueError):
    pass


class PointNotCovered(ValueError):
    pass


def kuhn_permutations(dim):
    return list(itertools.permutations(range(dim)))


def kuhn_offsets(dim):
    """Lattice offsets ``(n_simplices, dim + 1, dim)`` of the Kuhn split of a unit cell."""
    out = []
    for perm in kuhn_permutations(dim):
        o = np.zeros(dim, dtype=np.int64)
        verts = [o.copy()]
        for axis in perm:
            o[axis] += 1
            verts.append(o.copy())
        out.append(verts)
    return np.array(out, dtype=np.int64)


def barycentric_gradients(verts):
    """Gradients ``(d + 1, d)`` of the barycentric coordinates and the volume."""
    verts = np.asarray(verts, dtype=float)
    d = verts.shape[1]
    J = (verts[1:] - verts[0]).T
    Jinv = np.linalg.inv(J)
    G = np.empty((d + 1, d))
    G[1:] = Jinv
    G[0] = -Jinv.sum(axis=0)
    return G, abs(np.linalg.det(J)) / math.factorial(d)


@dataclass(frozen=True)
class VirtualGrid:
    lower: tuple
    upper: tuple
    cells: tuple

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or len(self.cells) != len(self.lower):
            raise ValueError("lower, upper and cells must have equal length")
        if any(int(n) != n or n < 1 for n in self.cells):
            raise ValueError("cells must be positive integers")
        if any(u <= l for l, u in zip(self.lower, self.upper)):
            raise ValueError("empty domain")

    @classmethod
    def uniform(cls, lower, upper, n):
        d = len(lower)
        return cls(tuple(map(float, lower)), tuple(map(float, upper)), (int(n),) * d)

    @classmethod
    def from_level(cls, lower, upper, level):
        return cls.uniform(lower, upper, 2 ** int(level))

    @property
    def dim(self):
        return len(self.cells)

    @property
    def cell_width(self):
        return (np.asarray(self.upper) - np.asarray(self.lower)) / np.asarray(self.cells)

    @property
    def h(self):
        """Diameter of every Kuhn simplex (the cell diagonal)."""
        return float(np.sqrt(np.sum(self.cell_width ** 2)))

    @property
    def vertex_shape(self):
        return tuple(n + 1 for n in self.cells)

    @property
    def n_simplices(self):
        return math.factorial(self.dim)

    def vertex_coords(self, keys):
        idx = np.stack(np.unravel_index(np.asarray(keys), self.vertex_shape), axis=-1)
        return np.asarray(self.lower) + idx * self.cell_width

    def reference_geometry(self):
        """Barycentric gradients ``(n_simplices, d + 1, d)`` and common volume."""
        offs = kuhn_offsets(self.dim)
        Gs, vols = zip(*(barycentric_gradients(o * self.cell_width) for o in offs))
        return np.array(Gs), float(vols[0])


@dataclass
class BandMesh:
    """Materialized simplices of a :class:`VirtualGrid`.

    ``element_keys`` is sorted; element ``e`` lives in cell
    ``element_keys[e] // n_simplices`` with Kuhn type ``element_keys[e] % n_simplices``.
    ``elements`` holds indices into ``vertex_keys`` (sorted lattice keys).
    """

    grid: VirtualGrid
    element_keys: np.ndarray
    elements: np.ndarray
    vertex_keys: np.ndarray
    coords: np.ndarray
    grads: np.ndarray = field(repr=False)
    volume: float = 0.0

    @property
    def n_elements(self):
        return len(self.element_keys)

    @property
    def n_vertices(self):
        return len(self.vertex_keys)

    @property
    def etype(self):
        return self.element_keys % self.grid.n_simplices

    @property
    def h_max(self):
        return self.grid.h if self.n_elements else 0.0

    def element_vertex_keys(self):
        return self.vertex_keys[self.elements]

    def find_elements(self, keys):
        """Indices of element keys in this mesh, ``-1`` where absent."""
        keys = np.asarray(keys)
        if self.n_elements == 0:
            return np.full(keys.shape, -1, dtype=np.int64)
        pos = np.minimum(np.searchsorted(self.element_keys, keys), self.n_elements - 1)
        return np.where(self.element_keys[pos] == keys, pos, -1)


def _cells_to_elements(grid: VirtualGrid, cell_keys):
    """Element keys and vertex keys for the given (sorted) cells."""
    d = grid.dim
    ns = grid.n_simplices
    offs = kuhn_offsets(d)
    cidx = np.stack(np.unravel_index(cell_keys, grid.cells), axis=-1)
    ekeys = (cell_keys[:, None] * ns + np.arange(ns)[None, :]).reshape(-1)
    vidx = cidx[:, None, None, :] + offs[None, :, :, :]
    vkeys = np.ravel_multi_index(tuple(np.moveaxis(vidx, -1, 0)), grid.vertex_shape)
    return ekeys, vkeys.reshape(-1, d + 1)


def mesh_from_cells(grid: VirtualGrid, cell_keys) -> BandMesh:
    cell_keys = np.unique(np.asarray(cell_keys, dtype=np.int64))
    G, vol = grid.reference_geometry()
    d = grid.dim
    if len(cell_keys) == 0:
        return BandMesh(grid, np.zeros(0, np.int64), np.zeros((0, d + 1), np.int64),
                        np.zeros(0, np.int64), np.zeros((0, d)), G, vol)
    ekeys, evk = _cells_to_elements(grid, cell_keys)
    vkeys, inv = np.unique(evk, return_inverse=True)
    elements = inv.reshape(evk.shape)
    return BandMesh(grid, ekeys, elements, vkeys, grid.vertex_coords(vkeys), G, vol)


def _vertex_mask(grid: VirtualGrid, predicate, chunk=1 << 20):
    shape = grid.vertex_shape
    total = int(np.prod(shape))
    out = np.empty(total, dtype=bool)
    for start in range(0, total, chunk):
        keys = np.arange(start, min(start + chunk, total))
        out[start:start + len(keys)] = predicate(grid.vertex_coords(keys))
    return out.reshape(shape)


def flagged_cells(grid: VirtualGrid, vertex_mask):
    """Cells with at least one flagged corner."""
    d = grid.dim
    cm = np.zeros(grid.cells, dtype=bool)
    for corner in itertools.product((0, 1), repeat=d):
        sl = tuple(slice(c, c + n) for c, n in zip(corner, grid.cells))
        cm |= vertex_mask[sl]
    return cm


def materialize_band_mesh(grid: VirtualGrid, predicate, symmetry_faces=(), pad=1) -> BandMesh:
    """Materialize every cell with a corner where ``predicate`` holds, plus padding.

    ``predicate`` maps an ``(N, d)`` array of points to booleans. Cells on a
    domain face raise :class:`BandTouchesBoundary` unless the face is listed
    in ``symmetry_faces`` as ``(axis, side)`` with side 0 (lower) or 1 (upper).
    """
    cm = flagged_cells(grid, _vertex_mask(grid, predicate))
    if pad and cm.any():
        cm = ndimage.binary_dilation(cm, structure=np.ones((3,) * grid.dim, bool), iterations=pad)
    allowed = set(map(tuple, symmetry_faces))
    for axis in range(grid.dim):
        for side in (0, 1):
            if (axis, side) in allowed:
                continue
            idx = 0 if side == 0 else grid.cells[axis] - 1
            if np.take(cm, idx, axis=axis).any():
                raise BandTouchesBoundary(f"band reaches the domain face axis={axis} side={side}")
    return mesh_from_cells(grid, np.flatnonzero(cm.reshape(-1)))


def locate_point(mesh: BandMesh, x):
    """Element indices and barycentric coordinates of points ``x`` (shape ``(N, d)``).

    Raises :class:`PointNotCovered` when a point's simplex is not in ``mesh``.
    """
    grid = mesh.grid
    d = grid.dim
    x = np.atleast_2d(np.asarray(x, dtype=float))
    s = (x - np.asarray(grid.lower)) / grid.cell_width
    ncell = np.asarray(grid.cells)
    if np.any(s < -1e-12) or np.any(s > ncell + 1e-12):
        raise PointNotCovered("point outside the grid")
    c = np.clip(np.floor(s).astype(np.int64), 0, ncell - 1)
    y = np.clip(s - c, 0.0, 1.0)
    # Kuhn type: permutation sorting local coordinates in decreasing order
    order = np.argsort(-y, axis=1, kind="stable")
    perms = kuhn_permutations(d)
    lookup = {p: i for i, p in enumerate(perms)}
    radix = d ** np.arange(d)[::-1]
    table = np.full(d ** d, -1, dtype=np.int64)
    for p, i in lookup.items():
        table[int(np.dot(p, radix))] = i
    etype = table[order @ radix]
    ys = np.take_along_axis(y, order, axis=1)
    lam = np.empty((len(x), d + 1))
    lam[:, 0] = 1.0 - ys[:, 0]
    lam[:, 1:d] = ys[:, :-1] - ys[:, 1:]
    lam[:, d] = ys[:, -1]
    ckey = np.ravel_multi_index(tuple(c.T), grid.cells)
    eidx = mesh.find_elements(ckey * grid.n_simplices + etype)
    if np.any(eidx < 0):
        raise PointNotCovered(f"{int(np.sum(eidx < 0))} point(s) lie in cells that are not materialized")
    return eidx, lam


def nodal_interpolate(mesh: BandMesh, func):
    return np.asarray(func(mesh.coords), dtype=float)


def shape_regularity(mesh: BandMesh):
    """Inradius over diameter for each Kuhn type."""
    grid = mesh.grid
    d = grid.dim
    out = []
    for o in kuhn_offsets(d):
        v = o * grid.cell_width
        G, vol = barycentric_gradients(v)
        # inradius = d * vol / total facet measure; facet measure_i = d * vol * |G_i|
        r_in = 1.0 / np.sum(np.linalg.norm(G, axis=1))
        diam = max(np.linalg.norm(a - b) for a, b in itertools.combinations(v, 2))
        out.append(r_in / diam)
    return np.array(out)


def dump_mesh(mesh: BandMesh, path):
    """Write the plain-text mesh format: header, vertex lines, element lines."""
    with open(path, "w") as fh:
        fh.write(f"{mesh.grid.dim} {mesh.n_vertices} {mesh.n_elements}\n")
        for k, xyz in zip(mesh.vertex_keys, mesh.coords):
            fh.write(f"{k} " + " ".join(f"{c:.17g}" for c in xyz) + "\n")
        for row in mesh.element_vertex_keys():
            fh.write(" ".join(str(k) for k in row) + "\n")


def load_mesh_text(path):
    """Read back ``dump_mesh`` output as (dim, vertex_keys, coords, element_vertex_keys)."""
    with open(path) as fh:
        dim, nv, ne = map(int, fh.readline().split())
        vk = np.empty(nv, np.int64)
        xyz = np.empty((nv, dim))
        for i in range(nv):
            parts = fh.readline().split()
            vk[i] = int(parts[0])
            xyz[i] = [float(p) for p in parts[1:]]
        el = np.array([[int(p) for p in fh.readline().split()] for _ in range(ne)],
                      dtype=np.int64).reshape(ne, dim + 1)
    return dim, vk, xyz, el
