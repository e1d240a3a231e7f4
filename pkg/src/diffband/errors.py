"""Error functionals E1-E4, their accumulation over a run, and convergence tables."""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

from .band import BandSpace, safe_closest_point
from .fem import weighted_h1_sq, weighted_l2_sq
from .mesh import PointNotCovered, locate_point


class NonpositiveError(ValueError):
    pass


def interpolated_exact(band: BandSpace, problem):
    """Nodal values of the exact solution extended by closest point projection."""
    p = safe_closest_point(problem, band.coords, band.t)
    return problem.u_exact(p, band.t)


def band_errors_step(band: BandSpace, u, problem):
    """Weighted L2 and H1 errors ``(2 / (eps pi)) int |I_h u_hat - u_h|^2 I rho |grad I phi|``."""
    e = interpolated_exact(band, problem) - np.asarray(u)
    scale = 2.0 / (band.eps * np.pi)
    return scale * weighted_l2_sq(band, e), scale * weighted_h1_sq(band, e)


def evaluate_discrete(band: BandSpace, u, points):
    """Values and (element-constant) gradients of the P1 function ``u`` at ``points``."""
    eidx, lam = locate_point(band.mesh, points)
    be = band.find_elements(band.mesh.element_keys[eidx])
    if np.any(be < 0):
        raise PointNotCovered(f"{int(np.sum(be < 0))} point(s) outside the band")
    ue = np.asarray(u)[band.elements[be]]
    vals = np.sum(lam * ue, axis=1)
    grads = np.einsum("eid,ei->ed", band.grads[be], ue)
    return vals, grads


def surface_error_terms(problem, t, pts, weights, uh, guh):
    """Quadrature sums of ``(u - u_h)^2`` and ``|grad_G u - grad_G u_h|^2``.

    ``uh`` and ``guh`` are values and ambient gradients of the approximation at
    ``pts``; the gradients are projected onto the tangent plane here.
    """
    nu = problem.normal(pts, t)
    gt = guh - np.sum(guh * nu, axis=1)[:, None] * nu
    ue = problem.u_exact(pts, t)
    ge = problem.grad_gamma_u_exact(pts, t)
    e3 = float(np.sum(weights * (ue - uh) ** 2))
    e4 = float(np.sum(weights * np.sum((ge - gt) ** 2, axis=1)))
    return e3, e4


def surface_quadrature(problem, t, L=200):
    """Points (mapped into the computational domain) and weights of the surface rule."""
    if problem.dim == 2:
        pts = problem.surface_points(t, L)
        w = np.full(L, 2 * np.pi / L)
    else:
        pts, w = problem.sphere_quadrature(t, L)
    if hasattr(problem, "fold"):
        pts = problem.fold(pts)
    return pts, w


def _surface_sums(band, u, problem, pts, weights):
    uh, guh = evaluate_discrete(band, u, pts)
    return surface_error_terms(problem, band.t, pts, weights, uh, guh)


def surface_errors_step(band: BandSpace, u, problem, L=200):
    """Squared surface L2 and tangential-gradient errors at one time level.

    2D: ``L`` equispaced circle points with weight ``2 pi / L``. 3D: the
    ``2L x L`` latitude/longitude rule. Problems solved on a symmetry-reduced
    domain provide ``fold``; the points are mapped into the computational
    domain, which leaves both errors unchanged for an even solution.
    """
    pts, w = surface_quadrature(problem, band.t, L)
    return _surface_sums(band, u, problem, pts, w)


@dataclass
class ErrorAccumulator:
    e1: float = 0.0
    e2: float = 0.0
    e3: float = 0.0
    e4: float = 0.0
    records: list = field(default_factory=list)

    def add(self, m, t, tau, e1=None, e2=None, e3=None, e4=None):
        if e1 is not None:
            self.e1 = max(self.e1, e1)
        if e2 is not None:
            self.e2 += tau * e2
        if e3 is not None:
            self.e3 = max(self.e3, e3)
        if e4 is not None:
            self.e4 += tau * e4
        self.records.append((m, t, tau, e1, e2, e3, e4))

    def as_dict(self):
        return {"E1": self.e1, "E2": self.e2, "E3": self.e3, "E4": self.e4}


def eoc(errors, hs):
    """Rates ``ln(E_k / E_k+1) / ln(h_k / h_k+1)`` for consecutive levels."""
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if len(errors) < 2 or len(errors) != len(hs):
        raise ValueError("need at least two levels with matching h values")
    if np.any(errors <= 0) or np.any(hs <= 0):
        raise NonpositiveError("errors and mesh sizes must be positive")
    return np.log(errors[:-1] / errors[1:]) / np.log(hs[:-1] / hs[1:])


ERROR_NAMES = ("E1", "E2", "E3", "E4")


@dataclass
class ConvergenceTable:
    """Rows of ``(h, eps, {E1..E4})``; missing errors (failed levels) are ``nan``."""

    h: list
    eps: list
    errors: dict
    columns: tuple = ERROR_NAMES

    def __post_init__(self):
        if any(b >= a for a, b in zip(self.h, self.h[1:])):
            raise ValueError("h must be strictly decreasing down the table")

    def rates(self, name):
        vals = np.asarray(self.errors[name], dtype=float)
        out = [math.nan]
        for k in range(1, len(vals)):
            a, b = vals[k - 1], vals[k]
            if a > 0 and b > 0 and np.isfinite(a) and np.isfinite(b):
                out.append(float(eoc([a, b], [self.h[k - 1], self.h[k]])[0]))
            else:
                out.append(math.nan)
        return out

    def _rows(self):
        rates = {c: self.rates(c) for c in self.columns}
        for k in range(len(self.h)):
            row = [self.h[k], self.eps[k]]
            for c in self.columns:
                row += [self.errors[c][k], rates[c][k]]
            yield row

    def header(self):
        cols = ["h", "eps"]
        for c in self.columns:
            cols += [c, "eoc" + c[1:]]
        return cols

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(self.header()) + "\n")
        for row in self._rows():
            cells = [f"{row[0]:.5e}", f"{row[1]:.5e}"]
            for k in range(2, len(row), 2):
                cells.append("" if not np.isfinite(row[k]) else f"{row[k]:.5e}")
                cells.append("" if not np.isfinite(row[k + 1]) else f"{row[k + 1]:.3f}")
            buf.write(",".join(cells) + "\n")
        return buf.getvalue()

    def to_markdown(self):
        head = self.header()
        lines = ["| " + " | ".join(head) + " |", "|" + "|".join("---" for _ in head) + "|"]
        for row in self._rows():
            cells = [f"{row[0]:.4e}", f"{row[1]:.4g}"]
            for k in range(2, len(row), 2):
                cells.append("failed" if not np.isfinite(row[k]) else f"{row[k]:.4e}")
                cells.append("-" if not np.isfinite(row[k + 1]) else f"{row[k + 1]:.3f}")
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"
