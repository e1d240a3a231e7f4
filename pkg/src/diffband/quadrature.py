"""Simplex quadrature: exact barycentric moments and collapsed Gauss rules."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np


def barycentric_moment(alpha, dim):
    """``int_T prod lambda_i^alpha_i / |T|`` on any ``dim``-simplex."""
    a = np.asarray(alpha, dtype=int)
    num = math.factorial(dim) * math.prod(math.factorial(int(k)) for k in a)
    return num / math.factorial(dim + int(a.sum()))


def moment_tensor(order, dim):
    """Tensor ``P[i1..ik] = int_T lambda_i1 ... lambda_ik / |T|``."""
    n = dim + 1
    P = np.empty((n,) * order)
    for idx in itertools.product(range(n), repeat=order):
        alpha = np.bincount(np.array(idx, dtype=int), minlength=n)
        P[idx] = barycentric_moment(alpha, dim)
    return P


@dataclass(frozen=True)
class QuadratureRule:
    """Rule on the reference simplex; ``points`` are barycentric coordinates."""

    dim: int
    degree: int
    points: np.ndarray
    weights: np.ndarray

    def cartesian(self, verts):
        return self.points @ np.asarray(verts, dtype=float)


def collapsed_gauss(dim: int, degree: int) -> QuadratureRule:
    """Tensor Gauss-Legendre rule mapped to the simplex by the Duffy transform.

    Weights sum to the reference volume ``1 / dim!``.
    """
    n = (degree + dim) // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    pts, wts = [], []
    for idx in itertools.product(range(n), repeat=dim):
        s = x[list(idx)]
        weight = np.prod(w[list(idx)])
        y = np.empty(dim)
        scale = 1.0
        for k in range(dim):
            y[k] = s[k] * scale
            weight *= scale
            scale *= 1.0 - s[k]
        pts.append(y)
        wts.append(weight)
    y = np.array(pts)
    bary = np.column_stack([1.0 - y.sum(axis=1), y])
    return QuadratureRule(dim, degree, bary, np.array(wts))
