"""Analytic moving-surface problems given as level sets.

Each problem bundles the level set function, the extended velocity
(which satisfies ``phi_t + v . grad(phi) = 0`` throughout the band), the
source term and the exact solution. All point-valued functions accept
arrays of shape ``(..., dim)`` and broadcast over the leading axes.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.stats import qmc


class DegeneratePoint(ValueError):
    """The closest point projection is undefined at the given point."""


class NonConvergence(RuntimeError):
    pass


def _norm(x):
    return np.sqrt(np.sum(x * x, axis=-1))


class LevelSetProblem:
    """Base class for a family of closed hypersurfaces ``{phi(., t) = 0}``.

    Subclasses describing a moving circle or sphere set ``center`` and
    ``radius``; the closest point projection is then evaluated by the exact
    radial formula. Other level sets fall back to a damped Newton iteration.
    """

    id: str = ""
    dim: int = 2
    lower: tuple = ()
    upper: tuple = ()
    final_time: float = 0.1
    stationary: bool = False
    # (axis, side) pairs on which the problem is reflected; no band check there
    symmetry_faces: tuple = ()

    # geometry -------------------------------------------------------------
    def phi(self, x, t):
        raise NotImplementedError

    def grad_phi(self, x, t):
        raise NotImplementedError

    def hess_phi(self, x, t):
        raise NotImplementedError

    def phi_t(self, x, t):
        raise NotImplementedError

    def phi_tt(self, x, t, dt=1e-5):
        return (self.phi_t(x, t + dt) - self.phi_t(x, t - dt)) / (2 * dt)

    def center(self, t):
        return None

    def radius(self, t):
        return None

    def normal(self, x, t):
        g = self.grad_phi(x, t)
        return g / _norm(g)[..., None]

    # data -----------------------------------------------------------------
    def velocity(self, x, t):
        return np.zeros(np.shape(x))

    def source(self, x, t):
        return np.zeros(np.shape(x)[:-1])

    def u_exact(self, x, t):
        raise NotImplementedError

    def grad_u_exact(self, x, t):
        """Ambient gradient of the closed-form expression for ``u_exact``."""
        raise NotImplementedError

    def grad_gamma_u_exact(self, x, t):
        nu = self.normal(x, t)
        g = self.grad_u_exact(x, t)
        return g - np.sum(g * nu, axis=-1)[..., None] * nu

    def u0(self, x):
        return self.u_exact(x, 0.0)

    def surface_points(self, t, n):
        """``n`` uniformly spaced points on a circle (2D only)."""
        a = 2 * np.pi * np.arange(n) / n
        return self.center(t) + self.radius(t) * np.stack([np.cos(a), np.sin(a)], axis=-1)

    @property
    def domain(self):
        return np.asarray(self.lower, float), np.asarray(self.upper, float)


class _Circle2D(LevelSetProblem):
    dim = 2
    lower = (-2.4, -2.4)
    upper = (2.4, 2.4)

    def center(self, t):
        return np.zeros(2)

    def radius(self, t):
        return 1.0

    def phi(self, x, t):
        y = np.asarray(x) - self.center(t)
        return np.sum(y * y, axis=-1) - self.radius(t) ** 2

    def grad_phi(self, x, t):
        return 2.0 * (np.asarray(x) - self.center(t))

    def hess_phi(self, x, t):
        return np.broadcast_to(2.0 * np.eye(self.dim), np.shape(x) + (self.dim,))

    def phi_t(self, x, t):
        return np.zeros(np.shape(x)[:-1])


class Example1(_Circle2D):
    """Stationary unit circle, ``u = exp(-4t)(x1^2 - x2^2)/2``, no velocity.

    Solved on the quarter ``(0, 2.4)^2`` with natural conditions on the two
    symmetry axes.
    """

    id = "ex1"
    lower = (0.0, 0.0)
    upper = (2.4, 2.4)
    stationary = True
    symmetry_faces = ((0, 0), (1, 0))

    def u_exact(self, x, t):
        x = np.asarray(x)
        return 0.5 * np.exp(-4 * t) * (x[..., 0] ** 2 - x[..., 1] ** 2)

    def grad_u_exact(self, x, t):
        x = np.asarray(x)
        return np.exp(-4 * t) * np.stack([x[..., 0], -x[..., 1]], axis=-1)

    def u0(self, x):
        x = np.asarray(x)
        return 0.5 * (x[..., 0] ** 2 - x[..., 1] ** 2)

    def fold(self, x):
        """Map a point of the full plane onto the computational quarter."""
        return np.abs(x)


class Example2(_Circle2D):
    """Stationary unit circle under rigid rotation."""

    id = "ex2"
    stationary = True

    def velocity(self, x, t):
        x = np.asarray(x)
        return 0.5 * np.pi * np.stack([x[..., 1], -x[..., 0]], axis=-1)

    def u_exact(self, x, t):
        x = np.asarray(x)
        x1, x2 = x[..., 0], x[..., 1]
        return np.exp(-4 * t) * (x1 * x2 * np.cos(np.pi * t)
                                 + 0.5 * (x1 ** 2 - x2 ** 2) * np.sin(np.pi * t))

    def grad_u_exact(self, x, t):
        x = np.asarray(x)
        x1, x2 = x[..., 0], x[..., 1]
        c, s = np.cos(np.pi * t), np.sin(np.pi * t)
        return np.exp(-4 * t) * np.stack([x2 * c + x1 * s, x1 * c - x2 * s], axis=-1)

    def u0(self, x):
        x = np.asarray(x)
        return x[..., 0] * x[..., 1]


class Example3(_Circle2D):
    """Unit circle translating with constant speed 2 along the x1 axis."""

    id = "ex3"

    def center(self, t):
        return np.array([2 * t - 0.5, 0.0])

    def phi_t(self, x, t):
        x = np.asarray(x)
        return -4.0 * (x[..., 0] + 0.5 - 2 * t)

    def phi_tt(self, x, t, dt=None):
        return np.full(np.shape(x)[:-1], 8.0)

    def velocity(self, x, t):
        v = np.zeros(np.shape(x))
        v[..., 0] = 2.0
        return v

    def u_exact(self, x, t):
        x = np.asarray(x)
        return np.exp(-4 * t) * (x[..., 0] + 0.5 - 2 * t) * x[..., 1]

    def grad_u_exact(self, x, t):
        x = np.asarray(x)
        return np.exp(-4 * t) * np.stack([x[..., 1], x[..., 0] + 0.5 - 2 * t], axis=-1)

    def u0(self, x):
        x = np.asarray(x)
        return (x[..., 0] + 0.5) * x[..., 1]


def _inv_r2(s):
    return 1.0 / (1.0 + np.sin(np.pi * s) ** 2) ** 2


@lru_cache(maxsize=4096)
def exact_time_integral_ex4(t: float) -> float:
    """``int_0^t r(s)^-2 ds`` for ``r(s) = 1 + sin^2(pi s)``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t == 0:
        return 0.0
    val, _ = integrate.quad(_inv_r2, 0.0, t, epsabs=1e-14, epsrel=1e-14, limit=200)
    return val


class Example4(LevelSetProblem):
    """Expanding sphere ``|x| = 1 + sin^2(pi t)`` in ``(-4, 4)^3``."""

    id = "ex4"
    dim = 3
    lower = (-4.0, -4.0, -4.0)
    upper = (4.0, 4.0, 4.0)

    def center(self, t):
        return np.zeros(3)

    def radius(self, t):
        return 1.0 + np.sin(np.pi * t) ** 2

    def radius_dot(self, t):
        return np.pi * np.sin(2 * np.pi * t)

    def phi(self, x, t):
        x = np.asarray(x)
        return np.sum(x * x, axis=-1) - self.radius(t) ** 2

    def grad_phi(self, x, t):
        return 2.0 * np.asarray(x)

    def hess_phi(self, x, t):
        return np.broadcast_to(2.0 * np.eye(3), np.shape(x) + (3,))

    def phi_t(self, x, t):
        return np.full(np.shape(x)[:-1], -2 * self.radius(t) * self.radius_dot(t))

    def velocity(self, x, t):
        # normal extension r r' x / |x|^2; equals r' x / |x| on the sphere
        x = np.asarray(x)
        scale = self.radius(t) * self.radius_dot(t) / np.sum(x * x, axis=-1)
        return scale[..., None] * x

    def _amplitude(self, t):
        return 2.0 * np.exp(-6.0 * exact_time_integral_ex4(float(t))) / self.radius(t) ** 2

    def u_exact(self, x, t):
        x = np.asarray(x)
        return self._amplitude(t) * x[..., 0] * x[..., 2] / np.sum(x * x, axis=-1)

    def grad_u_exact(self, x, t):
        x = np.asarray(x)
        r2 = np.sum(x * x, axis=-1)
        q = x[..., 0] * x[..., 2]
        g = np.stack([x[..., 2], np.zeros_like(q), x[..., 0]], axis=-1) / r2[..., None]
        g -= (2 * q / r2 ** 2)[..., None] * x
        return self._amplitude(t) * g

    def u0(self, x):
        x = np.asarray(x)
        return 2.0 * x[..., 0] * x[..., 2] / np.sum(x * x, axis=-1)

    def sphere_quadrature(self, t, L):
        """Points and weights of the latitude/longitude rule on the unit sphere,
        scaled to ``Gamma(t)``. Weights are those of the unit sphere."""
        k = np.arange(2 * L)
        l = np.arange(L)
        a = np.pi * k[:, None] / L
        b = np.pi * l[None, :] / L
        pts = np.stack(np.broadcast_arrays(np.cos(a) * np.sin(b), np.sin(a) * np.sin(b),
                                           np.cos(b)), axis=-1).reshape(-1, 3)
        w = np.broadcast_to((np.pi / L) ** 2 * np.sin(b), (2 * L, L)).reshape(-1)
        return self.radius(t) * pts, w


PROBLEMS = {"ex1": Example1, "ex2": Example2, "ex3": Example3, "ex4": Example4}


def get_problem(name: str, final_time: float | None = None) -> LevelSetProblem:
    try:
        problem = PROBLEMS[name.lower()]()
    except KeyError:
        raise KeyError(f"unknown problem id {name!r}; expected one of {sorted(PROBLEMS)}") from None
    if final_time is not None:
        problem.final_time = float(final_time)
    return problem


def closest_point(problem: LevelSetProblem, x, t, max_iter=50, tol=1e-13):
    """Project points onto ``Gamma(t)`` along the normal direction."""
    x = np.asarray(x, dtype=float)
    c = problem.center(t)
    if c is not None:
        y = x - c
        n = _norm(y)
        if np.any(n == 0):
            raise DegeneratePoint("closest point undefined at the center")
        return c + problem.radius(t) * y / n[..., None]
    return _closest_point_newton(problem, x, t, max_iter, tol)


def _closest_point_newton(problem, x, t, max_iter=50, tol=1e-13):
    """Damped Newton on ``phi(p) = 0``, ``x - p = lam * grad phi(p)``.

    Unknowns are ``(p, lam)``; the system is solved independently per point.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    shape = x.shape
    x = x.reshape(-1, shape[-1])
    d = x.shape[1]
    g0 = problem.grad_phi(x, t)
    if np.any(_norm(g0) == 0):
        raise DegeneratePoint("gradient of phi vanishes")
    lam = problem.phi(x, t) / np.sum(g0 * g0, axis=-1)
    p = x - lam[:, None] * g0
    eye = np.eye(d)
    for _ in range(max_iter):
        f = problem.phi(p, t)
        g = problem.grad_phi(p, t)
        H = problem.hess_phi(p, t)
        r = np.concatenate([x - p - lam[:, None] * g, f[:, None]], axis=1)
        if np.max(np.abs(r)) < tol:
            return p.reshape(shape)
        J = np.zeros((len(x), d + 1, d + 1))
        J[:, :d, :d] = -eye - lam[:, None, None] * H
        J[:, :d, d] = -g
        J[:, d, :d] = g
        step = np.linalg.solve(J, -r[..., None])[..., 0]
        # per-point backtracking; points already at roundoff keep the full step
        alpha = np.ones(len(x))
        base = np.sum(r * r, axis=1)
        active = np.ones(len(x), bool)
        while True:
            pn = p + alpha[:, None] * step[:, :d]
            ln = lam + alpha * step[:, d]
            rn = np.concatenate([x - pn - ln[:, None] * problem.grad_phi(pn, t),
                                 problem.phi(pn, t)[:, None]], axis=1)
            worse = (np.sum(rn * rn, axis=1) > base) & (np.max(np.abs(r), axis=1) >= tol) & active
            active &= worse & (alpha >= 1e-4)
            if not active.any():
                break
            alpha[active] *= 0.5
        p, lam = pn, ln
    raise NonConvergence(f"closest point iteration did not converge in {max_iter} steps")


FIELDS = ("velocity", "source", "u0", "u_exact")


def extend_from_surface(problem: LevelSetProblem, field: str, x, t=0.0):
    """Evaluate a surface field at the closest point of ``x`` on ``Gamma(t)``."""
    p = closest_point(problem, x, t)
    if field == "velocity":
        return problem.velocity(p, t)
    if field == "source":
        return problem.source(p, t)
    if field == "u0":
        return problem.u0(p)
    if field == "u_exact":
        return problem.u_exact(p, t)
    raise ValueError(f"unknown field {field!r}; expected one of {FIELDS}")


@dataclass(frozen=True)
class BandRegularityReport:
    c0_est: float
    c1_est: float
    c2_est: float
    sample_count: int


def estimate_band_constants(problem: LevelSetProblem, eps: float, n_samples: int = 4096,
                            seed: int = 0) -> BandRegularityReport:
    """Sample gradient and curvature bounds of ``phi`` on ``{|phi| < 3 eps pi / 2}``.

    Quasi-random space-time points are drawn until ``n_samples`` of them
    fall inside the band (or a fixed number of rounds is exhausted).
    """
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    lo, hi = problem.domain
    d = problem.dim
    sampler = qmc.Halton(d + 1, seed=seed)
    width = 1.5 * eps * np.pi
    xs, ts = [], []
    kept = 0
    for _ in range(64):
        s = sampler.random(4 * n_samples)
        x = lo + s[:, :d] * (hi - lo)
        t = s[:, d] * problem.final_time
        ph = np.array([problem.phi(xi, ti) for xi, ti in zip(x, t)]) if not problem.stationary \
            else problem.phi(x, 0.0)
        m = np.abs(ph) < width
        xs.append(x[m])
        ts.append(t[m])
        kept += int(m.sum())
        if kept >= n_samples:
            break
    x = np.concatenate(xs)[:n_samples]
    t = np.concatenate(ts)[:n_samples]
    gn = np.array([_norm(problem.grad_phi(xi, ti)) for xi, ti in zip(x, t)])
    hn = np.array([np.linalg.norm(problem.hess_phi(xi, ti), 2) for xi, ti in zip(x, t)])
    pt = np.array([abs(problem.phi_t(xi, ti)) for xi, ti in zip(x, t)])
    ptt = np.array([abs(problem.phi_tt(xi, ti)) for xi, ti in zip(x, t)])
    c2 = float(max(hn.max(), pt.max(), ptt.max()))
    return BandRegularityReport(float(gn.min()), float(gn.max()), c2, len(x))
