"""Cut-off profile, phase fields and the mesh/time-step coupling check."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .levelset import BandRegularityReport

# cos^2(3 pi / 8), the constant of the band inclusion conditions
COUPLING_CONST = math.cos(3 * math.pi / 8) ** 2


@dataclass(frozen=True)
class PhaseFieldParams:
    eps: float
    gamma: float = 0.01
    eps_to_h: float | None = None

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")


def g_eval(r):
    """``cos(r)^2`` on ``[-pi/2, pi/2]``, zero outside."""
    r = np.asarray(r, dtype=float)
    return np.where(np.abs(r) <= 0.5 * np.pi, np.cos(r) ** 2, 0.0)


def g_prime(r):
    r = np.asarray(r, dtype=float)
    return np.where(np.abs(r) <= 0.5 * np.pi, -2.0 * np.sin(r) * np.cos(r), 0.0)


def rho(problem, params: PhaseFieldParams, x, t):
    return g_eval(problem.phi(x, t) / params.eps)


def rho_tilde(problem, params: PhaseFieldParams, x, t):
    return g_eval(problem.phi(x, t) / (2.0 * params.eps))


@dataclass(frozen=True)
class CouplingCheck:
    name: str
    value: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.value <= self.bound

    @property
    def margin(self) -> float:
        return self.bound - self.value


def check_coupling(h: float, tau: float, eps: float, report: BandRegularityReport,
                   safety: float = 0.1) -> list[CouplingCheck]:
    """Evaluate ``h <= C eps / (2 c1)``, ``tau <= C eps / (2 c2)`` and ``tau <= eps^2``.

    The sampled constants are inflated by ``safety`` before use. Returns one
    entry per inequality; the caller decides whether a failure matters.
    """
    c1 = report.c1_est * (1 + safety)
    c2 = report.c2_est * (1 + safety)
    return [
        CouplingCheck("h", h, COUPLING_CONST * eps / (2 * c1)),
        CouplingCheck("tau", tau, COUPLING_CONST * eps / (2 * c2)),
        CouplingCheck("tau_eps2", tau, eps * eps),
    ]
