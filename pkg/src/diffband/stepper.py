"""Time loop of the narrow band scheme."""
from __future__ import annotations

import csv
import logging
import math
import time as _time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import fem
from .band import BandSpace, check_connected, extract_band, safe_closest_point, shared_dofs
from .errors import ErrorAccumulator, band_errors_step, surface_errors_step
from .levelset import LevelSetProblem, estimate_band_constants, get_problem
from .linalg import SolverStats, solve_gmres
from .mesh import VirtualGrid, materialize_band_mesh
from .phasefield import PhaseFieldParams, check_coupling

log = logging.getLogger(__name__)

DEFAULT_EPS_TO_H = {2: 85.33, 3: 1.85}
DEFAULT_TAU_RULE = {2: ("eps2", 0.0025), 3: ("h2", 0.5)}


@dataclass
class RunConfig:
    problem: str = "ex1"
    cells: int | None = None
    level: int | None = None
    h: float | None = None
    eps: float | None = None
    eps_to_h: float | None = None
    gamma: float = 0.01
    tau_rule: str | None = None
    tau_factor: float | None = None
    tau: float | None = None
    final_time: float | None = None
    rel_tol: float = 1e-10
    restart: int = 30
    max_iters: int = 10000
    precond_side: str = "left"
    warm_start: bool = False
    # 1: previous solution; 2: linear extrapolation from the last two steps
    warm_order: int = 2
    quad_points: int = 200
    check_connectivity: bool = True
    check_coupling: bool = True
    compute_errors: bool = True

    def __post_init__(self):
        given = [k for k in ("cells", "level", "h") if getattr(self, k) is not None]
        if len(given) > 1:
            raise ValueError(f"give at most one of cells/level/h, got {given}")
        if self.tau_rule not in (None, "eps2", "h2", "explicit"):
            raise ValueError(f"unknown tau rule {self.tau_rule!r}")
        if self.tau_rule == "explicit" and not (self.tau and self.tau > 0):
            raise ValueError("explicit tau rule needs tau > 0")
        if self.warm_order not in (1, 2):
            raise ValueError("warm_order must be 1 or 2")
        if self.precond_side not in ("left", "right"):
            raise ValueError("precond_side must be 'left' or 'right'")


@dataclass(frozen=True)
class Resolved:
    """Numerical parameters derived from a :class:`RunConfig` and a problem."""

    grid: VirtualGrid
    h: float
    eps: float
    gamma: float
    tau: float
    final_time: float

    @property
    def n_steps(self):
        if self.final_time <= 0:
            return 0
        return max(1, math.ceil(self.final_time / self.tau * (1 - 1e-12)))

    def times(self):
        n = self.n_steps
        t = np.minimum(np.arange(n + 1) * self.tau, self.final_time)
        if n:
            t[-1] = self.final_time
        return t


def resolve(problem: LevelSetProblem, cfg: RunConfig) -> Resolved:
    d = problem.dim
    lo, hi = problem.domain
    extent = float(np.max(hi - lo))
    ratio = cfg.eps_to_h or DEFAULT_EPS_TO_H[d]
    if cfg.cells is not None:
        n = int(cfg.cells)
    elif cfg.level is not None:
        n = 2 ** int(cfg.level)
    elif cfg.h is not None:
        n = max(1, round(extent * math.sqrt(d) / cfg.h))
    elif cfg.eps is not None:
        n = max(1, round(extent * math.sqrt(d) * ratio / cfg.eps))
    else:
        raise ValueError("mesh resolution needs one of cells, level, h or eps")
    ncell = tuple(max(1, round(n * (hi[k] - lo[k]) / extent)) for k in range(d))
    grid = VirtualGrid(tuple(lo), tuple(hi), ncell)
    h = grid.h
    eps = cfg.eps if cfg.eps is not None else ratio * h
    rule, factor = DEFAULT_TAU_RULE[d]
    rule = cfg.tau_rule or rule
    if cfg.tau_factor is not None:
        factor = cfg.tau_factor
    if rule == "eps2":
        tau = factor * eps ** 2
    elif rule == "h2":
        tau = factor * h ** 2
    else:
        tau = float(cfg.tau)
    T = problem.final_time if cfg.final_time is None else float(cfg.final_time)
    return Resolved(grid, h, float(eps), cfg.gamma, float(tau), T)


@dataclass
class StepState:
    m: int
    t: float
    band: BandSpace
    u: np.ndarray
    weighted_mass: float
    stats: SolverStats | None = None
    connected: bool | None = None
    transfer_mass: float | None = None
    energy: float | None = None


@dataclass
class StepRecord:
    m: int
    t: float
    n_dofs: int
    iterations: int
    residual: float
    weighted_mass: float
    connected: bool | None
    energy: float
    mass_drift: float
    e1: float = math.nan
    e2: float = math.nan
    e3: float = math.nan
    e4: float = math.nan


@dataclass
class RunResult:
    config: RunConfig
    params: Resolved
    records: list
    final: StepState
    errors: ErrorAccumulator
    initial_e3: float
    mass_scale: float
    warnings: list = field(default_factory=list)
    elapsed: float = 0.0

    @property
    def max_step_drift(self):
        return max((r.mass_drift for r in self.records[1:]), default=0.0)

    @property
    def cumulative_drift(self):
        return abs(self.records[-1].weighted_mass - self.records[0].weighted_mass) / self.mass_scale

    def summary(self):
        out = {"problem": self.config.problem, "h": self.params.h, "eps": self.params.eps,
               "tau": self.params.tau, "steps": self.params.n_steps,
               "final_time": self.params.final_time, "initial_E3": self.initial_e3,
               "max_step_mass_drift": self.max_step_drift,
               "cumulative_mass_drift": self.cumulative_drift,
               "max_energy_ratio": max(r.energy for r in self.records) / self.records[0].energy
               if self.records[0].energy > 0 else math.nan,
               "elapsed_s": self.elapsed}
        if self.params.n_steps:
            out.update(self.errors.as_dict())
        else:
            out.update(dict.fromkeys(("E1", "E2", "E3", "E4")))
        return out

    def write_diagnostics(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "t_m", "n_dofs", "solver_iters", "residual", "weighted_mass",
                        "connected", "energy", "mass_drift"])
            for r in self.records:
                w.writerow([r.m, f"{r.t:.10e}", r.n_dofs, r.iterations, f"{r.residual:.5e}",
                            f"{r.weighted_mass:.10e}",
                            "" if r.connected is None else int(r.connected),
                            f"{r.energy:.10e}", f"{r.mass_drift:.5e}"])


class Stepper:
    """Holds the per-run context (grid, parameters, caches) of one simulation."""

    def __init__(self, problem: LevelSetProblem, cfg: RunConfig):
        self.problem = problem
        self.cfg = cfg
        self.p = resolve(problem, cfg)
        self.params = PhaseFieldParams(self.p.eps, self.p.gamma)
        self._band_cache = None
        self._matrix_cache = {}
        self._mass_cache = None

    def band_at(self, t, m):
        if self.problem.stationary and self._band_cache is not None:
            return self._band_cache.at_time(m, t)
        eps = self.p.eps
        problem = self.problem
        mesh = materialize_band_mesh(
            self.p.grid, lambda x: np.abs(problem.phi(x, t)) < eps * np.pi,
            symmetry_faces=problem.symmetry_faces)
        band = extract_band(mesh, problem, self.params, t, m)
        if problem.stationary:
            self._band_cache = band
        return band

    def _solve(self, A, b, x0=None):
        c = self.cfg
        return solve_gmres(A, b, diag_precond=True, rel_tol=c.rel_tol, restart=c.restart,
                           max_iters=c.max_iters, x0=x0, side=c.precond_side)

    def initial_state(self) -> StepState:
        band = self.band_at(0.0, 0)
        p = safe_closest_point(self.problem, band.coords, 0.0)
        M, b = fem.assemble_initial_projection(band, self.problem.u0(p))
        u, stats = self._solve(M, b)
        conn = check_connected(band) if self.cfg.check_connectivity else None
        return StepState(0, 0.0, band, u, fem.weighted_mass(band, u), stats, conn)

    def _matrix(self, band, tau):
        if not self.problem.stationary:
            return fem.assemble_matrix(band, self.p.gamma, tau)
        key = round(tau, 15)
        if key not in self._matrix_cache:
            self._matrix_cache[key] = fem.assemble_matrix(band, self.p.gamma, tau)
        return self._matrix_cache[key]

    def _transfer(self, band, prev, u_prev):
        if self.problem.stationary:
            if self._mass_cache is None:
                self._mass_cache = fem.assemble_weighted_mass(band)
            return self._mass_cache.matvec(u_prev)
        return fem.assemble_transfer(band, prev.band, u_prev)

    def initial_guess(self, band, prev, older=None):
        x0 = np.zeros(band.n_dofs)
        ia, ib = shared_dofs(band, prev.band)
        x0[ia] = prev.u[ib]
        if older is not None and self.cfg.warm_order >= 2:
            ratio = (band.t - prev.t) / (prev.t - older.t)
            d = np.zeros(prev.band.n_dofs)
            pa, pb = shared_dofs(prev.band, older.band)
            d[pa] = prev.u[pa] - older.u[pb]
            x0[ia] += ratio * d[ib]
        return x0

    def advance(self, prev: StepState, t, m, older: StepState | None = None) -> StepState:
        tau = t - prev.t
        band = self.band_at(t, m)
        A = self._matrix(band, tau)
        b = self._transfer(band, prev, prev.u)
        transfer_mass = float(b.sum())
        b = b + fem.assemble_load(band, tau)
        x0 = self.initial_guess(band, prev, older) if self.cfg.warm_start else None
        u, stats = self._solve(A, b, x0)
        conn = check_connected(band) if self.cfg.check_connectivity else None
        return StepState(m, t, band, u, fem.weighted_mass(band, u), stats, conn, transfer_mass)


def run(problem: LevelSetProblem | str, cfg: RunConfig, callback=None) -> RunResult:
    """Execute all steps, accumulating diagnostics and error functionals."""
    if isinstance(problem, str):
        problem = get_problem(problem, cfg.final_time)
    start = _time.perf_counter()
    st = Stepper(problem, cfg)
    p = st.p
    warnings = []
    if cfg.check_coupling:
        rep = estimate_band_constants(problem, p.eps, n_samples=2000)
        for chk in check_coupling(p.h, p.tau, p.eps, rep):
            if not chk.ok:
                msg = (f"coupling condition '{chk.name}' violated: {chk.value:.4g} > {chk.bound:.4g}")
                log.warning(msg)
                warnings.append(msg)
    state = st.initial_state()
    if cfg.check_connectivity and not state.connected:
        warnings.append("band disconnected at m=0")
    scale = 2.0 / (p.eps * np.pi)
    energy0 = scale * fem.weighted_l2_sq(state.band, state.u)
    mass_scale = fem.weighted_abs_mass(state.band, state.u) or 1.0
    e3_0 = surface_errors_step(state.band, state.u, problem, cfg.quad_points)[0] \
        if cfg.compute_errors else math.nan
    records = [StepRecord(0, 0.0, state.band.n_dofs, state.stats.iterations, state.stats.residual,
                          state.weighted_mass, state.connected, energy0, 0.0, e3=e3_0)]
    acc = ErrorAccumulator()
    if callback:
        callback(state, records[-1])
    times = p.times()
    older = None
    for m in range(1, len(times)):
        prev = state
        state = st.advance(prev, float(times[m]), m, older if m > 1 else None)
        older = prev
        tau = state.t - prev.t
        load_mass = 0.0
        if np.any(state.band.source):
            load_mass = float(fem.assemble_load(state.band, tau).sum())
        drift = abs(state.weighted_mass - prev.weighted_mass - load_mass) / mass_scale
        energy = scale * fem.weighted_l2_sq(state.band, state.u)
        rec = StepRecord(m, state.t, state.band.n_dofs, state.stats.iterations,
                         state.stats.residual, state.weighted_mass, state.connected, energy, drift)
        if cfg.compute_errors:
            rec.e1, rec.e2 = band_errors_step(state.band, state.u, problem)
            rec.e3, rec.e4 = surface_errors_step(state.band, state.u, problem, cfg.quad_points)
            acc.add(m, state.t, tau, rec.e1, rec.e2, rec.e3, rec.e4)
        if cfg.check_connectivity and not state.connected:
            warnings.append(f"band disconnected at m={m}")
        records.append(rec)
        if callback:
            callback(state, rec)
    return RunResult(cfg, p, records, state, acc, e3_0, mass_scale, warnings,
                     _time.perf_counter() - start)


def config_dict(cfg: RunConfig):
    return asdict(cfg)
