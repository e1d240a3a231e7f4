"""Diffuse-interface narrow-band finite elements for PDEs on moving surfaces."""
from .levelset import PROBLEMS, LevelSetProblem, closest_point, extend_from_surface, get_problem
from .phasefield import PhaseFieldParams, g_eval, g_prime, rho, rho_tilde
from .mesh import VirtualGrid, BandMesh, materialize_band_mesh, locate_point
from .band import BandSpace, extract_band, check_connected, shared_dofs
from .linalg import SparseMatrix, solve_gmres
from .stepper import RunConfig, RunResult, run
from .errors import ConvergenceTable, eoc

__all__ = [
    "PROBLEMS", "LevelSetProblem", "closest_point", "extend_from_surface", "get_problem",
    "PhaseFieldParams", "g_eval", "g_prime", "rho", "rho_tilde",
    "VirtualGrid", "BandMesh", "materialize_band_mesh", "locate_point",
    "BandSpace", "extract_band", "check_connected", "shared_dofs",
    "SparseMatrix", "solve_gmres", "RunConfig", "RunResult", "run",
    "ConvergenceTable", "eoc",
]

__version__ = "0.1.0"
