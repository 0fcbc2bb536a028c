"""Crouzeix-Raviart / P0 / P0 solver for vorticity-velocity-pressure
Brinkman-Forchheimer flow with Raviart-Thomas test reconstruction, residual
error estimation and quadtree-based adaptivity."""

__version__ = "0.1.0"

from .spaces import ModelParams, SolutionState, build_layout  # noqa: E402
from .mesh import build_coarse_mesh, uniform_refine, adapt  # noqa: E402
from .solver import newton_solve, SolverError  # noqa: E402
from .cases import SmoothCase, LShapeCase  # noqa: E402

__all__ = [
    "ModelParams",
    "SolutionState",
    "build_layout",
    "build_coarse_mesh",
    "uniform_refine",
    "adapt",
    "newton_solve",
    "SolverError",
    "SmoothCase",
    "LShapeCase",
]
