"""Numerical lab for indefinite subhomogeneous p-Laplacian problems with dead cores."""

from .energy import Problem
from .grid import BumpWeight, GridSpec, build_grid, detect_components, make_weight
from .solve import SolveOptions, enumerate_candidates, ground_state, minimize_constrained

__all__ = [
    "BumpWeight",
    "GridSpec",
    "Problem",
    "SolveOptions",
    "build_grid",
    "detect_components",
    "enumerate_candidates",
    "ground_state",
    "make_weight",
    "minimize_constrained",
]

__version__ = "0.1.0"
