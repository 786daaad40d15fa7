"""Exclusion processes with inhomogeneous conductances and their hydrodynamic limit."""

from __future__ import annotations

__version__ = "0.1.0"

from .lattice import build_operator, solve_resolvent, spectrum
from .particle import ProcessParams, sample_initial
from .pde import PhiSpec, SolverConfig, evolve
from .wfun import WSpec, eval_w

__all__ = [
    "__version__", "WSpec", "eval_w", "build_operator", "solve_resolvent", "spectrum",
    "ProcessParams", "sample_initial", "PhiSpec", "SolverConfig", "evolve",
]
