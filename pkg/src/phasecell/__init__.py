"""Numerical cell problems for singularly perturbed phase-transition energies.

The package computes effective surface tensions of functionals of the form
``(1/eps) * int f(x, u, eps * grad u)`` by minimising them on rotated cubes
with a regularised jump datum clamped near the boundary, in homogeneous,
periodic and stationary random settings.
"""

__version__ = "0.1.0"

from .potentials import DoubleWell, Profile, compute_cp, compute_Cu, optimal_profile_1d
from .integrands import CoefficientField, Integrand, RandomCheckerboard, make_integrand
from .geometry import RotatedBox, RotatedCube, RotationFrame, frame_for, lattice_interval
from .fields import Grid, ScalarField, energy, energy_gradient, init_from_datum
from .solver import SolverConfig, SolveOutcome, minimise, multi_start
from .cell import CellProblem, CellResult, solve_cell, solve_cell_delta, estimate_density

__all__ = [
    "DoubleWell",
    "Profile",
    "compute_cp",
    "compute_Cu",
    "optimal_profile_1d",
    "CoefficientField",
    "Integrand",
    "RandomCheckerboard",
    "make_integrand",
    "RotatedBox",
    "RotatedCube",
    "RotationFrame",
    "frame_for",
    "lattice_interval",
    "Grid",
    "ScalarField",
    "energy",
    "energy_gradient",
    "init_from_datum",
    "SolverConfig",
    "SolveOutcome",
    "minimise",
    "multi_start",
    "CellProblem",
    "CellResult",
    "solve_cell",
    "solve_cell_delta",
    "estimate_density",
]
