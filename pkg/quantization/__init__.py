"""
Lattice discretization of the magnetic Laplacian on sections of L^k and its low-lying spectrum.
"""

from .gauge import (
    grid_coordinates, gauge_potential, link_integral, loop_integral, transition_function,
    gauge_change, flux_integers, flux_defect, cocycle_defect, link_phases, plaquette_phases,
    flux_residual
)
from .operator import HermitianOperator, OperatorBuildError, build_operator, resolution_bound
from .solver import SolverOptions, SpectrumResult, BlockKrylovSolver, lowest_eigenpairs

__all__ = [
    'grid_coordinates', 'gauge_potential', 'link_integral', 'loop_integral', 'transition_function',
    'gauge_change', 'flux_integers', 'flux_defect', 'cocycle_defect', 'link_phases', 'plaquette_phases',
    'flux_residual',
    'HermitianOperator', 'OperatorBuildError', 'build_operator', 'resolution_bound',
    'SolverOptions', 'SpectrumResult', 'BlockKrylovSolver', 'lowest_eigenpairs'
]
