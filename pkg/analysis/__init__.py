"""
Cluster statistics of low-lying spectra and coherent-state quasimodes.
"""

from .cluster import (
    ClusterReport, DensityComparison, DEFAULT_TEST_FUNCTIONS, extract_cluster, expected_count,
    count_check, density_compare, landau_levels, loglog_slope
)
from .quasimodes import (
    QuasimodeError, QuasimodeVector, coherent_state, coherent_state_for, snap_to_grid,
    rayleigh_quotient, residual_norm, localization_check, mass_within_radius, project_onto_cluster,
    boundary_mass
)

__all__ = [
    'ClusterReport', 'DensityComparison', 'DEFAULT_TEST_FUNCTIONS', 'extract_cluster', 'expected_count',
    'count_check', 'density_compare', 'landau_levels', 'loglog_slope',
    'QuasimodeError', 'QuasimodeVector', 'coherent_state', 'coherent_state_for', 'snap_to_grid',
    'rayleigh_quotient', 'residual_norm', 'localization_check', 'mass_within_radius', 'project_onto_cluster',
    'boundary_mass'
]
