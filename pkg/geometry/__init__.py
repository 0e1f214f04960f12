"""
Almost-Kähler structures on flat symplectic tori and their derived tensors.
"""

from .structure import (
    AlmostKahlerStructure, JFamilySpec, JetTensor, StructureError,
    build_structure, standard_omega, standard_j0, a0_preset, probe_grid
)
from .tensors import (
    metric_at, christoffel, christoffel_from_metric, central_difference, nabla_J, nabla_J_norm_sq, nabla_J_mixed_trace, q_density,
    check_trace_identities, curvature_scalars, sup_nabla_J, q_grid_average,
    finite_difference_nabla_J, probe_table
)

__all__ = [
    'AlmostKahlerStructure', 'JFamilySpec', 'JetTensor', 'StructureError',
    'build_structure', 'standard_omega', 'standard_j0', 'a0_preset', 'probe_grid',
    'metric_at', 'christoffel', 'christoffel_from_metric', 'central_difference', 'nabla_J', 'nabla_J_norm_sq', 'nabla_J_mixed_trace', 'q_density',
    'check_trace_identities', 'curvature_scalars', 'sup_nabla_J', 'q_grid_average',
    'finite_difference_nabla_J', 'probe_table'
]
