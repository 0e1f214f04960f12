"""
Kaluza-Klein metric on the circle bundle over the torus, its geodesics and fiber expansions.
"""

from .metric import KKMetric, kk_metric, kk_christoffel_check, transport_generator
from .geodesics import (
    GeodesicPath, GeodesicIntegrationError, FermiFit,
    geodesic_integrate, fiber_deviation, fermi_expansion_check
)

__all__ = [
    'KKMetric', 'kk_metric', 'kk_christoffel_check', 'transport_generator',
    'GeodesicPath', 'GeodesicIntegrationError', 'FermiFit',
    'geodesic_integrate', 'fiber_deviation', 'fermi_expansion_check'
]
