"""
Exact oscillator algebra: ground state, creation operators, L0 and the solvability shift.
"""

from .algebra import (
    PolyGaussian, ContractionCoefficients, OscillatorError,
    coordinates, ground_state, create, create_many, apply_L0,
    gaussian_norm, gaussian_pairing, gaussian_moment_oracle,
    excited_polynomial, kernel_decomposition, ground_coefficient,
    symmetrize, solvability_shift, total_shift, kappa_of_k,
    random_coefficients, verify_eigenrelations, verify_solvability
)

__all__ = [
    'PolyGaussian', 'ContractionCoefficients', 'OscillatorError',
    'coordinates', 'ground_state', 'create', 'create_many', 'apply_L0',
    'gaussian_norm', 'gaussian_pairing', 'gaussian_moment_oracle',
    'excited_polynomial', 'kernel_decomposition', 'ground_coefficient',
    'symmetrize', 'solvability_shift', 'total_shift', 'kappa_of_k',
    'random_coefficients', 'verify_eigenrelations', 'verify_solvability'
]
