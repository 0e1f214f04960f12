"""
Gaussian coherent states centred at a point of the torus and the diagnostics built on them.

A coherent state is the leading Gaussian term exp(-κ d_β(x, x₀)²/4), κ = k + n/2, with d_β taken through
third order at x₀. It is written in the gauge centred at x₀ where a(x₀) = 0, moved to the operator gauge
and summed over lattice translates with the automorphy factors of L^k.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.linalg import qr

from geometry import AlmostKahlerStructure, metric_at, q_density
from quantization import HermitianOperator, gauge_change, grid_coordinates

logger = logging.getLogger(__name__)

POINTS_PER_EFOLDING = 6
GRID_TOL = 1e-9


class QuasimodeError(ValueError):
    """The grid cannot represent the requested coherent state."""


@dataclass
class QuasimodeVector:
    vector: np.ndarray
    x0: np.ndarray
    k: int
    N: int
    kappa: float
    normalization: float
    width: float
    center: np.ndarray

    @property
    def points_per_efolding(self) -> float:
        return self.width * self.N


def snap_to_grid(x0, N: int) -> np.ndarray:
    """Nearest grid point of the N^{2n} grid, wrapped into [0, 1)."""
    return np.mod(np.round(np.asarray(x0, dtype=float) * N), N) / N


def _wrap(y: np.ndarray) -> np.ndarray:
    return y - np.round(y)


def _automorphy_phase(s: AlmostKahlerStructure, center: np.ndarray, gamma: np.ndarray,
                      x: np.ndarray) -> np.ndarray:
    """
    Φ(γ, x) with ψ(x + γ) = e^{ikΦ(γ,x)} ψ(x), composed one axis at a time. Ω_mm = 0 makes
    χ_m constant along e_m, so |γ_m| unit steps contribute γ_m·χ_m at the start of the run.
    """
    phase = np.zeros(x.shape[:-1])
    y = x + center
    for m in range(s.dim):
        phase += gamma[..., m] * 0.5 * (y @ s.Omega[m])
        y = y + gamma[..., m, None] * np.eye(s.dim)[m]
    return phase


def _distance_sq(y: np.ndarray, beta0: np.ndarray, dbeta0: np.ndarray) -> np.ndarray:
    """
    d_β(x₀ + y, x₀)² through third order, β₀(y, y) + ½ ∂_aβ_{ij} y^a y^i y^j, with the cubic term
    exponentiated so the form stays positive far from x₀.
    """
    quadratic = np.einsum('pi,ij,pj->p', y, beta0, y)
    cubic = sum(y[:, a] * np.einsum('pi,ij,pj->p', y, dbeta0[a], y) for a in range(y.shape[1]))
    ratio = np.divide(0.5 * cubic, quadratic, out=np.zeros_like(quadratic), where=quadratic > 0)
    return quadratic * np.exp(ratio)


def coherent_state(s: AlmostKahlerStructure, k: int, x0, N: int,
                   center: Optional[np.ndarray] = None) -> QuasimodeVector:
    """
    Unit-norm coherent state at the grid point x0, in the gauge of an operator built with `center`.

    Raises:
        QuasimodeError: x0 is off the grid, or the Gaussian has fewer than 6 points per e-folding.
    """
    dim = s.dim
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (dim,):
        raise QuasimodeError(f"x0 must have length {dim}, got {x0.shape}")
    if np.max(np.abs(x0 * N - np.round(x0 * N))) > GRID_TOL or np.any(x0 < 0) or np.any(x0 >= 1):
        raise QuasimodeError(f"x0={x0.tolist()} is not a point of the {N}-grid")
    center = np.zeros(dim) if center is None else np.asarray(center, dtype=float)

    kappa = k + 0.5 * s.n
    beta0 = metric_at(s, x0)
    dbeta0 = s.beta_jets(x0).first
    width = 2.0 / math.sqrt(kappa * float(np.max(np.linalg.eigvalsh(beta0))))
    if width * N < POINTS_PER_EFOLDING:
        raise QuasimodeError(f"coherent state at k={k} has {width * N:.2f} points per e-folding on the "
                             f"{N}-grid, need {POINTS_PER_EFOLDING}")

    x = np.moveaxis(grid_coordinates(dim, N), 0, -1).reshape(-1, dim)
    base = np.round(x0 - x)
    psi = np.zeros(len(x), dtype=complex)
    for offset in itertools.product((-1, 0, 1), repeat=dim):
        gamma = base + np.array(offset, dtype=float)
        z = x + gamma
        y = z - x0
        gaussian = np.exp(-0.25 * kappa * _distance_sq(y, beta0, dbeta0))
        lam = gauge_change(s, x0, center, z)
        psi += np.exp(1j * k * (lam - _automorphy_phase(s, center, gamma, x))) * gaussian

    norm_sq = float(np.vdot(psi, psi).real)
    normalization = 1.0 / math.sqrt(norm_sq * N ** (-dim) * s.volume())
    logger.debug(f"Coherent state k={k} x0={x0.tolist()}: Λ_k={normalization:.6e}, "
                 f"{width * N:.2f} points per e-folding")
    return QuasimodeVector(vector=psi / math.sqrt(norm_sq), x0=x0, k=k, N=N, kappa=kappa,
                           normalization=normalization, width=width, center=center)


def coherent_state_for(op: HermitianOperator, x0) -> QuasimodeVector:
    return coherent_state(op.structure, op.k, x0, op.N, op.center)


def _check_compatible(op: HermitianOperator, psi: QuasimodeVector):
    if (op.k, op.N) != (psi.k, psi.N) or not np.allclose(op.center, psi.center):
        raise ValueError(f"coherent state (k={psi.k}, N={psi.N}) does not match operator "
                         f"(k={op.k}, N={op.N}) or its gauge center")


def _vector(op: HermitianOperator, psi: Union[QuasimodeVector, np.ndarray]) -> np.ndarray:
    if isinstance(psi, QuasimodeVector):
        _check_compatible(op, psi)
        return psi.vector
    return np.asarray(psi)


def rayleigh_quotient(op: HermitianOperator, psi: Union[QuasimodeVector, np.ndarray]) -> float:
    """⟨ψ, □_k ψ⟩ / ⟨ψ, ψ⟩."""
    v = _vector(op, psi)
    return float(np.vdot(v, op.matvec(v)).real / np.vdot(v, v).real)


def residual_norm(op: HermitianOperator, psi: Union[QuasimodeVector, np.ndarray], x0,
                  s: Optional[AlmostKahlerStructure] = None) -> float:
    """‖(□_k - q(x₀))ψ‖ for unit ψ."""
    s = s or op.structure
    v = _vector(op, psi)
    v = v / np.linalg.norm(v)
    q0 = float(q_density(s, np.asarray(x0, dtype=float)))
    return float(np.linalg.norm(op.matvec(v) - q0 * v))


def _displacements(psi: QuasimodeVector) -> np.ndarray:
    dim = len(psi.x0)
    x = np.moveaxis(grid_coordinates(dim, psi.N), 0, -1).reshape(-1, dim)
    return _wrap(x - psi.x0)


def localization_check(psi: QuasimodeVector, m: int, s: AlmostKahlerStructure) -> float:
    """⟨ψ, φ_m ψ⟩ for φ_m(x) = Σ_j ỹ_j^m, ỹ = x - x₀ wrapped into [-½, ½]^{2n}."""
    if m not in (1, 2, 3, 4):
        raise ValueError(f"localization order must be in 1..4, got {m}")
    if len(psi.x0) != s.dim:
        raise ValueError(f"coherent state lives in dimension {len(psi.x0)}, structure in {s.dim}")
    phi = np.sum(_displacements(psi) ** m, axis=-1)
    return float(np.sum(phi * np.abs(psi.vector) ** 2))


def mass_within_radius(psi: QuasimodeVector, s: AlmostKahlerStructure,
                       radius: Optional[float] = None) -> float:
    """Share of |ψ|² within β(x₀)-distance `radius` (default 5/√k) of x₀."""
    radius = 5.0 / math.sqrt(psi.k) if radius is None else radius
    y = _displacements(psi)
    dist_sq = np.einsum('pi,ij,pj->p', y, metric_at(s, psi.x0), y)
    weights = np.abs(psi.vector) ** 2
    return float(np.sum(weights[dist_sq <= radius ** 2]) / np.sum(weights))


def project_onto_cluster(psi: Union[QuasimodeVector, np.ndarray], eigenvectors: np.ndarray) -> np.ndarray:
    """
    Orthogonal projection of ψ onto the span of the cluster eigenvectors. Its Rayleigh quotient lies
    between the smallest and largest cluster eigenvalue.
    """
    v = psi.vector if isinstance(psi, QuasimodeVector) else np.asarray(psi)
    basis, _ = qr(np.asarray(eigenvectors), mode='economic')
    return basis @ (basis.conj().T @ v)


def boundary_mass(psi: QuasimodeVector, margin: float = 0.125) -> float:
    """Share of |ψ|² within `margin` of the faces of the unit cell centred at x₀."""
    y = _displacements(psi)
    weights = np.abs(psi.vector) ** 2
    return float(np.sum(weights[np.max(np.abs(y), axis=-1) > 0.5 - margin]) / np.sum(weights))
