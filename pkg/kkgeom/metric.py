"""
Kaluza-Klein metric on Z = X × S¹ in the trivialization (θ, x).
g = (dθ + a)² + β with the symmetric gauge a_k(x) = ½ (x - c)^j Ω_{jk}, so da = Ω and a(c) = 0.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np

from geometry import AlmostKahlerStructure, central_difference, christoffel_from_metric

logger = logging.getLogger(__name__)

FD_STEP = 1e-3


@dataclass
class KKMetric:
    """Metric on the circle bundle; coordinate 0 is θ, coordinates 1..2n are x."""
    structure: AlmostKahlerStructure
    center: np.ndarray

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=float)
        if self.center.shape != (self.structure.dim,):
            raise ValueError(f"center must have length {self.structure.dim}, got {self.center.shape}")

    @property
    def dim(self) -> int:
        return self.structure.dim + 1

    @property
    def gauge_gradient(self) -> np.ndarray:
        """∂_j a_k = ½ Ω_{jk}."""
        return 0.5 * self.structure.Omega

    def gauge(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.center) @ self.gauge_gradient

    def matrix(self, z: np.ndarray) -> np.ndarray:
        """g_{00} = 1, g_{0j} = a_j, g_{jk} = β_{jk} + a_j a_k."""
        x = np.asarray(z, dtype=float)[1:]
        a = self.gauge(x)
        beta = _metric(self.structure, x)
        g = np.empty((self.dim, self.dim))
        g[0, 0] = 1.0
        g[0, 1:] = g[1:, 0] = a
        g[1:, 1:] = beta + np.outer(a, a)
        return g

    def inverse(self, z: np.ndarray) -> np.ndarray:
        """Block inverse [[1 + aβ⁻¹a, -β⁻¹a], [-β⁻¹a, β⁻¹]]."""
        x = np.asarray(z, dtype=float)[1:]
        a = self.gauge(x)
        beta_inv = np.linalg.inv(_metric(self.structure, x))
        ba = beta_inv @ a
        inv = np.empty((self.dim, self.dim))
        inv[0, 0] = 1.0 + a @ ba
        inv[0, 1:] = inv[1:, 0] = -ba
        inv[1:, 1:] = beta_inv
        return inv

    def derivatives(self, z: np.ndarray, second: bool = False):
        """
        ∂_λ g_{μν} (shape (D, D, D)) and optionally ∂_κ∂_λ g_{μν} (shape (D, D, D, D)).

        Nothing depends on θ, so every slice with a θ derivative index is zero.
        """
        x = np.asarray(z, dtype=float)[1:]
        a = self.gauge(x)
        grad = self.gauge_gradient
        bj = self.structure.beta_jets(x)
        dbeta = 0.5 * (bj.first + np.swapaxes(bj.first, -1, -2))
        d = self.dim
        dg = np.zeros((d, d, d))
        dg[1:, 0, 1:] = grad
        dg[1:, 1:, 0] = grad
        dg[1:, 1:, 1:] = dbeta + np.einsum('ij,k->ijk', grad, a) + np.einsum('j,ik->ijk', a, grad)
        if not second:
            return dg
        ddbeta = 0.5 * (bj.second + np.swapaxes(bj.second, -1, -2))
        ddg = np.zeros((d, d, d, d))
        ddg[1:, 1:, 1:, 1:] = (ddbeta + np.einsum('ij,lk->iljk', grad, grad)
                               + np.einsum('lj,ik->iljk', grad, grad))
        return dg, ddg

    def christoffel(self, z: np.ndarray) -> np.ndarray:
        gamma, _ = christoffel_from_metric(self.matrix(z), self.derivatives(z))
        return gamma

    def energy(self, z: np.ndarray, v: np.ndarray) -> float:
        return float(v @ self.matrix(z) @ v)


def _metric(structure: AlmostKahlerStructure, x: np.ndarray) -> np.ndarray:
    beta = structure.Omega @ structure.J(x)
    return 0.5 * (beta + beta.T)


def kk_metric(s: AlmostKahlerStructure, center: np.ndarray, z: np.ndarray) -> np.ndarray:
    return KKMetric(s, center).matrix(z)


def kk_christoffel_check(s: AlmostKahlerStructure, center: np.ndarray,
                         step: float = FD_STEP) -> Dict[str, Any]:
    """
    Finite-difference Christoffel symbols of g at the gauge center against the closed-form table.

    At the center a = 0, so Γ^0_{00} = Γ^j_{00} = Γ^0_{0j} = 0, Γ^j_{lk} = F^j_{lk} (symbols of β),
    Γ^0_{jk} = ½(∂_j a_k + ∂_k a_j) = 0 and Γ^j_{0k} = ½ J^j_k for β = ΩJ and da = Ω.
    The latter differs in sign from the convention where the fiber coordinate runs the other way;
    `fiber_orientation` records which one is compared.
    """
    m = KKMetric(s, center)
    z = np.concatenate([[0.0], m.center])
    dg = central_difference(m.matrix, z, step)
    gamma, _ = christoffel_from_metric(m.matrix(z), dg)
    j = s.J(m.center)
    bj = s.beta_jets(m.center)
    base_gamma, _ = christoffel_from_metric(_metric(s, m.center),
                                            0.5 * (bj.first + np.swapaxes(bj.first, -1, -2)))
    grad = m.gauge_gradient
    table = {
        "Gamma0_00": abs(gamma[0, 0, 0]),
        "Gammaj_00": float(np.max(np.abs(gamma[1:, 0, 0]))),
        "Gamma0_0j": float(np.max(np.abs(gamma[0, 0, 1:]))),
        "Gammaj_0k": float(np.max(np.abs(gamma[1:, 0, 1:] - 0.5 * j))),
        "Gammaj_lk": float(np.max(np.abs(gamma[1:, 1:, 1:] - base_gamma))),
        "Gamma0_jk": float(np.max(np.abs(gamma[0, 1:, 1:] - 0.5 * (grad + grad.T)))),
        "analytic_vs_fd": float(np.max(np.abs(gamma - m.christoffel(z)))),
    }
    table["max_residual"] = max(table.values())
    table["fiber_orientation"] = "+J/2"
    logger.debug(f"Christoffel table at center {m.center.tolist()}: {table}")
    return table


def transport_generator(m: KKMetric, x0: Optional[np.ndarray] = None) -> np.ndarray:
    """Matrix (Γ^μ_{0ν}) along the fiber over x0; parallel fields obey Z' = -Γ_0 Z."""
    x0 = m.center if x0 is None else np.asarray(x0, dtype=float)
    return m.christoffel(np.concatenate([[0.0], x0]))[:, 0, :]
