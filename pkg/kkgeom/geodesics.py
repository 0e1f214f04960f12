"""
Geodesics of the Kaluza-Klein metric and the low-order Fermi expansion along a fiber.

Geodesics are integrated in Hamiltonian form, ż = g⁻¹p and ṗ_λ = ½ ∂_λg_{ab} v^a v^b, with classical
RK4. The energy g(ż, ż) is conserved by the flow, so its relative drift measures the step quality.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy.linalg import fractional_matrix_power

from geometry import AlmostKahlerStructure
from .metric import KKMetric, transport_generator

logger = logging.getLogger(__name__)

MIN_STEPS = 100
DRIFT_TOL = 1e-8
FERMI_STEPS = 400
FERMI_POWERS = (2, 3, 4, 5)
MAX_FIT_CONDITION = 1e12


class GeodesicIntegrationError(RuntimeError):
    """Energy drift exceeded the tolerance for the requested step count."""

    def __init__(self, drift: float, tolerance: float, steps: int):
        self.drift = drift
        self.tolerance = tolerance
        self.steps = steps
        super().__init__(f"Relative energy drift {drift:.3e} exceeds {tolerance:.1e} with {steps} steps")


@dataclass
class GeodesicPath:
    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    energies: np.ndarray
    step: float
    drift: float

    def rows(self) -> List[List[float]]:
        """(t, θ, x..., energy) per sample."""
        return [[float(t), *map(float, z), float(e)]
                for t, z, e in zip(self.times, self.positions, self.energies)]


@dataclass
class FermiFit:
    a2_coeff: float
    a3_coeff: float
    coefficients: Dict[int, float]
    condition: float
    residual: float
    radii: List[float]
    samples: List[float]
    flagged: bool = False
    flag_reason: Optional[str] = None
    drifts: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "a2_coeff": self.a2_coeff,
            "a3_coeff": self.a3_coeff,
            "coefficients": {str(p): c for p, c in self.coefficients.items()},
            "condition": self.condition,
            "residual": self.residual,
            "radii": self.radii,
            "samples": self.samples,
            "flagged": self.flagged,
            "flag_reason": self.flag_reason,
            "drifts": self.drifts,
        }


def _rk4(rhs, y: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.5 * h * k2)
    k4 = rhs(y + h * k3)
    return y + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _hamilton_rhs(m: KKMetric):
    d = m.dim

    def rhs(y: np.ndarray) -> np.ndarray:
        z, p = y[:d], y[d:]
        v = m.inverse(z) @ p
        dg = m.derivatives(z)
        return np.concatenate([v, 0.5 * np.einsum('lab,a,b->l', dg, v, v)])

    return rhs


def geodesic_integrate(m: KKMetric, z0: np.ndarray, v0: np.ndarray, T: float, steps: int,
                       drift_tol: float = DRIFT_TOL) -> GeodesicPath:
    """Integrate the geodesic with z(0) = z0, ż(0) = v0 over [0, T] using `steps` RK4 steps."""
    if steps < MIN_STEPS:
        raise ValueError(f"steps must be >= {MIN_STEPS}, got {steps}")
    z0 = np.asarray(z0, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    if z0.shape != (m.dim,) or v0.shape != (m.dim,):
        raise ValueError(f"z0 and v0 must have length {m.dim}")
    if not np.any(v0):
        raise ValueError("v0 must be non-zero")

    h = T / steps
    rhs = _hamilton_rhs(m)
    d = m.dim
    y = np.concatenate([z0, m.matrix(z0) @ v0])
    positions, velocities = [z0], [v0]
    for _ in range(steps):
        y = _rk4(rhs, y, h)
        z = y[:d]
        positions.append(z)
        velocities.append(m.inverse(z) @ y[d:])

    positions = np.array(positions)
    velocities = np.array(velocities)
    energies = np.array([m.energy(z, v) for z, v in zip(positions, velocities)])
    drift = float(np.max(np.abs(energies - energies[0])) / energies[0])
    if not np.isfinite(drift) or drift > drift_tol:
        raise GeodesicIntegrationError(drift, drift_tol, steps)
    return GeodesicPath(times=np.linspace(0.0, T, steps + 1), positions=positions,
                        velocities=velocities, energies=energies, step=h, drift=drift)


def fiber_deviation(m: KKMetric, x0: np.ndarray, steps: int = 200) -> float:
    """Max |x(t) - x0| along the geodesic with initial velocity ∂_θ over one fiber period."""
    z0 = np.concatenate([[0.0], np.asarray(x0, dtype=float)])
    v0 = np.zeros(m.dim)
    v0[0] = 1.0
    path = geodesic_integrate(m, z0, v0, 1.0, steps)
    return float(np.max(np.abs(path.positions[:, 1:] - z0[1:])))


def _variational_rhs(m: KKMetric):
    """Geodesic flow together with its tangent-linear system in (δz, δp)."""
    d = m.dim

    def rhs(y: np.ndarray) -> np.ndarray:
        z, p, dz, dp = y[:d], y[d:2 * d], y[2 * d:3 * d], y[3 * d:]
        inv = m.inverse(z)
        dg, ddg = m.derivatives(z, second=True)
        v = inv @ p
        dg_dz = np.einsum('k,kab->ab', dz, dg)
        dv = inv @ (dp - dg_dz @ v)
        p_dot = 0.5 * np.einsum('lab,a,b->l', dg, v, v)
        dp_dot = (np.einsum('lab,a,b->l', dg, v, dv)
                  + 0.5 * np.einsum('klab,k,a,b->l', ddg, dz, v, v))
        return np.concatenate([v, p_dot, dv, dp_dot])

    return rhs


def _fiber_metric_sample(m: KKMetric, z0: np.ndarray, velocity: np.ndarray, gen: np.ndarray,
                         steps: int):
    """G_00 = g(∂_s, ∂_s) at the endpoint of the normal geodesic with initial velocity `velocity`."""
    d = m.dim
    g0 = m.matrix(z0)
    dz0 = np.zeros(d)
    dz0[0] = 1.0
    dv0 = -gen @ velocity
    y = np.concatenate([z0, g0 @ velocity, dz0, g0 @ dv0])
    rhs = _variational_rhs(m)
    h = 1.0 / steps
    for _ in range(steps):
        y = _rk4(rhs, y, h)
    z_end, p_end, dz_end = y[:d], y[d:2 * d], y[2 * d:3 * d]
    energy0 = velocity @ g0 @ velocity
    drift = abs(p_end @ m.inverse(z_end) @ p_end - energy0) / energy0
    return float(dz_end @ m.matrix(z_end) @ dz_end), float(drift)


def fermi_expansion_check(s: AlmostKahlerStructure, x0: np.ndarray, radii: Sequence[float],
                          direction: Optional[np.ndarray] = None, steps: int = FERMI_STEPS,
                          powers: Sequence[int] = FERMI_POWERS, workers: int = 4) -> FermiFit:
    """
    Fit G_00 - 1 = Σ c_p r^p over geodesics normal to the fiber {x0} × S¹.

    The normal direction is a β-unit vector at x0 (first vector of the frame β^{-1/2} by default),
    so a2_coeff is the coefficient per unit |z|². The fiber direction ∂_s is propagated as the Jacobi
    field of the family of geodesics launched from the fiber along the parallel transported frame.
    """
    radii = [float(r) for r in radii]
    if len(radii) < len(powers):
        raise ValueError(f"need at least {len(powers)} radii, got {len(radii)}")
    if any(r <= 0 for r in radii) or any(a <= b for a, b in zip(radii, radii[1:])):
        raise ValueError(f"radii must be positive and strictly decreasing, got {radii}")

    m = KKMetric(s, x0)
    x0 = m.center
    beta0 = m.matrix(np.concatenate([[0.0], x0]))[1:, 1:]
    if direction is None:
        w = np.real(fractional_matrix_power(beta0, -0.5))[:, 0]
    else:
        w = np.asarray(direction, dtype=float)
    w = w / np.sqrt(w @ beta0 @ w)
    unit = np.concatenate([[0.0], w])
    gen = transport_generator(m)
    z0 = np.concatenate([[0.0], x0])

    with ThreadPoolExecutor(max_workers=workers) as executor:
        results = list(executor.map(lambda r: _fiber_metric_sample(m, z0, r * unit, gen, steps), radii))
    samples = [g for g, _ in results]
    drifts = [dr for _, dr in results]

    scale = radii[0]
    t = np.array(radii) / scale
    design = np.stack([t ** p for p in powers], axis=1)
    rhs = np.array(samples) - 1.0
    scaled, _, _, sv = np.linalg.lstsq(design, rhs, rcond=None)
    condition = float(sv[0] / sv[-1]) if sv[-1] > 0 else float('inf')
    coefficients = {p: float(c / scale ** p) for p, c in zip(powers, scaled)}
    residual = float(np.linalg.norm(design @ scaled - rhs))

    fit = FermiFit(a2_coeff=coefficients.get(2, 0.0), a3_coeff=coefficients.get(3, 0.0),
                   coefficients=coefficients, condition=condition, residual=residual,
                   radii=radii, samples=samples, drifts=drifts)
    if condition > MAX_FIT_CONDITION:
        fit.flagged = True
        fit.flag_reason = f"fit condition number {condition:.3e} exceeds {MAX_FIT_CONDITION:.0e}"
        logger.warning(f"Fermi fit at x0={x0.tolist()} flagged: {fit.flag_reason}")
    elif max(drifts) > DRIFT_TOL:
        fit.flagged = True
        fit.flag_reason = f"energy drift {max(drifts):.3e} exceeds {DRIFT_TOL:.0e}"
        logger.warning(f"Fermi fit at x0={x0.tolist()} flagged: {fit.flag_reason}")
    logger.info(f"Fermi fit at x0={x0.tolist()}: a2={fit.a2_coeff:.6f} a3={fit.a3_coeff:.3e} "
                f"cond={condition:.2e}")
    return fit
