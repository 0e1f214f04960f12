"""
Derived tensors of an almost-Kähler structure: β, Levi-Civita symbols, ∇J, |∇J|², curvature and
the spectral density q = -5/24 |∇J|².

All functions accept a single point of shape (2n,) or a batch of shape (P, 2n).
"""

import logging
from typing import Dict, Optional, Tuple

import numpy as np

from .structure import AlmostKahlerStructure, probe_grid

logger = logging.getLogger(__name__)

Q_FACTOR = -5.0 / 24.0
FD_STEP = 1e-3
CHUNK_POINTS = 4096


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def metric_at(s: AlmostKahlerStructure, x: np.ndarray) -> np.ndarray:
    """β_{jk} = Ω_{jl} J^l_k, symmetrized (the antisymmetric part is rounding only)."""
    return _sym(np.einsum('lm,...mk->...lk', s.Omega, s.J(x)))


def christoffel_from_metric(beta: np.ndarray, dbeta: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Γ^m_{ab} and β^{-1} from β and ∂_a β_{lk} (derivative index first)."""
    inv = np.linalg.inv(beta)
    lowered = (np.einsum('...acb->...cab', dbeta) + np.einsum('...bca->...cab', dbeta)
               - dbeta)
    return 0.5 * np.einsum('...mc,...cab->...mab', inv, lowered), inv


def christoffel(s: AlmostKahlerStructure, x: np.ndarray) -> np.ndarray:
    """Levi-Civita symbols Γ^m_{ab} of β from analytic first jets."""
    bj = s.beta_jets(x)
    gamma, _ = christoffel_from_metric(_sym(bj.value), _sym(bj.first))
    return gamma


def christoffel_derivative(s: AlmostKahlerStructure, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Γ^m_{ab} and ∂_d Γ^m_{ab} (shape (..., d, m, a, b)) from analytic second jets."""
    bj = s.beta_jets(x)
    beta, dbeta, ddbeta = _sym(bj.value), _sym(bj.first), _sym(bj.second)
    gamma, inv = christoffel_from_metric(beta, dbeta)
    lowered = (np.einsum('...acb->...cab', dbeta) + np.einsum('...bca->...cab', dbeta) - dbeta)
    dlowered = (np.einsum('...dacb->...dcab', ddbeta) + np.einsum('...dbca->...dcab', ddbeta)
                - ddbeta)
    dinv = -np.einsum('...mp,...dpq,...qc->...dmc', inv, dbeta, inv)
    dgamma = 0.5 * (np.einsum('...dmc,...cab->...dmab', dinv, lowered)
                    + np.einsum('...mc,...dcab->...dmab', inv, dlowered))
    return gamma, dgamma


def _covariant_j(j: np.ndarray, dj: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    return (dj + np.einsum('...mls,...sj->...lmj', gamma, j)
            - np.einsum('...slj,...ms->...lmj', gamma, j))


def nabla_J(s: AlmostKahlerStructure, x: np.ndarray) -> np.ndarray:
    """∇_l J^m_j with index order (..., l, m, j)."""
    jet = s.jets(x)
    return _covariant_j(jet.value, jet.first, christoffel(s, x))


def nabla_J_norm_sq(s: AlmostKahlerStructure, x: np.ndarray) -> np.ndarray:
    """Positive full contraction β^{la} β_{mb} β^{jc} ∇_l J^m_j ∇_a J^b_c."""
    beta = metric_at(s, x)
    inv = np.linalg.inv(beta)
    nj = nabla_J(s, x)
    return np.einsum('...la,...mb,...jc,...lmj,...abc->...', inv, beta, inv, nj, nj)


def nabla_J_mixed_trace(s: AlmostKahlerStructure, x: np.ndarray) -> np.ndarray:
    """-∇_j J^m_k ∇^j J^k_m; equals nabla_J_norm_sq because each ∇_l J is β-skew."""
    inv = np.linalg.inv(metric_at(s, x))
    nj = nabla_J(s, x)
    return -np.einsum('...ja,...jmk,...akm->...', inv, nj, nj)


def q_density(s: AlmostKahlerStructure, x: np.ndarray) -> np.ndarray:
    return Q_FACTOR * nabla_J_norm_sq(s, x)


def check_trace_identities(s: AlmostKahlerStructure, x: np.ndarray, trials: int = 100,
                           seed: int = 0) -> Tuple[float, float]:
    """
    Residuals of ∇_l J^l_j = 0 and (∇_l J^m_j) v^j (Ωv)_m = 0, maximized over indices,
    the points in x, and `trials` random unit vectors v.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    nj = nabla_J(s, np.atleast_2d(x))
    trace_residual = float(np.max(np.abs(np.einsum('...llj->...j', nj))))
    rng = np.random.default_rng(seed)
    vs = rng.standard_normal((trials, s.dim))
    vs /= np.linalg.norm(vs, axis=1, keepdims=True)
    omega_v = vs @ s.Omega.T
    contraction = np.einsum('plmj,tj,tm->ptl', nj, vs, omega_v)
    return trace_residual, float(np.max(np.abs(contraction)))


def riemann(s: AlmostKahlerStructure, x: np.ndarray) -> np.ndarray:
    """R^ρ_{σμν} = ∂_μ Γ^ρ_{νσ} - ∂_ν Γ^ρ_{μσ} + Γ^ρ_{μλ} Γ^λ_{νσ} - Γ^ρ_{νλ} Γ^λ_{μσ}."""
    gamma, dgamma = christoffel_derivative(s, x)
    return (np.einsum('...mrns->...rsmn', dgamma) - np.einsum('...nrms->...rsmn', dgamma)
            + np.einsum('...rml,...lns->...rsmn', gamma, gamma)
            - np.einsum('...rnl,...lms->...rsmn', gamma, gamma))


def curvature_scalars(s: AlmostKahlerStructure, x: np.ndarray):
    """
    Scalar curvature R, Romega = R_{ljkm} ω^{lj} ω^{km} and |R + ½Romega + ½|∇J|²|.

    Romega carries the sign for which Romega = -2R on Kähler metrics.
    """
    beta = metric_at(s, x)
    inv = np.linalg.inv(beta)
    riem = riemann(s, x)
    ricci = np.einsum('...rsrn->...sn', riem)
    scalar = np.einsum('...sn,...sn->...', inv, ricci)
    lowered = np.einsum('...rl,...lsmn->...rsmn', beta, riem)
    omega_up = np.einsum('...ac,...bd,cd->...ab', inv, inv, s.Omega)
    romega = -np.einsum('...ljkm,...lj,...km->...', lowered, omega_up, omega_up)
    residual = np.abs(scalar + 0.5 * romega + 0.5 * nabla_J_norm_sq(s, x))
    return scalar, romega, residual


def _chunked(s: AlmostKahlerStructure, points: np.ndarray, fn) -> np.ndarray:
    out = [fn(s, points[i:i + CHUNK_POINTS]) for i in range(0, len(points), CHUNK_POINTS)]
    return np.concatenate(out)


def grid_values(s: AlmostKahlerStructure, grid_n: int, fn=nabla_J_norm_sq) -> np.ndarray:
    """Evaluate a pointwise tensor function on the uniform grid_n^{2n} grid."""
    return _chunked(s, probe_grid(s.dim, grid_n), fn)


def sup_nabla_J(s: AlmostKahlerStructure, grid_n: int) -> float:
    """max |∇J|² over the uniform grid (evaluation only, no infimum over J)."""
    if grid_n < 8:
        raise ValueError(f"grid_n must be >= 8, got {grid_n}")
    if s.is_constant:
        return 0.0
    return float(np.max(grid_values(s, grid_n)))


def q_grid_average(s: AlmostKahlerStructure, grid_n: int = 32) -> Tuple[float, np.ndarray]:
    """Uniform-grid average of q and the sampled values."""
    if s.is_constant:
        values = np.zeros(grid_n ** s.dim)
    else:
        values = grid_values(s, grid_n, q_density)
    return float(np.mean(values)), values


def central_difference(fn, x: np.ndarray, step: float) -> np.ndarray:
    """4th-order central differences, derivative index first."""
    parts = []
    for a in range(len(x)):
        e = np.zeros_like(x)
        e[a] = step
        parts.append((-fn(x + 2 * e) + 8 * fn(x + e) - 8 * fn(x - e) + fn(x - 2 * e)) / (12 * step))
    return np.stack(parts)


def finite_difference_nabla_J(s: AlmostKahlerStructure, x: np.ndarray,
                              step: float = FD_STEP) -> np.ndarray:
    """∇J from finite differences of J and β alone, for cross-validating the analytic jets."""
    x = np.asarray(x, dtype=float)
    dj = central_difference(s.J, x, step)
    dbeta = central_difference(lambda p: metric_at(s, p), x, step)
    gamma, _ = christoffel_from_metric(metric_at(s, x), dbeta)
    return _covariant_j(s.J(x), dj, gamma)


def probe_table(s: AlmostKahlerStructure, points: np.ndarray,
                trials: int = 10, seed: Optional[int] = 0) -> Dict[str, np.ndarray]:
    """Per-point geometry diagnostics used by the probe CSV."""
    points = np.atleast_2d(points)
    norm = nabla_J_norm_sq(s, points)
    scalar, romega, residual = curvature_scalars(s, points)
    trace_res, v_res = [], []
    for i, p in enumerate(points):
        t, v = check_trace_identities(s, p, trials=trials, seed=(seed or 0) + i)
        trace_res.append(t)
        v_res.append(v)
    return {
        "normJ2": norm,
        "q": Q_FACTOR * norm,
        "R": scalar,
        "Romega": romega,
        "lemma_residual": residual,
        "trace_residual": np.array(trace_res),
        "v_residual": np.array(v_res),
    }
