"""
Symmetric gauge for the prequantum connection and its lattice realization.

The connection form is a_k(x) = ½ (x - c)^j Ω_{jk}, so da = Ω and a(c) = 0. Sections of L^k are functions
on R^{2n} with ψ(x + e_m) = e^{ikχ_m(x)} ψ(x), χ_m(x) = ½ Ω_{mk}(x + c)^k. Link phases are exact line
integrals of the linear gauge (Peierls substitution).
"""

import logging
import math
from typing import Optional

import numpy as np

from geometry import AlmostKahlerStructure

logger = logging.getLogger(__name__)

FLUX_TOL = 1e-9


def grid_coordinates(dim: int, N: int) -> np.ndarray:
    """Coordinates of the uniform N^dim grid as an array of shape (dim, N, ..., N)."""
    return np.indices((N,) * dim, dtype=float) / N


def gauge_potential(s: AlmostKahlerStructure, center: np.ndarray, x: np.ndarray) -> np.ndarray:
    """a_k(x) for points of shape (..., 2n)."""
    return (np.asarray(x, dtype=float) - np.asarray(center, dtype=float)) @ (0.5 * s.Omega)


def link_integral(s: AlmostKahlerStructure, center: np.ndarray, x: np.ndarray, j: int,
                  h: float) -> np.ndarray:
    """∫ a along the segment from x to x + h e_j; exact midpoint rule for the linear gauge."""
    mid = np.array(x, dtype=float)
    mid[..., j] += 0.5 * h
    return h * gauge_potential(s, center, mid)[..., j]


def loop_integral(s: AlmostKahlerStructure, center: np.ndarray, x: np.ndarray, j: int, l: int,
                  h: float) -> float:
    """Counter-clockwise ∮ a around the h×h square at x spanned by e_j, e_l."""
    x = np.asarray(x, dtype=float)
    ej, el = np.eye(s.dim)[j] * h, np.eye(s.dim)[l] * h
    return float(link_integral(s, center, x, j, h) + link_integral(s, center, x + ej, l, h)
                 - link_integral(s, center, x + el, j, h) - link_integral(s, center, x, l, h))


def transition_function(s: AlmostKahlerStructure, center: np.ndarray, m: int,
                        x: np.ndarray) -> np.ndarray:
    """χ_m(x) = ½ Ω_{mk}(x + c)^k."""
    x = np.asarray(x, dtype=float)
    return 0.5 * (x + np.asarray(center, dtype=float)) @ s.Omega[m]


def gauge_change(s: AlmostKahlerStructure, old_center: np.ndarray, new_center: np.ndarray,
                 x: np.ndarray) -> np.ndarray:
    """Λ with a_new = a_old + dΛ, so sections transform as ψ_new = e^{ikΛ} ψ_old."""
    shift = np.asarray(old_center, dtype=float) - np.asarray(new_center, dtype=float)
    return 0.5 * (np.asarray(x, dtype=float) @ (shift @ s.Omega))


def flux_integers(s: AlmostKahlerStructure, k: int) -> np.ndarray:
    """k Ω_{jl} / 2π, the Chern numbers of L^k on each coordinate 2-torus."""
    return k * s.Omega / (2 * math.pi)


def flux_defect(s: AlmostKahlerStructure, k: int) -> float:
    flux = flux_integers(s, k)
    return float(np.max(np.abs(flux - np.round(flux))))


def cocycle_defect(s: AlmostKahlerStructure, k: int, center: np.ndarray,
                   points: Optional[np.ndarray] = None) -> float:
    """
    max |e^{ik(χ_m(x + e_l) + χ_l(x) - χ_l(x + e_m) - χ_m(x))} - 1| over m, l and the sample points.
    """
    if points is None:
        points = np.random.default_rng(0).random((8, s.dim))
    eye = np.eye(s.dim)
    worst = 0.0
    for m in range(s.dim):
        for l in range(s.dim):
            phase = (transition_function(s, center, m, points + eye[l])
                     + transition_function(s, center, l, points)
                     - transition_function(s, center, l, points + eye[m])
                     - transition_function(s, center, m, points))
            worst = max(worst, float(np.max(np.abs(np.exp(1j * k * phase) - 1))))
    return worst


def link_phases(s: AlmostKahlerStructure, k: int, N: int, center: np.ndarray) -> np.ndarray:
    """
    Phases of the covariant shift (P_j ψ)(x) = U_j(x) ψ(x + h e_j), shape (2n, N, ..., N).

    U_j = e^{-ik∫a} along the link; on the last slice of axis j the neighbour wraps to the opposite
    face and the transition factor e^{ikχ_j} of the wrapped point is folded in.
    """
    dim = s.dim
    h = 1.0 / N
    coords = np.moveaxis(grid_coordinates(dim, N), 0, -1)
    phases = np.empty((dim,) + (N,) * dim, dtype=complex)
    for j in range(dim):
        phases[j] = np.exp(-1j * k * link_integral(s, center, coords, j, h))
        edge = [slice(None)] * dim
        edge[j] = N - 1
        wrapped = coords[tuple(edge)].copy()
        wrapped[..., j] = 0.0
        phases[j][tuple(edge)] *= np.exp(1j * k * transition_function(s, center, j, wrapped))
    return phases


def plaquette_phases(phases: np.ndarray, j: int, l: int) -> np.ndarray:
    """U_j(x) U_l(x + he_j) conj(U_j(x + he_l)) conj(U_l(x)) at every site."""
    return (phases[j] * np.roll(phases[l], -1, axis=j)
            * np.conj(np.roll(phases[j], -1, axis=l)) * np.conj(phases[l]))


def flux_residual(s: AlmostKahlerStructure, k: int, N: int, phases: np.ndarray) -> float:
    """max |plaquette - e^{-ikh²Ω_{jl}}| over all planes and sites, wrapped plaquettes included."""
    h = 1.0 / N
    worst = 0.0
    for j in range(s.dim):
        for l in range(j + 1, s.dim):
            expected = np.exp(-1j * k * h * h * s.Omega[j, l])
            worst = max(worst, float(np.max(np.abs(plaquette_phases(phases, j, l) - expected))))
    return worst
