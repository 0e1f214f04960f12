"""
Magnetic Laplacian □_k = Δ_k - nk on sections of L^k over the torus, as a matrix-free Hermitian operator.

The positive part A comes from the quadratic form

    Q(ψ) = 2^{-2n} Σ_σ Σ_x Σ_{jl} G^{jl}(x + hσ/2) conj(D^{σ_j}_j ψ)(x) (D^{σ_l}_l ψ)(x)

summed over sign patterns σ ∈ {±1}^{2n}, with covariant differences D^+_j = (P_j - 1)/h and
D^-_j = (1 - P_j^†)/h and G = β^{-1} sampled at cell corners. √det β = √det Ω is constant and cancels.
Q is a sum of squares with positive-definite weights, so A is Hermitian and positive semi-definite.
"""

import hashlib
import json
import logging
import math
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.sparse.linalg import LinearOperator

from geometry import AlmostKahlerStructure, metric_at
from .gauge import (
    cocycle_defect, flux_defect, flux_integers, flux_residual, grid_coordinates, link_phases,
    plaquette_phases
)

logger = logging.getLogger(__name__)

POINTS_PER_MAGNETIC_LENGTH = 6
MAX_CHUNK_ENTRIES = 1 << 22
COCYCLE_TOL = 1e-9


class OperatorBuildError(ValueError):
    """The requested discretization cannot represent sections of L^k."""


def resolution_bound(k: int) -> int:
    """Smallest admissible grid size N = ceil(6√k)."""
    return math.ceil(POINTS_PER_MAGNETIC_LENGTH * math.sqrt(k) - 1e-12)


def _corner_average(g: np.ndarray, fixed: Dict[int, int]) -> np.ndarray:
    """
    Average of g(x + hσ/2) over sign patterns σ with σ_i = fixed[i] on the fixed axes.
    g holds values on the dual grid, index m ↔ point (m + ½)h, so σ_i = -1 is a roll by one.
    """
    out = g
    for axis in range(g.ndim):
        if axis in fixed:
            if fixed[axis] < 0:
                out = np.roll(out, 1, axis=axis)
        else:
            out = 0.5 * (out + np.roll(out, 1, axis=axis))
    return out


class HermitianOperator:
    """
    □_k on the N^{2n} grid. Vectors are flat complex arrays of length N^{2n} (or (N^{2n}, p) blocks)
    in C order over the grid axes.
    """

    def __init__(self, structure: AlmostKahlerStructure, k: int, N: int, center: np.ndarray,
                 phases: np.ndarray, weights: Dict[Tuple[int, int, int, int], np.ndarray],
                 g_max: float):
        self.structure = structure
        self.k = k
        self.N = N
        self.center = np.asarray(center, dtype=float)
        self.h = 1.0 / N
        self.phases = phases
        self.weights = weights
        self.dim = structure.dim
        self.shift = structure.n * k
        self.norm_estimate = 4.0 * self.dim * g_max / (self.h * self.h)
        self._adjoint_phases = np.stack([np.conj(np.roll(phases[j], 1, axis=j)) for j in range(self.dim)])

    @property
    def size(self) -> int:
        return self.N ** self.dim

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.size, self.size)

    def _forward(self, u: np.ndarray, j: int) -> np.ndarray:
        return self.phases[j][..., None] * np.roll(u, -1, axis=j)

    def _backward(self, u: np.ndarray, j: int) -> np.ndarray:
        return self._adjoint_phases[j][..., None] * np.roll(u, 1, axis=j)

    def _weight(self, j: int, l: int, s: int, t: int) -> np.ndarray:
        key = (j, l, s, t) if j <= l else (l, j, t, s)
        return self.weights[key][..., None]

    def _apply_block(self, u: np.ndarray) -> np.ndarray:
        """A u for u of shape (N, ..., N, p)."""
        h = self.h
        diffs = {}
        for j in range(self.dim):
            diffs[(j, 1)] = (self._forward(u, j) - u) / h
            diffs[(j, -1)] = (u - self._backward(u, j)) / h
        out = np.zeros_like(u)
        for j in range(self.dim):
            for s in (1, -1):
                flux = np.zeros_like(u)
                for l in range(self.dim):
                    for t in ((s,) if l == j else (1, -1)):
                        flux += self._weight(j, l, s, t) * diffs[(l, t)]
                if s > 0:
                    out += (self._backward(flux, j) - flux) / h
                else:
                    out += (flux - self._forward(flux, j)) / h
        return out

    def apply_positive(self, v: np.ndarray) -> np.ndarray:
        """A v = (□_k + nk) v."""
        v = np.asarray(v)
        single = v.ndim == 1
        block = v.reshape(self.size, -1)
        chunk = max(1, MAX_CHUNK_ENTRIES // self.size)
        out = np.empty(block.shape, dtype=complex)
        grid = (self.N,) * self.dim
        for start in range(0, block.shape[1], chunk):
            cols = block[:, start:start + chunk]
            res = self._apply_block(cols.reshape(grid + (cols.shape[1],)).astype(complex))
            out[:, start:start + chunk] = res.reshape(self.size, -1)
        return out[:, 0] if single else out

    def matvec(self, v: np.ndarray) -> np.ndarray:
        """□_k v."""
        return self.apply_positive(v) - self.shift * np.asarray(v)

    def quadratic_form(self, v: np.ndarray) -> float:
        return float(np.real(np.vdot(v, self.matvec(v))))

    def as_linear_operator(self) -> LinearOperator:
        return LinearOperator(self.shape, matvec=self.matvec, matmat=self.matvec,
                              rmatvec=self.matvec, dtype=complex)

    def plaquette_phases(self, j: int, l: int) -> np.ndarray:
        return plaquette_phases(self.phases, j, l)

    def flux_residual(self) -> float:
        return flux_residual(self.structure, self.k, self.N, self.phases)

    def hermiticity_defect(self, trials: int = 3, seed: int = 0) -> float:
        """max |⟨Av, w⟩ - ⟨v, Aw⟩| / (‖v‖‖w‖) over random complex pairs."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        for _ in range(trials):
            v = rng.standard_normal(self.size) + 1j * rng.standard_normal(self.size)
            w = rng.standard_normal(self.size) + 1j * rng.standard_normal(self.size)
            defect = abs(np.vdot(self.matvec(v), w) - np.vdot(v, self.matvec(w)))
            worst = max(worst, defect / (np.linalg.norm(v) * np.linalg.norm(w)))
        return float(worst)

    def metadata(self) -> Dict[str, Any]:
        flux = flux_integers(self.structure, self.k)
        meta = {
            "k": self.k,
            "N": self.N,
            "dim": self.dim,
            "center": self.center.tolist(),
            "flux_integers": np.round(flux).astype(int).tolist(),
            "shift": self.shift,
            "norm_estimate": self.norm_estimate,
        }
        payload = json.dumps({**meta, "Omega": self.structure.Omega.tolist(),
                              "family": repr(self.structure.family)}, sort_keys=True)
        meta["build_hash"] = hashlib.sha256(payload.encode()).hexdigest()[:16]
        return meta


def _dual_inverse_metric(s: AlmostKahlerStructure, N: int) -> np.ndarray:
    """β^{-1} at cell corners (m + ½)h, shape (2n, 2n, N, ..., N); broadcastable scalars if J is constant."""
    dim = s.dim
    if s.is_constant:
        g = np.linalg.inv(metric_at(s, np.zeros(dim)))
        return g.reshape((dim, dim) + (1,) * dim)
    h = 1.0 / N
    points = np.moveaxis(grid_coordinates(dim, N), 0, -1).reshape(-1, dim) + 0.5 * h
    g = np.linalg.inv(metric_at(s, points))
    return np.moveaxis(g.reshape((N,) * dim + (dim, dim)), (-2, -1), (0, 1))


def build_operator(s: AlmostKahlerStructure, k: int, N: int,
                   center: Optional[np.ndarray] = None) -> HermitianOperator:
    if k < 1:
        raise OperatorBuildError(f"k must be >= 1, got {k}")
    bound = resolution_bound(k)
    if N < bound:
        raise OperatorBuildError(f"N={N} is below the resolution bound {bound} for k={k}")
    defect = flux_defect(s, k)
    if defect > COCYCLE_TOL:
        raise OperatorBuildError(f"flux k·Ω/2π is not integral for k={k} (defect {defect:.3e})")
    center = np.zeros(s.dim) if center is None else np.asarray(center, dtype=float)
    if center.shape != (s.dim,):
        raise OperatorBuildError(f"gauge center must have length {s.dim}, got {center.shape}")
    cocycle = cocycle_defect(s, k, center)
    if cocycle > COCYCLE_TOL:
        raise OperatorBuildError(f"transition functions fail the cocycle condition ({cocycle:.3e})")

    g = _dual_inverse_metric(s, N)
    weights = {}
    for j in range(s.dim):
        for l in range(j, s.dim):
            if j == l:
                for sign in (1, -1):
                    weights[(j, j, sign, sign)] = 0.5 * _corner_average(g[j, j], {j: sign})
            else:
                for sj in (1, -1):
                    for sl in (1, -1):
                        weights[(j, l, sj, sl)] = 0.25 * _corner_average(g[j, l], {j: sj, l: sl})
    g_max = float(np.max(np.linalg.eigvalsh(np.moveaxis(g, (0, 1), (-2, -1)))))

    op = HermitianOperator(s, k, N, center, link_phases(s, k, N, center), weights, g_max)
    logger.info(f"Built operator k={k} N={N} dim={s.dim} size={op.size} "
                f"norm_estimate={op.norm_estimate:.3e}")
    return op
