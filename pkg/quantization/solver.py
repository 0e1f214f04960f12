"""
Lowest eigenpairs of the shifted magnetic Laplacian.

The default method is implicitly restarted Lanczos from ARPACK (`scipy.sparse.linalg.eigsh`) applied
to the positive operator □_k + nk. `block-krylov` is a restarted block Krylov iteration: each cycle
extends the current Ritz block by a few Krylov blocks built from its residuals, orthogonalized twice
by classical Gram-Schmidt, and restarts from the Rayleigh-Ritz vectors of the whole subspace.
`lobpcg` delegates to scipy.
"""

import logging
import time
from dataclasses import dataclass, field
from functools import partial
from typing import List, Optional, Union

import numpy as np
from scipy.linalg import eigh, qr
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, aslinearoperator, eigsh, lobpcg

from .operator import HermitianOperator

logger = logging.getLogger(__name__)

MIN_BLOCK_SIZE = 8
RANK_TOL = 1e-10
NORM_POWER_STEPS = 30
LANCZOS_EXTRA_VECTORS = 32
METHODS = ("lanczos", "block-krylov", "lobpcg")


@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_iterations: int = 500
    block_size: int = MIN_BLOCK_SIZE
    krylov_blocks: int = 4
    seed: int = 0
    method: str = "lanczos"

    def __post_init__(self):
        if self.block_size < MIN_BLOCK_SIZE:
            raise ValueError(f"block_size must be >= {MIN_BLOCK_SIZE}, got {self.block_size}")
        if self.tol <= 0:
            raise ValueError(f"tol must be positive, got {self.tol}")
        if self.max_iterations < 1 or self.krylov_blocks < 1:
            raise ValueError("max_iterations and krylov_blocks must be >= 1")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class SpectrumResult:
    eigenvalues: np.ndarray
    residuals: np.ndarray
    iterations: int
    matvecs: int
    wall_time: float
    norm_estimate: float
    converged: bool = True
    flag_reason: Optional[str] = None
    k: Optional[int] = None
    N: Optional[int] = None
    eigenvectors: Optional[np.ndarray] = field(default=None, repr=False)

    def rows(self) -> List[List[float]]:
        """(k, N, index, lambda, residual) per eigenpair."""
        return [[self.k, self.N, i, float(lam), float(res)]
                for i, (lam, res) in enumerate(zip(self.eigenvalues, self.residuals))]


def _estimate_norm(op: LinearOperator, rng: np.random.Generator) -> float:
    v = rng.standard_normal(op.shape[0]) + 1j * rng.standard_normal(op.shape[0])
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(NORM_POWER_STEPS):
        w = op.matvec(v)
        estimate = float(np.linalg.norm(w))
        if estimate == 0.0:
            return 1.0
        v = w / estimate
    return 1.1 * estimate


def _orthonormalize(w: np.ndarray, basis: Optional[np.ndarray]) -> np.ndarray:
    """Two passes of block Gram-Schmidt against basis, then QR with rank-deficient columns dropped."""
    scale = np.linalg.norm(w, axis=0)
    for _ in range(2):
        if basis is not None and basis.shape[1]:
            w = w - basis @ (basis.conj().T @ w)
    keep = np.linalg.norm(w, axis=0) > RANK_TOL * np.maximum(scale, 1e-300)
    w = w[:, keep]
    if not w.shape[1]:
        return w
    q, r = qr(w, mode='economic')
    good = np.abs(np.diag(r)) > RANK_TOL * np.max(np.abs(np.diag(r)))
    q = q[:, good]
    if basis is not None and basis.shape[1]:
        q = q - basis @ (basis.conj().T @ q)
        q, _ = qr(q, mode='economic')
    return q


class BlockKrylovSolver:
    """Restarted block Krylov eigensolver for the smallest eigenvalues of a Hermitian operator."""

    def __init__(self, op: LinearOperator, norm_estimate: float, options: SolverOptions):
        self.op = op
        self.size = op.shape[0]
        self.norm_estimate = norm_estimate
        self.options = options
        self.matvecs = 0

    def _apply(self, x: np.ndarray) -> np.ndarray:
        self.matvecs += x.shape[1]
        return np.asarray(self.op.matmat(x))

    def _ritz(self, v: np.ndarray, av: np.ndarray, p: int):
        h = v.conj().T @ av
        theta, y = eigh(0.5 * (h + h.conj().T))
        y = y[:, :p]
        return theta[:p], v @ y, av @ y

    def solve(self, wanted: int, p: int, start: Optional[np.ndarray] = None):
        """
        Iterate until the `wanted` lowest Ritz pairs have residual ≤ tol·‖A‖. Returns
        (theta, X, residuals, iterations, converged) with p Ritz pairs.
        """
        opts = self.options
        p = min(p, self.size)
        wanted = min(wanted, p)
        rng = np.random.default_rng(opts.seed)
        x = rng.standard_normal((self.size, p)) + 1j * rng.standard_normal((self.size, p))
        if start is not None:
            x[:, :start.shape[1]] = start
        x = _orthonormalize(x, None)
        ax = self._apply(x)
        threshold = opts.tol * self.norm_estimate
        theta, residuals = np.zeros(0), np.zeros(0)
        for iteration in range(1, opts.max_iterations + 1):
            theta, x, ax = self._ritz(x, ax, x.shape[1])
            r = ax - x * theta
            residuals = np.linalg.norm(r, axis=0)
            done = int(np.sum(residuals[:wanted] <= threshold))
            logger.debug(f"Krylov cycle {iteration}: {done}/{wanted} converged, "
                         f"max residual {np.max(residuals[:wanted]):.3e}")
            if done == wanted:
                return theta, x, residuals, iteration, True
            basis, products = [x], [ax]
            active = residuals > threshold
            w = r[:, active] if np.any(active) else r
            for _ in range(opts.krylov_blocks):
                w = _orthonormalize(w, np.hstack(basis))
                if not w.shape[1]:
                    break
                aw = self._apply(w)
                basis.append(w)
                products.append(aw)
                w = aw
            v, av = np.hstack(basis), np.hstack(products)
            theta, x, ax = self._ritz(v, av, p)
            # refresh the products to keep rounding from accumulating through restarts
            ax = self._apply(x)
        return theta, x, residuals, opts.max_iterations, False


def _as_operator(A):
    if isinstance(A, HermitianOperator):
        return A.as_linear_operator(), A.norm_estimate, A.k, A.N
    return aslinearoperator(A), None, None, None


class _ShiftedOperator(LinearOperator):
    """op + shift·I, counting applications."""

    def __init__(self, op: LinearOperator, shift: float):
        super().__init__(dtype=op.dtype, shape=op.shape)
        self.op = op
        self.shift = shift
        self.calls = 0

    def _matvec(self, x):
        self.calls += 1
        return np.asarray(self.op.matvec(x)) + self.shift * x

    def _matmat(self, x):
        self.calls += x.shape[1]
        return np.asarray(self.op.matmat(x)) + self.shift * x

    def _adjoint(self):
        return self


def _lanczos(op: LinearOperator, count: int, shift: float, options: SolverOptions):
    """
    Implicitly restarted Lanczos (ARPACK) on op + shift·I, so the wanted eigenvalues sit away from
    zero where ARPACK's relative tolerance means something. Returns eigenvalues of op.
    """
    size = op.shape[0]
    count = min(count, size - 2)
    rng = np.random.default_rng(options.seed)
    v0 = rng.standard_normal(size)
    if np.issubdtype(op.dtype, np.complexfloating):
        v0 = v0 + 1j * rng.standard_normal(size)
    shifted = _ShiftedOperator(op, shift)
    ncv = min(size, max(2 * count + 1, count + LANCZOS_EXTRA_VECTORS))
    try:
        theta, x = eigsh(shifted, k=count, which='SA', v0=v0, ncv=ncv, tol=options.tol,
                         maxiter=options.max_iterations)
    except ArpackNoConvergence as e:
        logger.warning(f"ARPACK stopped after {options.max_iterations} restarts with "
                       f"{len(e.eigenvalues)}/{count} converged eigenpairs")
        theta, x = e.eigenvalues, e.eigenvectors
    theta = np.real(theta)
    order = np.argsort(theta)
    return theta[order] - shift, x[:, order], shifted.calls, shifted.calls


def _lobpcg(op: LinearOperator, count: int, options: SolverOptions):
    rng = np.random.default_rng(options.seed)
    p = min(max(options.block_size, count + max(4, count // 4)), op.shape[0])
    x0 = rng.standard_normal((op.shape[0], p))
    if np.issubdtype(op.dtype, np.complexfloating):
        x0 = x0 + 1j * rng.standard_normal((op.shape[0], p))
    theta, x = lobpcg(op, x0, largest=False, tol=options.tol, maxiter=options.max_iterations)
    order = np.argsort(theta)[:count]
    return theta[order], x[:, order], options.max_iterations, options.max_iterations * p


def _block_krylov(op: LinearOperator, norm_estimate: float, options: SolverOptions):
    solver = BlockKrylovSolver(op, norm_estimate, options)
    state = {"start": None}

    def solve(count: int):
        p = max(options.block_size, count + max(4, count // 4))
        theta, x, _, iterations, _ = solver.solve(count, p, state["start"])
        state["start"] = x
        return theta[:count], x[:, :count], iterations, solver.matvecs

    return solve


def _below_threshold(solve, threshold: float, p: int, size: int):
    """Double the number of requested pairs until one lies at or above the threshold."""
    while True:
        theta, x, iterations, matvecs = solve(p)
        if np.any(theta >= threshold) or p >= size:
            return theta, x, iterations, matvecs
        logger.info(f"All {len(theta)} computed eigenvalues lie below threshold {threshold}; "
                    f"requesting {2 * p}")
        p = min(2 * p, size)


def lowest_eigenpairs(A: Union[HermitianOperator, LinearOperator, np.ndarray], count: Optional[int] = None,
                      threshold: Optional[float] = None,
                      options: Optional[SolverOptions] = None,
                      norm_estimate: Optional[float] = None) -> SpectrumResult:
    """
    The `count` lowest eigenpairs, or every eigenpair below `threshold`, of a Hermitian operator.

    For a HermitianOperator the eigenvalues are those of □_k (shift nk applied). Non-convergence
    returns the partial result with converged=False and the achieved residuals. Threshold mode
    keeps requesting more pairs until one lands at or above the threshold, for every method.
    """
    if (count is None) == (threshold is None):
        raise ValueError("exactly one of count and threshold is required")
    options = options or SolverOptions()
    op, op_norm, k, N = _as_operator(A)
    if count is not None:
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        if k is not None:
            limit = 2 * k ** A.structure.n + 20
            if count > limit:
                raise ValueError(f"count {count} exceeds 2k^n + 20 = {limit}")
    if threshold is not None and k is not None and threshold > k:
        raise ValueError(f"threshold {threshold} must not exceed k={k}")
    if norm_estimate is None:
        norm_estimate = op_norm if op_norm is not None else _estimate_norm(op, np.random.default_rng(options.seed))
    started = time.monotonic()

    if options.method == "lanczos":
        # □_k + nk is positive semi-definite
        shift = float(A.shift) if isinstance(A, HermitianOperator) else 0.0
        solve = partial(_lanczos, op, shift=shift, options=options)
    elif options.method == "lobpcg":
        solve = partial(_lobpcg, op, options=options)
    else:
        solve = _block_krylov(op, norm_estimate, options)

    if count is not None:
        theta, x, iterations, matvecs = solve(count)
        keep = np.arange(min(count, len(theta)))
    else:
        theta, x, iterations, matvecs = _below_threshold(solve, threshold, options.block_size, op.shape[0])
        keep = np.flatnonzero(theta < threshold)
    theta, x = theta[keep], x[:, keep]
    ax = np.asarray(op.matmat(x))
    residuals = np.linalg.norm(ax - x * theta, axis=0)
    matvecs += x.shape[1]
    converged = bool(np.all(residuals <= options.tol * norm_estimate))
    if count is not None and len(theta) < count:
        converged = False
    result = SpectrumResult(eigenvalues=theta, residuals=residuals, iterations=iterations,
                            matvecs=matvecs, wall_time=time.monotonic() - started,
                            norm_estimate=norm_estimate, converged=converged, k=k, N=N,
                            eigenvectors=x)
    if not converged:
        worst = float(np.max(residuals)) if len(residuals) else float('nan')
        result.flag_reason = (f"{len(theta)} eigenpairs with max residual {worst:.3e} above "
                              f"{options.tol * norm_estimate:.3e} after {iterations} iterations")
        logger.warning(f"Eigensolver did not converge: {result.flag_reason}")
    logger.info(f"Computed {len(theta)} eigenpairs with {options.method} in {iterations} iterations, "
                f"{matvecs} matvecs, {result.wall_time:.2f}s")
    return result
