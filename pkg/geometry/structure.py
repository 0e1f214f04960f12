"""
Compatible almost-complex structures on flat symplectic tori.
Builds J(x) = S(x) J0 S(x)^-1 with S(x) = exp(f(x) A0) and evaluates its jets in closed form.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.linalg import expm

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
SYMPLECTIC_TOL = 1e-12
PROBE_POINTS_PER_AXIS = 4


class StructureError(ValueError):
    """Raised when a structure specification cannot define a compatible almost-Kähler triple."""
    pass


def standard_omega(n: int, scale: float = 1.0) -> np.ndarray:
    """Ω = 2π·scale·(dx1∧dx2 + dx3∧dx4 + ...) as a 2n×2n matrix."""
    omega = np.zeros((2 * n, 2 * n))
    for p in range(n):
        omega[2 * p, 2 * p + 1] = TWO_PI * scale
        omega[2 * p + 1, 2 * p] = -TWO_PI * scale
    return omega


def standard_j0(n: int) -> np.ndarray:
    """Block rotation with J e_{2p} = e_{2p+1}; compatible with standard_omega for scale > 0."""
    j0 = np.zeros((2 * n, 2 * n))
    for p in range(n):
        j0[2 * p + 1, 2 * p] = 1.0
        j0[2 * p, 2 * p + 1] = -1.0
    return j0


def _diag_shear(n: int, plane: int) -> np.ndarray:
    a0 = np.zeros((2 * n, 2 * n))
    a0[2 * plane, 2 * plane] = 1.0
    a0[2 * plane + 1, 2 * plane + 1] = -1.0
    return a0


def _mixed_generator(n: int) -> np.ndarray:
    # symmetric block in Hamiltonian form: A0 = Ω0^-1 H with H symmetric couples the planes
    h = np.zeros((2 * n, 2 * n))
    for p in range(2 * n - 1):
        h[p, p + 1] = h[p + 1, p] = 0.5
    h += np.diag(np.linspace(1.0, -1.0, 2 * n))
    return np.linalg.solve(standard_omega(n), h) * TWO_PI


def a0_preset(name: str, n: int) -> np.ndarray:
    """Named sp(2n) generators shipped with the experiment configs."""
    if name == "plane1-shear":
        return _diag_shear(n, 0)
    if name == "plane2-shear":
        if n < 2:
            raise StructureError("plane2-shear needs n >= 2")
        return _diag_shear(n, 1)
    if name == "mixed":
        return _mixed_generator(n)
    raise StructureError(f"Unknown A0 preset '{name}'")


@dataclass
class JFamilySpec:
    """One-generator family f(x) = ε sin(2π v·x + φ), J = exp(fA0) J0 exp(-fA0)."""
    n: int
    epsilon: float = 0.0
    wave_vector: Sequence[int] = ()
    phase: float = 0.0
    A0: Optional[np.ndarray] = None
    J0: Optional[np.ndarray] = None
    omega_scale: float = 1.0
    Omega: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.n < 1:
            raise StructureError(f"n must be >= 1, got {self.n}")
        dim = 2 * self.n
        if self.Omega is None:
            self.Omega = standard_omega(self.n, self.omega_scale)
        self.Omega = np.asarray(self.Omega, dtype=float)
        if self.J0 is None:
            self.J0 = standard_j0(self.n)
        self.J0 = np.asarray(self.J0, dtype=float)
        if self.A0 is None:
            if self.epsilon != 0.0:
                raise StructureError("A0 is required when epsilon != 0")
            self.A0 = np.zeros((dim, dim))
        self.A0 = np.asarray(self.A0, dtype=float)
        if len(self.wave_vector) == 0:
            self.wave_vector = [1] + [0] * (dim - 1)
        wave = np.asarray(self.wave_vector, dtype=float)
        if wave.shape != (dim,):
            raise StructureError(f"wave_vector must have length {dim}, got {wave.shape}")
        if not np.allclose(wave, np.round(wave)):
            raise StructureError(f"wave_vector must be integral for periodicity, got {self.wave_vector}")
        self.wave_vector = np.round(wave).astype(int)
        for name, mat in (("Omega", self.Omega), ("J0", self.J0), ("A0", self.A0)):
            if mat.shape != (dim, dim):
                raise StructureError(f"{name} must be {dim}x{dim}, got {mat.shape}")


@dataclass
class JetTensor:
    """Value with first and second partials; derivative indices come first."""
    value: np.ndarray
    first: np.ndarray
    second: np.ndarray


@dataclass
class AlmostKahlerStructure:
    """Constant Ω with a compatible J(x) on the unit torus [0,1)^{2n}."""
    n: int
    Omega: np.ndarray
    family: JFamilySpec
    diagnostics: Dict[str, float] = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return 2 * self.n

    @property
    def is_constant(self) -> bool:
        return self.family.epsilon == 0.0 or not np.any(self.family.A0)

    def profile(self, x: np.ndarray):
        """f, ∂f, ∂∂f at points x of shape (..., 2n)."""
        fam = self.family
        wave = fam.wave_vector.astype(float)
        theta = np.asarray(TWO_PI * (np.asarray(x, dtype=float) @ wave) + fam.phase)
        f = np.asarray(fam.epsilon * np.sin(theta))
        df = np.asarray(fam.epsilon * TWO_PI * np.cos(theta))[..., None] * wave
        ddf = np.asarray(-fam.epsilon * TWO_PI ** 2 * np.sin(theta))[..., None, None] * np.outer(wave, wave)
        return f, df, ddf

    def conjugator(self, x: np.ndarray):
        """S(x) and S(x)^-1."""
        f, _, _ = self.profile(x)
        gen = f[..., None, None] * self.family.A0
        return expm(gen), expm(-gen)

    def J(self, x: np.ndarray) -> np.ndarray:
        s, s_inv = self.conjugator(x)
        return s @ self.family.J0 @ s_inv

    def jets(self, x: np.ndarray) -> JetTensor:
        """
        Closed-form jets of J: ∂_a J = f_a [A0, J], ∂_a∂_b J = f_ab [A0, J] + f_a f_b [A0, [A0, J]].

        Returned arrays have shapes (..., m, j), (..., a, m, j) and (..., a, b, m, j).
        """
        a0 = self.family.A0
        _, df, ddf = self.profile(x)
        j = self.J(x)
        c1 = a0 @ j - j @ a0
        c2 = a0 @ c1 - c1 @ a0
        first = df[..., :, None, None] * c1[..., None, :, :]
        second = (ddf[..., :, :, None, None] * c1[..., None, None, :, :]
                  + (df[..., :, None] * df[..., None, :])[..., None, None] * c2[..., None, None, :, :])
        return JetTensor(value=j, first=first, second=second)

    def beta_jets(self, x: np.ndarray) -> JetTensor:
        """β = ΩJ and its partials, derived from the J jets."""
        jet = self.jets(x)
        om = self.Omega
        return JetTensor(
            value=np.einsum('lm,...mk->...lk', om, jet.value),
            first=np.einsum('lm,...amk->...alk', om, jet.first),
            second=np.einsum('lm,...abmk->...ablk', om, jet.second),
        )

    def volume(self) -> float:
        """∫ ω^n/n! over the unit torus, i.e. the Pfaffian magnitude √det Ω."""
        return float(np.sqrt(abs(np.linalg.det(self.Omega))))


def probe_grid(dim: int, per_axis: int) -> np.ndarray:
    """Uniform per_axis^dim grid on the unit torus, shape (per_axis**dim, dim)."""
    axis = np.arange(per_axis) / per_axis
    mesh = np.meshgrid(*([axis] * dim), indexing='ij')
    return np.stack([m.ravel() for m in mesh], axis=-1)


def build_structure(spec: JFamilySpec) -> AlmostKahlerStructure:
    """
    Validate a family specification and return the structure.

    Raises:
        StructureError: A0 outside sp(2n), Ω not integral or degenerate, J0 incompatible,
            or β not positive-definite at some probe point.
    """
    omega = spec.Omega
    dim = 2 * spec.n
    if np.max(np.abs(omega + omega.T)) > SYMPLECTIC_TOL:
        raise StructureError("Omega must be antisymmetric")
    if abs(np.linalg.det(omega)) < 1e-12:
        raise StructureError("Omega must be invertible")
    periods = omega / TWO_PI
    if not np.allclose(periods, np.round(periods), atol=1e-9):
        raise StructureError(f"Omega periods must lie in 2πZ, got Omega/2π =\n{periods}")

    defect = float(np.max(np.abs(spec.A0.T @ omega + omega @ spec.A0)))
    if defect > SYMPLECTIC_TOL * max(1.0, float(np.max(np.abs(omega)))):
        raise StructureError(f"A0 is not in sp({dim}): algebra defect {defect:.3e}")

    j0 = spec.J0
    if np.max(np.abs(j0 @ j0 + np.eye(dim))) > SYMPLECTIC_TOL:
        raise StructureError("J0 must square to -Id")
    if np.max(np.abs(j0.T @ omega @ j0 - omega)) > SYMPLECTIC_TOL * TWO_PI:
        raise StructureError("J0 does not preserve Omega")

    structure = AlmostKahlerStructure(n=spec.n, Omega=omega, family=spec)

    points = probe_grid(dim, PROBE_POINTS_PER_AXIS)
    j = structure.J(points)
    beta = np.einsum('lm,pmk->plk', omega, j)
    sym_beta = 0.5 * (beta + np.swapaxes(beta, -1, -2))
    min_eigs = np.linalg.eigvalsh(sym_beta)[:, 0]
    worst = int(np.argmin(min_eigs))
    if min_eigs[worst] <= 0:
        raise StructureError(f"beta is not positive-definite at x={points[worst].tolist()} "
                             f"(min eigenvalue {min_eigs[worst]:.3e})")

    s, _ = structure.conjugator(points)
    structure.diagnostics = {
        "square_residual": float(np.max(np.abs(j @ j + np.eye(dim)))),
        "symplectic_defect": float(np.max(np.abs(np.swapaxes(s, -1, -2) @ omega @ s - omega))) / TWO_PI,
        "beta_asymmetry": float(np.max(np.abs(beta - np.swapaxes(beta, -1, -2)))),
        "min_beta_eigenvalue": float(min_eigs[worst]),
    }
    logger.info(f"Built structure n={spec.n} epsilon={spec.epsilon}: {structure.diagnostics}")
    return structure
