"""
Pydantic models for akspec experiment descriptions.
Defines the schema of the YAML/JSON experiment format.
"""

from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, validator

from geometry import JFamilySpec, a0_preset
from quantization import resolution_bound

A0_PRESETS = ("plane1-shear", "plane2-shear", "mixed")


class Task(str, Enum):
    """Experiment tasks, in execution order."""
    GEOMETRY_CHECK = "geometry-check"
    KKGEOM_CHECK = "kkgeom-check"
    OSCILLATOR_CHECK = "oscillator-check"
    SPECTRUM = "spectrum"
    DENSITY = "density"
    QUASIMODE = "quasimode"


class SolverMethod(str, Enum):
    LANCZOS = "lanczos"
    BLOCK_KRYLOV = "block-krylov"
    LOBPCG = "lobpcg"


class StructureConfig(BaseModel):
    """Almost-Kähler family f(x) = ε sin(2π v·x + φ), J = exp(fA0) J0 exp(-fA0)."""
    n: int = Field(2, ge=1, le=3, description="Complex dimension; the torus has real dimension 2n")
    epsilon: float = Field(0.0, ge=0.0, le=2.0, description="Deformation amplitude")
    wave_vector: Optional[List[int]] = Field(None, description="Integer wave vector v, default e_1")
    phase: float = Field(0.0, description="Phase φ of the deformation")
    A0: Optional[Union[str, List[List[float]]]] = Field(None, description="sp(2n) generator or preset name")
    omega_scale: int = Field(1, ge=1, le=4, description="Ω = 2π·omega_scale·(dx1∧dx2 + ...)")

    @validator('A0')
    def known_preset(cls, v):
        if isinstance(v, str) and v not in A0_PRESETS:
            raise ValueError(f"A0 preset must be one of {', '.join(A0_PRESETS)}")
        return v

    def family_spec(self) -> JFamilySpec:
        a0 = self.A0
        if isinstance(a0, str):
            a0 = a0_preset(a0, self.n)
        return JFamilySpec(
            n=self.n,
            epsilon=self.epsilon,
            wave_vector=self.wave_vector or (),
            phase=self.phase,
            A0=None if a0 is None else np.asarray(a0, dtype=float),
            omega_scale=self.omega_scale,
        )


class GridConfig(BaseModel):
    N: Optional[int] = Field(None, ge=2, le=64, description="Grid size for every k; default ceil(6√k) per k")
    refinement_check: bool = Field(False, description="Repeat the largest k at 2N and compare cluster deviations")


class SolverConfig(BaseModel):
    """Eigensolver settings."""
    tol: float = Field(1e-8, gt=0.0, le=1e-2, description="Residual tolerance relative to the norm estimate")
    max_iterations: int = Field(500, ge=1, description="Restart cycles")
    seed: int = Field(0, ge=0, description="Seed of the start block")
    block_size: int = Field(8, ge=8, description="Minimum Ritz block size")
    krylov_blocks: int = Field(4, ge=1, le=16, description="Krylov blocks per restart cycle")
    method: SolverMethod = Field(SolverMethod.LANCZOS, description="lanczos, block-krylov or lobpcg")
    extra_eigenvalues: int = Field(8, ge=1, description="Eigenvalues requested beyond the expected cluster")
    second_cluster: bool = Field(False, description="Also resolve the second Landau cluster")


class GeometryCheckConfig(BaseModel):
    random_points: int = Field(100, ge=1, description="Points for the trace identities")
    lemma_points: int = Field(20, ge=1, description="Points for the curvature lemma and jet cross-check")
    probe_per_axis: int = Field(4, ge=2, le=8, description="Probe grid points per axis")
    seed: int = Field(0, ge=0)


class KKGeomConfig(BaseModel):
    x0: Optional[List[float]] = Field(None, description="Base point of the Fermi check, default (0.2, ..., 0.2)")
    radii: List[float] = Field([0.04, 0.03, 0.02, 0.01], description="Fermi sampling radii, strictly decreasing")
    steps: int = Field(400, ge=100, description="RK4 steps of the variational integration")

    @validator('radii')
    def decreasing_radii(cls, v):
        if len(v) < 4:
            raise ValueError('At least 4 radii are needed for the quartic fit')
        if any(r <= 0 for r in v) or any(a <= b for a, b in zip(v, v[1:])):
            raise ValueError('Radii must be positive and strictly decreasing')
        return v


class OscillatorConfig(BaseModel):
    dims: List[int] = Field([1, 2, 4], description="Real dimensions d of the oscillator checks")
    trials: int = Field(100, ge=1, description="Random rational coefficient sets")
    seed: int = Field(7, ge=0)

    @validator('dims')
    def positive_dims(cls, v):
        if not v or any(d < 1 or d > 6 for d in v):
            raise ValueError('dims must be a nonempty list of integers in 1..6')
        return v


class DensityConfig(BaseModel):
    grid_n: int = Field(16, ge=4, le=64, description="Uniform grid per axis for the average of f∘q")


class QuasimodeConfig(BaseModel):
    N: Optional[int] = Field(None, ge=2, le=64, description="Coherent-state grid size; default the spectrum grid")
    localization_orders: List[int] = Field([2, 4], description="Homogeneity orders m of the test weights")

    @validator('localization_orders')
    def valid_orders(cls, v):
        if not v or any(m not in (1, 2, 3, 4) for m in v):
            raise ValueError('localization orders must lie in 1..4')
        return v


class ExperimentConfig(BaseModel):
    """Complete experiment description."""
    apiVersion: str = Field("v1", description="Config format version")
    name: str = Field(..., description="Experiment name", pattern=r'^[a-zA-Z0-9]([a-zA-Z0-9\-_])*$')
    structure: StructureConfig = Field(default_factory=StructureConfig, description="Almost-Kähler structure")
    k_list: List[int] = Field(..., description="Tensor powers k, strictly increasing")
    grid: GridConfig = Field(default_factory=GridConfig)
    solver: SolverConfig = Field(default_factory=SolverConfig)
    tasks: List[Task] = Field(..., description="Tasks to run")
    x0_list: List[List[float]] = Field(default_factory=list, description="Quasimode centres in [0, 1)^{2n}")
    geometry: GeometryCheckConfig = Field(default_factory=GeometryCheckConfig)
    kkgeom: KKGeomConfig = Field(default_factory=KKGeomConfig)
    oscillator: OscillatorConfig = Field(default_factory=OscillatorConfig)
    density: DensityConfig = Field(default_factory=DensityConfig)
    quasimode: QuasimodeConfig = Field(default_factory=QuasimodeConfig)
    output_dir: Optional[str] = Field(None, description="Output directory; excluded from the config hash")

    @validator('apiVersion')
    def validate_api_version(cls, v):
        if v not in ['v1']:
            raise ValueError('Unsupported API version')
        return v

    @validator('k_list')
    def increasing_k(cls, v):
        if not v:
            raise ValueError('k_list must not be empty')
        if any(k < 1 for k in v):
            raise ValueError('every k must be >= 1')
        if any(a >= b for a, b in zip(v, v[1:])):
            raise ValueError('k_list must be strictly increasing')
        return v

    @validator('tasks')
    def unique_tasks(cls, v):
        if not v:
            raise ValueError('At least one task must be specified')
        if len(v) != len(set(v)):
            raise ValueError('Tasks must be unique')
        return v

    def grid_size(self, k: int) -> int:
        return self.grid.N if self.grid.N is not None else resolution_bound(k)

    def ordered_tasks(self) -> List[Task]:
        return [t for t in Task if t in self.tasks]


def _cross_field_violations(config: ExperimentConfig) -> List[str]:
    violations = []
    s = config.structure
    dim = 2 * s.n
    tasks = set(config.tasks)
    for task in (Task.DENSITY, Task.QUASIMODE):
        if task in tasks and Task.SPECTRUM not in tasks:
            violations.append(f"tasks: '{task.value}' needs the 'spectrum' task")
    if Task.QUASIMODE in tasks and not config.x0_list:
        violations.append("x0_list: the 'quasimode' task needs at least one point")
    if s.epsilon != 0.0 and s.A0 is None:
        violations.append("structure.A0: required when epsilon != 0")
    if s.A0 == "plane2-shear" and s.n < 2:
        violations.append("structure.A0: preset 'plane2-shear' needs n >= 2")
    if isinstance(s.A0, list) and (len(s.A0) != dim or any(len(row) != dim for row in s.A0)):
        violations.append(f"structure.A0: must be a {dim}x{dim} matrix")
    if s.wave_vector is not None and len(s.wave_vector) != dim:
        violations.append(f"structure.wave_vector: must have length 2n = {dim}")
    k_max = max(config.k_list)
    bound = resolution_bound(k_max)
    for key, N in (("grid.N", config.grid.N), ("quasimode.N", config.quasimode.N)):
        if N is not None and N < bound:
            violations.append(f"{key}: {N} violates the rule N >= 6√k = {bound} for k = {k_max}")
    for i, x0 in enumerate(config.x0_list):
        if len(x0) != dim:
            violations.append(f"x0_list[{i}]: must have length 2n = {dim}")
        elif any(c < 0.0 or c >= 1.0 for c in x0):
            violations.append(f"x0_list[{i}]: coordinates must lie in [0, 1)")
    if config.kkgeom.x0 is not None and len(config.kkgeom.x0) != dim:
        violations.append(f"kkgeom.x0: must have length 2n = {dim}")
    return violations


def _parse(spec_dict: Dict[str, Any]) -> Tuple[Optional[ExperimentConfig], List[str]]:
    if not isinstance(spec_dict, dict):
        return None, ["config: top level must be a mapping"]
    try:
        config = ExperimentConfig(**spec_dict)
    except ValidationError as e:
        return None, [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()]
    return config, _cross_field_violations(config)


def collect_violations(spec_dict: Dict[str, Any]) -> List[str]:
    """
    Every violated rule of an experiment description, as 'key: message' strings.
    Empty for a well-formed description. Pure: nothing is built or written.
    """
    return _parse(spec_dict)[1]


def validate_experiment_spec(spec_dict: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate and parse an experiment description.

    Raises:
        ValueError: If the description is invalid; the message lists every violation.
    """
    config, violations = _parse(spec_dict)
    if violations:
        raise ValueError(f"Invalid experiment specification: {'; '.join(violations)}")
    return config
