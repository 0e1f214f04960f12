"""
Experiment description models for akspec.
"""

from .models import (
    ExperimentConfig, StructureConfig, GridConfig, SolverConfig, GeometryCheckConfig, KKGeomConfig,
    OscillatorConfig, DensityConfig, QuasimodeConfig, Task, SolverMethod, A0_PRESETS,
    collect_violations, validate_experiment_spec
)

__all__ = [
    'ExperimentConfig', 'StructureConfig', 'GridConfig', 'SolverConfig', 'GeometryCheckConfig', 'KKGeomConfig',
    'OscillatorConfig', 'DensityConfig', 'QuasimodeConfig', 'Task', 'SolverMethod', 'A0_PRESETS',
    'collect_violations', 'validate_experiment_spec'
]
