"""
Config-driven experiment execution and report writing.
"""

from .experiment import ExperimentRunner, quasimode_criteria
from .reports import (
    RunReport, TaskResult, TaskStatus, config_hash, write_csv, write_json, write_plot_script,
    EXIT_OK, EXIT_INVALID, EXIT_FAILED, EXIT_FLAGGED
)

__all__ = [
    'ExperimentRunner', 'quasimode_criteria', 'RunReport', 'TaskResult', 'TaskStatus', 'config_hash',
    'write_csv', 'write_json',
    'write_plot_script', 'EXIT_OK', 'EXIT_INVALID', 'EXIT_FAILED', 'EXIT_FLAGGED'
]
