"""
Report models and artifact writers: fixed-format CSV tables, JSON reports and a gnuplot script.
"""

import csv
import hashlib
import json
import logging
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, validator

from experiment_spec import ExperimentConfig

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.12e"

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILED = 2
EXIT_FLAGGED = 3


class TaskStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    FLAGGED = "flagged"


class TaskResult(BaseModel):
    """Outcome of one experiment task."""
    name: str
    status: TaskStatus
    message: str = ""
    criteria: Dict[str, bool] = Field(default_factory=dict)
    details: Dict[str, Any] = Field(default_factory=dict)
    seconds: float = 0.0

    @validator('criteria', pre=True)
    def plain_booleans(cls, v):
        return {name: bool(ok) for name, ok in v.items()}


class RunReport(BaseModel):
    """Summary of one experiment run."""
    name: str
    config_hash: str
    version: str
    seed: int
    wall_time: float
    tasks: List[TaskResult] = Field(default_factory=list)
    artifacts: List[str] = Field(default_factory=list)

    @property
    def exit_code(self) -> int:
        statuses = {t.status for t in self.tasks}
        if TaskStatus.FAIL in statuses:
            return EXIT_FAILED
        if TaskStatus.FLAGGED in statuses:
            return EXIT_FLAGGED
        return EXIT_OK


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON dump of the validated config, output_dir excluded."""
    payload = json.dumps(config.model_dump(mode="json", exclude={"output_dir"}), sort_keys=True,
                         separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def _cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FORMAT % float(value)
    return str(value)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
    """Write a CSV table with every float in FLOAT_FORMAT."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    logger.debug(f"Wrote {len(rows)} rows to {path}")
    return path


def _jsonable(value: Any):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Enum):
        return value.value
    return str(value)


def write_json(path: Path, data: Any) -> Path:
    path = Path(path)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True, default=_jsonable)
        f.write("\n")
    return path


PLOT_BLOCKS = {
    "spectrum.csv": [
        "set title 'Low-lying spectrum of the shifted Laplacian'",
        "set xlabel 'k'", "set ylabel 'lambda'",
        "plot 'spectrum.csv' using 1:4 with points pt 7 ps 0.5 title 'eigenvalues'",
    ],
    "clusters.csv": [
        "set title 'Cluster size'",
        "set logscale xy", "set xlabel 'k'", "set ylabel 'n_k'",
        "plot 'clusters.csv' using 1:2 with linespoints title 'observed', "
        "'' using 1:3 with lines title 'Riemann-Roch'",
        "unset logscale",
    ],
    "density.csv": [
        "set title 'Density moment deltas'",
        "set logscale y", "set xlabel 'k'", "set ylabel 'delta'",
        "plot 'density.csv' using 1:5 with points title 'delta_f'",
        "unset logscale",
    ],
    "rayleigh.csv": [
        "set title 'Rayleigh quotients of coherent states'",
        "set xlabel 'q(x0)'", "set ylabel 'r_k'",
        "plot 'rayleigh.csv' using 3:4 with points title 'r_k', x title 'r = q'",
    ],
    "localization.csv": [
        "set title 'Localization moments'",
        "set logscale xy", "set xlabel 'kappa'", "set ylabel '<psi, phi_m psi>'",
        "plot 'localization.csv' using 4:(abs($5)) with points title 'moments'",
        "unset logscale",
    ],
}


def write_plot_script(path: Path, tables: Sequence[str]) -> Optional[Path]:
    """gnuplot script over the CSV tables present in the run directory."""
    present = [t for t in tables if t in PLOT_BLOCKS]
    if not present:
        return None
    lines = ["set datafile separator ','", "set key autotitle columnhead", "set terminal pngcairo size 900,600"]
    for table in present:
        lines.append(f"set output '{Path(table).stem}.png'")
        lines.extend(PLOT_BLOCKS[table])
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path
