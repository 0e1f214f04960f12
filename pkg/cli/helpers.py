import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional

import typer
import yaml
from platformdirs import user_data_dir

OUTPUT_ENV = "AKSPEC_OUTPUT_DIR"
DATA_DIR = user_data_dir("akspec", "akspec")
LOG_FILE = "akspec.log"


def load_config(path: str) -> Dict[str, Any]:
    """Read an experiment description from YAML or JSON, exiting with status 1 if it cannot be read."""
    if not os.path.exists(path):
        typer.echo(f" Config file '{path}' not found", err=True)
        raise typer.Exit(1)
    try:
        with open(path) as f:
            if path.endswith(('.yml', '.yaml')):
                return yaml.safe_load(f)
            return json.load(f)
    except (yaml.YAMLError, json.JSONDecodeError) as e:
        typer.echo(f" Could not parse '{path}': {e}", err=True)
        raise typer.Exit(1)


def resolve_output_dir(name: str, out: Optional[str], configured: Optional[str]) -> Path:
    """--out, then $AKSPEC_OUTPUT_DIR, then the config's output_dir, then the per-user data directory."""
    if out:
        return Path(out)
    if os.getenv(OUTPUT_ENV):
        return Path(os.environ[OUTPUT_ENV]) / name
    if configured:
        return Path(configured)
    return Path(DATA_DIR) / "runs" / name


def setup_logging(level: str = "INFO", log_dir: Optional[Path] = None):
    """Log to stderr and, when log_dir is given, to <log_dir>/akspec.log."""
    handlers = [logging.StreamHandler()]
    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(log_dir / LOG_FILE))
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        handlers=handlers,
        force=True
    )
    logger = logging.getLogger(__name__)
    if log_dir is not None:
        logger.info(f"Logging to file: {log_dir / LOG_FILE}")
