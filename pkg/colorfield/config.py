"""Runtime configuration: environment, config files, logging and seeds."""

import logging
import os
from typing import Any, Dict, Optional

import numpy as np
import yaml
from dotenv import load_dotenv

from colorfield.errors import UsageError

load_dotenv()

WORKERS_ENV = "COLORFIELD_WORKERS"
LOG_FILENAME = "colorfield.log"
LOG_FORMAT = '%(asctime)s - %(levelname)s - %(message)s'


def worker_count() -> int:
    """Number of worker processes for restarts, replicas and grid points."""
    raw = os.getenv(WORKERS_ENV)
    if not raw:
        return 1
    try:
        value = int(raw)
    except ValueError:
        logging.warning(f"{WORKERS_ENV}={raw!r} is not an integer; using 1 worker")
        return 1
    if value < 1:
        logging.warning(f"{WORKERS_ENV}={value} is below 1; using 1 worker")
        return 1
    return value


def load_config_file(path: str) -> Dict[str, Any]:
    """Read a YAML mapping of flag defaults.

    Keys may use dashes or underscores (`beta-tilde` or `beta_tilde`); they
    are normalized to argparse destinations.
    """
    if not os.path.exists(path):
        raise UsageError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise UsageError(f"config file {path} is not valid YAML: {e}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError(f"config file {path} must contain a key: value mapping")
    return {str(k).replace("-", "_"): v for k, v in data.items()}


def configure_logging(directory: Optional[str] = None, level: int = logging.WARNING) -> str:
    """Route the root logger to a file, as the interactive tools do."""
    directory = directory or os.getcwd()
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, LOG_FILENAME)
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    logging.basicConfig(filename=path, level=level, format=LOG_FORMAT)
    return path


def derive_seed(master: int, index: int) -> int:
    """Deterministic child seed for worker/restart/replica `index`."""
    return int(np.random.SeedSequence([int(master), int(index)]).generate_state(1)[0])


def fresh_seed() -> int:
    """A new 32-bit master seed from OS entropy."""
    return int(np.random.SeedSequence().entropy % (2 ** 32))
