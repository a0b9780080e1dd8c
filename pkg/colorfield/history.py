import csv
import json
import os
from datetime import datetime
from typing import Any, Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from colorfield import __version__
from colorfield.errors import UsageError
from colorfield.field import ColoredState, write_state


class RunManifest(BaseModel):
    command: str
    flags: Dict[str, Any]
    seed: Optional[int] = None
    version: str = __version__
    timestamp: str
    outputs: List[str] = Field(default_factory=list)


def format_value(value: Any) -> str:
    """CSV cell text; floats carry 17 significant digits."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.17g}"
    return str(value)


class RunHistory:
    """One run directory `<base>/<command>-<timestamp>/` with data, states and a manifest."""

    def __init__(self, base_dir: str, command: str):
        self.base_dir = base_dir or "runs"
        self.command = command
        self.timestamp = datetime.now().strftime("%Y%m%d_%H%M%S")
        stem = os.path.join(self.base_dir, f"{command}-{self.timestamp}")
        path, suffix = stem, 0
        while os.path.exists(path):
            suffix += 1
            path = f"{stem}-{suffix}"
        self.run_dir = path
        os.makedirs(self.run_dir)
        self.outputs: List[str] = []

    def _track(self, path: str) -> str:
        self.outputs.append(os.path.relpath(path, self.run_dir))
        return path

    def write_csv(self, header: Sequence[str], rows: Sequence[Sequence[Any]],
                  filename: str = "data.csv") -> str:
        filepath = os.path.join(self.run_dir, filename)
        with open(filepath, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(v) for v in row])
        return self._track(filepath)

    def save_state(self, state: ColoredState, name: str) -> str:
        filepath = os.path.join(self.run_dir, "states", f"{name}.json")
        return self._track(write_state(state, filepath))

    def write_manifest(self, flags: Dict[str, Any], seed: Optional[int] = None) -> str:
        manifest = RunManifest(command=self.command, flags=flags, seed=seed,
                               timestamp=self.timestamp, outputs=list(self.outputs))
        filepath = os.path.join(self.run_dir, "manifest.json")
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(manifest.model_dump(), f, indent=2, ensure_ascii=False)
        return filepath


def load_manifest(path: str) -> RunManifest:
    if not os.path.exists(path):
        raise UsageError(f"manifest not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            return RunManifest.model_validate(json.load(f))
    except (json.JSONDecodeError, ValidationError) as e:
        raise UsageError(f"{path} is not a valid run manifest: {e}")
