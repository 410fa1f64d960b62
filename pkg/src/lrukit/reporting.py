"""Experiment outputs: CSV tables plus JSON summaries.

Every experiment emits two artifacts with a shared base name:

* ``<base>.csv`` — RFC-4180-style rows with a stable, documented header;
  downstream plotting parses only this file, never free text.
* ``<base>.json`` — summary with the fully resolved config (defaults
  included), the seed, and scalar metrics; enough to reproduce the run
  bit-identically in single-threaded mode.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

__all__ = ["ExperimentReport"]


def _pyify(value: Any) -> Any:
    """Convert numpy scalars/arrays into plain JSON-serializable Python."""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, dict):
        return {k: _pyify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_pyify(v) for v in value]
    return value


@dataclass
class ExperimentReport:
    """One experiment's outputs: tabular rows plus a scalar summary."""

    name: str
    config: dict[str, Any] = field(default_factory=dict)
    metrics: dict[str, Any] = field(default_factory=dict)
    rows: list[dict[str, Any]] = field(default_factory=list)
    seed: int | None = None
    columns: list[str] | None = None

    def header(self) -> list[str]:
        if self.columns is not None:
            return list(self.columns)
        return list(self.rows[0].keys()) if self.rows else []

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        header = self.header()
        with path.open("w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=header, extrasaction="ignore")
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: _pyify(v) for k, v in row.items()})
        return path

    def write_json(self, path: str | Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {
            "name": self.name,
            "seed": self.seed,
            "config": _pyify(self.config),
            "metrics": _pyify(self.metrics),
        }
        path.write_text(json.dumps(payload, indent=2) + "\n")
        return path
