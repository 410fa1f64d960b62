"""Run configuration: JSON document + dotted-path overrides → typed config.

A run configuration has exactly these top-level sections:

* ``model`` — deep-model hyper-parameters (``ModelConfig`` fields, except
  ``ring`` which always comes from the top-level section);
* ``ring`` — eigenvalue ring (``RingConfig`` fields);
* ``optim`` — optimizer/schedule (``OptimConfig`` fields);
* ``task`` — ``{"name": ..., "params": {...}}`` free-form per subcommand;
* ``seed`` — integer master seed;
* ``output_dir`` — artifact directory.

Precedence: command-line overrides > config file > built-in defaults.
Unknown keys at any validated level are rejected before any computation,
and the fully resolved document (defaults included) is what gets echoed
into JSON summaries so a run can be reproduced from its artifacts alone.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .initializers import RingConfig
from .model import ModelConfig
from .training import OptimConfig

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_override_value",
    "build_config",
    "load_config_file",
]


class ConfigError(ValueError):
    """Invalid run configuration (schema violation, unknown key, bad value)."""


_MODEL_DEFAULTS: dict[str, Any] = {
    "depth": 2,
    "width": 8,
    "state_dim": 8,
    "in_features": 4,
    "out_features": 4,
    "dropout": 0.0,
    "pooling": "mean",
    "glu_variant": False,
    "b_scale": 2.0,
}

_TOP_LEVEL_KEYS = ("model", "ring", "optim", "task", "seed", "output_dir")


def _defaults() -> dict[str, Any]:
    return {
        "model": dict(_MODEL_DEFAULTS),
        "ring": RingConfig().to_dict(),
        "optim": OptimConfig(base_lr=1e-3, total_steps=1000).to_dict(),
        "task": {"name": None, "params": {}},
        "seed": 0,
        "output_dir": "runs",
    }


@dataclass(frozen=True)
class RunConfig:
    """Validated, fully-resolved run configuration."""

    model: ModelConfig
    ring: RingConfig
    optim: OptimConfig
    task_name: str | None
    task_params: dict[str, Any]
    seed: int
    output_dir: str
    resolved: dict[str, Any] = field(repr=False)

    def echo(self) -> dict[str, Any]:
        """The full configuration document, defaults included."""
        return copy.deepcopy(self.resolved)


def parse_override_value(text: str) -> Any:
    """Interpret an override's string value: JSON if it parses, raw string
    otherwise (so ``0.99`` → float, ``true`` → bool, ``mean`` → str)."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _apply_override(doc: dict[str, Any], dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    if not all(parts):
        raise ConfigError(f"malformed override path {dotted!r}")
    node = doc
    for part in parts[:-1]:
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown config path {dotted!r}")
        node = node[part]
    leaf = parts[-1]
    if not isinstance(node, dict):
        raise ConfigError(f"unknown config path {dotted!r}")
    # task.params is free-form (validated by the subcommand); everywhere else
    # an override must name an existing key.
    if leaf not in node and parts[:2] != ["task", "params"]:
        raise ConfigError(f"unknown config key {dotted!r}")
    node[leaf] = value


def _merge_section(
    base: dict[str, Any], incoming: Any, section: str
) -> None:
    if not isinstance(incoming, dict):
        raise ConfigError(f"section {section!r} must be an object")
    for key, value in incoming.items():
        if section == "task" and key == "params":
            if not isinstance(value, dict):
                raise ConfigError("task.params must be an object")
            base["params"].update(value)
            continue
        if key not in base:
            raise ConfigError(f"unknown config key {section}.{key}")
        base[key] = value


def build_config(
    file_data: dict[str, Any] | None = None,
    overrides: dict[str, Any] | None = None,
) -> RunConfig:
    """Merge defaults ← file ← overrides, validate, and type the result."""
    doc = _defaults()
    if file_data is not None:
        if not isinstance(file_data, dict):
            raise ConfigError("config file must contain a JSON object")
        unknown = set(file_data) - set(_TOP_LEVEL_KEYS)
        if unknown:
            raise ConfigError(
                f"unknown config section(s): {', '.join(sorted(unknown))}"
            )
        for section in ("model", "ring", "optim", "task"):
            if section in file_data:
                _merge_section(doc[section], file_data[section], section)
        for scalar in ("seed", "output_dir"):
            if scalar in file_data:
                doc[scalar] = file_data[scalar]
    for dotted, value in (overrides or {}).items():
        _apply_override(doc, dotted, value)

    if "ring" in doc["model"]:
        raise ConfigError(
            "model.ring is not accepted: the top-level ring section is the "
            "single source of eigenvalue-ring settings"
        )
    try:
        ring = RingConfig(**doc["ring"])
    except TypeError as exc:
        raise ConfigError(f"invalid ring section: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"invalid ring section: {exc}") from None
    try:
        model = ModelConfig(ring=ring, **doc["model"])
    except TypeError as exc:
        raise ConfigError(f"invalid model section: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"invalid model section: {exc}") from None
    try:
        optim = OptimConfig.from_dict(doc["optim"])
    except TypeError as exc:
        raise ConfigError(f"invalid optim section: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"invalid optim section: {exc}") from None

    seed = doc["seed"]
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    output_dir = doc["output_dir"]
    if not isinstance(output_dir, str) or not output_dir:
        raise ConfigError("output_dir must be a non-empty string")
    task = doc["task"]
    if task["name"] is not None and not isinstance(task["name"], str):
        raise ConfigError("task.name must be a string")

    resolved = copy.deepcopy(doc)
    return RunConfig(
        model=model,
        ring=ring,
        optim=optim,
        task_name=task["name"],
        task_params=dict(task["params"]),
        seed=seed,
        output_dir=output_dir,
        resolved=resolved,
    )


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Read a JSON config document, raising ConfigError on problems."""
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {p} is not valid JSON: {exc}") from None
    return data
