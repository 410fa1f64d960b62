"""Flat binary parameter checkpoints with a JSON shape manifest.

Format: ``<base>.bin`` holds every tensor's float64 values concatenated in
manifest order, little-endian, C (row-major) layout.  ``<base>.json`` is

    {
      "format": "float64-le",
      "total_elements": <int>,
      "tensors": [{"name": ..., "shape": [...], "offset": <elements>}, ...]
    }

Offsets are in elements, not bytes.  Round-trips are bit-exact.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

__all__ = ["save_params", "load_params"]

_FORMAT = "float64-le"
_DTYPE = np.dtype("<f8")


def _paths(base: str | Path) -> tuple[Path, Path]:
    base = Path(base)
    if base.suffix in (".bin", ".json"):
        base = base.with_suffix("")
    return base.with_suffix(".bin"), base.with_suffix(".json")


def save_params(params: dict[str, np.ndarray], base: str | Path) -> tuple[Path, Path]:
    """Write ``<base>.bin`` + ``<base>.json``; returns the two paths."""
    bin_path, manifest_path = _paths(base)
    tensors = []
    chunks = []
    offset = 0
    for name in sorted(params):
        arr = np.asarray(params[name], dtype=np.float64)
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(
            np.ascontiguousarray(arr).reshape(-1).astype(_DTYPE, copy=False)
        )
        offset += arr.size
    manifest = {"format": _FORMAT, "total_elements": offset, "tensors": tensors}
    flat = np.concatenate(chunks) if chunks else np.empty(0, dtype=_DTYPE)
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    flat.tofile(bin_path)
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return bin_path, manifest_path


def load_params(base: str | Path) -> dict[str, np.ndarray]:
    """Read a checkpoint written by ``save_params``."""
    bin_path, manifest_path = _paths(base)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != _FORMAT:
        raise ValueError(
            f"unsupported checkpoint format {manifest.get('format')!r}; "
            f"expected {_FORMAT!r}"
        )
    flat = np.fromfile(bin_path, dtype=_DTYPE)
    if flat.size != manifest["total_elements"]:
        raise ValueError(
            f"checkpoint size mismatch: manifest says {manifest['total_elements']} "
            f"elements, file holds {flat.size}"
        )
    out: dict[str, np.ndarray] = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        size = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        if start + size > flat.size:
            raise ValueError(f"tensor {entry['name']!r} overruns the binary file")
        out[entry["name"]] = (
            flat[start : start + size].astype(np.float64).reshape(shape)
        )
    return out
