"""Hashing and binary/JSON persistence helpers.

Binary convention (format version 1): complex arrays are stored as raw
little-endian float64, C order, with real and imaginary parts interleaved
per value, i.e. the memory layout of a C-contiguous complex128 array.
Every binary file is accompanied by a JSON metadata document that records
shapes and content hashes.
"""

from __future__ import annotations

import hashlib
import json
import os
from typing import Any

import numpy as np

FORMAT_VERSION = 1


def canonical_json(obj: Any) -> str:
    """Serialize to JSON with sorted keys and round-trip float formatting."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_encode)


def _encode(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    raise TypeError(f"not JSON-serializable: {type(obj)!r}")


def content_hash(obj: Any) -> str:
    """Short stable hash of a JSON-serializable description."""
    digest = hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()
    return digest[:16]


def write_complex_binary(path: str | os.PathLike, values: np.ndarray) -> None:
    """Write a complex array as interleaved little-endian float64 pairs."""
    data = np.ascontiguousarray(values, dtype=np.complex128)
    view = data.view(np.float64)
    if view.dtype.byteorder not in ("<", "="):  # pragma: no cover - LE hosts
        view = view.astype("<f8")
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(view.tobytes())
    os.replace(tmp, path)


def read_complex_binary(path: str | os.PathLike, shape: tuple[int, ...]) -> np.ndarray:
    expected = 2 * int(np.prod(shape))
    raw = np.fromfile(path, dtype="<f8")
    if raw.size != expected:
        raise ValueError(
            f"{path}: expected {expected} float64 values for shape {shape}, found {raw.size}"
        )
    return raw.view(np.complex128).reshape(shape)


def write_json(path: str | os.PathLike, obj: Any) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_encode)
        fh.write("\n")
    os.replace(tmp, path)


def read_json(path: str | os.PathLike) -> Any:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
