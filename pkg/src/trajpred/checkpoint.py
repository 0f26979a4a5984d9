"""Flat binary container for named parameter arrays.

Layout (little-endian):

    magic  b"TJCK"
    u32    format version (currently 1)
    u32    metadata length, followed by that many bytes of UTF-8 JSON
    u32    array count
    per array:
        u16  name length, name bytes
        u8   dtype length, dtype string (numpy descr, e.g. "<f8")
        u32  rows, u32 cols
        raw row-major data bytes

Writes are deterministic given identical inputs, so equal checkpoints are
bit-identical files. Round-trips are exact.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"TJCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    meta = dict(meta or {})
    meta["format_version"] = FORMAT_VERSION
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            if arr.ndim != 2:
                raise CheckpointError(f"array {name!r} is not 2-D (shape {arr.shape})")
            name_b = name.encode("utf-8")
            dtype_b = arr.dtype.str.encode("ascii")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", len(dtype_b)))
            fh.write(dtype_b)
            fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise CheckpointError(f"{path}: unsupported format version {version}")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        (count,) = struct.unpack("<I", fh.read(4))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (dtype_len,) = struct.unpack("<B", fh.read(1))
            dtype = np.dtype(fh.read(dtype_len).decode("ascii"))
            rows, cols = struct.unpack("<II", fh.read(8))
            raw = fh.read(rows * cols * dtype.itemsize)
            if len(raw) != rows * cols * dtype.itemsize:
                raise CheckpointError(f"{path}: truncated data for array {name!r}")
            arrays[name] = np.frombuffer(raw, dtype=dtype).reshape(rows, cols).copy()
    return arrays, meta
