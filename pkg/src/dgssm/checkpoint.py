"""Versioned binary container for named float arrays plus a JSON meta block.

Layout (all integers little-endian):

    magic        8 bytes   b"DGSSMCKP"
    version      uint32
    meta_len     uint32    followed by meta_len bytes of UTF-8 JSON
    count        uint32    number of arrays
    name table   per array: uint16 name length + UTF-8 name bytes
    shape table  per array: uint8 ndim + ndim * uint32 dims
    payload      contiguous float64 array data, in table order

The meta block carries the model configuration and anything else the caller
wants to round-trip (task, feature dimension, dtype tag). Optimizer state is
stored as ordinary arrays under an ``opt.`` name prefix.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"DGSSMCKP"
VERSION = 1


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    meta_bytes = json.dumps(meta).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(arrays)))
        for name in arrays:
            nb = name.encode("utf-8")
            if len(nb) > 0xFFFF:
                raise ValueError(f"array name too long: {name[:40]}...")
            fh.write(struct.pack("<H", len(nb)))
            fh.write(nb)
        for name, arr in arrays.items():
            shape = np.asarray(arr).shape
            if len(shape) > 0xFF:
                raise ValueError(f"too many dimensions for {name!r}")
            fh.write(struct.pack("<B", len(shape)))
            for dim in shape:
                fh.write(struct.pack("<I", dim))
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_arrays(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        if fh.read(8) != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        (count,) = struct.unpack("<I", fh.read(4))
        names = []
        for _ in range(count):
            (nlen,) = struct.unpack("<H", fh.read(2))
            names.append(fh.read(nlen).decode("utf-8"))
        shapes = []
        for _ in range(count):
            (ndim,) = struct.unpack("<B", fh.read(1))
            shapes.append(tuple(struct.unpack("<I", fh.read(4))[0] for _ in range(ndim)))
        arrays: dict[str, np.ndarray] = {}
        for name, shape in zip(names, shapes):
            n = int(np.prod(shape)) if shape else 1
            buf = fh.read(8 * n)
            arrays[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
    return arrays, meta
