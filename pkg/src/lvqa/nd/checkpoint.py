"""Flat binary serialization of named parameter arrays.

Layout: magic ``NDCP``, u32 version, u32 count, then per parameter
u32 name length, UTF-8 name, u32 rank, u32 dims, and the values as
little-endian 64-bit floats.  All integers little-endian.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor

MAGIC = b"NDCP"
VERSION = 1


def save_params(path, params: dict) -> None:
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, len(params)))
        for name, value in params.items():
            arr = np.ascontiguousarray(
                value.data if isinstance(value, Tensor) else value, dtype="<f8")
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            if arr.ndim:
                f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_params(path) -> dict[str, np.ndarray]:
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != MAGIC:
        raise ConfigError(f"{path} is not a parameter checkpoint")
    version, count = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise ConfigError(f"unsupported checkpoint version {version}")
    at = 12
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", blob, at)
        at += 4
        name = blob[at:at + name_len].decode("utf-8")
        at += name_len
        (rank,) = struct.unpack_from("<I", blob, at)
        at += 4
        dims = struct.unpack_from(f"<{rank}I", blob, at) if rank else ()
        at += 4 * rank
        n = int(np.prod(dims, dtype=np.int64)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f8", count=n, offset=at).reshape(dims)
        at += 8 * n
        out[name] = arr.astype(np.float64)
    if at != len(blob):
        raise ConfigError(f"{path} has {len(blob) - at} trailing bytes")
    return out
