"""Binary tensor checkpoints.

Layout (little endian)::

    b"ASTR" | u32 version | u32 count
    per tensor: u16 name_len | utf-8 name | u8 rank | u64 dims[rank] | f64 payload (row-major)
"""
from __future__ import annotations

import math
import os
import struct
from pathlib import Path

import numpy as np

MAGIC = b"ASTR"
VERSION = 1


class CheckpointError(ValueError):
    pass


def encode(tensors: dict) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise CheckpointError(f"tensor name too long: {name[:40]}...")
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim > 255:
            raise CheckpointError(f"tensor {name!r} has rank {a.ndim} > 255")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}Q", *a.shape))
        parts.append(np.ascontiguousarray(a).astype("<f8").tobytes())
    return b"".join(parts)


def decode(buf: bytes) -> dict:
    mv = memoryview(buf)
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(mv):
            raise CheckpointError(f"truncated checkpoint at byte {pos} (need {n} more)")
        chunk = mv[pos : pos + n]
        pos += n
        return chunk

    if bytes(take(4)) != MAGIC:
        raise CheckpointError("bad magic: not an ASTR checkpoint")
    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version} (expected {VERSION})")
    out = {}
    for _ in range(count):
        (n,) = struct.unpack("<H", take(2))
        try:
            name = bytes(take(n)).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"bad tensor name: {exc}") from None
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}Q", take(8 * rank))
        size = math.prod(dims)
        if size > (len(mv) - pos) // 8:
            raise CheckpointError(f"truncated payload for tensor {name!r}")
        data = np.frombuffer(take(8 * size), dtype="<f8").astype(np.float64)
        out[name] = data.reshape(dims)
    if pos != len(mv):
        raise CheckpointError(f"{len(mv) - pos} trailing bytes after last tensor")
    return out


def checkpoint_write(path, tensors: dict):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(tensors))
    os.replace(tmp, path)


def checkpoint_read(path) -> dict:
    return decode(Path(path).read_bytes())
