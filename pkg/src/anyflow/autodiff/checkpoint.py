"""AFCK parameter files: a flat little-endian container of named float32 arrays.

Layout::

    b"AFCK" | u32 count | count x (u16 name_len | name utf-8 | u8 rank | u32 dims[rank] | f32 payload)
"""

from __future__ import annotations

import os
import struct

import numpy as np

MAGIC = b"AFCK"


class CheckpointError(ValueError):
    pass


def save_arrays(path: str | os.PathLike, arrays: dict[str, np.ndarray]) -> None:
    parts = [MAGIC, struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        raw = name.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise CheckpointError(f"name too long: {name[:40]}...")
        if arr.ndim > 0xFF:
            raise CheckpointError(f"{name}: rank {arr.ndim} exceeds 255")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_arrays(path: str | os.PathLike) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        buf = fh.read()

    pos = 0

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"truncated checkpoint at byte {pos}: need {n} more bytes, file has {len(buf)}")
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise CheckpointError("bad checkpoint magic at byte 0 (expected b'AFCK')")
    (count,) = struct.unpack("<I", take(4))
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2))
        name = take(nlen).decode("utf-8")
        (rank,) = struct.unpack("<B", take(1))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(dims)) if rank else 1
        out[name] = np.frombuffer(take(4 * n), dtype="<f4").reshape(dims).astype(np.float32)
    if pos != len(buf):
        raise CheckpointError(f"trailing data after byte {pos}")
    return out
