"""Middlebury ``.flo`` files and 8-bit image I/O."""

from __future__ import annotations

import os
import struct

import numpy as np

FLO_MAGIC = 202021.25


class FlowFormatError(ValueError):
    pass


def write_flo(path: str | os.PathLike, flow: np.ndarray) -> None:
    """Write an H x W x 2 (or 2 x H x W) flow field."""
    flow = np.asarray(flow)
    if flow.ndim == 3 and flow.shape[0] == 2 and flow.shape[2] != 2:
        flow = flow.transpose(1, 2, 0)
    if flow.ndim != 3 or flow.shape[2] != 2:
        raise ValueError(f"expected H x W x 2 flow, got {flow.shape}")
    if not np.isfinite(flow).all():
        raise ValueError("flow contains non-finite values")
    h, w = flow.shape[:2]
    with open(path, "wb") as fh:
        fh.write(struct.pack("<fii", FLO_MAGIC, w, h))
        fh.write(np.ascontiguousarray(flow, dtype="<f4").tobytes())


def read_flo(path: str | os.PathLike) -> np.ndarray:
    """Read a ``.flo`` file into an H x W x 2 float32 array."""
    with open(path, "rb") as fh:
        buf = fh.read()
    if len(buf) < 12:
        raise FlowFormatError(f"truncated header: file has {len(buf)} bytes, header needs 12 (offset {len(buf)})")
    magic, w, h = struct.unpack("<fii", buf[:12])
    if magic != np.float32(FLO_MAGIC):
        raise FlowFormatError(f"bad magic {magic!r} at byte offset 0 (expected {FLO_MAGIC})")
    if w < 0 or h < 0:
        raise FlowFormatError(f"negative size {w}x{h} at byte offset 4")
    need = 12 + 8 * w * h
    if len(buf) < need:
        raise FlowFormatError(f"truncated payload at byte offset {len(buf)}: expected {need} bytes")
    if len(buf) > need:
        raise FlowFormatError(f"unexpected trailing data at byte offset {need}")
    return np.frombuffer(buf, dtype="<f4", offset=12).reshape(h, w, 2).astype(np.float32)


def read_image(path: str | os.PathLike) -> np.ndarray:
    """Load an RGB image (PNG, PPM, ...) as float32 3 x H x W in [0, 1]."""
    from PIL import Image

    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float32) / 255.0
    return arr.transpose(2, 0, 1)


def write_image(path: str | os.PathLike, rgb: np.ndarray) -> None:
    """Save H x W x 3 uint8 (or 3 x H x W float in [0, 1]) as PNG/PPM by extension."""
    from PIL import Image

    arr = np.asarray(rgb)
    if arr.dtype != np.uint8:
        if arr.ndim == 3 and arr.shape[0] == 3:
            arr = arr.transpose(1, 2, 0)
        arr = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)
