"""Separable bilinear and bicubic resampling with half-pixel centers (no antialiasing)."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

METHODS = ("bilinear", "bicubic")


def _cubic(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    t = np.abs(t)
    near = ((a + 2) * t - (a + 3)) * t * t + 1
    far = ((a * t - 5 * a) * t + 8 * a) * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


@lru_cache(maxsize=128)
def resize_matrix(n_in: int, n_out: int, method: str) -> np.ndarray:
    """n_out x n_in interpolation matrix along one axis; taps past the edge are clamped."""
    if method not in METHODS:
        raise ValueError(f"unknown interpolation {method!r}; choose from {METHODS}")
    if n_in < 1 or n_out < 1:
        raise ValueError(f"sizes must be positive, got {n_in} -> {n_out}")
    src = (np.arange(n_out) + 0.5) * n_in / n_out - 0.5
    m = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    if method == "bilinear":
        src = np.clip(src, 0, n_in - 1)
        i0 = np.floor(src).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_in - 1)
        t = src - i0
        np.add.at(m, (rows, i0), 1 - t)
        np.add.at(m, (rows, i1), t)
    else:
        base = np.floor(src).astype(np.int64)
        for k in range(-1, 3):
            idx = base + k
            np.add.at(m, (rows, np.clip(idx, 0, n_in - 1)), _cubic(src - idx))
    m.setflags(write=False)
    return m


def resize(arr: np.ndarray, size: tuple[int, int], method: str = "bilinear") -> np.ndarray:
    """Resize the last two axes of ``arr`` to ``size`` = (H, W)."""
    arr = np.asarray(arr)
    h, w = arr.shape[-2:]
    ho, wo = int(size[0]), int(size[1])
    if (ho, wo) == (h, w):
        return arr.copy()
    ry = resize_matrix(h, ho, method)
    rx = resize_matrix(w, wo, method)
    out = np.einsum("ij,...jk,lk->...il", ry, arr.astype(np.float64), rx, optimize=True)
    return out.astype(arr.dtype if arr.dtype.kind == "f" else np.float64)


def resize_flow_interp(flow: np.ndarray, target: tuple[int, int], method: str = "bicubic") -> np.ndarray:
    """Interpolate a (..., 2, H, W) flow to ``target`` and rescale u by Wo/W, v by Ho/H."""
    flow = np.asarray(flow)
    if flow.ndim < 3 or flow.shape[-3] != 2:
        raise ValueError(f"expected (..., 2, H, W) flow, got {flow.shape}")
    h, w = flow.shape[-2:]
    ho, wo = int(target[0]), int(target[1])
    out = resize(flow, (ho, wo), method)
    out[..., 0, :, :] *= wo / w
    out[..., 1, :, :] *= ho / h
    return out
