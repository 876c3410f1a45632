"""End-point error, outlier rate and flow colorization."""

from __future__ import annotations

import numpy as np


def _norms(pred, gt, valid_mask):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    if pred.ndim < 3 or pred.shape[-3] != 2:
        raise ValueError(f"expected (..., 2, H, W) flow, got {pred.shape}")
    err = np.sqrt(((pred - gt) ** 2).sum(axis=-3))
    mag = np.sqrt((gt ** 2).sum(axis=-3))
    mask = np.ones(err.shape, dtype=bool) if valid_mask is None else np.broadcast_to(
        np.asarray(valid_mask, dtype=bool), err.shape)
    if not mask.any():
        raise ValueError("valid mask selects no pixels")
    return err[mask], mag[mask]


def epe(pred, gt, valid_mask=None) -> float:
    """Mean Euclidean distance between predicted and true flow vectors over valid pixels."""
    err, _ = _norms(pred, gt, valid_mask)
    return float(err.mean())


def f1_all(pred, gt, valid_mask=None) -> float:
    """Percent of valid pixels whose error exceeds both 3 px and 5% of the true magnitude."""
    err, mag = _norms(pred, gt, valid_mask)
    bad = (err > 3.0) & (err > 0.05 * mag)
    return float(100.0 * bad.mean())


def _color_wheel() -> np.ndarray:
    # Middlebury wheel: RY, YG, GC, CB, BM, MR segments
    segs = [(15, (255, 0, 0), (0, 1, 0)), (6, (255, 255, 0), (-1, 0, 0)), (4, (0, 255, 0), (0, 0, 1)),
            (11, (0, 255, 255), (0, -1, 0)), (13, (0, 0, 255), (1, 0, 0)), (6, (255, 0, 255), (0, 0, -1))]
    rows = []
    for n, start, step in segs:
        t = np.floor(255 * np.arange(n) / n)
        rows.append(np.array(start)[None, :] + np.array(step)[None, :] * t[:, None])
    return np.concatenate(rows).astype(np.float64)


_WHEEL = _color_wheel()


def wheel_position(u, v) -> np.ndarray:
    """Fractional index into the color wheel; opposite vectors sit half a turn apart."""
    ang = np.arctan2(-np.asarray(v, dtype=np.float64), -np.asarray(u, dtype=np.float64))
    return np.mod((ang / np.pi + 1) / 2 * len(_WHEEL), len(_WHEEL))


def colorize(flow, max_mag: float | None = None) -> np.ndarray:
    """2 x H x W flow -> H x W x 3 uint8 RGB; white at zero motion, saturated at ``max_mag``."""
    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise ValueError(f"expected 2 x H x W flow, got {flow.shape}")
    if not np.isfinite(flow).all():
        raise ValueError("flow contains non-finite values")
    u, v = flow
    mag = np.sqrt(u * u + v * v)
    if max_mag is None:
        max_mag = float(mag.max())
    rad = np.clip(mag / max_mag, 0.0, 1.0) if max_mag > 0 else np.zeros_like(mag)
    ncols = len(_WHEEL)
    fk = wheel_position(u, v)
    k0 = np.floor(fk).astype(np.int64) % ncols
    k1 = (k0 + 1) % ncols
    f = (fk - k0)[..., None]
    col = ((1 - f) * _WHEEL[k0] + f * _WHEEL[k1]) / 255.0
    col = 1 - rad[..., None] * (1 - col)
    return np.floor(255 * col + 0.5).clip(0, 255).astype(np.uint8)
