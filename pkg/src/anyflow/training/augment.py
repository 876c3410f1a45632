"""Random input downsampling: the network sees smaller frames but predicts at full size."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..interp import resize


@dataclass
class AugmentedBatch:
    img1: np.ndarray  # (N x) 3 x h x w network input
    img2: np.ndarray
    flow: np.ndarray  # ground truth, untouched, original resolution
    scale: tuple[float, float]  # drawn (s_h, s_w); (1, 1) when not downsampled
    target: tuple[int, int]  # original (H, W)

    @property
    def input_size(self) -> tuple[int, int]:
        return self.img1.shape[-2], self.img1.shape[-1]


def scaled_size(size: int, s: float) -> int:
    """``s * size`` rounded to the nearest multiple of 8 (at least 8)."""
    return max(8, int(round(s * size / 8.0)) * 8)


def draw_scales(rng: np.random.Generator, scale_range=(0.5, 1.0)) -> tuple[float, float]:
    lo, hi = scale_range
    return float(rng.uniform(lo, hi)), float(rng.uniform(lo, hi))


def multi_scale_augment(img1: np.ndarray, img2: np.ndarray, flow: np.ndarray, p: float,
                        scale_range=(0.5, 1.0), rng: np.random.Generator | None = None,
                        scales: tuple[float, float] | None = None) -> AugmentedBatch:
    """With probability ``p`` bilinearly shrink both frames by independent per-axis factors.

    One draw applies to everything passed in (a whole batch shares a size).
    ``scales`` forces the factors and skips the coin flip.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    lo, hi = scale_range
    if not 0.0 < lo <= hi <= 1.0:
        raise ValueError(f"scale range must satisfy 0 < lo <= hi <= 1, got {scale_range}")
    img1, img2 = np.asarray(img1), np.asarray(img2)
    if img1.shape != img2.shape:
        raise ValueError(f"frames differ in shape: {img1.shape} vs {img2.shape}")
    h, w = img1.shape[-2:]
    if flow.shape[-2:] != (h, w):
        raise ValueError(f"flow {flow.shape} does not match frames {img1.shape}")
    if scales is None:
        rng = rng if rng is not None else np.random.default_rng()
        if p == 0.0 or rng.uniform() >= p:
            return AugmentedBatch(img1, img2, flow, (1.0, 1.0), (h, w))
        scales = draw_scales(rng, scale_range)
    size = (scaled_size(h, scales[0]), scaled_size(w, scales[1]))
    return AugmentedBatch(resize(img1, size, "bilinear"), resize(img2, size, "bilinear"), flow,
                          (float(scales[0]), float(scales[1])), (h, w))
