"""All-pairs correlation pyramid and the fixed, dynamic and region-encoded lookups."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .autodiff import Linear, Module, Tensor, ops

LOOKUP_MODES = ("fixed", "dynamic", "region")


@dataclass
class CorrPyramid:
    levels: list[Tensor]  # level l: (N*h*w) x 1 x h_l x w_l
    dim: int
    batch: int
    height: int
    width: int


@dataclass(frozen=True)
class LookupConfig:
    mode: str = "dynamic"
    r0: float = 4.0
    levels: int = 4
    r_min: float = 1.0
    r_max: float = 16.0

    def __post_init__(self):
        if self.mode not in LOOKUP_MODES:
            raise ValueError(f"unknown lookup mode {self.mode!r}; choose from {LOOKUP_MODES}")
        if self.r0 < 1 or self.r0 != int(self.r0):
            raise ValueError(f"r0 must be a positive integer, got {self.r0}")

    @property
    def points_per_side(self) -> int:
        return 2 * int(self.r0) + 1

    @property
    def channels(self) -> int:
        return self.levels * self.points_per_side ** 2


def build_corr_pyramid(f1: Tensor, f2: Tensor, levels: int) -> CorrPyramid:
    """Inner products of every feature pair scaled by 1/sqrt(D), plus pooled levels.

    Odd-sized levels pool in ceil mode so small inputs keep ``levels`` levels.
    """
    if f1.shape != f2.shape:
        raise ValueError(f"feature maps differ in shape: {f1.shape} vs {f2.shape}")
    if levels < 1:
        raise ValueError("need at least one pyramid level")
    n, d, h, w = f1.shape
    a = ops.transpose(ops.reshape(f1, (n, d, h * w)), (0, 2, 1))
    b = ops.reshape(f2, (n, d, h * w))
    corr = ops.mul(ops.matmul(a, b), 1.0 / np.sqrt(d))
    vol = ops.reshape(corr, (n * h * w, 1, h, w))
    out = [vol]
    for _ in range(levels - 1):
        vol = ops.avg_pool2d(vol, ceil_mode=True)
        out.append(vol)
    return CorrPyramid(out, d, n, h, w)


@lru_cache(maxsize=None)
def grid_offsets(r: int) -> np.ndarray:
    """(2r+1)^2 x 2 integer (dx, dy) offsets, row-major in dy."""
    k = np.arange(-r, r + 1, dtype=np.float64)
    dy, dx = np.meshgrid(k, k, indexing="ij")
    return np.stack([dx.ravel(), dy.ravel()], axis=1)


@lru_cache(maxsize=None)
def region_offsets(r0: int) -> np.ndarray:
    """Primary offsets expanded by a 3x3 auxiliary patch at half the primary spacing.

    Shape K x 9 x 2 in units of the primary spacing.
    """
    aux = grid_offsets(1) * 0.5
    return grid_offsets(r0)[:, None, :] + aux[None, :, :]


def sample_offsets(mode: str, r: float, r0: int) -> np.ndarray:
    """Pixel offsets, in level coordinates, of every point sampled around one center."""
    if mode == "fixed":
        return grid_offsets(r0).copy()
    spacing = r / r0
    if mode == "dynamic":
        return grid_offsets(r0) * spacing
    return (region_offsets(r0) * spacing).reshape(-1, 2)


def _centers(pyr: CorrPyramid, flow: Tensor) -> Tensor:
    """Per-pixel match location x + f(x) on the level-0 grid, as (N*h*w) x 1 x 2."""
    n, h, w = pyr.batch, pyr.height, pyr.width
    if flow.shape != (n, 2, h, w):
        raise ValueError(f"flow {flow.shape} does not match correlation grid {(n, 2, h, w)}")
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    base = np.stack([xs, ys])[None].repeat(n, axis=0)
    coords = ops.add(flow, base)
    return ops.reshape(ops.transpose(coords, (0, 2, 3, 1)), (n * h * w, 1, 2))


def _expand(x: Tensor, k: int, axis: int) -> Tensor:
    return ops.index_select(x, np.zeros(k, dtype=np.int64), axis=axis)


def _to_channels(samples: Tensor, pyr: CorrPyramid, k: int) -> Tensor:
    n, h, w = pyr.batch, pyr.height, pyr.width
    return ops.transpose(ops.reshape(samples, (n, h, w, k)), (0, 3, 1, 2))


def lookup_fixed(pyr: CorrPyramid, flow: Tensor, r: int) -> Tensor:
    """Bilinear samples on the integer-offset grid of radius ``r`` at every level.

    Returns N x (L (2r+1)^2) x h x w, level-major.
    """
    if r < 1 or r != int(r):
        raise ValueError(f"fixed lookup radius must be a positive integer, got {r}")
    offs = grid_offsets(int(r))
    k = len(offs)
    centers = _expand(_centers(pyr, flow), k, axis=1)
    feats = []
    for lvl, vol in enumerate(pyr.levels):
        coords = ops.add(ops.mul(centers, 1.0 / 2 ** lvl), offs)
        feats.append(_to_channels(ops.grid_sample_bilinear(vol, coords), pyr, k))
    return ops.concat(feats, axis=1)


def _radius_rows(r_field: Tensor, pyr: CorrPyramid) -> Tensor:
    n, h, w = pyr.batch, pyr.height, pyr.width
    if r_field.shape != (n, 1, h, w):
        raise ValueError(f"radius field {r_field.shape} does not match {(n, 1, h, w)}")
    return ops.reshape(r_field, (n * h * w, 1, 1))


def lookup_dynamic(pyr: CorrPyramid, flow: Tensor, r_field: Tensor, r0: int) -> Tensor:
    """Same (2r0+1)^2 points as the fixed lookup, spaced r(x)/r0 apart per pixel."""
    offs = grid_offsets(int(r0)) / r0
    k = len(offs)
    centers = _expand(_centers(pyr, flow), k, axis=1)
    radius = _expand(_expand(_radius_rows(r_field, pyr), k, axis=1), 2, axis=2)
    spread = ops.mul(radius, offs)
    feats = []
    for lvl, vol in enumerate(pyr.levels):
        coords = ops.add(ops.mul(centers, 1.0 / 2 ** lvl), spread)
        feats.append(_to_channels(ops.grid_sample_bilinear(vol, coords), pyr, k))
    return ops.concat(feats, axis=1)


class RegionEncoder(Module):
    """g_phi: maps a 3x3 auxiliary patch of correlation values plus the radius to one value."""

    def __init__(self, rng: np.random.Generator, hidden: int = 16):
        self.fc1 = Linear(rng, 10, hidden)
        self.fc2 = Linear(rng, hidden, 1)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ops.relu(self.fc1(x)))

    def make_center_selector(self) -> None:
        """Set weights so the output is exactly the patch center, ignoring the radius."""
        for p in self.parameters():
            p.data[:] = 0
        self.fc1.weight.data[0, 4] = 1.0
        self.fc1.weight.data[1, 4] = -1.0
        self.fc2.weight.data[0, 0] = 1.0
        self.fc2.weight.data[0, 1] = -1.0


def lookup_region_encoded(pyr: CorrPyramid, flow: Tensor, r_field: Tensor, r0: int,
                          g_phi: RegionEncoder) -> Tensor:
    """Dynamic lookup where each point is summarized from its 3x3 auxiliary patch by ``g_phi``.

    Output channel count equals the fixed lookup's.
    """
    offs = region_offsets(int(r0)).reshape(-1, 2) / r0
    k = (2 * int(r0) + 1) ** 2
    m = len(offs)
    rows = pyr.batch * pyr.height * pyr.width
    centers = _expand(_centers(pyr, flow), m, axis=1)
    r_rows = _radius_rows(r_field, pyr)
    radius = _expand(_expand(r_rows, m, axis=1), 2, axis=2)
    spread = ops.mul(radius, offs)
    r_feat = _expand(r_rows, k, axis=1)
    feats = []
    for lvl, vol in enumerate(pyr.levels):
        coords = ops.add(ops.mul(centers, 1.0 / 2 ** lvl), spread)
        patches = ops.reshape(ops.grid_sample_bilinear(vol, coords), (rows, k, 9))
        enc = g_phi(ops.concat([patches, r_feat], axis=2))
        feats.append(_to_channels(enc, pyr, k))
    return ops.concat(feats, axis=1)


def update_radius(delta_r: Tensor, r_prev: Tensor, r_min: float = 1.0, r_max: float = 16.0) -> Tensor:
    """Accumulate the residual radius and clamp to [r_min, r_max]."""
    if delta_r.shape != r_prev.shape:
        raise ValueError(f"radius update {delta_r.shape} does not match field {r_prev.shape}")
    return ops.clamp(ops.add(r_prev, delta_r), r_min, r_max)


def lookup(pyr: CorrPyramid, flow: Tensor, r_field: Tensor, cfg: LookupConfig,
           g_phi: RegionEncoder | None = None) -> Tensor:
    if cfg.mode == "fixed":
        return lookup_fixed(pyr, flow, int(cfg.r0))
    if cfg.mode == "dynamic":
        return lookup_dynamic(pyr, flow, r_field, int(cfg.r0))
    if g_phi is None:
        raise ValueError("region lookup needs a RegionEncoder")
    return lookup_region_encoded(pyr, flow, r_field, int(cfg.r0), g_phi)
