"""Implicit flow upsampler: coordinate-conditioned convex masks at any output size."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .autodiff import Linear, Module, Tensor, ops


def positional_encode(delta: np.ndarray, bands: int = 6) -> np.ndarray:
    """Per band k: sin(2^k pi dx), sin(2^k pi dy), cos(2^k pi dx), cos(2^k pi dy)."""
    delta = np.asarray(delta, dtype=np.float64)
    out = []
    for k in range(bands):
        a = (2.0 ** k) * np.pi * delta
        out.extend([np.sin(a), np.cos(a)])
    return np.concatenate(out, axis=-1)


def _round_half_down(x: np.ndarray) -> np.ndarray:
    return np.ceil(x - 0.5).astype(np.int64)


@dataclass(frozen=True)
class QueryGrid:
    """Query layout for one (latent size, target size) pair.

    ``coords`` are (x, y) in latent-cell units (cell centers at integers).
    Each query emits an n x n patch; the padded output of ``qh*n x qw*n``
    pixels is cropped at ``(top, left)`` to the target.
    """

    coords: np.ndarray  # Q x 2
    cells: np.ndarray  # Q, flat index of the nearest latent cell
    neighbors: np.ndarray  # Q x 9, flat indices of the 3x3 neighborhood (edge-clamped)
    rel: np.ndarray  # Q x 2, coords - cell center
    qh: int
    qw: int
    n: int
    target: tuple[int, int]
    latent: tuple[int, int]
    top: int
    left: int

    @property
    def size(self) -> int:
        return self.qh * self.qw


@lru_cache(maxsize=64)
def make_query_grid(h: int, w: int, ho: int, wo: int, n: int = 4) -> QueryGrid:
    if ho < h or wo < w:
        raise ValueError(f"target {ho}x{wo} is smaller than the latent map {h}x{w}")
    qh, qw = -(-ho // n), -(-wo // n)
    top, left = (qh * n - ho) // 2, (qw * n - wo) // 2

    def axis_centers(q, out, lat, off):
        # center of each query's n pixels, mapped from output pixels to latent cells
        pix = np.arange(q) * n + (n - 1) / 2 - off
        return (pix + 0.5) * lat / out - 0.5

    ys = axis_centers(qh, ho, h, top)
    xs = axis_centers(qw, wo, w, left)
    yy, xx = np.meshgrid(ys, xs, indexing="ij")
    coords = np.stack([xx.ravel(), yy.ravel()], axis=1)
    cy = np.clip(_round_half_down(yy.ravel()), 0, h - 1)
    cx = np.clip(_round_half_down(xx.ravel()), 0, w - 1)
    rel = coords - np.stack([cx, cy], axis=1)
    d = np.arange(-1, 2)
    ny = np.clip(cy[:, None, None] + d[None, :, None], 0, h - 1)
    nx = np.clip(cx[:, None, None] + d[None, None, :], 0, w - 1)
    neighbors = (ny * w + nx).reshape(-1, 9)
    return QueryGrid(coords, cy * w + cx, neighbors, rel, qh, qw, n, (ho, wo), (h, w), top, left)


class ImplicitUpsampler(Module):
    """f_theta: (latent code, relative offset, its encoding) -> n^2 x 9 mask logits."""

    def __init__(self, rng: np.random.Generator, latent_dim: int = 64, n: int = 4,
                 bands: int = 6, width: int = 128, depth: int = 3):
        self.n = n
        self.bands = bands
        dims = [latent_dim + 2 + 4 * bands] + [width] * depth
        self.hidden = [Linear(rng, a, b) for a, b in zip(dims[:-1], dims[1:])]
        self.head = Linear(rng, width, 9 * n * n)

    def _decoder_input(self, latent: Tensor, grid: QueryGrid) -> Tensor:
        n_batch, c, h, w = latent.shape
        if (h, w) != grid.latent:
            raise ValueError(f"latent map {h}x{w} does not match query grid built for {grid.latent}")
        cells = ops.transpose(ops.reshape(latent, (n_batch, c, h * w)), (0, 2, 1))
        z = ops.index_select(cells, grid.cells, axis=1)
        pos = np.concatenate([grid.rel, positional_encode(grid.rel, self.bands)], axis=1)
        pos = Tensor(np.broadcast_to(pos, (n_batch,) + pos.shape).astype(latent.dtype))
        return ops.concat([z, pos], axis=2)

    def query_masks(self, latent: Tensor, grid: QueryGrid) -> Tensor:
        """Convex weights, N x Q x n^2 x 9 (softmax over the last axis)."""
        if grid.size == 0:
            raise ValueError("empty query grid")
        x = self._decoder_input(latent, grid)
        for layer in self.hidden:
            x = ops.relu(layer(x))
        logits = self.head(x)
        n_batch, q = logits.shape[:2]
        return ops.softmax(ops.reshape(logits, (n_batch, q, self.n * self.n, 9)), axis=-1)

    def __call__(self, flow: Tensor, latent: Tensor, target: tuple[int, int]) -> Tensor:
        return upsample_flow(flow, latent, target, self)


def combine_masks(flow: Tensor, masks: Tensor, grid: QueryGrid) -> Tensor:
    """Apply per-query convex masks to the coarse 3x3 neighborhoods and assemble the image.

    Output values are converted from coarse-cell units to output pixels
    (multiplied by wo/w horizontally and ho/h vertically).
    """
    n_batch, _, h, w = flow.shape
    n = grid.n
    ho, wo = grid.target
    cells = ops.transpose(ops.reshape(flow, (n_batch, 2, h * w)), (0, 2, 1))
    nb = ops.index_select(cells, grid.neighbors, axis=1)  # N x Q x 9 x 2
    patch = ops.matmul(masks, nb)  # N x Q x n^2 x 2
    img = ops.reshape(patch, (n_batch, grid.qh, grid.qw, n, n, 2))
    img = ops.reshape(ops.transpose(img, (0, 5, 1, 3, 2, 4)), (n_batch, 2, grid.qh * n, grid.qw * n))
    if (grid.qh * n, grid.qw * n) != (ho, wo):
        img = img[:, :, grid.top:grid.top + ho, grid.left:grid.left + wo]
    scale = np.array([wo / w, ho / h]).reshape(1, 2, 1, 1)
    return ops.mul(img, np.broadcast_to(scale, img.shape))


def upsample_flow(flow: Tensor, latent: Tensor, target: tuple[int, int], up: ImplicitUpsampler) -> Tensor:
    """Coarse flow (N x 2 x h x w, cell units) -> N x 2 x ho x wo in output-pixel units."""
    h, w = flow.shape[2:]
    if latent.shape[2:] != (h, w):
        raise ValueError(f"flow grid {h}x{w} does not match latent map {latent.shape[2:]}")
    ho, wo = (int(target[0]), int(target[1]))
    grid = make_query_grid(h, w, ho, wo, up.n)
    return combine_masks(flow, up.query_masks(latent, grid), grid)


def query_count(ho: int, wo: int, n: int = 4) -> int:
    return math.ceil(ho / n) * math.ceil(wo / n)
