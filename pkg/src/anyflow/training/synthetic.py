"""Synthetic frame pairs with analytic flow.

Frames are sampled from a continuous band-limited pattern (Gaussian blobs plus
low-frequency sinusoids), so any scene can be rendered at any resolution and the
second frame is an exact inverse warp of the first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("translate", "rotate", "zoom", "two_layer")


@dataclass(frozen=True)
class Pattern:
    centers: np.ndarray  # K x 2, (x, y)
    sigmas: np.ndarray  # K
    amps: np.ndarray  # K x 3
    freqs: np.ndarray  # S x 2, radians per pixel
    phases: np.ndarray  # S
    wave_amps: np.ndarray  # S x 3

    @classmethod
    def random(cls, rng: np.random.Generator, h: float, w: float, margin: float = 16.0) -> "Pattern":
        k = max(8, int(h * w / 200))
        centers = np.stack([rng.uniform(-margin, w + margin, k), rng.uniform(-margin, h + margin, k)], axis=1)
        sigmas = rng.uniform(3.0, 7.0, k)
        amps = rng.normal(0.0, 1.0, (k, 3))
        s = 4
        wavelength = rng.uniform(16.0, 48.0, s)
        theta = rng.uniform(0, 2 * np.pi, s)
        freqs = (2 * np.pi / wavelength)[:, None] * np.stack([np.cos(theta), np.sin(theta)], axis=1)
        return cls(centers, sigmas, amps, freqs, rng.uniform(0, 2 * np.pi, s), rng.normal(0.0, 0.4, (s, 3)))

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Evaluate at arbitrary points; returns ``x.shape + (3,)`` values in (0, 1)."""
        px, py = x.ravel(), y.ravel()
        out = np.zeros((px.size, 3))
        for start in range(0, len(self.sigmas), 64):
            sl = slice(start, start + 64)
            d2 = (px[:, None] - self.centers[None, sl, 0]) ** 2 + (py[:, None] - self.centers[None, sl, 1]) ** 2
            out += np.exp(-0.5 * d2 / self.sigmas[None, sl] ** 2) @ self.amps[sl]
        out += np.cos(np.outer(px, self.freqs[:, 0]) + np.outer(py, self.freqs[:, 1]) + self.phases) @ self.wave_amps
        return (0.5 + 0.45 * np.tanh(out)).reshape(x.shape + (3,))


@dataclass(frozen=True)
class Affine:
    """x -> A x + b in full-resolution pixel coordinates."""

    a: np.ndarray
    b: np.ndarray

    @classmethod
    def similarity(cls, center, angle=0.0, zoom=1.0, shift=(0.0, 0.0)) -> "Affine":
        c, s = np.cos(angle), np.sin(angle)
        a = zoom * np.array([[c, -s], [s, c]])
        center = np.asarray(center, dtype=np.float64)
        return cls(a, center - a @ center + np.asarray(shift, dtype=np.float64))

    def apply(self, x, y):
        return self.a[0, 0] * x + self.a[0, 1] * y + self.b[0], self.a[1, 0] * x + self.a[1, 1] * y + self.b[1]

    def inverse(self) -> "Affine":
        ai = np.linalg.inv(self.a)
        return Affine(ai, -ai @ self.b)


@dataclass(frozen=True)
class Layer:
    """Foreground ellipse translating over the background."""

    pattern: Pattern
    center: np.ndarray
    radii: np.ndarray
    shift: np.ndarray

    def rho(self, x, y):
        return np.sqrt(((x - self.center[0]) / self.radii[0]) ** 2 + ((y - self.center[1]) / self.radii[1]) ** 2)

    def edge_distance(self, x, y):
        # first-order distance to the ellipse boundary, in pixels
        return np.abs(self.rho(x, y) - 1.0) * self.radii.min()


@dataclass
class SyntheticSample:
    img1: np.ndarray  # 3 x H x W in [0, 1]
    img2: np.ndarray
    flow: np.ndarray  # 2 x H x W, output pixels
    valid: np.ndarray  # H x W, pixels where brightness constancy is defined
    kind: str
    scene: "Scene"


@dataclass(frozen=True)
class Scene:
    kind: str
    height: int
    width: int
    background: Pattern
    motion: Affine
    layer: Layer | None = None

    def render(self, height: int | None = None, width: int | None = None, scale: float | None = None,
               ) -> SyntheticSample:
        """Sample both frames and the flow on an ``height x width`` pixel grid.

        Grid pixel centers map to the scene's own coordinates by the per-axis
        size ratio, so ``render(2H, 2W)`` is the same scene at twice the detail.
        Flow is in the rendered grid's pixels.
        """
        if scale is not None:
            height, width = int(round(self.height * scale)), int(round(self.width * scale))
        height = self.height if height is None else int(height)
        width = self.width if width is None else int(width)
        sy, sx = height / self.height, width / self.width
        ys, xs = np.meshgrid((np.arange(height) + 0.5) / sy - 0.5, (np.arange(width) + 0.5) / sx - 0.5,
                             indexing="ij")
        tx, ty = self.motion.apply(xs, ys)
        inv = self.motion.inverse()
        i1 = self.background(xs, ys)
        bx, by = inv.apply(xs, ys)
        i2 = self.background(bx, by)
        fx, fy = tx - xs, ty - ys
        valid = (tx >= 0) & (tx <= self.width - 1) & (ty >= 0) & (ty <= self.height - 1)
        lay = self.layer
        if lay is not None:
            inside1 = lay.rho(xs, ys) <= 1.0
            i1 = np.where(inside1[..., None], lay.pattern(xs, ys), i1)
            gx, gy = xs - lay.shift[0], ys - lay.shift[1]
            inside2 = lay.rho(gx, gy) <= 1.0
            i2 = np.where(inside2[..., None], lay.pattern(gx, gy), i2)
            fx = np.where(inside1, lay.shift[0], fx)
            fy = np.where(inside1, lay.shift[1], fy)
            # where the moved point lands, relative to the moved ellipse
            land_x, land_y = xs + fx - lay.shift[0], ys + fy - lay.shift[1]
            occluded = ~inside1 & (lay.rho(land_x, land_y) <= 1.0)
            near = (lay.edge_distance(xs, ys) < 1.5) | (lay.edge_distance(land_x, land_y) < 1.5)
            valid &= ~occluded & ~near
            valid &= (xs + fx >= 0) & (xs + fx <= self.width - 1) & (ys + fy >= 0) & (ys + fy <= self.height - 1)
        flow = np.stack([fx * sx, fy * sy])
        return SyntheticSample(i1.transpose(2, 0, 1).astype(np.float32), i2.transpose(2, 0, 1).astype(np.float32),
                               flow.astype(np.float32), valid, self.kind, self)


def _random_shift(rng: np.random.Generator, max_disp: float) -> np.ndarray:
    r = max_disp * np.sqrt(rng.uniform())
    a = rng.uniform(0, 2 * np.pi)
    return np.array([r * np.cos(a), r * np.sin(a)])


def make_scene(rng: np.random.Generator, kind: str, height: int, width: int, max_disp: float = 12.0,
               motion=None, angle: float | None = None, zoom: float | None = None) -> Scene:
    """Random scene whose flow magnitude never exceeds ``max_disp`` inside the frame.

    ``motion`` fixes the translation (translate, or the background of
    two_layer); ``angle`` and ``zoom`` fix the rotate and zoom parameters.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown scene kind {kind!r}; choose from {KINDS}")
    if height % 8 or width % 8 or height <= 0 or width <= 0:
        raise ValueError(f"frame size {height}x{width} must be positive multiples of 8")
    if max_disp < 0:
        raise ValueError("max_disp must be non-negative")
    pattern = Pattern.random(rng, height, width)
    center = np.array([rng.uniform(0, width - 1), rng.uniform(0, height - 1)])
    corners = np.array([[0, 0], [width - 1, 0], [0, height - 1], [width - 1, height - 1]], dtype=np.float64)
    reach = np.sqrt(((corners - center) ** 2).sum(axis=1)).max()
    layer = None
    if kind == "translate":
        shift = _random_shift(rng, max_disp) if motion is None else np.asarray(motion, dtype=np.float64)
        aff = Affine.similarity(center, shift=shift)
    elif kind == "rotate":
        if angle is None:
            limit = 2 * np.arcsin(min(1.0, max_disp / (2 * reach)))
            angle = rng.uniform(-limit, limit)
        aff = Affine.similarity(center, angle=angle)
    elif kind == "zoom":
        if zoom is None:
            zoom = 1.0 + rng.uniform(-1, 1) * max_disp / reach
        aff = Affine.similarity(center, zoom=zoom)
    else:
        bg = _random_shift(rng, 0.5 * max_disp) if motion is None else np.asarray(motion, dtype=np.float64)
        aff = Affine.similarity(center, shift=bg)
        radii = rng.uniform(0.15, 0.3, 2) * np.array([width, height])
        fg_center = np.array([rng.uniform(radii[0], width - radii[0]), rng.uniform(radii[1], height - radii[1])])
        fg = _random_shift(rng, max_disp)
        layer = Layer(Pattern.random(rng, height, width), fg_center, radii, fg)
    return Scene(kind, height, width, pattern, aff, layer)


def synth_pair(rng: np.random.Generator, kind: str, height: int, width: int, max_disp: float = 12.0,
               **params) -> SyntheticSample:
    return make_scene(rng, kind, height, width, max_disp, **params).render()


def synth_batch(rng: np.random.Generator, kinds, batch: int, height: int, width: int, max_disp: float = 8.0):
    """Stacked (img1, img2, flow, valid) arrays; each sample's kind is drawn uniformly from ``kinds``."""
    samples = [synth_pair(rng, kinds[rng.integers(len(kinds))], height, width, max_disp) for _ in range(batch)]
    return (np.stack([s.img1 for s in samples]), np.stack([s.img2 for s in samples]),
            np.stack([s.flow for s in samples]), np.stack([s.valid for s in samples]))
