"""Inference helpers and the two evaluation protocols: downsample robustness and flow upsampling."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .autodiff import no_grad
from .interp import resize, resize_flow_interp
from .metrics import epe, f1_all
from .model import AnyFlow
from .training.augment import scaled_size
from .training.synthetic import SyntheticSample, make_scene

DEFAULT_SCALES = (1.0, 0.9, 0.8, 0.7, 0.6, 0.5)


def default_checkpoint() -> str:
    """Path of the toy checkpoint shipped with the package."""
    return str(resources.files("anyflow") / "data" / "toy.afck")


def quantize(img: np.ndarray) -> np.ndarray:
    """Round to 8-bit levels, as if the frame had been stored as PNG."""
    return (np.clip(np.round(np.asarray(img) * 255.0), 0, 255) / 255.0).astype(np.float32)


def pad_to_multiple(img: np.ndarray, k: int = 8) -> tuple[np.ndarray, tuple[int, int]]:
    """Reflect-pad the bottom and right edges of a (..., H, W) array up to multiples of ``k``."""
    h, w = img.shape[-2:]
    ph, pw = (-h) % k, (-w) % k
    if ph == 0 and pw == 0:
        return img, (h, w)
    mode = "reflect" if ph < h and pw < w else "symmetric"
    widths = [(0, 0)] * (img.ndim - 2) + [(0, ph), (0, pw)]
    return np.pad(img, widths, mode=mode), (h, w)


def infer_flow(model: AnyFlow, img1: np.ndarray, img2: np.ndarray, iters: int = 12, scale: float = 1.0,
               target: tuple[int, int] | None = None) -> np.ndarray:
    """Flow (2 x Ho x Wo, output pixels) for one 3 x H x W pair of any size.

    The output is ``scale`` times the input size unless ``target`` is given.
    """
    if img1.shape != img2.shape:
        raise ValueError(f"frames differ in size: {img1.shape} vs {img2.shape}")
    if img1.ndim != 3 or img1.shape[0] != 3:
        raise ValueError(f"expected 3 x H x W frames, got {img1.shape}")
    p1, (h, w) = pad_to_multiple(img1)
    p2, _ = pad_to_multiple(img2)
    hp, wp = p1.shape[-2:]
    if target is None:
        out_h, out_w = int(round(scale * h)), int(round(scale * w))
        full = (int(round(scale * hp)), int(round(scale * wp)))
    else:
        out_h, out_w = target
        full = (int(round(out_h * hp / h)), int(round(out_w * wp / w)))
    with no_grad():
        res = model(p1[None], p2[None], iters, target=full)
    return res.flows[-1].data[0, :, :out_h, :out_w]


def bench_samples(n: int, seed: int = 0, height: int = 64, width: int = 96, kinds=("translate", "rotate"),
                  max_disp: float = 8.0) -> list[SyntheticSample]:
    """Evaluation pairs with 8-bit frames; sample i is the same for every n > i."""
    out = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        s = make_scene(rng, kinds[i % len(kinds)], height, width, max_disp).render()
        s.img1, s.img2 = quantize(s.img1), quantize(s.img2)
        out.append(s)
    return out


@dataclass
class ScaleRow:
    scale: float
    epe: float
    f1: float
    input_size: tuple[int, int]
    per_sample: list[float]

    def as_dict(self) -> dict:
        return {"scale": self.scale, "epe": self.epe, "f1": self.f1, "input_h": self.input_size[0],
                "input_w": self.input_size[1], "per_sample_epe": self.per_sample}


def downsample_pair(img1, img2, scale: float):
    h, w = img1.shape[-2:]
    size = (scaled_size(h, scale), scaled_size(w, scale))
    return resize(img1, size, "bilinear"), resize(img2, size, "bilinear")


_WORKER_MODEL: AnyFlow | None = None


def _init_worker(ckpt: str) -> None:
    global _WORKER_MODEL
    _WORKER_MODEL = AnyFlow.load(ckpt)


def _bench_one(args):
    img1, img2, gt, scales, iters = args
    return _bench_sample(_WORKER_MODEL, img1, img2, gt, scales, iters)


def _bench_sample(model, img1, img2, gt, scales, iters):
    rows = []
    for s in scales:
        a, b = downsample_pair(img1, img2, s) if s != 1.0 else (img1, img2)
        pred = infer_flow(model, a, b, iters, target=gt.shape[-2:])
        rows.append((epe(pred, gt), f1_all(pred, gt)))
    return rows


def bench_downsample(model: AnyFlow, samples: list[SyntheticSample], scales=DEFAULT_SCALES, iters: int = 12,
                     jobs: int = 1, ckpt: str | None = None) -> list[ScaleRow]:
    """Shrink each pair by ``scale`` per axis, predict at the original size, score against full-res truth.

    With ``jobs > 1`` samples are split across worker processes that load ``ckpt``.
    """
    scales = [float(s) for s in scales]
    tasks = [(s.img1, s.img2, s.flow, scales, iters) for s in samples]
    if jobs > 1:
        if ckpt is None:
            raise ValueError("parallel benchmarking needs the checkpoint path")
        with ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(ckpt,)) as pool:
            results = list(pool.map(_bench_one, tasks))
    else:
        results = [_bench_sample(model, *t) for t in tasks]
    h, w = samples[0].flow.shape[-2:]
    rows = []
    for k, s in enumerate(scales):
        errs = [r[k][0] for r in results]
        f1s = [r[k][1] for r in results]
        size = (h, w) if s == 1.0 else (scaled_size(h, s), scaled_size(w, s))
        rows.append(ScaleRow(s, float(np.mean(errs)), float(np.mean(f1s)), size, [float(e) for e in errs]))
    return rows


def format_table(rows: list[ScaleRow]) -> str:
    lines = [f"{'scale':>6}  {'input':>9}  {'EPE':>8}  {'F1-all%':>8}  {'ratio':>6}"]
    base = next((r.epe for r in rows if r.scale == 1.0), None)
    for r in rows:
        ratio = f"{r.epe / base:6.3f}" if base else f"{'-':>6}"
        size = f"{r.input_size[0]}x{r.input_size[1]}"
        lines.append(f"{r.scale:6.2f}  {size:>9}  {r.epe:8.4f}  {r.f1:8.3f}  {ratio}")
    return "\n".join(lines)


def upsample_paths(model: AnyFlow, img1: np.ndarray, img2: np.ndarray, scales, iters: int = 12,
                   baseline: str = "bicubic") -> dict[float, tuple[np.ndarray, np.ndarray]]:
    """For each scale: (implicit upsampler output, interpolated 1x output), both at scale x input size.

    Both start from the same final coarse flow; the implicit path decodes masks
    at the new size, the baseline resizes the 1x prediction.
    """
    p1, (h, w) = pad_to_multiple(img1)
    p2, _ = pad_to_multiple(img2)
    hp, wp = p1.shape[-2:]
    out = {}
    with no_grad():
        res = model(p1[None], p2[None], iters, target=(hp, wp))
        base = res.flows[-1].data[0, :, :h, :w]
        for s in scales:
            s = float(s)
            oh, ow = int(round(s * h)), int(round(s * w))
            full = (int(round(s * hp)), int(round(s * wp)))
            implicit = model.upsampler(res.flow, res.hidden, full).data[0, :, :oh, :ow]
            interp = resize_flow_interp(base, (oh, ow), baseline)
            out[s] = (implicit, interp)
    return out


def upsample_comparison(model: AnyFlow, n: int = 50, scale: float = 2.0, seed: int = 0, height: int = 64,
                        width: int = 96, iters: int = 12, baseline: str = "bicubic") -> list[tuple[float, float]]:
    """(implicit EPE, baseline EPE) per two_layer sample, against truth rendered at ``scale``."""
    pairs = []
    for i in range(n):
        scene = make_scene(np.random.default_rng([seed, i]), "two_layer", height, width, 8.0)
        s1 = scene.render()
        gt = scene.render(int(round(scale * height)), int(round(scale * width))).flow
        imp, bas = upsample_paths(model, quantize(s1.img1), quantize(s1.img2), [scale], iters, baseline)[float(scale)]
        pairs.append((epe(imp, gt), epe(bas, gt)))
    return pairs


def load_model(path: str | os.PathLike | None) -> AnyFlow:
    return AnyFlow.load(path if path is not None else default_checkpoint())
