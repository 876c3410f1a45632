"""Full network: encoders, correlation pyramid, recurrent updates and implicit upsampling."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Module, Tensor, load_arrays, ops, save_arrays
from .correlation import LOOKUP_MODES, LookupConfig, RegionEncoder, build_corr_pyramid, lookup, update_radius
from .encoder import ContextEncoder, FeatureEncoder, FeaturePyramid
from .update import MultiScaleFusion, UpdateBlock, multiscale_warp_fuse
from .upsampler import ImplicitUpsampler

_CFG_PREFIX = "config."


@dataclass(frozen=True)
class ModelConfig:
    widths: tuple[int, int, int] = (16, 32, 64)
    hidden_dim: int = 64
    context_dim: int = 64
    fused_dim: int = 32
    motion_dim: int = 32
    corr_levels: int = 4
    lookup_mode: str = "dynamic"
    r0: int = 4
    r_min: float = 1.0
    r_max: float = 16.0
    n: int = 4
    pe_bands: int = 6
    up_width: int = 128
    up_depth: int = 3
    region_hidden: int = 16
    detach: bool = True
    seed: int = 0

    @property
    def lookup(self) -> LookupConfig:
        return LookupConfig(self.lookup_mode, float(self.r0), self.corr_levels, self.r_min, self.r_max)

    def to_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name == "lookup_mode":
                v = LOOKUP_MODES.index(v)
            out[_CFG_PREFIX + f.name] = np.asarray(v, dtype=np.float32)
        return out

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "ModelConfig":
        kw = {}
        for f in dataclasses.fields(cls):
            key = _CFG_PREFIX + f.name
            if key not in arrays:
                continue
            v = arrays[key]
            if f.name == "widths":
                kw[f.name] = tuple(int(x) for x in v)
            elif f.name == "lookup_mode":
                kw[f.name] = LOOKUP_MODES[int(v)]
            elif f.name == "detach":
                kw[f.name] = bool(v)
            elif f.type in ("float", float):
                kw[f.name] = float(v)
            else:
                kw[f.name] = int(v)
        return cls(**kw)


def tiny_config(**overrides) -> ModelConfig:
    """Narrow configuration for full-pipeline gradient checks on 16 x 24 inputs."""
    base = dict(widths=(4, 4, 8), hidden_dim=8, context_dim=4, fused_dim=4, motion_dim=8,
                corr_levels=2, r0=1, r_min=0.5, up_width=8, up_depth=2, pe_bands=2, region_hidden=4, detach=False)
    base.update(overrides)
    return ModelConfig(**base)


@dataclass
class InferenceResult:
    flows: list[Tensor]
    flow: Tensor  # final coarse flow, cell units
    radius: Tensor
    hidden: Tensor
    deltas: list[Tensor] = field(default_factory=list)
    radii: list[Tensor] = field(default_factory=list)


class AnyFlow(Module):
    def __init__(self, cfg: ModelConfig | None = None):
        cfg = cfg or ModelConfig()
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        lk = cfg.lookup
        self.fnet = FeatureEncoder(rng, cfg.widths)
        self.cnet = ContextEncoder(rng, cfg.widths, cfg.hidden_dim, cfg.context_dim)
        self.fusion = MultiScaleFusion(rng, cfg.widths[0], cfg.widths[1], cfg.fused_dim)
        self.update = UpdateBlock(rng, lk.channels, cfg.hidden_dim, cfg.context_dim, cfg.fused_dim,
                                  cfg.motion_dim)
        self.upsampler = ImplicitUpsampler(rng, cfg.hidden_dim, cfg.n, cfg.pe_bands, cfg.up_width, cfg.up_depth)
        self.g_phi = RegionEncoder(rng, cfg.region_hidden) if cfg.lookup_mode == "region" else None

    def encode(self, img1: Tensor, img2: Tensor):
        both = self.fnet(ops.concat([img1, img2], axis=0))
        pyr1, pyr2 = both.split()
        ctx = self.cnet(img1)
        return pyr1, pyr2, ctx

    def __call__(self, img1, img2, iters: int = 12, target: tuple[int, int] | None = None) -> InferenceResult:
        img1 = img1 if isinstance(img1, Tensor) else Tensor(np.asarray(img1, dtype=self._dtype()))
        img2 = img2 if isinstance(img2, Tensor) else Tensor(np.asarray(img2, dtype=self._dtype()))
        if img1.shape != img2.shape:
            raise ValueError(f"frames differ in size: {img1.shape} vs {img2.shape}")
        if iters < 1:
            raise ValueError("need at least one iteration")
        cfg = self.cfg
        n, _, h_in, w_in = img1.shape
        target = (h_in, w_in) if target is None else (int(target[0]), int(target[1]))

        pyr1, pyr2, ctx = self.encode(img1, img2)
        pyr = build_corr_pyramid(pyr1.f_eighth, pyr2.f_eighth, cfg.corr_levels)
        h, w = pyr.height, pyr.width
        dtype = img1.dtype
        flow = Tensor(np.zeros((n, 2, h, w), dtype=dtype))
        radius = Tensor(np.full((n, 1, h, w), float(cfg.r0), dtype=dtype))
        hidden, context = ctx.hidden, ctx.context
        out = InferenceResult([], flow, radius, hidden)
        for _ in range(iters):
            cur = flow.detach() if cfg.detach else flow
            corr = lookup(pyr, cur, radius, cfg.lookup, self.g_phi)
            fused = multiscale_warp_fuse(pyr1, pyr2, cur, hidden, self.upsampler, self.fusion, cfg.detach)
            hidden, dflow, dr = self.update(hidden, context, corr, cur, fused)
            flow = ops.add(cur, dflow)
            if cfg.lookup_mode != "fixed":
                radius = update_radius(dr, radius, cfg.r_min, cfg.r_max)
            out.deltas.append(dflow)
            out.radii.append(radius)
            out.flows.append(self.upsampler(flow, hidden, target))
        out.flow, out.radius, out.hidden = flow, radius, hidden
        return out

    def _dtype(self):
        return self.fnet.proj.weight.dtype

    # -- persistence ----------------------------------------------------------

    def save(self, path: str | os.PathLike) -> None:
        arrays = dict(self.cfg.to_arrays())
        arrays.update(self.state_dict())
        save_arrays(path, arrays)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "AnyFlow":
        arrays = load_arrays(path)
        model = cls(ModelConfig.from_arrays(arrays))
        model.load_state_dict({k: v for k, v in arrays.items() if not k.startswith(_CFG_PREFIX)})
        return model


def run_inference(model: AnyFlow, img1, img2, iters: int = 12, target: tuple[int, int] | None = None,
                  ) -> InferenceResult:
    """Forward pass without graph recording."""
    from .autodiff import no_grad

    with no_grad():
        return model(img1, img2, iters, target)


def pyramid_of(model: AnyFlow, img: Tensor) -> FeaturePyramid:
    return model.fnet(img)
