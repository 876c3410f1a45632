"""Recurrent refinement pieces: warping, multi-scale fusion, motion encoding and the ConvGRU."""

from __future__ import annotations

import numpy as np

from .autodiff import Conv2d, Module, Tensor, no_grad, ops
from .encoder import FeaturePyramid
from .upsampler import ImplicitUpsampler, upsample_flow


def warp(feature: Tensor, flow) -> Tensor:
    """Inverse warp: out(x) = feature(x + flow(x)), bilinear, zero outside."""
    flow = flow if isinstance(flow, Tensor) else Tensor(np.asarray(flow, dtype=feature.dtype))
    n, c, h, w = feature.shape
    if flow.shape != (n, 2, h, w):
        raise ValueError(f"flow {flow.shape} does not match feature map {feature.shape}")
    ys, xs = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    base = np.stack([xs, ys])[None].repeat(n, axis=0)
    coords = ops.reshape(ops.transpose(ops.add(flow, base), (0, 2, 3, 1)), (n, h * w, 2))
    sampled = ops.grid_sample_bilinear(feature, coords)  # N x HW x C
    return ops.reshape(ops.transpose(sampled, (0, 2, 1)), (n, c, h, w))


class MultiScaleFusion(Module):
    """Warp frame-2 features at 1/2 and 1/4 scale, reduce, shuffle down to 1/8 and merge."""

    def __init__(self, rng: np.random.Generator, c_half: int, c_quarter: int, out_dim: int,
                 reduced_half: int = 8, reduced_quarter: int = 16):
        self.reduce_half = Conv2d(rng, 2 * c_half, reduced_half, 1)
        self.reduce_quarter = Conv2d(rng, 2 * c_quarter, reduced_quarter, 1)
        self.merge = Conv2d(rng, 16 * reduced_half + 4 * reduced_quarter, out_dim, 1)

    def __call__(self, pyr1: FeaturePyramid, pyr2: FeaturePyramid, flow_half: Tensor,
                 flow_quarter: Tensor, keep: dict | None = None) -> Tensor:
        warped_half = warp(pyr2.f_half, flow_half)
        warped_quarter = warp(pyr2.f_quarter, flow_quarter)
        if keep is not None:
            keep["warped_half"] = warped_half
            keep["warped_quarter"] = warped_quarter
        a = ops.relu(self.reduce_half(ops.concat([pyr1.f_half, warped_half], axis=1)))
        b = ops.relu(self.reduce_quarter(ops.concat([pyr1.f_quarter, warped_quarter], axis=1)))
        a = ops.pixel_unshuffle(a, 4)
        b = ops.pixel_unshuffle(b, 2)
        return ops.relu(self.merge(ops.concat([a, b], axis=1)))


def intermediate_flows(flow: Tensor, latent: Tensor, size: tuple[int, int], up: ImplicitUpsampler,
                       detach: bool = True) -> tuple[Tensor, Tensor]:
    """Flows at 1/2 and 1/4 input resolution in their own pixel units.

    The 1/4 flow is the 2x2 mean of the 1/2 flow, halved for the coarser grid.
    """
    h, w = size
    if detach:
        with no_grad():
            half = upsample_flow(flow, latent, (h // 2, w // 2), up)
            half = Tensor(half.data)
    else:
        half = upsample_flow(flow, latent, (h // 2, w // 2), up)
    quarter = ops.mul(ops.avg_pool2d(half), 0.5)
    return half, quarter


def multiscale_warp_fuse(pyr1: FeaturePyramid, pyr2: FeaturePyramid, flow: Tensor, latent: Tensor,
                         up: ImplicitUpsampler, fusion: MultiScaleFusion, detach: bool = True,
                         keep: dict | None = None) -> Tensor:
    h2, w2 = pyr1.f_half.shape[2:]
    half, quarter = intermediate_flows(flow, latent, (2 * h2, 2 * w2), up, detach)
    return fusion(pyr1, pyr2, half, quarter, keep)


class MotionEncoder(Module):
    def __init__(self, rng: np.random.Generator, corr_channels: int, out_dim: int = 64):
        self.corr1 = Conv2d(rng, corr_channels, 64, 1)
        self.corr2 = Conv2d(rng, 64, 48, 3)
        self.flow1 = Conv2d(rng, 2, 32, 3)
        self.flow2 = Conv2d(rng, 32, 16, 3)
        self.out = Conv2d(rng, 64, out_dim - 2, 3)

    def __call__(self, flow: Tensor, corr: Tensor) -> Tensor:
        c = ops.relu(self.corr2(ops.relu(self.corr1(corr))))
        f = ops.relu(self.flow2(ops.relu(self.flow1(flow))))
        m = ops.relu(self.out(ops.concat([c, f], axis=1)))
        return ops.concat([m, flow], axis=1)


class ConvGRU(Module):
    def __init__(self, rng: np.random.Generator, hidden_dim: int, input_dim: int):
        self.hidden_dim = hidden_dim
        self.gates = Conv2d(rng, hidden_dim + input_dim, 2 * hidden_dim, 3)  # update z and reset r stacked
        self.cand = Conv2d(rng, hidden_dim + input_dim, hidden_dim, 3)

    def __call__(self, h: Tensor, x: Tensor) -> Tensor:
        hx = ops.concat([h, x], axis=1)
        z, r = ops.split(ops.sigmoid(self.gates(hx)), [self.hidden_dim, self.hidden_dim], axis=1)
        q = ops.tanh(self.cand(ops.concat([ops.mul(r, h), x], axis=1)))
        # (1 - z) h + z q
        return ops.add(h, ops.mul(z, ops.sub(q, h)))


class Head(Module):
    def __init__(self, rng: np.random.Generator, c_in: int, hidden: int, c_out: int, zero: bool = False):
        self.conv1 = Conv2d(rng, c_in, hidden, 3)
        self.conv2 = Conv2d(rng, hidden, c_out, 3, zero=zero)

    def __call__(self, x: Tensor) -> Tensor:
        return self.conv2(ops.relu(self.conv1(x)))


class UpdateBlock(Module):
    """One GRU step: motion features, fused multi-scale features and context in; M', df, dr out."""

    def __init__(self, rng: np.random.Generator, corr_channels: int, hidden_dim: int, context_dim: int,
                 fused_dim: int, motion_dim: int = 64):
        self.motion = MotionEncoder(rng, corr_channels, motion_dim)
        self.gru = ConvGRU(rng, hidden_dim, context_dim + motion_dim + fused_dim)
        self.flow_head = Head(rng, hidden_dim, 64, 2)
        self.radius_head = Head(rng, hidden_dim, 32, 1, zero=True)

    def __call__(self, hidden: Tensor, context: Tensor, corr: Tensor, flow: Tensor,
                 fused: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        motion = self.motion(flow, corr)
        hidden = self.gru(hidden, ops.concat([context, motion, fused], axis=1))
        return hidden, self.flow_head(hidden), self.radius_head(hidden)
