"""Strided conv feature and context encoders."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Conv2d, Module, Tensor, ops


@dataclass
class FeaturePyramid:
    f_half: Tensor
    f_quarter: Tensor
    f_eighth: Tensor

    def split(self) -> tuple["FeaturePyramid", "FeaturePyramid"]:
        """Undo batch-stacking of two frames encoded in one pass."""
        n = self.f_half.shape[0] // 2
        a = FeaturePyramid(self.f_half[:n], self.f_quarter[:n], self.f_eighth[:n])
        b = FeaturePyramid(self.f_half[n:], self.f_quarter[n:], self.f_eighth[n:])
        return a, b


@dataclass
class ContextState:
    hidden: Tensor
    context: Tensor


def check_frame(frame: Tensor) -> None:
    if frame.ndim != 4 or frame.shape[1] != 3:
        raise ValueError(f"expected an N x 3 x H x W image batch, got {frame.shape}")
    h, w = frame.shape[2:]
    if h % 8 or w % 8:
        ph, pw = (-h) % 8, (-w) % 8
        raise ValueError(f"image size {h}x{w} is not divisible by 8; pad by {ph} rows and {pw} columns")


class _StridedStack(Module):
    def __init__(self, rng: np.random.Generator, widths: tuple[int, int, int]):
        c2, c4, c8 = widths
        self.down2 = Conv2d(rng, 3, c2, 3, stride=2)
        self.conv2 = Conv2d(rng, c2, c2, 3)
        self.down4 = Conv2d(rng, c2, c4, 3, stride=2)
        self.conv4 = Conv2d(rng, c4, c4, 3)
        self.down8 = Conv2d(rng, c4, c8, 3, stride=2)
        self.conv8 = Conv2d(rng, c8, c8, 3)

    def taps(self, frame: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        x = ops.mul(frame, 2.0)
        x = ops.add(x, -1.0)
        t2 = ops.relu(self.conv2(ops.relu(self.down2(x))))
        t4 = ops.relu(self.conv4(ops.relu(self.down4(t2))))
        t8 = ops.relu(self.conv8(ops.relu(self.down8(t4))))
        return t2, t4, t8


class FeatureEncoder(Module):
    """Shared-weight encoder producing features at 1/2, 1/4 and 1/8 resolution."""

    def __init__(self, rng: np.random.Generator, widths: tuple[int, int, int] = (16, 32, 64)):
        self.stack = _StridedStack(rng, widths)
        self.proj = Conv2d(rng, widths[2], widths[2], 1)

    def __call__(self, frame: Tensor) -> FeaturePyramid:
        check_frame(frame)
        t2, t4, t8 = self.stack.taps(frame)
        return FeaturePyramid(t2, t4, self.proj(t8))


class ContextEncoder(Module):
    """Separate stack on frame 1 giving the initial GRU hidden state and the context features."""

    def __init__(self, rng: np.random.Generator, widths: tuple[int, int, int] = (16, 32, 64),
                 hidden_dim: int = 64, context_dim: int = 64):
        self.stack = _StridedStack(rng, widths)
        self.proj = Conv2d(rng, widths[2], hidden_dim + context_dim, 1)
        self.hidden_dim = hidden_dim
        self.context_dim = context_dim

    def __call__(self, frame: Tensor) -> ContextState:
        check_frame(frame)
        _, _, t8 = self.stack.taps(frame)
        h, c = ops.split(self.proj(t8), [self.hidden_dim, self.context_dim], axis=1)
        return ContextState(hidden=ops.tanh(h), context=ops.relu(c))
