"""AdamW, the one-cycle schedule and global-norm clipping."""

from __future__ import annotations

import math

import numpy as np

from ..autodiff import Tensor


class AdamW:
    """Adam with weight decay applied directly to the parameters, not through the gradient."""

    def __init__(self, params: list[Tensor], lr: float = 4e-4, betas=(0.9, 0.999), eps: float = 1e-8,
                 weight_decay: float = 1e-4):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            m *= self.b1
            m += (1 - self.b1) * g
            v *= self.b2
            v += (1 - self.b2) * g * g
            if self.weight_decay:
                p.data *= 1 - lr * self.weight_decay
            p.data -= (lr / c1) * m / (np.sqrt(v / c2) + self.eps)


def one_cycle_lr(step: int, total: int, peak: float, warmup: float = 0.3, start_div: float = 25.0,
                 final_div: float = 1e4) -> float:
    """Linear ramp from peak/start_div to peak over the first ``warmup`` fraction, then cosine decay."""
    if total < 1:
        raise ValueError("total steps must be positive")
    turn = max(1, int(round(warmup * total)))
    start = peak / start_div
    end = start / final_div
    if step < turn:
        return start + (peak - start) * step / turn
    frac = min(1.0, (step - turn) / max(1, total - 1 - turn))
    return end + (peak - end) * 0.5 * (1 + math.cos(math.pi * frac))


def global_norm(params: list[Tensor]) -> float:
    return math.sqrt(sum(float(np.vdot(p.grad, p.grad)) for p in params if p.grad is not None))


def clip_grad_norm(params: list[Tensor], max_norm: float = 1.0) -> tuple[float, float]:
    """Rescale gradients in place so their joint L2 norm is at most ``max_norm``.

    Returns (norm before, norm after).
    """
    norm = global_norm(params)
    if not math.isfinite(norm):
        return norm, norm
    if norm > max_norm:
        k = max_norm / (norm + 1e-12)
        for p in params:
            if p.grad is not None:
                p.grad *= k
        return norm, global_norm(params)
    return norm, norm
