"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


class GradCheckError(FloatingPointError):
    pass


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-6,
    max_elems: int = 10_000,
    sample: float | None = None,
    seed: int = 0,
) -> float:
    """Largest relative disagreement between backprop and central differences.

    ``fn(*inputs)`` must return a scalar tensor.  The error for each input is
    ``max |analytic - numeric|`` divided by the largest gradient magnitude of
    that input (over all of its elements, probed or not), so elements with
    vanishing gradients do not blow up the ratio; the maximum over inputs is
    returned.  Inputs larger than ``max_elems`` (or
    every input when ``sample`` gives a fraction) are probed on a seeded random
    subset of elements.
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    for t in inputs:
        if t.dtype != np.float64:
            raise ValueError("grad_check runs in 64-bit mode; cast inputs to float64")

    for t in inputs:
        t.grad = None
    loss = fn(*inputs)
    if loss.size != 1:
        raise ValueError(f"grad_check needs a scalar function, got shape {loss.shape}")
    loss.backward()
    analytic = [t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs]

    rng = np.random.default_rng(seed)
    worst = 0.0
    bad: list[str] = []
    for k, (t, ga) in enumerate(zip(inputs, analytic)):
        n = t.size
        if sample is not None:
            count = max(1, int(round(sample * n)))
            picks = rng.choice(n, size=min(count, n), replace=False)
        elif n > max_elems:
            picks = rng.choice(n, size=max_elems, replace=False)
        else:
            picks = np.arange(n)
        flat = t.data.reshape(-1)
        a = ga.reshape(-1)[picks]
        num = np.empty(len(picks))
        with no_grad():
            for j, i in enumerate(picks):
                orig = flat[i]
                flat[i] = orig + eps
                fp = fn(*inputs).item()
                flat[i] = orig - eps
                fm = fn(*inputs).item()
                flat[i] = orig
                num[j] = (fp - fm) / (2 * eps)
                if not np.isfinite(num[j]):
                    bad.append(f"input {k} element {int(i)}: f(+eps)={fp}, f(-eps)={fm}")
        if bad:
            continue
        # normalize by the whole tensor's gradient so a sparse sample of tiny entries is not judged alone
        scale = max(np.abs(ga).max(initial=0.0), np.abs(num).max(initial=0.0))
        if scale == 0.0:
            continue
        worst = max(worst, float(np.abs(a - num).max() / scale))
    if bad:
        raise GradCheckError("non-finite finite difference:\n" + "\n".join(bad))
    return worst


def projected(out: Tensor, seed: int = 0) -> Tensor:
    """Scalarize an arbitrary-shaped output with fixed random weights."""
    from . import ops

    w = np.random.default_rng(seed).standard_normal(out.shape)
    return ops.sum(ops.mul(out, w))
