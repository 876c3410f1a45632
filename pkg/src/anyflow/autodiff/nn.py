"""Parameter containers and the two layer types the model is built from."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import ops
from .tensor import Tensor, default_dtype


class Module:
    """Attribute-walking parameter registry (Tensors, Modules and lists of Modules)."""

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: p.data for k, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = own.keys() - state.keys()
        extra = state.keys() - own.keys()
        if missing or extra:
            raise KeyError(f"state mismatch: missing {sorted(missing)}, unexpected {sorted(extra)}")
        for k, p in own.items():
            arr = np.asarray(state[k])
            if arr.shape != p.shape:
                raise ValueError(f"{k}: checkpoint shape {arr.shape} != parameter shape {p.shape}")
            p.data = arr.astype(p.dtype, copy=True)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = np.sqrt(1.0 / fan_in)
    data = rng.uniform(-bound, bound, size=shape).astype(default_dtype())
    return Tensor(data, requires_grad=True)


class Linear(Module):
    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int, zero: bool = False):
        self.weight = _uniform(rng, (n_out, n_in), n_in)
        self.bias = _uniform(rng, (n_out,), n_in)
        if zero:
            self.weight.data[:] = 0
            self.bias.data[:] = 0

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(self, rng: np.random.Generator, c_in: int, c_out: int, k: int = 3,
                 stride: int = 1, zero: bool = False):
        fan_in = c_in * k * k
        self.weight = _uniform(rng, (c_out, c_in, k, k), fan_in)
        self.bias = _uniform(rng, (c_out,), fan_in)
        if zero:
            self.weight.data[:] = 0
            self.bias.data[:] = 0
        self.stride = stride
        self.pad = k // 2

    def __call__(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, pad=self.pad)
