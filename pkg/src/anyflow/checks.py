"""Registry of gradient checks: every differentiable op plus the main model blocks.

Each entry builds a scalar function and 64-bit inputs of at most 6 per dimension.
Inputs to non-smooth ops are kept away from their kinks so central differences
with eps <= 1e-4 never straddle one.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .autodiff import Tensor, grad_check, ops, precision, projected

OP_TOLERANCE = 1e-4

Builder = Callable[[np.random.Generator], tuple[Callable[..., Tensor], list[Tensor]]]


def _t(rng, *shape, lo=None, hi=None):
    data = rng.standard_normal(shape) if lo is None else rng.uniform(lo, hi, shape)
    return Tensor(data, requires_grad=True, dtype=np.float64)


def _away_from(rng, shape, points, margin=0.05):
    x = rng.standard_normal(shape)
    for p in points:
        near = np.abs(x - p) < margin
        x[near] = p + np.where(x[near] >= p, margin, -margin) * 2
    return Tensor(x, requires_grad=True, dtype=np.float64)


def _proj(f):
    return lambda *xs: projected(f(*xs), seed=7)


def _binary(op):
    def build(rng):
        return _proj(op), [_t(rng, 3, 4, 5), _t(rng, 3, 4, 5)]
    return build


def _unary(op, **kw):
    def build(rng):
        return _proj(op), [_t(rng, 2, 3, 4, 5, **kw)]
    return build


def _relu(rng):
    return _proj(ops.relu), [_away_from(rng, (2, 3, 4, 5), [0.0])]


def _abs(rng):
    return _proj(ops.abs), [_away_from(rng, (2, 3, 4, 5), [0.0])]


def _clamp(rng):
    return _proj(lambda x: ops.clamp(x, -0.5, 0.7)), [_away_from(rng, (2, 3, 4, 5), [-0.5, 0.7])]


def _softmax(rng):
    return _proj(lambda x: ops.softmax(x, axis=-1)), [_t(rng, 3, 4, 9)]


def _softmax_mid(rng):
    return _proj(lambda x: ops.softmax(x, axis=1)), [_t(rng, 3, 5, 4)]


def _sum(rng):
    return (lambda x: ops.sum(ops.mul(x, x))), [_t(rng, 4, 5)]


def _mean(rng):
    return (lambda x: ops.mean(ops.mul(x, x))), [_t(rng, 4, 5)]


def _l1(rng):
    target = rng.standard_normal((3, 4, 5))
    pred = target + np.where(rng.random((3, 4, 5)) < 0.5, -1, 1) * rng.uniform(0.1, 1.0, (3, 4, 5))
    return (lambda p: ops.l1_loss(p, target)), [Tensor(pred, requires_grad=True, dtype=np.float64)]


def _reshape(rng):
    return _proj(lambda x: ops.reshape(x, (6, 10))), [_t(rng, 3, 4, 5)]


def _transpose(rng):
    return _proj(lambda x: ops.transpose(x, (2, 0, 1))), [_t(rng, 3, 4, 5)]


def _getitem(rng):
    return _proj(lambda x: x[:, 1:3, ::2]), [_t(rng, 3, 4, 5)]


def _concat(rng):
    return _proj(lambda a, b: ops.concat([a, b], axis=1)), [_t(rng, 2, 3, 4), _t(rng, 2, 5, 4)]


def _split(rng):
    def f(x):
        a, b = ops.split(x, [2, 4], axis=1)
        return ops.add(projected(a, 1), projected(b, 2))
    return f, [_t(rng, 2, 6, 3)]


def _index_select(rng):
    idx = np.array([0, 2, 2, 4, 1, 0])
    return _proj(lambda x: ops.index_select(x, idx, axis=1)), [_t(rng, 3, 5, 2)]


def _matmul(rng):
    return _proj(ops.matmul), [_t(rng, 2, 3, 4), _t(rng, 2, 4, 5)]


def _linear(rng):
    return _proj(ops.linear), [_t(rng, 2, 3, 5), _t(rng, 4, 5), _t(rng, 4)]


def _conv(stride, k, pad):
    def build(rng):
        return _proj(lambda x, w, b: ops.conv2d(x, w, b, stride, pad)), [
            _t(rng, 2, 3, 6, 6), _t(rng, 4, 3, k, k), _t(rng, 4)]
    return build


def _pool(ceil):
    def build(rng):
        shape = (2, 3, 5, 6) if ceil else (2, 3, 6, 4)
        return _proj(lambda x: ops.avg_pool2d(x, ceil_mode=ceil)), [_t(rng, *shape)]
    return build


def _unshuffle(rng):
    return _proj(lambda x: ops.pixel_unshuffle(x, 2)), [_t(rng, 2, 3, 4, 6)]


def _shuffle(rng):
    return _proj(lambda x: ops.pixel_shuffle(x, 2)), [_t(rng, 2, 4, 3, 3)]


def _grid_sample(rng):
    h, w = 5, 6
    xy = np.stack([rng.uniform(-0.9, w - 0.1, (2, 6)), rng.uniform(-0.9, h - 0.1, (2, 6))], axis=-1)
    frac = xy - np.floor(xy)
    xy = np.where(np.abs(frac - 0.5) > 0.45, np.floor(xy) + 0.5, xy)  # keep off the integer kinks
    return _proj(ops.grid_sample_bilinear), [_t(rng, 2, 3, h, w), Tensor(xy, requires_grad=True, dtype=np.float64)]


def _warp(rng):
    from .update import warp

    flow = rng.uniform(-1.5, 1.5, (2, 2, 4, 5))
    flow = np.where(np.abs(flow - np.round(flow)) < 0.05, flow + 0.1, flow)
    return _proj(warp), [_t(rng, 2, 3, 4, 5), Tensor(flow, requires_grad=True, dtype=np.float64)]


def _corr_lookup(mode):
    def build(rng):
        from .correlation import RegionEncoder, build_corr_pyramid, lookup_dynamic, lookup_region_encoded

        g = RegionEncoder(np.random.default_rng(3), 4).astype(np.float64) if mode == "region" else None
        flow = Tensor(rng.uniform(-1.2, 1.2, (1, 2, 4, 6)), requires_grad=True, dtype=np.float64)
        radius = Tensor(rng.uniform(1.1, 1.9, (1, 1, 4, 6)), requires_grad=True, dtype=np.float64)

        def f(f1, f2, fl, r):
            pyr = build_corr_pyramid(f1, f2, 2)
            out = lookup_dynamic(pyr, fl, r, 1) if g is None else lookup_region_encoded(pyr, fl, r, 1, g)
            return projected(out, 7)
        return f, [_t(rng, 1, 4, 4, 6), _t(rng, 1, 4, 4, 6), flow, radius]
    return build


def _upsample(rng):
    from .upsampler import ImplicitUpsampler, upsample_flow

    up = ImplicitUpsampler(np.random.default_rng(5), latent_dim=3, n=2, bands=2, width=6, depth=1).astype(np.float64)
    return _proj(lambda fl, lat: upsample_flow(fl, lat, (5, 6), up)), [_t(rng, 1, 2, 2, 3), _t(rng, 1, 3, 2, 3)]


def _gru(rng):
    from .update import ConvGRU

    gru = ConvGRU(np.random.default_rng(6), 3, 2).astype(np.float64)
    return _proj(gru), [_t(rng, 1, 3, 4, 5, lo=-0.9, hi=0.9), _t(rng, 1, 2, 4, 5)]


GRADCHECK_OPS: dict[str, Builder] = {
    "add": _binary(ops.add),
    "sub": _binary(ops.sub),
    "mul": _binary(ops.mul),
    "neg": _unary(ops.neg),
    "relu": _relu,
    "tanh": _unary(ops.tanh),
    "sigmoid": _unary(ops.sigmoid),
    "abs": _abs,
    "clamp": _clamp,
    "softmax": _softmax,
    "softmax_axis1": _softmax_mid,
    "sum": _sum,
    "mean": _mean,
    "l1_loss": _l1,
    "reshape": _reshape,
    "transpose": _transpose,
    "getitem": _getitem,
    "concat": _concat,
    "split": _split,
    "index_select": _index_select,
    "matmul": _matmul,
    "linear": _linear,
    "conv2d": _conv(1, 3, 1),
    "conv2d_stride2": _conv(2, 3, 1),
    "conv2d_1x1": _conv(1, 1, 0),
    "avg_pool2d": _pool(False),
    "avg_pool2d_ceil": _pool(True),
    "pixel_unshuffle": _unshuffle,
    "pixel_shuffle": _shuffle,
    "grid_sample": _grid_sample,
    "warp": _warp,
    "lookup_dynamic": _corr_lookup("dynamic"),
    "lookup_region": _corr_lookup("region"),
    "upsample_flow": _upsample,
    "conv_gru": _gru,
}


def run_gradcheck(name: str, eps: float = 1e-6, seed: int = 0) -> float:
    """Relative error of one registry entry, in 64-bit mode."""
    if name not in GRADCHECK_OPS:
        raise KeyError(f"unknown op {name!r}; known: {', '.join(sorted(GRADCHECK_OPS))}")
    with precision(64):
        fn, inputs = GRADCHECK_OPS[name](np.random.default_rng(seed))
        return grad_check(fn, inputs, eps=eps)
