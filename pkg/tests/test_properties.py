"""Randomized invariants checked with hypothesis."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from anyflow.autodiff import Tensor, ops
from anyflow.correlation import build_corr_pyramid, lookup_dynamic, lookup_fixed
from anyflow.metrics import epe, f1_all, wheel_position
from anyflow.training.augment import scaled_size
from anyflow.training.loss import sequence_weights
from anyflow.upsampler import make_query_grid, query_count
from anyflow.update import warp

seeds = st.integers(0, 2 ** 32 - 1)
FAST = settings(max_examples=40, deadline=None)


@FAST
@given(h=st.integers(1, 12), w=st.integers(1, 12), ho_extra=st.integers(0, 40), wo_extra=st.integers(0, 40),
       n=st.sampled_from([1, 2, 4]))
def test_query_grid_covers_output(h, w, ho_extra, wo_extra, n):
    ho, wo = h + ho_extra, w + wo_extra
    g = make_query_grid(h, w, ho, wo, n)
    assert g.size == query_count(ho, wo, n)
    assert g.qh * n >= ho and g.qw * n >= wo
    assert 0 <= g.top < n and 0 <= g.left < n
    assert g.neighbors.min() >= 0 and g.neighbors.max() < h * w
    # the chosen cell really is nearest (ties down) on each axis
    assert np.all(np.abs(g.rel) <= 0.5 + 1e-12)


@FAST
@given(seed=seeds, dx=st.integers(-3, 3), dy=st.integers(-3, 3))
def test_integer_warp_is_a_shift(seed, dx, dy):
    f = np.random.default_rng(seed).standard_normal((1, 2, 6, 7))
    flow = np.zeros((1, 2, 6, 7))
    flow[:, 0], flow[:, 1] = dx, dy
    out = warp(Tensor(f), flow).data
    ys, xs = np.mgrid[0:6, 0:7]
    inside = (ys + dy >= 0) & (ys + dy < 6) & (xs + dx >= 0) & (xs + dx < 7)
    np.testing.assert_array_equal(out[..., inside], f[..., (ys + dy)[inside], (xs + dx)[inside]])
    np.testing.assert_array_equal(out[..., ~inside], 0.0)


@FAST
@given(seed=seeds)
def test_dynamic_at_r0_is_fixed(seed):
    rng = np.random.default_rng(seed)
    f1, f2 = (Tensor(rng.standard_normal((1, 8, 4, 5))) for _ in range(2))
    pyr = build_corr_pyramid(f1, f2, 2)
    flow = Tensor(rng.uniform(-3, 3, (1, 2, 4, 5)))
    r = Tensor(np.full((1, 1, 4, 5), 2.0))
    np.testing.assert_allclose(lookup_dynamic(pyr, flow, r, 2).data, lookup_fixed(pyr, flow, 2).data, atol=1e-10)


@FAST
@given(seed=seeds, axis=st.integers(0, 2))
def test_softmax_is_a_distribution(seed, axis):
    x = np.random.default_rng(seed).standard_normal((3, 4, 5)) * 30
    y = ops.softmax(Tensor(x), axis=axis).data
    assert y.min() >= 0
    np.testing.assert_allclose(y.sum(axis=axis), 1.0, atol=1e-12)


@FAST
@given(seed=seeds, scale=st.floats(0.1, 10))
def test_metrics_bounds_and_scaling(seed, scale):
    rng = np.random.default_rng(seed)
    gt = rng.standard_normal((2, 5, 6)) * 10
    pred = gt + rng.standard_normal((2, 5, 6))
    e = epe(pred, gt)
    assert e >= 0
    np.testing.assert_allclose(epe(pred * scale, gt * scale), e * scale, rtol=1e-9)
    assert 0 <= f1_all(pred, gt) <= 100


@FAST
@given(u=st.floats(-1e3, 1e3), v=st.floats(-1e3, 1e3))
def test_wheel_position_in_range(u, v):
    p = float(wheel_position(np.array(u), np.array(v)))
    assert 0 <= p < 55


@FAST
@given(n=st.integers(1, 20), gamma=st.floats(0.01, 1.0))
def test_sequence_weights_shape(n, gamma):
    w = sequence_weights(n, gamma)
    assert len(w) == n and w[-1] == 1.0
    assert np.all(np.diff(w) >= 0)


@FAST
@given(size=st.integers(1, 512), s=st.floats(0.01, 1.0))
def test_scaled_size_is_a_multiple_of_8(size, s):
    out = scaled_size(size, s)
    assert out % 8 == 0 and out >= 8
    assert abs(out - s * size) <= 4 or out == 8
