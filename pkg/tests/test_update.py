import numpy as np
import pytest

from anyflow.autodiff import Tensor, no_grad, ops, precision
from anyflow.correlation import update_radius
from anyflow.model import AnyFlow, ModelConfig, tiny_config
from anyflow.update import ConvGRU, UpdateBlock, intermediate_flows, multiscale_warp_fuse, warp


def _feat(seed=0, shape=(2, 3, 5, 7)):
    return Tensor(np.random.default_rng(seed).standard_normal(shape))


def test_zero_flow_warp_is_identity():
    f = _feat()
    out = warp(f, np.zeros((2, 2, 5, 7)))
    np.testing.assert_array_equal(out.data, f.data)


@pytest.mark.parametrize("dx,dy", [(1, 0), (0, 1), (-2, 1), (3, -2)])
def test_integer_flow_shifts_exactly(dx, dy):
    f = _feat(1)
    flow = np.zeros((2, 2, 5, 7))
    flow[:, 0], flow[:, 1] = dx, dy
    out = warp(f, flow).data
    h, w = 5, 7
    ref = np.zeros_like(f.data)
    for y in range(h):
        for x in range(w):
            if 0 <= y + dy < h and 0 <= x + dx < w:
                ref[:, :, y, x] = f.data[:, :, y + dy, x + dx]
    np.testing.assert_array_equal(out, ref)


def test_half_pixel_warp_is_midpoint():
    f = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
    flow = np.zeros((1, 2, 2, 2))
    flow[:, 0] = 0.5
    assert warp(f, flow).data[0, 0, 0, 0] == 1.5


def test_warp_composition_for_integer_shifts():
    f = _feat(2, (1, 2, 9, 9))
    a, b = np.zeros((1, 2, 9, 9)), np.zeros((1, 2, 9, 9))
    a[:, 0], a[:, 1] = 1, -1
    b[:, 0], b[:, 1] = 2, 1
    twice = warp(warp(f, a), b).data
    once = warp(f, a + b).data
    # agree wherever neither intermediate sample fell into padding
    np.testing.assert_array_equal(twice[..., 0:7, 0:6], once[..., 0:7, 0:6])


def test_warp_rejects_mismatched_flow():
    with pytest.raises(ValueError):
        warp(_feat(), np.zeros((2, 2, 4, 7)))


@pytest.fixture(scope="module")
def model():
    return AnyFlow(ModelConfig())


def test_identical_frames_zero_flow_warp_to_reference(model):
    img = np.random.default_rng(3).random((1, 3, 32, 48)).astype(np.float32)
    with no_grad():
        pyr1, pyr2, ctx = model.encode(Tensor(img), Tensor(img))
        zero = Tensor(np.zeros((1, 2, 4, 6), dtype=np.float32))
        keep = {}
        fused = multiscale_warp_fuse(pyr1, pyr2, zero, ctx.hidden, model.upsampler, model.fusion, keep=keep)
    np.testing.assert_array_equal(keep["warped_half"].data, pyr1.f_half.data)
    np.testing.assert_array_equal(keep["warped_quarter"].data, pyr1.f_quarter.data)
    assert fused.shape == (1, model.cfg.fused_dim, 4, 6)


def test_intermediate_flow_units(model):
    flow = Tensor(np.ones((1, 2, 4, 6), dtype=np.float32))
    latent = Tensor(np.random.default_rng(4).standard_normal((1, 64, 4, 6)).astype(np.float32))
    with no_grad():
        half, quarter = intermediate_flows(flow, latent, (32, 48), model.upsampler)
    assert half.shape == (1, 2, 16, 24) and quarter.shape == (1, 2, 8, 12)
    np.testing.assert_allclose(half.data, 4.0, rtol=1e-6)
    np.testing.assert_allclose(quarter.data, 2.0, rtol=1e-6)


def test_gru_state_stays_in_open_unit_interval():
    rng = np.random.default_rng(5)
    gru = ConvGRU(rng, 8, 6)
    h = Tensor(np.tanh(rng.standard_normal((1, 8, 4, 5)) * 3).astype(np.float32))
    for _ in range(5):
        h = gru(h, Tensor(rng.standard_normal((1, 6, 4, 5)).astype(np.float32) * 10))
        assert np.abs(h.data).max() < 1


def test_update_block_shapes_and_zero_radius_head():
    rng = np.random.default_rng(6)
    blk = UpdateBlock(rng, corr_channels=36, hidden_dim=16, context_dim=8, fused_dim=4, motion_dim=12)
    t = lambda c: Tensor(rng.standard_normal((2, c, 4, 6)).astype(np.float32))  # noqa: E731
    hidden, dflow, dr = blk(Tensor(np.tanh(t(16).data)), t(8), t(36), t(2), t(4))
    assert hidden.shape == (2, 16, 4, 6)
    assert dflow.shape == (2, 2, 4, 6)
    assert dr.shape == (2, 1, 4, 6)
    assert np.all(dr.data == 0)


def test_zero_flow_head_keeps_flow_stationary():
    m = AnyFlow(tiny_config(detach=True))
    m.update.flow_head.conv2.weight.data[...] = 0
    m.update.flow_head.conv2.bias.data[...] = 0
    rng = np.random.default_rng(7)
    a, b = rng.random((2, 1, 3, 16, 24))
    with no_grad():
        res = m(a, b, iters=3)
    assert np.all(res.flow.data == 0)
    assert all(np.all(f.data == 0) for f in res.flows)


def test_accumulation_identity_and_radius_bounds(model):
    rng = np.random.default_rng(8)
    a, b = rng.random((2, 1, 3, 32, 48)).astype(np.float32)
    with no_grad():
        res = model(a, b, iters=4)
    total = np.zeros_like(res.flow.data)
    for d in res.deltas:
        total = total + d.data
    np.testing.assert_array_equal(res.flow.data, total)
    assert len(res.flows) == 4
    for r in res.radii:
        assert r.data.min() >= model.cfg.r_min and r.data.max() <= model.cfg.r_max


def test_single_iteration_yields_one_flow(model):
    img = np.random.default_rng(9).random((1, 3, 16, 24)).astype(np.float32)
    with no_grad():
        res = model(img, img, iters=1, target=(32, 48))
    assert len(res.flows) == 1
    assert res.flows[0].shape == (1, 2, 32, 48)


def test_radius_update_is_clamped():
    r = update_radius(Tensor(np.array([[[[-100.0, 0.0, 100.0]]]])), Tensor(np.full((1, 1, 1, 3), 4.0)))
    np.testing.assert_array_equal(r.data, [[[[1.0, 4.0, 16.0]]]])


def test_inference_is_deterministic(model):
    rng = np.random.default_rng(10)
    a, b = rng.random((2, 1, 3, 16, 24)).astype(np.float32)
    with no_grad():
        x = model(a, b, iters=2).flows[-1].data
        y = model(a, b, iters=2).flows[-1].data
    np.testing.assert_array_equal(x, y)


def test_zero_iterations_rejected(model):
    img = np.zeros((1, 3, 16, 24), dtype=np.float32)
    with pytest.raises(ValueError):
        model(img, img, iters=0)


def test_gradients_reach_every_parameter():
    with precision(64):
        m = AnyFlow(tiny_config(lookup_mode="region")).astype(np.float64)
        rng = np.random.default_rng(11)
        a, b = rng.random((2, 1, 3, 16, 24))
        res = m(a, b, iters=2)
        ops.sum(ops.mul(res.flows[-1], Tensor(rng.standard_normal(res.flows[-1].shape)))).backward()
    dead = [n for n, p in m.named_parameters() if p.grad is None or not np.any(p.grad)]
    # the radius head's last layer starts at zero, which blocks its first layer until it moves
    assert dead == ["update.radius_head.conv1.weight", "update.radius_head.conv1.bias"]
    assert np.any(m.update.radius_head.conv2.weight.grad)
