import numpy as np
import pytest

from anyflow.autodiff import CheckpointError, Tensor, grad_check, no_grad, precision
from anyflow.encoder import ContextEncoder, FeatureEncoder
from anyflow.model import AnyFlow, ModelConfig, tiny_config
from anyflow.training.loss import sequence_loss
from anyflow.training.optim import AdamW


def _frames(seed, n=1, h=64, w=96, dtype=np.float32):
    rng = np.random.default_rng(seed)
    return rng.random((n, 3, h, w)).astype(dtype), rng.random((n, 3, h, w)).astype(dtype)


def test_feature_pyramid_shapes_and_determinism():
    enc = FeatureEncoder(np.random.default_rng(0))
    a, _ = _frames(0, 2)
    p = enc(Tensor(a))
    assert p.f_half.shape == (2, 16, 32, 48)
    assert p.f_quarter.shape == (2, 32, 16, 24)
    assert p.f_eighth.shape == (2, 64, 8, 12)
    q = enc(Tensor(a.copy()))
    for x, y in [(p.f_half, q.f_half), (p.f_quarter, q.f_quarter), (p.f_eighth, q.f_eighth)]:
        np.testing.assert_array_equal(x.data, y.data)
        assert np.all(np.isfinite(x.data))


def test_context_ranges_and_shapes():
    enc = ContextEncoder(np.random.default_rng(1))
    a, _ = _frames(1)
    ctx = enc(Tensor(a * 50 - 25))  # out-of-range input still respects the activations
    assert ctx.hidden.shape == ctx.context.shape == (1, 64, 8, 12)
    assert np.abs(ctx.hidden.data).max() < 1
    assert ctx.context.data.min() >= 0


def test_non_divisible_size_reports_padding():
    enc = FeatureEncoder(np.random.default_rng(0))
    with pytest.raises(ValueError, match="pad by 6 rows and 3 columns"):
        enc(Tensor(np.zeros((1, 3, 34, 45), dtype=np.float32)))


def test_parameter_count_under_budget():
    m = AnyFlow()
    count = sum(p.size for p in m.parameters())
    assert count < 1_500_000


def test_outputs_are_float32_by_default():
    m = AnyFlow(tiny_config())
    a, b = _frames(2, h=16, w=24)
    with no_grad():
        res = m(a, b, iters=1)
    assert res.flows[0].dtype == np.float32


def test_checkpoint_round_trip_reproduces_inference(tmp_path):
    m = AnyFlow(ModelConfig(seed=3, lookup_mode="region"))
    path = tmp_path / "m.afck"
    m.save(path)
    m2 = AnyFlow.load(path)
    assert m2.cfg == m.cfg
    a, b = _frames(3, h=32, w=48)
    with no_grad():
        x = m(a, b, iters=3, target=(40, 60)).flows[-1].data
        y = m2(a, b, iters=3, target=(40, 60)).flows[-1].data
    assert np.abs(x - y).max() <= 1e-6


def test_checkpoint_rejects_garbage(tmp_path):
    p = tmp_path / "bad.afck"
    p.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        AnyFlow.load(p)


@pytest.mark.parametrize("mode", ["dynamic", "region"])
def test_full_pipeline_gradient(mode):
    with precision(64):
        m = AnyFlow(tiny_config(lookup_mode=mode)).astype(np.float64)
        a, b = _frames(4, h=16, w=24, dtype=np.float64)
        gt = np.random.default_rng(5).standard_normal((1, 2, 16, 24))
        params = m.parameters()

        def loss(*_):
            res = m(a, b, iters=2)
            return sequence_loss(res.flows, Tensor(gt), 0.8)

        err = grad_check(loss, params, eps=1e-6, sample=0.02, seed=6)
    assert err < 1e-3


def test_one_train_step_reduces_loss_on_fixed_batch():
    m = AnyFlow(tiny_config(detach=True))
    a, b = _frames(7, 2, 32, 48)
    gt = Tensor(np.random.default_rng(8).standard_normal((2, 2, 32, 48)).astype(np.float32))
    opt = AdamW(m.parameters(), lr=1e-4, weight_decay=0.0)

    def step():
        for p in m.parameters():
            p.grad = None
        loss = sequence_loss(m(a, b, iters=2).flows, gt, 0.8)
        loss.backward()
        return loss.item()

    before = step()
    opt.step()
    with no_grad():
        after = sequence_loss(m(a, b, iters=2).flows, gt, 0.8).item()
    assert after < before
