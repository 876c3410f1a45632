import json

import numpy as np
import pytest

from anyflow import cli
from anyflow.autodiff import ops
from anyflow.evaluation import bench_samples, default_checkpoint
from anyflow.flowio import read_flo, write_image
from anyflow.metrics import epe
from anyflow.model import AnyFlow, ModelConfig


@pytest.fixture(scope="module")
def ckpt(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "rand.afck"
    AnyFlow(ModelConfig(seed=5)).save(path)
    return str(path)


@pytest.fixture(scope="module")
def pair(tmp_path_factory):
    d = tmp_path_factory.mktemp("imgs")
    s = bench_samples(1, seed=4)[0]
    write_image(d / "a.png", s.img1)
    write_image(d / "b.png", s.img2)
    odd = np.random.default_rng(0).random((3, 30, 45))
    write_image(d / "odd1.png", odd)
    write_image(d / "odd2.png", odd[:, :, ::-1].copy())
    write_image(d / "small.png", odd[:, :16, :16])
    return d, s


def _json_tail(out: str):
    return json.loads(out.strip().splitlines()[-1])


# -- usage errors ----------------------------------------------------------------

@pytest.mark.parametrize("argv", [
    [],
    ["frobnicate"],
    ["train-toy", "--gamma", "1.5", "--out", "x"],
    ["train-toy", "--gamma", "0", "--out", "x"],
    ["train-toy", "--steps", "0", "--out", "x"],
    ["train-toy", "--p-downsample", "2", "--out", "x"],
    ["train-toy", "--height", "60", "--out", "x"],
    ["train-toy", "--steps", "3"],
    ["infer", "--img1", "nope.png", "--img2", "nope.png", "--out", "f.flo"],
    ["infer", "--scale", "9", "--img1", "a", "--img2", "b", "--out", "f.flo"],
    ["bench-downsample", "--scales", "1.0,abc"],
    ["bench-downsample", "--scales", "1.5"],
    ["upsample-flow", "--out-dir", "o"],
    ["gradcheck", "--op", "nosuchop"],
    ["gradcheck", "--eps", "0.5"],
])
def test_usage_errors_exit_2(argv, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert cli.main(argv) == 2
    assert list(tmp_path.iterdir()) == []  # nothing written before validation


def test_bad_seed_env_is_usage_error(monkeypatch):
    monkeypatch.setenv("ANYFLOW_SEED", "twelve")
    assert cli.main(["gradcheck", "--op", "add"]) == 2


def test_help_exits_zero(capsys):
    assert cli.main(["--help"]) == 0
    assert "train-toy" in capsys.readouterr().out


# -- train-toy -------------------------------------------------------------------

TINY_TRAIN = ["--steps", "3", "--batch", "1", "--height", "32", "--width", "48", "--iters", "2"]


def test_train_is_reproducible_and_loadable(tmp_path, capsys):
    for name in ("a", "b"):
        assert cli.main(["train-toy", *TINY_TRAIN, "--seed", "1", "--out", str(tmp_path / name)]) == 0
    log_a = (tmp_path / "a" / "metrics.jsonl").read_bytes()
    assert log_a == (tmp_path / "b" / "metrics.jsonl").read_bytes()
    assert len(log_a.splitlines()) == 3
    assert (tmp_path / "a" / "training.png").stat().st_size > 0
    ckpt_a = (tmp_path / "a" / "model.afck").read_bytes()
    assert ckpt_a == (tmp_path / "b" / "model.afck").read_bytes()
    AnyFlow.load(tmp_path / "a" / "model.afck")


def test_seed_env_sets_default(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("ANYFLOW_SEED", "1")
    assert cli.main(["train-toy", *TINY_TRAIN, "--out", str(tmp_path / "env")]) == 0
    assert cli.main(["train-toy", *TINY_TRAIN, "--seed", "1", "--out", str(tmp_path / "flag")]) == 0
    assert cli.main(["train-toy", *TINY_TRAIN, "--seed", "2", "--out", str(tmp_path / "other")]) == 0
    env = (tmp_path / "env" / "metrics.jsonl").read_bytes()
    assert env == (tmp_path / "flag" / "metrics.jsonl").read_bytes()
    assert env != (tmp_path / "other" / "metrics.jsonl").read_bytes()


# -- infer ------------------------------------------------------------------------

@pytest.mark.parametrize("scale,shape", [("1.0", (64, 96)), ("2.0", (128, 192)), ("0.5", (32, 48))])
def test_infer_output_dims(ckpt, pair, tmp_path, capsys, scale, shape):
    d, _ = pair
    out = tmp_path / "f.flo"
    argv = ["infer", "--ckpt", ckpt, "--img1", str(d / "a.png"), "--img2", str(d / "b.png"),
            "--iters", "2", "--scale", scale, "--out", str(out), "--png", str(tmp_path / "f.png")]
    assert cli.main(argv) == 0
    assert read_flo(out).shape == shape + (2,)
    assert (tmp_path / "f.png").exists()
    assert _json_tail(capsys.readouterr().out)["height"] == shape[0]


def test_infer_pads_and_crops_odd_sizes(ckpt, pair, tmp_path, capsys):
    d, _ = pair
    out = tmp_path / "odd.flo"
    assert cli.main(["infer", "--ckpt", ckpt, "--img1", str(d / "odd1.png"), "--img2", str(d / "odd2.png"),
                     "--iters", "2", "--out", str(out)]) == 0
    assert read_flo(out).shape == (30, 45, 2)


def test_infer_rejects_size_mismatch(ckpt, pair, tmp_path, capsys):
    d, _ = pair
    assert cli.main(["infer", "--ckpt", ckpt, "--img1", str(d / "a.png"), "--img2", str(d / "small.png"),
                     "--out", str(tmp_path / "x.flo")]) == 2
    assert not (tmp_path / "x.flo").exists()


def test_shipped_checkpoint_is_still_on_identical_frames(pair, tmp_path, capsys):
    d, _ = pair
    out = tmp_path / "same.flo"
    assert cli.main(["infer", "--img1", str(d / "a.png"), "--img2", str(d / "a.png"), "--out", str(out)]) == 0
    flow = read_flo(out).astype(np.float64)
    assert np.sqrt((flow ** 2).sum(-1)).mean() < 0.5


# -- bench-downsample ----------------------------------------------------------------

def test_bench_rows_and_scale_one_consistency(ckpt, pair, tmp_path, capsys):
    report_path, plot_path = tmp_path / "r.json", tmp_path / "r.png"
    argv = ["bench-downsample", "--ckpt", ckpt, "--n-samples", "2", "--scales", "1.0,0.75,0.5", "--iters", "2",
            "--seed", "4", "--json", str(report_path), "--plot", str(plot_path)]
    assert cli.main(argv) == 0
    out = capsys.readouterr().out
    table = out.strip().splitlines()[:-1]
    assert len(table) == 1 + 3
    report = _json_tail(out)
    assert [r["scale"] for r in report["rows"]] == [1.0, 0.75, 0.5]
    assert json.loads(report_path.read_text()) == report
    assert plot_path.stat().st_size > 0
    assert report["rows"][2]["input_h"] == 32 and report["rows"][2]["input_w"] == 48

    # sample 0 at scale 1.0, recomputed through `infer` and a separate EPE
    d, s = pair
    flo = tmp_path / "s0.flo"
    assert cli.main(["infer", "--ckpt", ckpt, "--img1", str(d / "a.png"), "--img2", str(d / "b.png"),
                     "--iters", "2", "--out", str(flo)]) == 0
    manual = epe(read_flo(flo).transpose(2, 0, 1), s.flow)
    assert abs(manual - report["rows"][0]["per_sample_epe"][0]) <= 1e-6


def test_bench_parallel_matches_serial(ckpt, capsys):
    base = ["bench-downsample", "--ckpt", ckpt, "--n-samples", "2", "--scales", "1.0,0.5", "--iters", "1"]
    assert cli.main(base) == 0
    serial = _json_tail(capsys.readouterr().out)
    assert cli.main(base + ["--jobs", "2"]) == 0
    assert _json_tail(capsys.readouterr().out) == serial


# -- upsample-flow -----------------------------------------------------------------

def test_upsample_scale_one_matches_infer(ckpt, pair, tmp_path, capsys):
    d, _ = pair
    imgs = ["--img1", str(d / "a.png"), "--img2", str(d / "b.png")]
    assert cli.main(["upsample-flow", "--ckpt", ckpt, *imgs, "--scales", "1", "--iters", "2",
                     "--out-dir", str(tmp_path / "u")]) == 0
    assert cli.main(["infer", "--ckpt", ckpt, *imgs, "--iters", "2", "--out", str(tmp_path / "i.flo")]) == 0
    ref = read_flo(tmp_path / "i.flo")
    for name in ("implicit_x1.flo", "bicubic_x1.flo"):
        assert np.abs(read_flo(tmp_path / "u" / name) - ref).max() <= 1e-6


def test_upsample_synthetic_report(ckpt, tmp_path, capsys):
    out_dir = tmp_path / "syn"
    assert cli.main(["upsample-flow", "--ckpt", ckpt, "--synthetic", "--seed", "2", "--scales", "2,3",
                     "--baseline", "bilinear", "--iters", "2", "--out-dir", str(out_dir)]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out[0].split("\t") == ["scale", "height", "width", "epe_implicit", "epe_bilinear"]
    report = json.loads(out[-1])
    assert [(r["height"], r["width"]) for r in report] == [(128, 192), (192, 288)]
    for tag in ("x2", "x3"):
        a = read_flo(out_dir / f"implicit_{tag}.flo")
        assert a.shape == read_flo(out_dir / f"bilinear_{tag}.flo").shape
        assert (out_dir / f"side_by_side_{tag}.png").exists() and (out_dir / f"panels_{tag}.png").exists()


def test_upsample_needs_exactly_one_source(ckpt, pair, tmp_path, capsys):
    d, _ = pair
    assert cli.main(["upsample-flow", "--ckpt", ckpt, "--synthetic", "--img1", str(d / "a.png"),
                     "--img2", str(d / "b.png"), "--out-dir", str(tmp_path / "z")]) == 2
    assert cli.main(["upsample-flow", "--ckpt", ckpt, "--img1", str(d / "a.png"),
                     "--out-dir", str(tmp_path / "z")]) == 2
    assert not (tmp_path / "z").exists()


# -- gradcheck -----------------------------------------------------------------------

def test_gradcheck_softmax(capsys):
    assert cli.main(["gradcheck", "--op", "softmax"]) == 0
    line = capsys.readouterr().out.splitlines()[0].split()
    assert line[0] == "softmax" and line[-1] == "PASS"
    assert float(line[1]) < 1e-7


def test_gradcheck_all(capsys):
    assert cli.main(["gradcheck", "--op", "all"]) == 0
    assert capsys.readouterr().out.splitlines()[-1].startswith("35/35 passed")


def test_gradcheck_corrupted_conv_fails(monkeypatch, capsys):
    real = ops._conv2d_backward

    def broken(*args, **kw):
        gx, gw, gb = real(*args, **kw)
        return gx, gw * 1.01, gb

    monkeypatch.setattr(ops, "_conv2d_backward", broken)
    assert cli.main(["gradcheck", "--op", "conv2d"]) == 3
    assert "FAIL" in capsys.readouterr().out


def test_default_checkpoint_is_packaged():
    AnyFlow.load(default_checkpoint())
