"""Command-line entry point: ``anyflow <command> [flags]``.

Exit codes: 0 success, 2 usage error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _ranged_float(lo: float, hi: float, lo_open: bool = False):
    def parse(text: str) -> float:
        try:
            v = float(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
        if not np.isfinite(v) or v > hi or v < lo or (lo_open and v == lo):
            bracket = "(" if lo_open else "["
            raise argparse.ArgumentTypeError(f"must lie in {bracket}{lo}, {hi}], got {v}")
        return v
    return parse


def _float_list(lo: float, hi: float):
    item = _ranged_float(lo, hi, lo_open=True)

    def parse(text: str) -> list[float]:
        parts = [p for p in text.split(",") if p.strip()]
        if not parts:
            raise argparse.ArgumentTypeError("expected a comma-separated list of numbers")
        return [item(p) for p in parts]
    return parse


def _default_seed() -> int:
    env = os.environ.get("ANYFLOW_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"ANYFLOW_SEED must be an integer, got {env!r}") from None


def build_parser(default_seed: int = 0) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="anyflow", description="Arbitrary-scale optical flow on a numpy autodiff engine.")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    t = sub.add_parser("train-toy", help="train on synthetic translations and rotations")
    t.add_argument("--steps", type=_positive_int, default=3000)
    t.add_argument("--batch", type=_positive_int, default=4)
    t.add_argument("--p-downsample", type=_ranged_float(0.0, 1.0), default=0.5)
    t.add_argument("--gamma", type=_ranged_float(0.0, 1.0, lo_open=True), default=0.8)
    t.add_argument("--iters", type=_positive_int, default=8, help="refinement iterations per training step")
    t.add_argument("--height", type=_positive_int, default=64)
    t.add_argument("--width", type=_positive_int, default=96)
    t.add_argument("--lr", type=_ranged_float(0.0, 1.0, lo_open=True), default=4e-4)
    t.add_argument("--seed", type=int, default=default_seed)
    t.add_argument("--timing", action="store_true", help="record wall_ms (makes logs run-dependent)")
    t.add_argument("--out", required=True, help="output directory for model.afck, metrics.jsonl, training.png")

    i = sub.add_parser("infer", help="predict flow for one image pair")
    i.add_argument("--ckpt", default=None, help="checkpoint (default: shipped toy model)")
    i.add_argument("--img1", required=True)
    i.add_argument("--img2", required=True)
    i.add_argument("--iters", type=_positive_int, default=12)
    i.add_argument("--scale", type=_ranged_float(0.25, 4.0), default=1.0)
    i.add_argument("--out", required=True, help="output .flo path")
    i.add_argument("--png", default=None, help="optional colorized flow PNG")

    b = sub.add_parser("bench-downsample", help="EPE/F1 when inputs are shrunk and output restored")
    b.add_argument("--ckpt", default=None)
    b.add_argument("--n-samples", type=_positive_int, default=50)
    b.add_argument("--scales", type=_float_list(0.0, 1.0), default=[1.0, 0.9, 0.8, 0.7, 0.6, 0.5])
    b.add_argument("--iters", type=_positive_int, default=12)
    b.add_argument("--jobs", type=_positive_int, default=1)
    b.add_argument("--seed", type=int, default=default_seed)
    b.add_argument("--json", default=None, help="also write the report to this file")
    b.add_argument("--plot", default=None, help="EPE-vs-scale figure (PNG)")

    u = sub.add_parser("upsample-flow", help="implicit upsampling against an interpolation baseline")
    u.add_argument("--ckpt", default=None)
    u.add_argument("--img1", default=None)
    u.add_argument("--img2", default=None)
    u.add_argument("--synthetic", action="store_true",
                   help="use a seeded two-layer scene and report EPE against its analytic flow")
    u.add_argument("--seed", type=int, default=default_seed)
    u.add_argument("--scales", type=_float_list(0.0, 8.0), default=[2.0, 3.0])
    u.add_argument("--baseline", choices=("bicubic", "bilinear"), default="bicubic")
    u.add_argument("--iters", type=_positive_int, default=12)
    u.add_argument("--out-dir", required=True)

    g = sub.add_parser("gradcheck", help="finite-difference check of every differentiable op")
    g.add_argument("--op", default="all")
    g.add_argument("--eps", type=_ranged_float(1e-7, 1e-3), default=1e-6)
    g.add_argument("--tol", type=_ranged_float(0.0, 1.0, lo_open=True), default=None)
    g.add_argument("--seed", type=int, default=default_seed)
    return p


def _require_file(path: str | None, flag: str) -> None:
    if path is not None and not Path(path).is_file():
        raise UsageError(f"{flag}: no such file: {path}")


# -- commands ----------------------------------------------------------------


def cmd_train_toy(args) -> int:
    from .model import ModelConfig
    from .plotting import plot_training
    from .training import TrainConfig, TrainingDiverged, train_loop

    try:
        cfg = TrainConfig(steps=args.steps, batch=args.batch, height=args.height, width=args.width, gamma=args.gamma,
                          p=args.p_downsample, iters=args.iters, lr=args.lr, seed=args.seed, log_timing=args.timing)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def progress(rec):
        if rec["step"] % 100 == 0 or rec["step"] == cfg.steps - 1:
            print(f"step {rec['step']:5d}  loss {rec['loss']:.4f}  epe {rec['epe']:.4f}  "
                  f"radius {rec['mean_radius']:.3f}", file=sys.stderr)

    try:
        res = train_loop(cfg, log_path=out / "metrics.jsonl", ckpt_path=out / "model.afck",
                         model_cfg=ModelConfig(seed=args.seed), progress=progress)
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    plot_training(res.metrics, out / "training.png")
    print(json.dumps({"checkpoint": str(out / "model.afck"), "log": str(out / "metrics.jsonl"),
                      "final_loss": res.metrics[-1]["loss"], "final_epe": res.metrics[-1]["epe"]}))
    return EXIT_OK


def cmd_infer(args) -> int:
    from .evaluation import infer_flow, load_model
    from .flowio import read_image, write_flo, write_image
    from .metrics import colorize

    _require_file(args.ckpt, "--ckpt")
    _require_file(args.img1, "--img1")
    _require_file(args.img2, "--img2")
    img1, img2 = read_image(args.img1), read_image(args.img2)
    if img1.shape != img2.shape:
        raise UsageError(f"images differ in size: {img1.shape[1:]} vs {img2.shape[1:]}")
    model = load_model(args.ckpt)
    flow = infer_flow(model, img1, img2, args.iters, args.scale)
    if not np.isfinite(flow).all():
        print("error: non-finite flow", file=sys.stderr)
        return EXIT_NUMERIC
    write_flo(args.out, flow)
    if args.png:
        write_image(args.png, colorize(flow))
    h, w = flow.shape[1:]
    print(json.dumps({"out": args.out, "height": h, "width": w,
                      "mean_magnitude": float(np.sqrt((flow.astype(np.float64) ** 2).sum(0)).mean())}))
    return EXIT_OK


def cmd_bench_downsample(args) -> int:
    from .evaluation import bench_downsample, bench_samples, default_checkpoint, format_table, load_model
    from .plotting import plot_scale_sweep

    _require_file(args.ckpt, "--ckpt")
    ckpt = args.ckpt or default_checkpoint()
    model = load_model(ckpt)
    samples = bench_samples(args.n_samples, args.seed)
    rows = bench_downsample(model, samples, args.scales, args.iters, args.jobs, ckpt)
    if not all(np.isfinite(r.epe) for r in rows):
        print("error: non-finite EPE", file=sys.stderr)
        return EXIT_NUMERIC
    report = {"n_samples": args.n_samples, "seed": args.seed, "iters": args.iters,
              "rows": [r.as_dict() for r in rows]}
    print(format_table(rows))
    print(json.dumps(report))
    if args.json:
        Path(args.json).write_text(json.dumps(report, indent=1) + "\n")
    if args.plot:
        plot_scale_sweep([r.as_dict() for r in rows], args.plot)
    return EXIT_OK


def cmd_upsample_flow(args) -> int:
    from .evaluation import load_model, quantize, upsample_paths
    from .flowio import read_image, write_flo, write_image
    from .metrics import colorize, epe
    from .plotting import plot_flow_panels
    from .training.synthetic import make_scene

    if args.synthetic == (args.img1 is not None or args.img2 is not None):
        raise UsageError("give either --img1 and --img2, or --synthetic")
    if not args.synthetic and (args.img1 is None or args.img2 is None):
        raise UsageError("--img1 and --img2 must be given together")
    _require_file(args.ckpt, "--ckpt")
    _require_file(args.img1, "--img1")
    _require_file(args.img2, "--img2")
    scene = None
    if args.synthetic:
        scene = make_scene(np.random.default_rng(args.seed), "two_layer", 64, 96, 8.0)
        s1 = scene.render()
        img1, img2 = quantize(s1.img1), quantize(s1.img2)
    else:
        img1, img2 = read_image(args.img1), read_image(args.img2)
        if img1.shape != img2.shape:
            raise UsageError(f"images differ in size: {img1.shape[1:]} vs {img2.shape[1:]}")
    model = load_model(args.ckpt)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = upsample_paths(model, img1, img2, args.scales, args.iters, args.baseline)
    report = []
    for s, (implicit, interp) in paths.items():
        tag = f"x{s:g}"
        write_flo(out / f"implicit_{tag}.flo", implicit)
        write_flo(out / f"{args.baseline}_{tag}.flo", interp)
        row = {"scale": s, "height": implicit.shape[1], "width": implicit.shape[2]}
        panels = [("implicit " + tag, implicit), (f"{args.baseline} " + tag, interp)]
        if scene is not None:
            gt = scene.render(implicit.shape[1], implicit.shape[2]).flow
            row["epe_implicit"] = epe(implicit, gt)
            row[f"epe_{args.baseline}"] = epe(interp, gt)
            panels.append(("ground truth", gt))
        mag = max(float(np.sqrt((f.astype(np.float64) ** 2).sum(0)).max()) for _, f in panels) or 1.0
        write_image(out / f"side_by_side_{tag}.png",
                    np.concatenate([colorize(f, mag) for _, f in panels], axis=1))
        plot_flow_panels(panels, out / f"panels_{tag}.png", mag)
        report.append(row)
    keys = list(report[0].keys())
    print("\t".join(keys))
    for row in report:
        print("\t".join(f"{row[k]:.4f}" if isinstance(row[k], float) else str(row[k]) for k in keys))
    print(json.dumps(report))
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .checks import GRADCHECK_OPS, OP_TOLERANCE, run_gradcheck

    names = sorted(GRADCHECK_OPS) if args.op == "all" else [args.op]
    unknown = [n for n in names if n not in GRADCHECK_OPS]
    if unknown:
        raise UsageError(f"unknown op {unknown[0]!r}; known: all, {', '.join(sorted(GRADCHECK_OPS))}")
    tol = args.tol if args.tol is not None else OP_TOLERANCE
    failed = 0
    for name in names:
        try:
            err = run_gradcheck(name, args.eps, args.seed)
            ok = err < tol
        except FloatingPointError as exc:
            err, ok = float("nan"), False
            print(f"{name}: {exc}", file=sys.stderr)
        failed += not ok
        print(f"{name:<18} {err:.3e}  {'PASS' if ok else 'FAIL'}")
    print(f"{len(names) - failed}/{len(names)} passed (tolerance {tol:g}, eps {args.eps:g})")
    return EXIT_OK if failed == 0 else EXIT_NUMERIC


COMMANDS = {
    "train-toy": cmd_train_toy,
    "infer": cmd_infer,
    "bench-downsample": cmd_bench_downsample,
    "upsample-flow": cmd_upsample_flow,
    "gradcheck": cmd_gradcheck,
}


def main(argv: list[str] | None = None) -> int:
    try:
        parser = build_parser(_default_seed())
    except UsageError as exc:
        print(f"anyflow: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"anyflow {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
