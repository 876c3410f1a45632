"""Matplotlib report figures written straight to files (Agg backend, no display needed)."""

from __future__ import annotations

import os

import numpy as np

from .metrics import colorize


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


def plot_training(metrics: list[dict], path: str | os.PathLike, window: int = 50) -> None:
    """Loss and EPE per step with a moving average."""
    plt = _pyplot()
    steps = np.array([m["step"] for m in metrics])
    fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
    for ax, key in zip(axes, ("loss", "epe")):
        vals = np.array([m[key] for m in metrics], dtype=float)
        ax.plot(steps, vals, lw=0.5, alpha=0.4, color="tab:blue")
        if len(vals) >= window:
            smooth = np.convolve(vals, np.ones(window) / window, mode="valid")
            ax.plot(steps[window - 1:], smooth, color="tab:red", label=f"{window}-step mean")
            ax.legend()
        ax.set_xlabel("step")
        ax.set_ylabel(key)
        ax.set_yscale("log")
        ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_scale_sweep(rows: list[dict], path: str | os.PathLike) -> None:
    """EPE and F1-all against the input downsampling scale."""
    plt = _pyplot()
    scales = [r["scale"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(scales, [r["epe"] for r in rows], "o-", label="EPE (px)")
    ax.set_xlabel("input scale")
    ax.set_ylabel("EPE (px)")
    ax.invert_xaxis()
    ax.grid(alpha=0.3)
    ax2 = ax.twinx()
    ax2.plot(scales, [r["f1"] for r in rows], "s--", color="tab:orange", label="F1-all (%)")
    ax2.set_ylabel("F1-all (%)")
    fig.legend(loc="upper left")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_flow_panels(panels: list[tuple[str, np.ndarray]], path: str | os.PathLike,
                     max_mag: float | None = None) -> None:
    """Colorized flows side by side under a shared magnitude scale."""
    plt = _pyplot()
    if max_mag is None:
        max_mag = max(float(np.sqrt((f ** 2).sum(axis=0)).max()) for _, f in panels) or 1.0
    fig, axes = plt.subplots(1, len(panels), figsize=(3.2 * len(panels), 2.6), squeeze=False)
    for ax, (title, flow) in zip(axes[0], panels):
        ax.imshow(colorize(flow, max_mag), interpolation="nearest")
        ax.set_title(title, fontsize=9)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
