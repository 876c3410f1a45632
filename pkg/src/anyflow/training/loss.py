from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, ops


def sequence_weights(n: int, gamma: float = 0.8) -> np.ndarray:
    """gamma^(N - i) for i = 1..N; the last prediction always weighs 1."""
    if n < 1:
        raise ValueError("need at least one prediction")
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    return gamma ** np.arange(n - 1, -1, -1, dtype=np.float64)


def sequence_loss(preds: list[Tensor], gt, gamma: float = 0.8) -> Tensor:
    """Weighted sum over iterations of the mean absolute flow error."""
    weights = sequence_weights(len(preds), gamma)
    gt = gt.data if isinstance(gt, Tensor) else np.asarray(gt)
    total = None
    for wt, pred in zip(weights, preds):
        if pred.shape != gt.shape:
            raise ValueError(f"prediction {pred.shape} does not match ground truth {gt.shape}")
        term = ops.mul(ops.l1_loss(pred, gt.astype(pred.dtype)), float(wt))
        total = term if total is None else ops.add(total, term)
    return total
