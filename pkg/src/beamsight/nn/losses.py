"""Cross-entropy on softmax probabilities."""

from __future__ import annotations

import numpy as np

from .layers import ShapeError

CLAMP_EPS = 1e-12


def cross_entropy(probabilities: np.ndarray, one_hot_target: np.ndarray) -> float:
    """Negative log-probability of the target class for a single sample.

    ``probabilities`` must already be softmax output; the picked probability
    is clamped at 1e-12 before the log.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    t = np.asarray(one_hot_target, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 1:
        raise ShapeError(f"probability/target length mismatch: {p.shape} vs {t.shape}")
    picked = float(p @ t)
    return -np.log(max(picked, CLAMP_EPS))


def cross_entropy_batch(probabilities: np.ndarray, one_hot_targets: np.ndarray) -> float:
    """Mean cross-entropy over a ``(N, K)`` batch."""
    p = np.asarray(probabilities, dtype=np.float64)
    t = np.asarray(one_hot_targets, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 2:
        raise ShapeError(f"probability/target shape mismatch: {p.shape} vs {t.shape}")
    picked = np.clip((p * t).sum(axis=1), CLAMP_EPS, None)
    return float(-np.log(picked).mean())


def cross_entropy_grad(probabilities: np.ndarray, one_hot_targets: np.ndarray) -> np.ndarray:
    """Gradient of the (mean) cross-entropy w.r.t. the probabilities."""
    p = np.asarray(probabilities, dtype=np.float64)
    t = np.asarray(one_hot_targets, dtype=np.float64)
    if p.shape != t.shape:
        raise ShapeError(f"probability/target shape mismatch: {p.shape} vs {t.shape}")
    scale = p.shape[0] if p.ndim == 2 else 1
    return -t / np.clip(p, CLAMP_EPS, None) / scale
