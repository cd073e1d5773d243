"""Central-difference verification of backpropagation."""

from __future__ import annotations

import numpy as np

from .losses import cross_entropy, cross_entropy_grad
from .network import Network


class GradCheckError(ValueError):
    """Preconditions for a meaningful gradient check are violated."""


def grad_check(net: Network, x: np.ndarray, one_hot_target: np.ndarray,
               epsilon: float = 1e-5) -> float:
    """Compare analytic gradients against central differences.

    The network is run in train mode on a single sample with cross-entropy
    loss. Dropout must be inactive (rate 0 everywhere): a stochastic layer
    makes finite differences meaningless. Returns the maximum guarded
    relative error over all parameters.
    """
    if not 0.0 < epsilon <= 1e-2:
        raise GradCheckError(f"epsilon must be in (0, 1e-2], got {epsilon}")
    if net.has_active_dropout():
        raise GradCheckError("gradient check requires dropout disabled (rate 0)")

    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(one_hot_target, dtype=np.float64)

    def loss() -> float:
        return cross_entropy(net.forward_batch(x[None])[0], t)

    was_training = net.training
    net.train_mode()
    try:
        probs = net.forward_batch(x[None])
        analytic = net.flatten_grads(net.backward(cross_entropy_grad(probs, t[None])))
        params = net.parameters()
        worst = 0.0
        for p, g in zip(params, analytic):
            flat = p.reshape(-1)
            gflat = g.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + epsilon
                hi = loss()
                flat[i] = orig - epsilon
                lo = loss()
                flat[i] = orig
                numeric = (hi - lo) / (2.0 * epsilon)
                denom = max(abs(gflat[i]) + abs(numeric), 1e-3)
                worst = max(worst, abs(gflat[i] - numeric) / denom)
        return worst
    finally:
        net.training = was_training
        if not was_training:
            net._caches = None
