"""Sequential network container with explicit train/eval modes.

A network validates that consecutive layer shapes compose at construction
time. Training-mode forward passes record per-layer caches that the next
``backward`` call consumes; eval-mode passes cache nothing and are safe
for concurrent read-only use.
"""

from __future__ import annotations

import numpy as np

from .layers import Conv2D, Dense, Dropout, Layer, ShapeError


class StateError(RuntimeError):
    """Backward called without a preceding train-mode forward."""


class Network:
    def __init__(self, input_shape: tuple[int, ...], layers: list[Layer]):
        self.input_shape = tuple(int(d) for d in input_shape)
        self.layers = list(layers)
        self.training = False
        self._caches: list[dict] | None = None
        # composing shapes validates the topology up front
        self.layer_shapes = self._infer_shapes()

    def _infer_shapes(self) -> list[tuple[int, ...]]:
        shapes = [self.input_shape]
        for lyr in self.layers:
            shapes.append(lyr.output_shape(shapes[-1]))
        return shapes

    @property
    def output_shape(self) -> tuple[int, ...]:
        return self.layer_shapes[-1]

    def train_mode(self) -> "Network":
        self.training = True
        return self

    def eval_mode(self) -> "Network":
        self.training = False
        self._caches = None
        return self

    def forward_batch(self, x: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        """Run a ``(N, *input_shape)`` batch through the network."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"network expects input shape {self.input_shape}, got {x.shape[1:]}")
        if self.training:
            caches: list[dict] = []
            for lyr in self.layers:
                cache: dict = {}
                x = lyr.forward(x, train=True, cache=cache, rng=rng)
                caches.append(cache)
            self._caches = caches
        else:
            for lyr in self.layers:
                x = lyr.forward(x, train=False)
        return x

    def forward(self, x: np.ndarray, rng: np.random.Generator | None = None) -> np.ndarray:
        """Run a single sample of shape ``input_shape``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_shape:
            raise ShapeError(f"network expects input shape {self.input_shape}, got {x.shape}")
        return self.forward_batch(x[None], rng=rng)[0]

    def backward(self, dloss: np.ndarray) -> list[dict[str, np.ndarray]]:
        """Backpropagate ``dloss`` (gradient w.r.t. the network output) through
        the caches of the last train-mode forward.

        Returns one gradient dict per layer, aligned with ``self.layers``;
        parameter-free layers contribute empty dicts.
        """
        if self._caches is None:
            raise StateError("backward requires a prior train-mode forward on this network")
        grads: list[dict[str, np.ndarray]] = [{} for _ in self.layers]
        dy = np.asarray(dloss, dtype=np.float64)
        for i in range(len(self.layers) - 1, -1, -1):
            dy, g = self.layers[i].backward(dy, self._caches[i])
            grads[i] = g
        return grads

    def parameters(self) -> list[np.ndarray]:
        out = []
        for lyr in self.layers:
            for name in lyr.param_names:
                out.append(getattr(lyr, name))
        return out

    def set_parameters(self, values: list[np.ndarray]) -> None:
        it = iter(values)
        for lyr in self.layers:
            for name in lyr.param_names:
                v = next(it)
                cur = getattr(lyr, name)
                if v.shape != cur.shape:
                    raise ShapeError(f"parameter shape mismatch: {v.shape} vs {cur.shape}")
                setattr(lyr, name, np.asarray(v, dtype=np.float64))

    def flatten_grads(self, grads: list[dict[str, np.ndarray]]) -> list[np.ndarray]:
        """Order gradient dicts to match :meth:`parameters`."""
        out = []
        for lyr, g in zip(self.layers, grads):
            for name in lyr.param_names:
                out.append(g[name])
        return out

    def has_active_dropout(self) -> bool:
        return any(isinstance(l, Dropout) and l.rate > 0.0 for l in self.layers)

    def clone_structure(self) -> "Network":
        """New network with the same topology and copied weights."""
        import copy

        layers = []
        for lyr in self.layers:
            c = copy.copy(lyr)
            for name in lyr.param_names:
                setattr(c, name, getattr(lyr, name).copy())
            layers.append(c)
        return Network(self.input_shape, layers)


def assert_finite(arrays, context: str = "") -> None:
    """Debug helper: raise if any array contains non-finite values."""
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError(f"non-finite values encountered {context}")
