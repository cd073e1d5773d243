"""Layer implementations for the small CNN stack.

All layers are batch-first: feature maps are ``(N, H, W, C)`` and flat
activations are ``(N, F)``, float64. Forward passes optionally record a
cache dict consumed by the matching backward pass. Convolutions use valid
padding with stride 1; pooling stride equals the pool size. These two
constraints are what make the dense-to-convolution rewrite exact.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Input dimensions incompatible with a layer or network."""


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base class. Subclasses define forward/backward and shape arithmetic."""

    #: parameter attribute names, in serialization order ("w", "b" or empty)
    param_names: tuple[str, ...] = ()

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        raise NotImplementedError

    def forward(self, x: np.ndarray, train: bool = False,
                cache: dict | None = None, rng: np.random.Generator | None = None) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray, cache: dict) -> tuple[np.ndarray, dict[str, np.ndarray]]:
        """Return (dx, parameter gradients)."""
        raise NotImplementedError

    def spec(self) -> str:
        """Constructor string persisted in weight files."""
        raise NotImplementedError


def _relu_backward(dz: np.ndarray, z: np.ndarray) -> np.ndarray:
    return dz * (z > 0.0)


class Conv2D(Layer):
    """Valid 2-D convolution, stride 1, optional fused ReLU.

    Weights are ``(k, k, in_channels, filters)`` so that the row-major
    flattening of a window matches the row-major Flatten order used
    elsewhere in the stack.
    """

    param_names = ("w", "b")

    def __init__(self, filters: int, kernel: int, in_channels: int,
                 activation: str | None = "relu", rng: np.random.Generator | None = None):
        if kernel < 1 or filters < 1 or in_channels < 1:
            raise ValueError("Conv2D needs positive kernel, filters and channels")
        if activation not in (None, "relu"):
            raise ValueError(f"unsupported activation {activation!r}")
        self.filters = filters
        self.kernel = kernel
        self.in_channels = in_channels
        self.activation = activation
        fan_in = kernel * kernel * in_channels
        if rng is None:
            self.w = np.zeros((kernel, kernel, in_channels, filters))
        else:
            self.w = glorot_uniform(rng, (kernel, kernel, in_channels, filters), fan_in, filters)
        self.b = np.zeros(filters)

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"Conv2D expects (H, W, C) input, got {in_shape}")
        h, w, c = in_shape
        if c != self.in_channels:
            raise ShapeError(f"Conv2D expects {self.in_channels} channels, got {c}")
        if self.kernel > h or self.kernel > w:
            raise ShapeError(f"Conv2D kernel {self.kernel} exceeds input extent {(h, w)}")
        k = self.kernel
        return (h - k + 1, w - k + 1, self.filters)

    def _im2col(self, x: np.ndarray) -> np.ndarray:
        k = self.kernel
        v = sliding_window_view(x, (k, k), axis=(1, 2))       # (N, oh, ow, C, k, k)
        col = v.transpose(0, 1, 2, 4, 5, 3)                   # (N, oh, ow, k, k, C)
        n, oh, ow = col.shape[:3]
        return np.ascontiguousarray(col).reshape(n, oh, ow, k * k * self.in_channels)

    def forward(self, x, train=False, cache=None, rng=None):
        self.output_shape(x.shape[1:])
        col = self._im2col(x)
        z = col @ self.w.reshape(-1, self.filters) + self.b
        y = np.maximum(z, 0.0) if self.activation == "relu" else z
        if cache is not None:
            cache["col"] = col
            cache["in_shape"] = x.shape
            if self.activation == "relu":
                cache["z"] = z
        return y

    def backward(self, dy, cache):
        col = cache["col"]
        if self.activation == "relu":
            dy = _relu_backward(dy, cache["z"])
        n, oh, ow, _ = dy.shape
        flat_col = col.reshape(-1, col.shape[-1])
        flat_dy = dy.reshape(-1, self.filters)
        dw = (flat_col.T @ flat_dy).reshape(self.w.shape)
        db = flat_dy.sum(axis=0)
        dcol = (flat_dy @ self.w.reshape(-1, self.filters).T)
        dcol = dcol.reshape(n, oh, ow, self.kernel, self.kernel, self.in_channels)
        dx = np.zeros(cache["in_shape"])
        k = self.kernel
        for dr in range(k):
            for dc in range(k):
                dx[:, dr:dr + oh, dc:dc + ow, :] += dcol[:, :, :, dr, dc, :]
        return dx, {"w": dw, "b": db}

    def spec(self):
        act = self.activation or "linear"
        return f"conv2d:filters={self.filters},kernel={self.kernel},in={self.in_channels},act={act}"


class MaxPool2D(Layer):
    """Max pooling with stride equal to the pool size; trailing remainder
    rows/columns that do not fill a window are dropped."""

    def __init__(self, pool: int = 2):
        if pool < 1:
            raise ValueError("pool size must be >= 1")
        self.pool = pool

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError(f"MaxPool2D expects (H, W, C) input, got {in_shape}")
        h, w, c = in_shape
        if h < self.pool or w < self.pool:
            raise ShapeError(f"MaxPool2D pool {self.pool} exceeds input extent {(h, w)}")
        return (h // self.pool, w // self.pool, c)

    def _windows(self, x: np.ndarray) -> np.ndarray:
        p = self.pool
        n, h, w, c = x.shape
        ph, pw = h // p, w // p
        x = x[:, :ph * p, :pw * p, :]
        x = x.reshape(n, ph, p, pw, p, c).transpose(0, 1, 3, 5, 2, 4)
        return x.reshape(n, ph, pw, c, p * p)

    def forward(self, x, train=False, cache=None, rng=None):
        self.output_shape(x.shape[1:])
        win = self._windows(x)
        if cache is not None:
            idx = win.argmax(axis=-1)
            cache["idx"] = idx
            cache["in_shape"] = x.shape
            return np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
        return win.max(axis=-1)

    def backward(self, dy, cache):
        p = self.pool
        n, h, w, c = cache["in_shape"]
        ph, pw = h // p, w // p
        dwin = np.zeros((n, ph, pw, c, p * p))
        np.put_along_axis(dwin, cache["idx"][..., None], dy[..., None], axis=-1)
        dwin = dwin.reshape(n, ph, pw, c, p, p).transpose(0, 1, 4, 2, 5, 3)
        dx = np.zeros((n, h, w, c))
        dx[:, :ph * p, :pw * p, :] = dwin.reshape(n, ph * p, pw * p, c)
        return dx, {}

    def spec(self):
        return f"maxpool2d:pool={self.pool}"


class Flatten(Layer):
    """Row-major (H, W, C) -> (H*W*C). The dense-to-conv rewrite depends on
    exactly this ordering."""

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x, train=False, cache=None, rng=None):
        if cache is not None:
            cache["in_shape"] = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy, cache):
        return dy.reshape(cache["in_shape"]), {}

    def spec(self):
        return "flatten:"


class Dense(Layer):
    param_names = ("w", "b")

    def __init__(self, units: int, in_features: int,
                 activation: str | None = None, rng: np.random.Generator | None = None):
        if units < 1 or in_features < 1:
            raise ValueError("Dense needs positive unit counts")
        if activation not in (None, "relu"):
            raise ValueError(f"unsupported activation {activation!r}")
        self.units = units
        self.in_features = in_features
        self.activation = activation
        if rng is None:
            self.w = np.zeros((in_features, units))
        else:
            self.w = glorot_uniform(rng, (in_features, units), in_features, units)
        self.b = np.zeros(units)

    def output_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.in_features:
            raise ShapeError(f"Dense expects ({self.in_features},) input, got {in_shape}")
        return (self.units,)

    def forward(self, x, train=False, cache=None, rng=None):
        self.output_shape(x.shape[1:])
        z = x @ self.w + self.b
        y = np.maximum(z, 0.0) if self.activation == "relu" else z
        if cache is not None:
            cache["x"] = x
            if self.activation == "relu":
                cache["z"] = z
        return y

    def backward(self, dy, cache):
        if self.activation == "relu":
            dy = _relu_backward(dy, cache["z"])
        dw = cache["x"].T @ dy
        db = dy.sum(axis=0)
        dx = dy @ self.w.T
        return dx, {"w": dw, "b": db}

    def spec(self):
        act = self.activation or "linear"
        return f"dense:units={self.units},in={self.in_features},act={act}"


class Dropout(Layer):
    """Inverted dropout: scales kept activations by 1/(1-rate) at train
    time and is the identity in eval mode."""

    def __init__(self, rate: float):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x, train=False, cache=None, rng=None):
        if not train or self.rate == 0.0:
            return x
        if rng is None:
            raise RuntimeError("train-mode Dropout requires an rng stream")
        mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        if cache is not None:
            cache["mask"] = mask
        return x * mask

    def backward(self, dy, cache):
        if "mask" in cache:
            return dy * cache["mask"], {}
        return dy, {}

    def spec(self):
        return f"dropout:rate={self.rate}"


class Softmax(Layer):
    """Softmax over the last axis; for feature maps this is per spatial
    position across channels."""

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x, train=False, cache=None, rng=None):
        e = np.exp(x - x.max(axis=-1, keepdims=True))
        y = e / e.sum(axis=-1, keepdims=True)
        if cache is not None:
            cache["y"] = y
        return y

    def backward(self, dy, cache):
        y = cache["y"]
        dot = (dy * y).sum(axis=-1, keepdims=True)
        return y * (dy - dot), {}

    def spec(self):
        return "softmax:"
