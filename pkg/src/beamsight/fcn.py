"""Dense-to-convolution rewrite for single-pass full-image inference.

The crop classifier ends in Flatten + Dense layers, so it only accepts one
window at a time. Rewriting each Dense layer as a convolution — the first
one after Flatten with a kernel matching the pre-Flatten feature map, the
rest as 1x1 convolutions — produces a network that slides the classifier
over every aligned window position of an arbitrarily large image in one
forward pass. Because the weight reshape follows the same row-major
(row, col, channel) order Flatten used, the rewritten network is exactly
equivalent at window offsets aligned with the pooling grid.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .nn import Conv2D, Dense, Dropout, Flatten, MaxPool2D, Network, ShapeError, Softmax
from .rng import stream


class ConversionError(ValueError):
    """Source topology not supported by the rewrite."""


def convert_cnn_to_fcn(net: Network) -> Network:
    """Rewrite a crop classifier into its fully convolutional equivalent.

    The source must contain exactly one Flatten followed only by Dense,
    Dropout and Softmax layers. Dropout layers are dropped (the result is
    an inference-only network); the source is left untouched.
    """
    flatten_positions = [i for i, l in enumerate(net.layers) if isinstance(l, Flatten)]
    if len(flatten_positions) != 1:
        raise ConversionError(f"expected exactly one Flatten layer, found {len(flatten_positions)}")
    split = flatten_positions[0]
    for lyr in net.layers[split + 1:]:
        if not isinstance(lyr, (Dense, Dropout, Softmax)):
            raise ConversionError(f"layer {type(lyr).__name__} after Flatten is not convertible")

    fh, fw, fd = net.layer_shapes[split]   # pre-Flatten feature map shape

    new_layers = []
    for lyr in net.layers[:split]:
        if isinstance(lyr, Dropout):
            continue
        if isinstance(lyr, Conv2D):
            copy = Conv2D(lyr.filters, lyr.kernel, lyr.in_channels, lyr.activation)
            copy.w = lyr.w.copy()
            copy.b = lyr.b.copy()
            new_layers.append(copy)
        else:
            new_layers.append(type(lyr)(**_ctor_args(lyr)))

    first_dense = True
    for lyr in net.layers[split + 1:]:
        if isinstance(lyr, Dropout):
            continue
        if isinstance(lyr, Softmax):
            new_layers.append(Softmax())
            continue
        d_in, d_out = lyr.w.shape
        if first_dense:
            if d_in != fh * fw * fd:
                raise ConversionError(
                    f"Dense input {d_in} does not match flattened map {fh}x{fw}x{fd}")
            conv = Conv2D(d_out, fh, fd, lyr.activation)
            if fh != fw:
                raise ConversionError("non-square pre-Flatten maps are not supported")
            conv.w = lyr.w.reshape(fh, fw, fd, d_out).copy()
            first_dense = False
        else:
            conv = Conv2D(d_out, 1, d_in, lyr.activation)
            conv.w = lyr.w.reshape(1, 1, d_in, d_out).copy()
        conv.b = lyr.b.copy()
        new_layers.append(conv)

    h, w, c = net.input_shape
    return Network((h, w, c), new_layers)


def _ctor_args(lyr) -> dict:
    if isinstance(lyr, MaxPool2D):
        return {"pool": lyr.pool}
    raise ConversionError(f"layer {type(lyr).__name__} before Flatten is not convertible")


def fcn_output_shape(fcn: Network, rows: int, cols: int) -> tuple[int, ...]:
    """Shape of the dense prediction grid for a rows x cols input."""
    shape: tuple[int, ...] = (rows, cols, fcn.input_shape[2])
    for lyr in fcn.layers:
        shape = lyr.output_shape(shape)
    return shape


def fcn_infer(fcn: Network, img: np.ndarray) -> np.ndarray:
    """Single-pass dense prediction over a whole image."""
    h, l = img.shape[:2]
    if h < fcn.input_shape[0] or l < fcn.input_shape[1]:
        raise ShapeError(f"image {(h, l)} smaller than the network window {fcn.input_shape[:2]}")
    wide = Network((h, l, img.shape[2]), fcn.layers)
    wide.eval_mode()
    return wide.forward(np.asarray(img, dtype=np.float64))


def equivalence_check(cnn: Network, fcn: Network, img: np.ndarray,
                      trials: int = 100, seed: int = 0) -> float:
    """Certify the rewrite: at ``trials`` random even-aligned offsets
    (2a, 2b), compare the dense grid entry (a, b) against the original
    classifier run on the window at (2a, 2b). Returns the max abs
    difference across all trials and both class probabilities.

    Offsets are restricted to even alignment because the 2x2 pooling grid
    of the slid classifier only coincides with the full-image pooling grid
    there.
    """
    cnn.eval_mode()
    grid = fcn_infer(fcn, img)
    gh, gw = grid.shape[:2]
    wh, ww = cnn.input_shape[:2]
    rng = stream(seed, "equivalence")
    worst = 0.0
    for _ in range(trials):
        a = int(rng.integers(gh))
        b = int(rng.integers(gw))
        crop = np.ascontiguousarray(img[2 * a:2 * a + wh, 2 * b:2 * b + ww])
        ref = cnn.forward(crop)
        worst = max(worst, float(np.abs(grid[a, b] - ref).max()))
    return worst


class FcnFastPath:
    """Preplanned single-precision executor for a converted network.

    The converted f64 network is the correctness artifact (used by the
    equivalence check); this walks the same layers with float32 buffers
    and fused im2col/GEMM steps for the latency benchmark, where single
    precision is permitted.
    """

    def __init__(self, fcn: Network):
        self.plan = []
        for lyr in fcn.layers:
            if isinstance(lyr, Conv2D):
                w = lyr.w.astype(np.float32).reshape(-1, lyr.filters)
                self.plan.append(("conv", lyr.kernel, w, lyr.b.astype(np.float32),
                                  lyr.activation == "relu"))
            elif isinstance(lyr, MaxPool2D):
                self.plan.append(("pool", lyr.pool))
            elif isinstance(lyr, Softmax):
                self.plan.append(("softmax",))
            else:
                raise ConversionError(f"unexpected layer {type(lyr).__name__} in an FCN")

    def __call__(self, img: np.ndarray) -> np.ndarray:
        x = np.asarray(img, dtype=np.float32)
        for step in self.plan:
            if step[0] == "conv":
                _, k, w, b, relu = step
                if k == 1:
                    z = x @ w.reshape(x.shape[-1], -1) + b
                else:
                    v = sliding_window_view(x, (k, k), axis=(0, 1))
                    col = np.ascontiguousarray(v.transpose(0, 1, 3, 4, 2))
                    z = col.reshape(*col.shape[:2], -1) @ w + b
                x = np.maximum(z, 0.0, out=z) if relu else z
            elif step[0] == "pool":
                p = step[1]
                h, l, c = x.shape
                ph, pw = h // p, l // p
                x = x[:ph * p, :pw * p].reshape(ph, p, pw, p, c).max(axis=(1, 3))
            else:
                e = np.exp(x - x.max(axis=-1, keepdims=True))
                x = e / e.sum(axis=-1, keepdims=True)
        return x
