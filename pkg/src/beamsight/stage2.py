"""Stage 2: best-beam-pair prediction from detection bitmaps.

Beam pairs map bijectively onto 169 class indices. The network keeps the
stage-1 topology with a 169-way output; its input is the binary detection
grid, one channel per camera when views are stacked.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebook import NUM_BEAMS, NUM_PAIRS, BeamIndexError, BeamPair, validate_beam
from .crops import CropGrid
from .nn import (Conv2D, Dense, Dropout, Flatten, MaxPool2D, Network,
                 ShapeError, Softmax)
from .rng import stream
from .stage1 import History, TrainConfig, train_network


def encode_pair(pair: BeamPair) -> int:
    """Class index of a beam pair: (t/2)*13 + (r/2), covering 0..168."""
    validate_beam(pair.t)
    validate_beam(pair.r)
    return (pair.t // 2) * NUM_BEAMS + (pair.r // 2)


def decode_class(c: int) -> BeamPair:
    if not 0 <= c < NUM_PAIRS:
        raise BeamIndexError(f"class index {c} out of range 0..{NUM_PAIRS - 1}")
    return BeamPair((c // NUM_BEAMS) * 2, (c % NUM_BEAMS) * 2)


def stack_bitmaps(maps: list[np.ndarray]) -> np.ndarray:
    """Stack single-channel bitmaps into channels, camera order preserved."""
    if not 1 <= len(maps) <= 8:
        raise ShapeError(f"can stack 1..8 bitmaps, got {len(maps)}")
    shape = maps[0].shape
    for m in maps[1:]:
        if m.shape != shape:
            raise ShapeError(f"bitmap grids differ: {m.shape} vs {shape}")
    return np.stack(maps, axis=-1)


def build_stage2_net(seed: int, grid_shape: tuple[int, int], channels: int = 1) -> Network:
    rng = stream(seed, "stage2-init")
    input_shape = (grid_shape[0], grid_shape[1], channels)
    conv = Conv2D(12, 5, channels, activation="relu", rng=rng)
    pooled = MaxPool2D(2).output_shape(conv.output_shape(input_shape))
    flat = int(np.prod(pooled))
    return Network(input_shape, [
        conv,
        Dropout(0.25),
        MaxPool2D(2),
        Flatten(),
        Dense(128, flat, activation="relu", rng=rng),
        Dropout(0.5),
        Dense(NUM_PAIRS, 128, rng=rng),
        Softmax(),
    ])


class BitmapDataset:
    """Array-backed dataset with the same interface CropDataset offers to
    the shared training loop."""

    def __init__(self, bitmaps: np.ndarray, labels: np.ndarray):
        if len(bitmaps) != len(labels):
            raise ShapeError("bitmap/label count mismatch")
        self.bitmaps = np.asarray(bitmaps, dtype=np.float64)
        self._labels = np.asarray(labels, dtype=np.int64)
        self.grid = CropGrid()

    def __len__(self) -> int:
        return len(self.bitmaps)

    def labels(self) -> np.ndarray:
        return self._labels

    def materialize(self, indices: np.ndarray) -> np.ndarray:
        return self.bitmaps[indices]


@dataclass
class Stage2Result:
    net: Network
    history: History
    test_accuracy: float
    test_indices: np.ndarray
    predictions: np.ndarray   # predicted class per test sample


def split_indices(n: int, seed: int,
                  fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
                  ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    order = stream(seed, "stage2-split").permutation(n)
    n_train = round(n * fractions[0])
    n_val = round(n * fractions[1])
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def train_stage2(bitmaps: np.ndarray, labels: np.ndarray, cfg: TrainConfig,
                 seed: int) -> Stage2Result:
    """Train the pair predictor on (N, rows, cols, channels) bitmaps with
    encoded class labels; 70/15/15 seeded split."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.min() < 0 or labels.max() >= NUM_PAIRS:
        raise BeamIndexError("labels must be encoded pair classes in 0..168")
    tr, va, te = split_indices(len(bitmaps), seed)
    net = build_stage2_net(seed, bitmaps.shape[1:3], bitmaps.shape[3])
    train_ds = BitmapDataset(bitmaps[tr], labels[tr])
    val_ds = BitmapDataset(bitmaps[va], labels[va])
    history = train_network(net, train_ds, val_ds, cfg, seed, classes=NUM_PAIRS)
    net.eval_mode()
    preds = np.empty(len(te), dtype=np.int64)
    for lo in range(0, len(te), 256):
        probs = net.forward_batch(bitmaps[te[lo:lo + 256]])
        preds[lo:lo + len(probs)] = probs.argmax(axis=1)
    acc = float((preds == labels[te]).mean()) if len(te) else 0.0
    return Stage2Result(net, history, acc, te, preds)


def predict_pair(net: Network, bitmap: np.ndarray) -> tuple[BeamPair, float]:
    """Decode the argmax class of the network output; ties resolve to the
    lowest class index."""
    if bitmap.shape != net.input_shape:
        raise ShapeError(f"bitmap shape {bitmap.shape} does not match net input {net.input_shape}")
    net.eval_mode()
    probs = net.forward(np.asarray(bitmap, dtype=np.float64))
    cls = int(probs.argmax())
    return decode_class(cls), float(probs[cls])
