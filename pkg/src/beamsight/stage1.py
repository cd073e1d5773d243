"""Stage 1: the binary device/background crop classifier.

Architecture: Conv2D(12 filters, 5x5, ReLU) -> Dropout(0.25) ->
MaxPool(2x2) -> Flatten -> Dense(128, ReLU) -> Dropout(0.5) -> Dense(2) ->
Softmax. Training uses Adam with cross-entropy; full images become
heatmaps of device probability (one entry per crop) and top-K bitmaps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .crops import ANTENNA, CropDataset, CropError, CropGrid, crop_count
from .nn import (Adam, Conv2D, Dense, Dropout, Flatten, MaxPool2D, Network,
                 ShapeError, Softmax, cross_entropy_batch, cross_entropy_grad)
from .rng import stream

PAPER_GRID_CELLS = 148 * 198     # stride-5 grid on a 750x1000 image
PAPER_TOP_K = 60


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 256
    learning_rate: float = 1e-3
    patience: int = 3            # early stop after this many non-improving epochs


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)


def build_stage1_net(seed: int, input_shape: tuple[int, int, int] = (12, 12, 3),
                     dropout_rates: tuple[float, float] = (0.25, 0.5)) -> Network:
    rng = stream(seed, "stage1-init")
    h, w, c = input_shape
    conv = Conv2D(12, 5, c, activation="relu", rng=rng)
    pooled = MaxPool2D(2).output_shape(conv.output_shape(input_shape))
    flat = int(np.prod(pooled))
    return Network(input_shape, [
        conv,
        Dropout(dropout_rates[0]),
        MaxPool2D(2),
        Flatten(),
        Dense(128, flat, activation="relu", rng=rng),
        Dropout(dropout_rates[1]),
        Dense(2, 128, rng=rng),
        Softmax(),
    ])


def _one_hot(labels: np.ndarray, classes: int) -> np.ndarray:
    out = np.zeros((labels.size, classes))
    out[np.arange(labels.size), labels] = 1.0
    return out


def _dataset_accuracy(net: Network, ds: CropDataset, batch: int = 512) -> float:
    net.eval_mode()
    labels = ds.labels()
    correct = 0
    for lo in range(0, len(ds), batch):
        idx = np.arange(lo, min(lo + batch, len(ds)))
        probs = net.forward_batch(ds.materialize(idx))
        correct += int((probs.argmax(axis=1) == labels[idx]).sum())
    return correct / max(len(ds), 1)


def train_network(net: Network, train_ds: CropDataset, val_ds: CropDataset,
                  cfg: TrainConfig, seed: int, classes: int,
                  labels_override: np.ndarray | None = None,
                  val_labels_override: np.ndarray | None = None) -> History:
    """Generic classifier training loop shared by both stages."""
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise CropError("training requires non-empty train and validation sets")
    opt = Adam(net.parameters(), lr=cfg.learning_rate)
    shuffle_rng = stream(seed, "shuffle")
    dropout_rng = stream(seed, "dropout")
    history = History()
    labels = labels_override if labels_override is not None else train_ds.labels()
    best_val = -1.0
    stale = 0
    best_params = [p.copy() for p in net.parameters()]

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(len(train_ds))
        net.train_mode()
        losses = []
        correct = 0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            x = train_ds.materialize(idx)
            y = _one_hot(labels[idx], classes)
            probs = net.forward_batch(x, rng=dropout_rng)
            losses.append(cross_entropy_batch(probs, y))
            grads = net.backward(cross_entropy_grad(probs, y))
            opt.step(net.parameters(), net.flatten_grads(grads))
            correct += int((probs.argmax(axis=1) == labels[idx]).sum())
        history.train_loss.append(float(np.mean(losses)))
        history.train_acc.append(correct / len(order))

        if val_labels_override is not None:
            val_acc = _accuracy_with_labels(net, val_ds, val_labels_override)
        else:
            val_acc = _dataset_accuracy(net, val_ds)
        history.val_acc.append(val_acc)
        if val_acc > best_val:
            best_val = val_acc
            stale = 0
            best_params = [p.copy() for p in net.parameters()]
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    net.set_parameters(best_params)
    net.eval_mode()
    return history


def _accuracy_with_labels(net: Network, ds: CropDataset, labels: np.ndarray) -> float:
    net.eval_mode()
    correct = 0
    for lo in range(0, len(ds), 512):
        idx = np.arange(lo, min(lo + 512, len(ds)))
        probs = net.forward_batch(ds.materialize(idx))
        correct += int((probs.argmax(axis=1) == labels[idx]).sum())
    return correct / max(len(ds), 1)


def train_stage1(datasets: dict[str, CropDataset], cfg: TrainConfig,
                 seed: int) -> tuple[Network, History, float]:
    """Train the crop classifier; returns (net, history, test accuracy)."""
    net = build_stage1_net(seed)
    history = train_network(net, datasets["train"], datasets["val"], cfg, seed, classes=2)
    test_acc = _dataset_accuracy(net, datasets["test"])
    return net, history, test_acc


# ---------------------------------------------------------------------------
# full-image inference

def heatmap(img: np.ndarray, net: Network, grid: CropGrid) -> np.ndarray:
    """Device-class probability per crop, computed the reference way: one
    forward pass per crop. This is the unoptimized pipeline the FCN
    rewrite is benchmarked against."""
    h, l = img.shape[:2]
    rows, cols, _ = crop_count(h, l, grid.window, grid.stride)
    net.eval_mode()
    w, s = grid.window, grid.stride
    out = np.empty((rows, cols))
    for a in range(rows):
        for b in range(cols):
            crop = np.ascontiguousarray(img[a * s:a * s + w, b * s:b * s + w])
            out[a, b] = net.forward(crop)[ANTENNA]
    return out


def heatmap_batched(img: np.ndarray, net: Network, grid: CropGrid,
                    batch: int = 1024) -> np.ndarray:
    """Same values as :func:`heatmap` (cross-checked in tests), computed by
    batching crops through the network; used for bulk dataset generation."""
    h, l = img.shape[:2]
    rows, cols, total = crop_count(h, l, grid.window, grid.stride)
    net.eval_mode()
    w, s = grid.window, grid.stride
    crops = np.empty((total, w, w, 3))
    k = 0
    for a in range(rows):
        for b in range(cols):
            crops[k] = img[a * s:a * s + w, b * s:b * s + w]
            k += 1
    probs = np.empty(total)
    for lo in range(0, total, batch):
        probs[lo:lo + batch] = net.forward_batch(crops[lo:lo + batch])[:, ANTENNA]
    return probs.reshape(rows, cols)


def bitmap_topk(hm: np.ndarray, k: int) -> np.ndarray:
    """Binary grid with ones at the K most probable cells; ties resolve in
    row-major order."""
    if k > hm.size:
        raise ShapeError(f"top-K {k} exceeds grid size {hm.size}")
    flat = hm.reshape(-1)
    order = np.argsort(-flat, kind="stable")
    out = np.zeros(hm.size, dtype=np.uint8)
    out[order[:k]] = 1
    return out.reshape(hm.shape)


def default_topk(grid_cells: int) -> int:
    """60 at paper scale, proportional to grid area otherwise, never below 8."""
    return max(8, round(PAPER_TOP_K * grid_cells / PAPER_GRID_CELLS))
