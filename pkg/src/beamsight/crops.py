"""Sliding-window crop generation, labeling, balancing and splitting.

Crops are W x W windows on a stride-S grid. A crop is labeled as a device
(class 1) when at least 30% of its area lies inside a non-occluded marker
box, else background (class 0). Balancing duplicates device crops, each
copy under a fresh light factor, until the class counts match; the split
keeps all copies of one source crop on the same side of every boundary.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .rng import stream
from .scene import LIGHT_MAX, LIGHT_MIN, MarkerBox, augment_light

BACKGROUND = 0
ANTENNA = 1
OVERLAP_THRESHOLD = 0.30

DATASET_MAGIC = b"BSC1"


class CropError(ValueError):
    """Window/stride geometry or dataset construction problems."""


def crop_count(h: int, l: int, w: int, s: int) -> tuple[int, int, int]:
    """Grid extents and total crop count for an H x L image, window W,
    stride S: rows = floor((H-W)/S)+1, cols = floor((L-W)/S)+1."""
    if w > h or w > l:
        raise CropError(f"window {w} exceeds image extents ({h}, {l})")
    if s < 1:
        raise CropError(f"stride must be >= 1, got {s}")
    rows = (h - w) // s + 1
    cols = (l - w) // s + 1
    return rows, cols, rows * cols


@dataclass(frozen=True)
class CropGrid:
    window: int = 12
    stride: int = 5

    def shape(self, h: int, l: int) -> tuple[int, int]:
        rows, cols, _ = crop_count(h, l, self.window, self.stride)
        return rows, cols

    def origin(self, position: tuple[int, int]) -> tuple[int, int]:
        a, b = position
        return a * self.stride, b * self.stride


def generate_crops(img: np.ndarray, grid: CropGrid):
    """Yield ((row, col), crop) over the grid, row-major from the top left.
    Each crop is an exact pixel copy of its window."""
    h, l = img.shape[:2]
    rows, cols, _ = crop_count(h, l, grid.window, grid.stride)
    w, s = grid.window, grid.stride
    for a in range(rows):
        for b in range(cols):
            r0, c0 = a * s, b * s
            yield (a, b), img[r0:r0 + w, c0:c0 + w].copy()


def _overlap_1d(start: int, extent: int, lo: int, hi: int) -> int:
    return max(0, min(start + extent, hi) - max(start, lo))


def label_crop(position: tuple[int, int], grid: CropGrid,
               markers: list[MarkerBox]) -> int:
    """ANTENNA iff >= 30% of the window area lies inside any non-occluded
    marker box."""
    r0, c0 = grid.origin(position)
    w = grid.window
    area = w * w
    for box in markers:
        if box.occluded:
            continue
        ov = (_overlap_1d(r0, w, box.top, box.top + box.height)
              * _overlap_1d(c0, w, box.left, box.left + box.width))
        if ov >= OVERLAP_THRESHOLD * area:
            return ANTENNA
    return BACKGROUND


def label_grid(shape: tuple[int, int], grid: CropGrid,
               markers: list[MarkerBox]) -> np.ndarray:
    """Vectorized label_crop over an entire grid."""
    rows, cols = shape
    w, s = grid.window, grid.stride
    starts_r = np.arange(rows) * s
    starts_c = np.arange(cols) * s
    out = np.zeros((rows, cols), dtype=np.int64)
    for box in markers:
        if box.occluded:
            continue
        ov_r = np.clip(np.minimum(starts_r + w, box.top + box.height)
                       - np.maximum(starts_r, box.top), 0, None)
        ov_c = np.clip(np.minimum(starts_c + w, box.left + box.width)
                       - np.maximum(starts_c, box.left), 0, None)
        out |= (np.outer(ov_r, ov_c) >= OVERLAP_THRESHOLD * w * w)
    return out


@dataclass(frozen=True)
class CropRef:
    """A crop by reference: source image id, grid position, label, and the
    brightness factor to apply at materialization time."""
    image_id: int
    position: tuple[int, int]
    label: int
    light: float = 1.0

    @property
    def source_key(self) -> tuple[int, int, int]:
        return (self.image_id, *self.position)


class CropDataset:
    """Lazy crop set: refs into a shared image store, materialized per batch."""

    def __init__(self, images: list[np.ndarray], refs: list[CropRef], grid: CropGrid):
        self.images = images
        self.refs = refs
        self.grid = grid

    def __len__(self) -> int:
        return len(self.refs)

    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.refs], dtype=np.int64)

    def materialize(self, indices: np.ndarray) -> np.ndarray:
        w = self.grid.window
        out = np.empty((len(indices), w, w, 3))
        for k, idx in enumerate(indices):
            ref = self.refs[int(idx)]
            r0, c0 = self.grid.origin(ref.position)
            crop = self.images[ref.image_id][r0:r0 + w, c0:c0 + w]
            out[k] = augment_light(crop, ref.light) if ref.light != 1.0 else crop
        return out


def balance_refs(refs: list[CropRef], seed: int) -> list[CropRef]:
    """Duplicate ANTENNA crops, each copy with a fresh light factor, until
    the class counts are equal within one."""
    positives = [r for r in refs if r.label == ANTENNA]
    negatives = [r for r in refs if r.label == BACKGROUND]
    if not positives or not negatives:
        raise CropError("balancing requires at least one crop of each class")
    rng = stream(seed, "balance")
    out = list(refs)
    deficit = len(negatives) - len(positives)
    for k in range(deficit):
        src = positives[int(rng.integers(len(positives)))]
        factor = float(rng.uniform(LIGHT_MIN, LIGHT_MAX))
        out.append(CropRef(src.image_id, src.position, src.label, factor))
    return out


def split_refs(refs: list[CropRef], seed: int,
               fractions: tuple[float, float, float] = (0.70, 0.15, 0.15)
               ) -> tuple[list[CropRef], list[CropRef], list[CropRef]]:
    """Seeded 70/15/15 split that never puts two copies of the same source
    crop on different sides of the train/test boundary.

    Source groups are shuffled and assigned greedily to whichever split has
    the largest remaining deficit toward its target count.
    """
    groups: dict[tuple[int, int, int], list[CropRef]] = {}
    for r in refs:
        groups.setdefault(r.source_key, []).append(r)
    keys = sorted(groups)
    rng = stream(seed, "split")
    rng.shuffle(keys)

    total = len(refs)
    targets = [round(total * f) for f in fractions]
    targets[0] = total - targets[1] - targets[2]
    splits: tuple[list[CropRef], ...] = ([], [], [])
    for key in keys:
        members = groups[key]
        deficits = [targets[i] - len(splits[i]) for i in range(3)]
        dest = int(np.argmax(deficits))
        splits[dest].extend(members)
    return splits


def balance_and_split(images: list[np.ndarray], refs: list[CropRef],
                      grid: CropGrid, seed: int) -> dict[str, CropDataset]:
    """Balance then split; returns train/val/test datasets over a shared
    image store."""
    balanced = balance_refs(refs, seed)
    train, val, test = split_refs(balanced, seed)
    return {name: CropDataset(images, part, grid)
            for name, part in (("train", train), ("val", val), ("test", test))}


# ---------------------------------------------------------------------------
# packed on-disk format: header (magic, W, S, count), then per crop one
# label byte followed by W*W*3 little-endian float32 pixels

def write_crop_file(path: Path, dataset: CropDataset) -> None:
    w = dataset.grid.window
    with open(path, "wb") as f:
        f.write(DATASET_MAGIC)
        f.write(struct.pack("<III", w, dataset.grid.stride, len(dataset)))
        for idx in range(len(dataset)):
            crop = dataset.materialize(np.array([idx]))[0]
            f.write(struct.pack("<B", dataset.refs[idx].label))
            f.write(crop.astype("<f4").tobytes())


def read_crop_file(path: Path) -> tuple[np.ndarray, np.ndarray, CropGrid]:
    """Returns (crops (N,W,W,3) float64, labels (N,), grid)."""
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != DATASET_MAGIC:
        raise CropError(f"not a crop dataset file: {path}")
    w, s, count = struct.unpack("<III", raw[4:16])
    rec = 1 + w * w * 3 * 4
    if len(raw) != 16 + rec * count:
        raise CropError(f"truncated crop dataset file: {path}")
    labels = np.empty(count, dtype=np.int64)
    crops = np.empty((count, w, w, 3))
    off = 16
    for k in range(count):
        labels[k] = raw[off]
        crops[k] = np.frombuffer(raw, dtype="<f4", count=w * w * 3,
                                 offset=off + 1).reshape(w, w, 3)
        off += rec
    return crops, labels, CropGrid(window=w, stride=s)
