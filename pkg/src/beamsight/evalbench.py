"""Evaluation metrics and the inference latency bench.

Covers detection IoU (with the grow-a-rectangle box extraction used on
bitmaps), classification confusion matrices, wall-clock benchmarking of
the per-crop versus single-pass pipelines, and the sweep-latency
comparison against exhaustive beam search.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass

import numpy as np


class MetricError(ValueError):
    """Degenerate metric input (empty bitmap, bad class index, ...)."""


@dataclass(frozen=True)
class Rect:
    top: int
    left: int
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise MetricError(f"rect extents must be >= 1, got {self.height}x{self.width}")

    @property
    def bottom(self) -> int:
        return self.top + self.height

    @property
    def right(self) -> int:
        return self.left + self.width

    @property
    def area(self) -> int:
        return self.height * self.width


def iou(a: Rect, b: Rect) -> float:
    """Intersection over union of two rectangles, in [0, 1]."""
    ih = max(0, min(a.bottom, b.bottom) - max(a.top, b.top))
    iw = max(0, min(a.right, b.right) - max(a.left, b.left))
    inter = ih * iw
    union = a.area + b.area - inter
    return inter / union


def bounding_rect(cells: list[tuple[int, int]]) -> Rect:
    rr = [c[0] for c in cells]
    cc = [c[1] for c in cells]
    return Rect(min(rr), min(cc), max(rr) - min(rr) + 1, max(cc) - min(cc) + 1)


def _two_means(cells: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Split set cells into two clusters by 2-means on coordinates.

    Deterministic init: centroids start at the leftmost and rightmost set
    cells (ties broken by row), which separates the clusters whether they
    differ in column or, for equal device stops, only in row.
    """
    order = np.lexsort((cells[:, 0], cells[:, 1]))   # by column, then row
    centroids = cells[[order[0], order[-1]]].astype(np.float64)
    assign = None
    for _step in range(32):
        d0 = ((cells - centroids[0]) ** 2).sum(axis=1)
        d1 = ((cells - centroids[1]) ** 2).sum(axis=1)
        new_assign = (d1 < d0).astype(np.int64)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for k in (0, 1):
            members = cells[assign == k]
            if len(members):
                centroids[k] = members.mean(axis=0)
    return cells[assign == 0], cells[assign == 1]


def _grow_rect(cluster: np.ndarray, grid_shape: tuple[int, int]) -> Rect:
    """Start a 1x1 rect at the rounded centroid and expand one cell per
    side per iteration, keeping an expansion only when its new strip
    contains a set cell; stop when no side grows."""
    cset = {(int(r), int(c)) for r, c in cluster}
    cr = int(round(float(cluster[:, 0].mean())))
    cc = int(round(float(cluster[:, 1].mean())))
    top, left, bottom, right = cr, cc, cr + 1, cc + 1

    def strip_has_cell(r0, r1, c0, c1):
        return any((r, c) in cset for r in range(r0, r1) for c in range(c0, c1))

    grew = True
    while grew:
        grew = False
        if top > 0 and strip_has_cell(top - 1, top, left, right):
            top -= 1
            grew = True
        if bottom < grid_shape[0] and strip_has_cell(bottom, bottom + 1, left, right):
            bottom += 1
            grew = True
        if left > 0 and strip_has_cell(top, bottom, left - 1, left):
            left -= 1
            grew = True
        if right < grid_shape[1] and strip_has_cell(top, bottom, right, right + 1):
            right += 1
            grew = True
    return Rect(top, left, bottom - top, right - left)


def extract_boxes(bitmap: np.ndarray, tx_band_rows: tuple[int, int] | None = None
                  ) -> tuple[Rect, Rect]:
    """Locate the two device clusters in a binary grid.

    Returns (tx, rx). The transmitter is the cluster whose centroid lies in
    ``tx_band_rows`` (half-open grid-row interval); without a band hint the
    upper cluster is taken as the transmitter.
    """
    cells = np.argwhere(bitmap != 0)
    if len(cells) < 2:
        raise MetricError(f"box extraction needs >= 2 set cells, got {len(cells)}")
    c0, c1 = _two_means(cells)
    if len(c0) == 0 or len(c1) == 0:
        raise MetricError("clustering collapsed to a single cluster")
    r0 = _grow_rect(c0, bitmap.shape)
    r1 = _grow_rect(c1, bitmap.shape)
    m0 = float(c0[:, 0].mean())
    m1 = float(c1[:, 0].mean())
    if tx_band_rows is not None:
        lo, hi = tx_band_rows
        first_is_tx = lo <= m0 < hi
    else:
        first_is_tx = m0 <= m1
    return (r0, r1) if first_is_tx else (r1, r0)


def confusion_matrix(preds: list[int], labels: list[int], n_classes: int) -> np.ndarray:
    """Entry (i, j) counts samples of label i predicted as j."""
    if len(preds) != len(labels):
        raise MetricError(f"prediction/label length mismatch: {len(preds)} vs {len(labels)}")
    out = np.zeros((n_classes, n_classes), dtype=np.int64)
    for p, t in zip(preds, labels):
        if not (0 <= p < n_classes and 0 <= t < n_classes):
            raise MetricError(f"class index out of range: pred={p} label={t}")
        out[t, p] += 1
    return out


# ---------------------------------------------------------------------------
# timing

@dataclass
class TimingStats:
    mean_ms: float
    p50_ms: float
    p95_ms: float
    samples_ms: list[float]


@dataclass
class BenchReport:
    per_stage: dict[str, TimingStats]
    total: TimingStats
    threads: int
    repeats: int


def _stats(samples: list[float]) -> TimingStats:
    arr = np.asarray(samples)
    return TimingStats(float(arr.mean()), float(np.percentile(arr, 50)),
                       float(np.percentile(arr, 95)), [float(s) for s in samples])


def bench_inference(stages: dict[str, callable], images: list[np.ndarray],
                    repeats: int, warmup: int = 3) -> BenchReport:
    """Time a pipeline stage by stage.

    ``stages`` maps stage name to a callable taking (image, previous stage
    output). Runs ``warmup`` untimed passes, then ``repeats`` timed passes
    cycling through ``images``; the harness itself is single-threaded and
    the report states the executing thread count.
    """
    if repeats < 10:
        raise MetricError(f"benchmarking needs >= 10 repeats, got {repeats}")
    if not images:
        raise MetricError("benchmarking needs at least one image")

    def one_pass(img, record):
        out = None
        total = 0.0
        for name, fn in stages.items():
            t0 = time.perf_counter()
            out = fn(img, out)
            dt = (time.perf_counter() - t0) * 1e3
            total += dt
            if record is not None:
                record.setdefault(name, []).append(dt)
        return total

    for k in range(warmup):
        one_pass(images[k % len(images)], None)
    per_stage: dict[str, list[float]] = {}
    totals = []
    for k in range(repeats):
        totals.append(one_pass(images[k % len(images)], per_stage))
    return BenchReport({n: _stats(v) for n, v in per_stage.items()},
                       _stats(totals), threads=_thread_count(), repeats=repeats)


def _thread_count() -> int:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        if os.environ.get(var, "").isdigit():
            return int(os.environ[var])
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# sweep latency comparison

@dataclass(frozen=True)
class LatencyReport:
    predicted_ms: float
    dwell_ms: float
    pairs: int
    sweep_ms: float
    reduction: float


def latency_report(t_pred_ms: float, dwell_ms: float, pairs: int) -> LatencyReport:
    """Compare prediction latency against an exhaustive sweep of
    ``pairs`` beam pairs at ``dwell_ms`` per pair."""
    if t_pred_ms <= 0 or dwell_ms <= 0 or pairs <= 0:
        raise MetricError("latency inputs must all be positive")
    sweep = dwell_ms * pairs
    return LatencyReport(t_pred_ms, dwell_ms, pairs, sweep, 1.0 - t_pred_ms / sweep)
