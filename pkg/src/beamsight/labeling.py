"""Link-quality scoring and best-beam-pair labeling.

The quality of a pair is the mean of its valid SNR samples divided by
(number of NaN dropouts + 1); a pair with no valid samples at all gets a
-inf sentinel so the argmax silently avoids it. Each case's label is the
pair with the highest quality, ties broken toward the smallest (t, r).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codebook import BEAM_INDICES, NUM_PAIRS, BeamPair, all_pairs
from .scene import Case, all_cases


class LabelingError(ValueError):
    """Empty sample lists, incomplete tables, or unusable cases."""


@dataclass(frozen=True)
class Quality:
    q: float
    valid: int      # K, count of non-NaN samples
    dropped: int    # N_null, count of NaN samples


def quality(samples: list[float]) -> Quality:
    """Score one pair's sample list. Requires at least one sample."""
    if len(samples) == 0:
        raise LabelingError("quality requires a non-empty sample list")
    arr = np.asarray(samples, dtype=np.float64)
    nan_mask = np.isnan(arr)
    n_null = int(nan_mask.sum())
    k = arr.size - n_null
    if k == 0:
        return Quality(-math.inf, 0, n_null)
    return Quality(float(arr[~nan_mask].mean()) / (n_null + 1), k, n_null)


SnrTable = dict[tuple[Case, BeamPair], list[float]]
QualityTable = dict[tuple[Case, BeamPair], Quality]
LabelTable = dict[Case, BeamPair]


def quality_table(snr: SnrTable) -> QualityTable:
    return {key: quality(samples) for key, samples in snr.items()}


def best_pair(q: QualityTable, case: Case) -> BeamPair:
    """Argmax of quality over all 169 pairs of ``case``. Pairs are scanned
    in ascending (t, r) order, so ties resolve to the smallest indices."""
    best: BeamPair | None = None
    best_q = -math.inf
    for pair in all_pairs():
        entry = q.get((case, pair))
        if entry is None:
            raise LabelingError(f"quality table missing pair {pair} for case {case}")
        if entry.q > best_q:
            best_q = entry.q
            best = pair
    if best is None or best_q == -math.inf:
        raise LabelingError(f"case {case} has no usable beam pair (all samples NaN)")
    return best


def build_label_table(snr: SnrTable) -> LabelTable:
    """Label all 25 cases from a complete SNR table."""
    expected = 25 * NUM_PAIRS
    if len(snr) != expected:
        raise LabelingError(f"SNR table has {len(snr)} entries, expected {expected}")
    q = quality_table(snr)
    return {case: best_pair(q, case) for case in all_cases()}


# ---------------------------------------------------------------------------
# manifest formats

def write_label_manifest(table: LabelTable, path: Path) -> None:
    """Label manifest CSV: header ``i,j,t,r``, one row per case."""
    lines = ["i,j,t,r"]
    for case in all_cases():
        pair = table[case]
        lines.append(f"{case.i},{case.j},{pair.t},{pair.r}")
    path.write_text("\n".join(lines) + "\n")


def read_label_manifest(path: Path) -> LabelTable:
    lines = path.read_text().strip().split("\n")
    if not lines or lines[0] != "i,j,t,r":
        raise LabelingError(f"bad label manifest header in {path}")
    table: LabelTable = {}
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 4:
            raise LabelingError(f"bad label manifest row {line!r}")
        i, j, t, r = (int(p) for p in parts)
        table[Case(i, j)] = BeamPair(t, r)
    if len(table) != 25:
        raise LabelingError(f"label manifest has {len(table)} rows, expected 25")
    return table


def write_snr_table(snr: SnrTable, path: Path) -> None:
    """SNR sample CSV: ``i,j,t,r,sample_index,snr`` with literal NaN."""
    lines = ["i,j,t,r,sample_index,snr"]
    for case in all_cases():
        for pair in all_pairs():
            for idx, v in enumerate(snr[(case, pair)]):
                val = "NaN" if math.isnan(v) else repr(float(v))
                lines.append(f"{case.i},{case.j},{pair.t},{pair.r},{idx},{val}")
    path.write_text("\n".join(lines) + "\n")


def read_snr_table(path: Path) -> SnrTable:
    lines = path.read_text().strip().split("\n")
    if not lines or lines[0] != "i,j,t,r,sample_index,snr":
        raise LabelingError(f"bad SNR table header in {path}")
    table: SnrTable = {}
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != 6:
            raise LabelingError(f"bad SNR table row {line!r}")
        case = Case(int(parts[0]), int(parts[1]))
        pair = BeamPair(int(parts[2]), int(parts[3]))
        value = math.nan if parts[5] == "NaN" else float(parts[5])
        table.setdefault((case, pair), []).append(value)
    return table
