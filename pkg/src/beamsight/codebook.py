"""Azimuth beam codebook and pair bookkeeping.

The reduced codebook keeps the 13 even-indexed azimuth beams. Beam index b
steers to -60 + 5*b degrees, so the even indices cover -60..+60 in 10
degree steps; an ordered (transmit, receive) choice is a beam pair, 169 in
total.
"""

from __future__ import annotations

from dataclasses import dataclass

BEAM_INDICES: tuple[int, ...] = tuple(range(0, 25, 2))
NUM_BEAMS = len(BEAM_INDICES)          # 13
NUM_PAIRS = NUM_BEAMS * NUM_BEAMS      # 169
BEAMWIDTH_3DB_DEG = 25.0
SIDELOBE_FLOOR_DB = -20.0


class BeamIndexError(ValueError):
    """Beam index outside the reduced codebook."""


def validate_beam(b: int) -> int:
    if b not in BEAM_INDICES:
        raise BeamIndexError(f"beam index {b} not in reduced codebook {{0,2,...,24}}")
    return b


def boresight_deg(b: int) -> float:
    """Steering angle of beam ``b``; index 12 is broadside (0 degrees)."""
    validate_beam(b)
    return -60.0 + 5.0 * b


@dataclass(frozen=True, order=True)
class BeamPair:
    t: int
    r: int

    def __post_init__(self):
        validate_beam(self.t)
        validate_beam(self.r)


def all_pairs() -> list[BeamPair]:
    return [BeamPair(t, r) for t in BEAM_INDICES for r in BEAM_INDICES]
