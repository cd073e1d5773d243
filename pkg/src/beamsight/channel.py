"""Synthetic link-quality oracle.

Replaces over-the-air measurement with a small geometric model: for each
beam pair the mean SNR is the best of the direct ray and single-bounce
reflections off the two side walls, each scored as transmit power minus
log-distance pathloss plus both beam gains. An obstacle between the
sliders attenuates the direct ray only (wood 30 dB, cardbox 4 dB). Samples
add Gaussian jitter, and anything under the -48 dB reporting threshold is
emitted as NaN, mimicking a radio that stops reporting below its floor.

Beam gain is a raised-cosine mainlobe with a 25 degree 3 dB beamwidth over
a -20 dB uniform sidelobe floor.
"""

from __future__ import annotations

import math

import numpy as np

from .codebook import SIDELOBE_FLOOR_DB, boresight_deg, validate_beam
from .rng import stream
from .scene import Case, SceneConfig

TX_POWER_DBM = 12.0          # total transmit power
PATHLOSS_EXPONENT = 2.0
PATHLOSS_REF_CM = 500.0      # distance at which pathloss is zero
REFLECTION_LOSS_DB = 10.0
JITTER_SIGMA_DB = 0.5
NAN_THRESHOLD_DB = -48.0
OBSTACLE_ATTEN_DB = {"none": 0.0, "wood": 30.0, "cardbox": 4.0}

_MAINLOBE_HALF_DEG = 25.0    # raised-cosine reaches the floor here


def beam_gain_db(offset_deg: float) -> float:
    """Gain of a beam at ``offset_deg`` away from its boresight."""
    d = abs(offset_deg)
    if d >= _MAINLOBE_HALF_DEG:
        return SIDELOBE_FLOOR_DB
    lin = max((1.0 + math.cos(math.pi * d / _MAINLOBE_HALF_DEG)) / 2.0,
              10.0 ** (SIDELOBE_FLOOR_DB / 10.0))
    return 10.0 * math.log10(lin)


def _pathloss_db(dist_cm: float) -> float:
    return 10.0 * PATHLOSS_EXPONENT * math.log10(dist_cm / PATHLOSS_REF_CM)


def _device_positions(cfg: SceneConfig, case: Case) -> tuple[float, float, float, float]:
    xt = cfg.stop_x_cm(case.i)
    xr = cfg.stop_x_cm(case.j)
    y_tx = (cfg.room_depth_cm - cfg.slider_sep_cm) / 2.0
    y_rx = y_tx + cfg.slider_sep_cm
    return xt, y_tx, xr, y_rx


def _obstacle_span(cfg: SceneConfig) -> tuple[float, float, float]:
    """Obstacle segment (y, x_lo, x_hi) in room coordinates, centered on the
    midline halfway between the sliders; 88 cm wide."""
    y_tx = (cfg.room_depth_cm - cfg.slider_sep_cm) / 2.0
    y = y_tx + cfg.slider_sep_cm / 2.0
    mid = cfg.room_width_cm / 2.0
    return y, mid - 44.0, mid + 44.0


def _paths(cfg: SceneConfig, case: Case) -> list[tuple[float, float, float, float]]:
    """Candidate rays as (distance_cm, departure_deg, arrival_deg, extra_loss_db).

    Angles are measured from each device's broadside (facing the other
    slider), positive toward +x. Wall reflections use the image method.
    """
    xt, y_tx, xr, y_rx = _device_positions(cfg, case)
    sep = y_rx - y_tx
    out = []

    # direct ray; obstacle attenuation if the segment crosses the obstacle
    _, ob_lo, ob_hi = _obstacle_span(cfg)
    crossing = (xt + xr) / 2.0
    blocked = ob_lo <= crossing <= ob_hi and cfg.obstacle != "none"
    loss = OBSTACLE_ATTEN_DB[cfg.obstacle] if blocked else 0.0
    out.append((math.hypot(xr - xt, sep),
                math.degrees(math.atan2(xr - xt, sep)),
                math.degrees(math.atan2(xt - xr, sep)),
                loss))

    # single bounce off each side wall (x = 0 and x = room width)
    for image in (lambda x: -x, lambda x: 2.0 * cfg.room_width_cm - x):
        out.append((math.hypot(image(xr) - xt, sep),
                    math.degrees(math.atan2(image(xr) - xt, sep)),
                    math.degrees(math.atan2(image(xt) - xr, sep)),
                    REFLECTION_LOSS_DB))
    return out


def mean_snr_db(cfg: SceneConfig, case: Case, t: int, r: int) -> float:
    """Deterministic mean SNR of beam pair (t, r) for this case."""
    validate_beam(t)
    validate_beam(r)
    bt = boresight_deg(t)
    br = boresight_deg(r)
    best = -math.inf
    for dist, dep, arr, loss in _paths(cfg, case):
        s = (TX_POWER_DBM - _pathloss_db(dist)
             + beam_gain_db(dep - bt) + beam_gain_db(arr - br) - loss)
        if s > best:
            best = s
    return best


def snr_oracle(cfg: SceneConfig, case: Case, t: int, r: int,
               n: int, seed: int) -> list[float]:
    """Draw ``n`` SNR samples for one (case, pair); sub-threshold samples
    come back as NaN."""
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    mean = mean_snr_db(cfg, case, t, r)
    rng = stream(seed, "snr", cfg.obstacle, case.i, case.j, t, r)
    samples = mean + JITTER_SIGMA_DB * rng.standard_normal(n)
    return [float(s) if s >= NAN_THRESHOLD_DB else math.nan for s in samples]
