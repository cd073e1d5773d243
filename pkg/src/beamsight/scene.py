"""Synthetic desk-scale testbed scenes.

Stands in for the physical room: two device sliders facing each other
across the room, five discrete stops each, an optional obstacle between
them, and two wall cameras. Rendering is a flat orthographic projection
(colored blocks over a static textured background) — enough structure for
the detector to learn localized device appearance, nothing more.

Camera 1 looks at the room head on with a clear view of both devices.
Camera 2 views from the opposite side at a greater distance: the image is
mirrored, the device markers project smaller and dimmer, and the obstacle
sits in front of the transmitter band, fully hiding the transmitter marker
whenever it is at the center stop.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .rng import stream

LIGHT_MIN = 0.4
LIGHT_MAX = 1.6
NUM_LIGHT_LEVELS = 50


class SceneError(ValueError):
    """Invalid case index or scene parameter."""


@dataclass(frozen=True)
class Case:
    """Transmitter stop i and receiver stop j, both in 1..5."""
    i: int
    j: int

    def __post_init__(self):
        if not (1 <= self.i <= 5 and 1 <= self.j <= 5):
            raise SceneError(f"case indices must be in 1..5, got ({self.i}, {self.j})")


def all_cases() -> list[Case]:
    return [Case(i, j) for i in range(1, 6) for j in range(1, 6)]


@dataclass(frozen=True)
class MarkerBox:
    """Ground-truth pixel rectangle of a device marker."""
    kind: str                     # "transmitter" | "receiver"
    top: int
    left: int
    height: int
    width: int
    occluded: bool = False

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.top, self.left, self.height, self.width)


@dataclass(frozen=True)
class SceneConfig:
    """Room geometry (cm) plus the per-camera projection parameters."""
    room_width_cm: float = 310.0
    room_depth_cm: float = 510.0
    slider_len_cm: float = 120.0
    num_stops: int = 5
    stop_gap_cm: float = 24.0
    slider_sep_cm: float = 350.0
    device_height_cm: float = 100.0
    camera_height_cm: float = 169.0
    camera_fov_deg: float = 125.0
    obstacle: str = "cardbox"      # "wood" | "cardbox" | "none"
    rows: int = 150
    cols: int = 200
    camera: int = 1                # 1 | 2
    texture_seed: int = 0
    # projection: first stop maps to this column at px_per_cm scale
    px_per_cm: float = 2.0 / 3.0
    stop0_col: int = 52
    marker_px: int = 9             # camera-1 marker extent
    cam2_marker_px: int = 7        # camera 2 sees the devices smaller
    cam2_marker_gain: float = 0.75  # ... and dimmer
    tx_band_top: int = 40
    rx_band_top: int = 95

    def __post_init__(self):
        if self.obstacle not in ("wood", "cardbox", "none"):
            raise SceneError(f"unknown obstacle kind {self.obstacle!r}")
        if self.camera not in (1, 2):
            raise SceneError(f"camera must be 1 or 2, got {self.camera}")
        if self.num_stops != 5:
            raise SceneError("sliders have exactly 5 stops")
        if abs(self.stop_gap_cm * self.num_stops - self.slider_len_cm) > 1e-9:
            raise SceneError("stop spacing must equal slider length / 5")
        if self.rows < 5 * 12 or self.cols < 5 * 12:
            raise SceneError("image extents must be at least 5x the crop window")

    def stop_x_cm(self, k: int) -> float:
        """Room x-coordinate of stop k (1..5); stop 3 is the room midline."""
        if not 1 <= k <= self.num_stops:
            raise SceneError(f"stop index {k} out of range 1..{self.num_stops}")
        first = (self.room_width_cm - self.slider_len_cm) / 2.0 + self.stop_gap_cm / 2.0
        return first + self.stop_gap_cm * (k - 1)

    def marker_size(self) -> int:
        return self.marker_px if self.camera == 1 else self.cam2_marker_px

    def marker_left(self, k: int) -> int:
        """Image column of a marker's left edge for stop k."""
        col = self.stop0_col + round((self.stop_x_cm(k) - self.stop_x_cm(1)) * self.px_per_cm)
        if self.camera == 1:
            return int(col)
        # camera 2 views from the far side: mirrored column axis
        return int(self.cols - 1 - col - (self.marker_size() - 1))

    def slider_bar(self) -> tuple[int, int]:
        """Column span (inclusive left, exclusive right) of the slider bar."""
        lo = min(self.marker_left(1), self.marker_left(self.num_stops))
        hi = max(self.marker_left(1), self.marker_left(self.num_stops)) + self.marker_size()
        return lo, hi

    def obstacle_rect(self) -> tuple[int, int, int, int] | None:
        """Projected obstacle rectangle (top, left, height, width)."""
        if self.obstacle == "none":
            return None
        if self.camera == 1:
            return (64, 86, 16, 24)
        # camera 2: in front of the tx band, centered over the middle stop
        mid = self.marker_left(3)
        size = self.marker_size()
        return (self.tx_band_top - 3, mid - 3, size + 6, size + 6)


_TX_COLOR = np.array([0.82, 0.13, 0.11])
_RX_COLOR = np.array([0.12, 0.66, 0.16])
_OBS_COLOR = {"wood": np.array([0.46, 0.31, 0.18]),
              "cardbox": np.array([0.66, 0.55, 0.38])}
_SLIDER_COLOR = np.array([0.22, 0.22, 0.24])


def light_schedule(levels: int = NUM_LIGHT_LEVELS) -> np.ndarray:
    """The brightness factors applied for augmentation: ``levels`` values
    linearly spaced over [0.4, 1.6]."""
    return np.linspace(LIGHT_MIN, LIGHT_MAX, levels)


def augment_light(img: np.ndarray, factor: float) -> np.ndarray:
    """Scale brightness by ``factor`` and clamp to [0, 1]. Marker geometry
    is untouched; only pixel values change."""
    if not LIGHT_MIN <= factor <= LIGHT_MAX:
        raise SceneError(f"light factor must be in [{LIGHT_MIN}, {LIGHT_MAX}], got {factor}")
    return np.clip(img * factor, 0.0, 1.0)


def _covers(outer: tuple[int, int, int, int], inner: tuple[int, int, int, int]) -> bool:
    ot, ol, oh, ow = outer
    it, il, ih, iw = inner
    return ot <= it and ol <= il and it + ih <= ot + oh and il + iw <= ol + ow


class SceneRenderer:
    """Renders one camera's view; the static background is built once."""

    def __init__(self, cfg: SceneConfig):
        self.cfg = cfg
        self._background = self._build_background()

    def _build_background(self) -> np.ndarray:
        cfg = self.cfg
        rng = stream(cfg.texture_seed, "scene-texture", cfg.camera)
        img = 0.40 + 0.10 * rng.random((cfg.rows, cfg.cols, 3))
        # mild vertical light falloff so the background is not statistically flat
        falloff = np.linspace(1.05, 0.9, cfg.rows)[:, None, None]
        img *= falloff
        for top in (cfg.tx_band_top, cfg.rx_band_top):
            lo, hi = cfg.slider_bar()
            img[top + cfg.marker_size() + 1: top + cfg.marker_size() + 4, lo:hi] = _SLIDER_COLOR
        return np.clip(img, 0.0, 1.0)

    def _paint(self, img: np.ndarray, rect: tuple[int, int, int, int],
               color: np.ndarray, rng: np.random.Generator, gain: float = 1.0) -> None:
        t, l, h, w = rect
        speckle = 0.04 * (rng.random((h, w, 3)) - 0.5)
        img[t:t + h, l:l + w] = np.clip(color * gain + speckle, 0.0, 1.0)

    def render(self, case: Case, light_factor: float) -> tuple[np.ndarray, list[MarkerBox]]:
        cfg = self.cfg
        if not LIGHT_MIN <= light_factor <= LIGHT_MAX:
            raise SceneError(f"light factor must be in [{LIGHT_MIN}, {LIGHT_MAX}], got {light_factor}")
        img = self._background.copy()
        size = cfg.marker_size()
        gain = 1.0 if cfg.camera == 1 else cfg.cam2_marker_gain

        tx_rect = (cfg.tx_band_top, cfg.marker_left(case.i), size, size)
        rx_rect = (cfg.rx_band_top, cfg.marker_left(case.j), size, size)
        self._paint(img, tx_rect, _TX_COLOR, stream(cfg.texture_seed, "tx", cfg.camera, case.i), gain)
        self._paint(img, rx_rect, _RX_COLOR, stream(cfg.texture_seed, "rx", cfg.camera, case.j), gain)

        obs = cfg.obstacle_rect()
        tx_occluded = False
        if obs is not None:
            # the obstacle is drawn last: on camera 2 it sits in front of the
            # transmitter band and can hide the marker entirely
            self._paint(img, obs, _OBS_COLOR[cfg.obstacle],
                        stream(cfg.texture_seed, "obstacle", cfg.camera))
            tx_occluded = _covers(obs, tx_rect)

        boxes = [
            MarkerBox("transmitter", *tx_rect, occluded=tx_occluded),
            MarkerBox("receiver", *rx_rect, occluded=False),
        ]
        return augment_light(img, light_factor), boxes


def render_scene(cfg: SceneConfig, case: Case,
                 light_factor: float = 1.0) -> tuple[np.ndarray, list[MarkerBox]]:
    """Deterministic scene image plus ground-truth marker boxes."""
    return SceneRenderer(cfg).render(case, light_factor)


def for_camera(cfg: SceneConfig, camera: int) -> SceneConfig:
    return replace(cfg, camera=camera)
