"""Run configuration: one JSON document drives the whole pipeline."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .crops import crop_count
from .scene import NUM_LIGHT_LEVELS, SceneConfig

PAPER_ROWS, PAPER_COLS = 750, 1000


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class RunConfig:
    seed: int = 7
    rows: int = 150
    cols: int = 200
    window: int = 12
    stride: int = 5
    top_k: int | None = None              # None -> scaled default for the grid
    light_levels: int = NUM_LIGHT_LEVELS
    stage1_light_levels: int = 3          # light levels harvested for crop training
    obstacle: str = "cardbox"
    cameras: tuple[int, ...] = (1,)
    snr_samples: int = 50
    stage1_epochs: int = 20
    stage2_epochs: int = 10
    batch_size: int = 256
    learning_rate: float = 1e-3
    mode: str = "per-crop"                # "per-crop" | "fcn"
    paper_scale: bool = False

    def __post_init__(self):
        if self.mode not in ("per-crop", "fcn"):
            raise ConfigError(f"mode must be 'per-crop' or 'fcn', got {self.mode!r}")
        if self.obstacle not in ("wood", "cardbox", "none"):
            raise ConfigError(f"unknown obstacle {self.obstacle!r}")
        if not self.cameras or any(c not in (1, 2) for c in self.cameras):
            raise ConfigError(f"cameras must be a non-empty subset of (1, 2), got {self.cameras}")
        if self.window > min(self.rows, self.cols):
            raise ConfigError("window exceeds image extents")
        if not 1 <= self.stage1_light_levels <= self.light_levels:
            raise ConfigError("stage1_light_levels must be within the light schedule")
        if self.batch_size < 1 or self.stage1_epochs < 1 or self.stage2_epochs < 1:
            raise ConfigError("epochs and batch size must be positive")
        if self.learning_rate <= 0:
            raise ConfigError("learning rate must be positive")
        # must be representable as a crop grid
        crop_count(self.rows, self.cols, self.window, self.stride)

    def effective(self) -> "RunConfig":
        """Resolve the paper-scale switch into concrete extents."""
        if not self.paper_scale:
            return self
        return replace(self, rows=PAPER_ROWS, cols=PAPER_COLS, top_k=60, paper_scale=False)

    def scene(self, camera: int = 1) -> SceneConfig:
        return SceneConfig(obstacle=self.obstacle, rows=self.rows, cols=self.cols,
                           camera=camera, texture_seed=self.seed)

    def to_json(self) -> str:
        d = asdict(self)
        d["cameras"] = list(self.cameras)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def load_config(path: Path) -> RunConfig:
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    known = {f for f in RunConfig.__dataclass_fields__}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {sorted(unknown)}")
    if "cameras" in raw:
        raw["cameras"] = tuple(raw["cameras"])
    try:
        return RunConfig(**raw)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{path}: {exc}") from exc
