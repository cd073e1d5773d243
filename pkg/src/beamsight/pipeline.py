"""End-to-end orchestration: scenes -> labels -> stage 1 -> bitmaps -> stage 2.

These functions are the shared engine behind the CLI commands and the
evaluation suite. Everything is deterministic in (config, seed).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import channel, labeling
from .codebook import BeamPair, all_pairs
from .config import RunConfig
from .crops import CropDataset, CropGrid, CropRef, balance_and_split, crop_count, label_grid
from .fcn import convert_cnn_to_fcn, fcn_infer
from .labeling import LabelTable, SnrTable
from .nn import Network
from .rng import stream
from .scene import Case, MarkerBox, SceneRenderer, all_cases, light_schedule
from .stage1 import (TrainConfig, bitmap_topk, default_topk, heatmap_batched,
                     train_stage1)
from .stage2 import Stage2Result, encode_pair, stack_bitmaps, train_stage2

FCN_EFFECTIVE_STRIDE = 2   # one 2x2 pooling stage => dense grid at stride 2


@dataclass
class SceneSample:
    case: Case
    light_level: int
    light: float
    camera: int
    image: np.ndarray
    boxes: list[MarkerBox]


def render_scene_set(cfg: RunConfig, camera: int,
                     light_levels: list[int] | None = None) -> list[SceneSample]:
    """Render every case at the requested light levels for one camera."""
    schedule = light_schedule(cfg.light_levels)
    if light_levels is None:
        light_levels = list(range(cfg.light_levels))
    renderer = SceneRenderer(cfg.scene(camera))
    out = []
    for case in all_cases():
        for lvl in light_levels:
            img, boxes = renderer.render(case, float(schedule[lvl]))
            out.append(SceneSample(case, lvl, float(schedule[lvl]), camera, img, boxes))
    return out


def stage1_light_levels(cfg: RunConfig) -> list[int]:
    """Evenly spread subset of the light schedule used for crop harvest."""
    return [round(k * (cfg.light_levels - 1) / max(cfg.stage1_light_levels - 1, 1))
            for k in range(cfg.stage1_light_levels)]


def build_stage1_datasets(cfg: RunConfig) -> dict[str, CropDataset]:
    """Harvest labeled crops from camera-1 scenes and balance/split them."""
    grid = CropGrid(cfg.window, cfg.stride)
    samples = render_scene_set(cfg, camera=1, light_levels=stage1_light_levels(cfg))
    images, refs = [], []
    shape = crop_count(cfg.rows, cfg.cols, cfg.window, cfg.stride)[:2]
    for sample in samples:
        image_id = len(images)
        images.append(sample.image)
        labels = label_grid(shape, grid, sample.boxes)
        for a in range(shape[0]):
            for b in range(shape[1]):
                refs.append(CropRef(image_id, (a, b), int(labels[a, b])))
    return balance_and_split(images, refs, grid, cfg.seed)


def build_snr_table(cfg: RunConfig) -> SnrTable:
    scene = cfg.scene()
    table: SnrTable = {}
    for case in all_cases():
        for pair in all_pairs():
            table[(case, pair)] = channel.snr_oracle(scene, case, pair.t, pair.r,
                                                     cfg.snr_samples, cfg.seed)
    return table


def build_labels(cfg: RunConfig) -> LabelTable:
    return labeling.build_label_table(build_snr_table(cfg))


# ---------------------------------------------------------------------------
# bitmaps

def grid_for_mode(cfg: RunConfig, net: Network, mode: str | None = None) -> tuple[int, int]:
    mode = mode or cfg.mode
    if mode == "per-crop":
        return crop_count(cfg.rows, cfg.cols, cfg.window, cfg.stride)[:2]
    from .fcn import fcn_output_shape
    return fcn_output_shape(convert_cnn_to_fcn(net), cfg.rows, cfg.cols)[:2]


def top_k_for(cfg: RunConfig, grid_shape: tuple[int, int]) -> int:
    if cfg.top_k is not None:
        return cfg.top_k
    return default_topk(grid_shape[0] * grid_shape[1])


class BitmapMaker:
    """Image -> binary detection grid, in either inference mode."""

    def __init__(self, cfg: RunConfig, net: Network, mode: str | None = None):
        self.cfg = cfg
        self.net = net
        self.mode = mode or cfg.mode
        self.grid = CropGrid(cfg.window, cfg.stride)
        if self.mode == "per-crop":
            self.grid_shape = crop_count(cfg.rows, cfg.cols, cfg.window, cfg.stride)[:2]
        else:
            from .fcn import fcn_output_shape
            self.fcn = convert_cnn_to_fcn(net)
            self.grid_shape = fcn_output_shape(self.fcn, cfg.rows, cfg.cols)[:2]
        self.top_k = top_k_for(cfg, self.grid_shape)

    def probabilities(self, img: np.ndarray) -> np.ndarray:
        if self.mode == "per-crop":
            return heatmap_batched(img, self.net, self.grid)
        return fcn_infer(self.fcn, img)[:, :, 1]

    def bitmap(self, img: np.ndarray) -> np.ndarray:
        return bitmap_topk(self.probabilities(img), self.top_k)


def tx_band_grid_rows(cfg: RunConfig, mode: str) -> tuple[int, int]:
    """Grid rows that can contain transmitter cells: everything above the
    midline between the two slider bands."""
    scene = cfg.scene()
    mid_px = (scene.tx_band_top + scene.rx_band_top) / 2.0
    stride = cfg.stride if mode == "per-crop" else FCN_EFFECTIVE_STRIDE
    return 0, int((mid_px - cfg.window / 2.0) / stride)


# ---------------------------------------------------------------------------
# stage-2 dataset

@dataclass
class Stage2Data:
    bitmaps: np.ndarray        # (N, rows, cols, channels)
    labels: np.ndarray         # encoded pair classes
    cases: list[Case]
    light_levels: list[int]


def build_stage2_data(cfg: RunConfig, net: Network, labels: LabelTable,
                      cameras: tuple[int, ...] | None = None,
                      mode: str | None = None) -> Stage2Data:
    """Bitmaps for all cases x light levels, one channel per camera."""
    cameras = cameras or cfg.cameras
    maker = BitmapMaker(cfg, net, mode)
    per_camera: dict[int, dict[tuple[int, int, int], np.ndarray]] = {}
    for cam in cameras:
        cam_maps: dict[tuple[int, int, int], np.ndarray] = {}
        for sample in render_scene_set(cfg, camera=cam):
            cam_maps[(sample.case.i, sample.case.j, sample.light_level)] = \
                maker.bitmap(sample.image)
        per_camera[cam] = cam_maps

    bitmaps, encoded, cases, levels = [], [], [], []
    for case in all_cases():
        for lvl in range(cfg.light_levels):
            key = (case.i, case.j, lvl)
            bitmaps.append(stack_bitmaps([per_camera[c][key] for c in cameras]))
            encoded.append(encode_pair(labels[case]))
            cases.append(case)
            levels.append(lvl)
    return Stage2Data(np.asarray(bitmaps, dtype=np.float64),
                      np.asarray(encoded, dtype=np.int64), cases, levels)


def train_stage2_on(cfg: RunConfig, data: Stage2Data) -> Stage2Result:
    t_cfg = TrainConfig(epochs=cfg.stage2_epochs, batch_size=cfg.batch_size,
                        learning_rate=cfg.learning_rate, patience=cfg.stage2_epochs)
    return train_stage2(data.bitmaps, data.labels, t_cfg, cfg.seed)


def train_stage1_on(cfg: RunConfig) -> tuple[Network, float]:
    datasets = build_stage1_datasets(cfg)
    t_cfg = TrainConfig(epochs=cfg.stage1_epochs, batch_size=cfg.batch_size,
                        learning_rate=cfg.learning_rate)
    net, _history, test_acc = train_stage1(datasets, t_cfg, cfg.seed)
    return net, test_acc


# ---------------------------------------------------------------------------
# single-image prediction

@dataclass
class Prediction:
    pair: BeamPair
    confidence: float
    stage1_ms: float
    stage2_ms: float


def predict(cfg: RunConfig, stage1_net: Network, stage2_net: Network,
            images: list[np.ndarray], mode: str | None = None) -> Prediction:
    """Full pipeline on one scene (one image per configured camera)."""
    from .stage2 import predict_pair

    maker = BitmapMaker(cfg, stage1_net, mode)
    t0 = time.perf_counter()
    stacked = stack_bitmaps([maker.bitmap(img) for img in images])
    t1 = time.perf_counter()
    pair, conf = predict_pair(stage2_net, stacked)
    t2 = time.perf_counter()
    return Prediction(pair, conf, (t1 - t0) * 1e3, (t2 - t1) * 1e3)
