"""
Toy coupled trainer.

A single linear map, shared by all pixels, sends fixed per-pixel features to the
target space: features are a seeded random unit vector per true instance id
(void included) next to the scaled normalized pixel coordinates. Plain gradient
descent with a cosine-decayed step size minimizes the instance loss; the result
is decoded, clustered and scored with iou_by_size.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from dataclasses_json import DataClassJsonMixin
from tqdm import tqdm

from ..analysis.size_iou import SizeIoUTable, best_match_iou, table_from_matches
from ..codec import PEConfig, build_uv_grid, decode_pe, decode_rgb_direct, encode_pe, encode_rgb_direct, normalize_col, normalize_row
from ..eds import EDSConfig, eds_weights
from ..errors import DivergenceError, RangeError
from ..grid import Field, IdMap, WeightMask
from ..losses import direct_regression_loss, instance_pe_loss
from ..pipeline import FusionConfig, cluster_instances
from .scenes import SceneSpec, generate_scene

logger = logging.getLogger("spectrapan")

Encoding = Literal["pe", "direct"]


@dataclass(frozen=True)
class ToyTrainConfig(DataClassJsonMixin):
    steps: int = 500
    lr: float = 5.0
    features: int = 4096
    coord_scale: float = 0.1
    # D is stated for a square of side eds_reference_side and scaled linearly to the scene
    eds_D: float = 20.0
    eds_reference_side: int = 480
    eds_w_min: float = 0.0
    size_bins: tuple[int, ...] = (64,)
    L: int = 4
    grid_h: int = 80
    grid_w: int = 80
    seed: int = 0
    min_instance_area: int = 4
    merge_radius: float = 1.5
    direct_norm: str = "l1"

    def __post_init__(self):
        if self.steps < 0:
            raise RangeError(f"steps must be >= 0, got {self.steps}")
        if not self.lr > 0:
            raise RangeError(f"learning rate must be positive, got {self.lr}")
        if self.features < 1:
            raise RangeError(f"feature size must be >= 1, got {self.features}")
        if not self.eds_D > 0 or self.eds_reference_side < 1:
            raise RangeError(f"EDS D and reference side must be positive, got {self.eds_D} and {self.eds_reference_side}")

    @property
    def pe(self) -> PEConfig:
        return PEConfig(self.L, self.grid_h, self.grid_w)

    def eds_for(self, height: int, width: int) -> EDSConfig:
        """EDS settings for a scene, D scaled by the shorter side over the reference side."""
        return EDSConfig(w_min=self.eds_w_min, D=self.eds_D * min(height, width) / self.eds_reference_side)


def cosine_lr(lr: float, step: int, total: int) -> float:
    return 0.5 * lr * (1.0 + np.cos(np.pi * step / total)) if total else lr


def id_features(ids: np.ndarray, size: int, seed: int) -> np.ndarray:
    """Deterministic unit vector per id, independent of which other ids exist."""
    rows = []
    for i in ids.tolist():
        vec = np.random.default_rng([seed, i]).standard_normal(size)
        rows.append(vec / np.linalg.norm(vec))
    return np.asarray(rows).reshape(len(ids), size)


@dataclass
class ToyTrainResult(DataClassJsonMixin):
    encoding: str
    eds: bool
    table: SizeIoUTable
    final_loss: list[float] = field(default_factory=list)


class ToyModel:
    """pred(p) = W_id h(id(p)) + W_xy * coord_scale * (u(p), v(p))."""

    def __init__(self, instances: IdMap, out_channels: int, cfg: ToyTrainConfig):
        self.shape = (out_channels, instances.height, instances.width)
        ids, self.inverse = np.unique(instances.ids.ravel(), return_inverse=True)
        self.h = id_features(ids, cfg.features, cfg.seed)  # (K, F)
        rows, cols = np.indices(instances.shape)
        self.coords = cfg.coord_scale * np.stack(
            [normalize_col(cols.ravel(), instances.width), normalize_row(rows.ravel(), instances.height)], axis=1
        )  # (N, 2)
        self.w_id = np.zeros((out_channels, cfg.features))
        self.w_xy = np.zeros((out_channels, 2))

    def forward(self) -> np.ndarray:
        per_id = self.h @ self.w_id.T  # (K, C)
        flat = per_id[self.inverse] + self.coords @ self.w_xy.T  # (N, C)
        return flat.T.reshape(self.shape)

    def step(self, grad: np.ndarray, lr: float) -> None:
        g = grad.reshape(self.shape[0], -1)  # (C, N)
        per_id = np.stack([np.bincount(self.inverse, weights=row, minlength=len(self.h)) for row in g])  # (C, K)
        self.w_id -= lr * per_id @ self.h
        self.w_xy -= lr * g @ self.coords


def train_scene(
    spec: SceneSpec,
    encoding: Encoding,
    use_eds: bool,
    cfg: ToyTrainConfig,
    progress: bool = False,
) -> tuple[IdMap, IdMap, float]:
    """Train on one scene; returns (truth instances, predicted instances, final loss)."""
    instances, _ = generate_scene(spec)
    pe = cfg.pe
    if encoding == "pe":
        target = encode_pe(instances, pe)

        def loss_fn(pred, weights):
            return instance_pe_loss(pred, target, weights)

    elif encoding == "direct":
        target = encode_rgb_direct(instances)

        def loss_fn(pred, weights):
            return direct_regression_loss(pred, target, weights, cfg.direct_norm)

    else:
        raise RangeError(f"unknown encoding {encoding!r}, expected pe or direct")

    if use_eds:
        eds = cfg.eds_for(instances.height, instances.width)
        logger.debug(f"{spec.name}: EDS D = {eds.D:.3g} px")
        weights = eds_weights(instances, eds)
    else:
        weights = WeightMask.uniform(instances.height, instances.width)

    model = ToyModel(instances, target.channels, cfg)
    loss = float("nan")
    for t in tqdm(range(cfg.steps), desc=f"{spec.name} {encoding}", disable=not progress, leave=False):
        pred = model.forward()
        if not np.all(np.isfinite(pred)):
            raise DivergenceError(f"prediction diverged at step {t}; lower the learning rate (now {cfg.lr:g})")
        res = loss_fn(Field(pred), weights)
        loss = res.value
        model.step(res.gradient.values, cosine_lr(cfg.lr, t, cfg.steps))

    pred = Field(model.forward())
    grid = build_uv_grid(pe)
    decoded = decode_pe(pred, grid) if encoding == "pe" else decode_rgb_direct(pred, grid)
    fusion = FusionConfig(merge_radius=cfg.merge_radius, min_instance_area=cfg.min_instance_area)
    return instances, cluster_instances(decoded, fusion), loss


def toy_coupled_train(
    scenes: Sequence[SceneSpec],
    encoding: Encoding,
    use_eds: bool,
    cfg: ToyTrainConfig,
    workers: int = 1,
    progress: bool = False,
) -> ToyTrainResult:
    """Train one model per scene and pool the best-match IoU of all truth instances by area."""

    def one(spec: SceneSpec):
        truth, pred, loss = train_scene(spec, encoding, use_eds, cfg, progress)
        return best_match_iou(pred, truth), loss

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(one, scenes))
    else:
        outcomes = [one(s) for s in scenes]

    matches = [m for per_scene, _ in outcomes for m in per_scene.values()]
    table = table_from_matches(matches, cfg.size_bins)
    logger.info(f"toy training [{encoding}, eds={use_eds}]: mean IoU by size {table.means}")
    return ToyTrainResult(encoding, use_eds, table, [loss for _, loss in outcomes])

