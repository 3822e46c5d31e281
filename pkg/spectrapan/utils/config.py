"""configuration and logging setup"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, List, Optional, cast

import shutup
from omegaconf import DictConfig, OmegaConf
from rich.console import Console
from rich.logging import RichHandler
from rich.syntax import Syntax

from ..codec import PEConfig
from ..eds import EDSConfig
from ..errors import RangeError
from ..grid import CategoryTable
from ..losses import TV_NORMS, LossWeights
from ..pipeline import FusionConfig
from ..lab.toy_train import ToyTrainConfig

shutup.mute_warnings()

# stdout carries the CLI status line, so log records go to stderr
console = Console(stderr=True)
logger = logging.getLogger("spectrapan")
logger.setLevel(logging.WARNING)
if not any(isinstance(h, RichHandler) for h in logger.handlers):
    logger.addHandler(RichHandler(console=console, show_path=False, log_time_format="[%X]"))


def set_verbosity(verbose: bool = False, debug: bool = False) -> None:
    logger.setLevel(logging.DEBUG if debug else logging.INFO if verbose else logging.WARNING)


""" these dataclasses are the schema of config.yaml, unknown keys are rejected on merge """


@dataclass
class CodecConfig:
    L: int = 4
    grid_h: int = 80
    grid_w: int = 80
    uv_bins: int = 80


@dataclass
class EDSSection:
    w_min: float = 0.0
    D: float = 20.0
    backend: str = "envelope"


@dataclass
class FusionSection:
    merge_radius: float = 1.5
    min_instance_area: Optional[int] = None
    orphan_policy: str = "void"


@dataclass
class LossWeightsSection:
    sem: float = 1.0
    inst: float = 1.0
    tv: float = 1.0
    dice: float = 1.0


@dataclass
class LossSection:
    weights: LossWeightsSection = field(default_factory=LossWeightsSection)
    tv_norm: str = "pe"
    silog_lambda: float = 0.5
    ignore_index: int = 255


@dataclass
class MetricsSection:
    size_bins: List[int] = field(default_factory=lambda: [1024, 9216])


@dataclass
class ContrastSection:
    points: int = 80
    L: int = 4


@dataclass
class CirclesSection:
    R: int = 160
    D: float = 20.0
    w_min: float = 0.0


@dataclass
class TrainSection:
    steps: int = 500
    lr: float = 5.0
    features: int = 4096
    coord_scale: float = 0.1
    eds_D: float = 20.0
    eds_reference_side: int = 480
    eds_w_min: float = 0.0
    size_bins: List[int] = field(default_factory=lambda: [64])


@dataclass
class LabSection:
    contrast: ContrastSection = field(default_factory=ContrastSection)
    circles: CirclesSection = field(default_factory=CirclesSection)
    train: TrainSection = field(default_factory=TrainSection)
    workers: int = 1


@dataclass
class Config:
    codec: CodecConfig = field(default_factory=CodecConfig)
    eds: EDSSection = field(default_factory=EDSSection)
    fusion: FusionSection = field(default_factory=FusionSection)
    loss: LossSection = field(default_factory=LossSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    lab: LabSection = field(default_factory=LabSection)
    seed: int = 0


def load_cfg(
    overrides: list[str] | dict[str, Any] | None = None,
    path: Path = Path(__file__).parent / "config.yaml",
) -> Config:
    """Load config.yaml, validate it against the schema and merge overrides (dotlist or nested dict).

    Unknown keys and ill-typed values raise omegaconf errors.
    """
    cfg = OmegaConf.merge(OmegaConf.structured(Config), OmegaConf.load(path))
    if overrides:
        extra = OmegaConf.from_dotlist(overrides) if isinstance(overrides, list) else OmegaConf.create(overrides)
        cfg = OmegaConf.merge(cfg, extra)
    return cast(Config, cfg)


def print_cfg(cfg: Config) -> None:
    console.print(Syntax(OmegaConf.to_yaml(cast(DictConfig, cfg)), "yaml", theme="paraiso-dark"))


def pe_from_cfg(cfg: Config) -> PEConfig:
    return PEConfig(L=cfg.codec.L, grid_h=cfg.codec.grid_h, grid_w=cfg.codec.grid_w)


def eds_from_cfg(cfg: Config) -> EDSConfig:
    return EDSConfig(w_min=cfg.eds.w_min, D=cfg.eds.D, backend=cfg.eds.backend)


def fusion_from_cfg(cfg: Config, categories: CategoryTable | None = None) -> FusionConfig:
    return FusionConfig(
        merge_radius=cfg.fusion.merge_radius,
        min_instance_area=cfg.fusion.min_instance_area,
        categories=categories if categories is not None else CategoryTable(),
        orphan_policy=cfg.fusion.orphan_policy,
    )


def loss_weights_from_cfg(cfg: Config) -> LossWeights:
    w = cfg.loss.weights
    return LossWeights(sem=w.sem, inst=w.inst, tv=w.tv, dice=w.dice)


def toy_train_from_cfg(cfg: Config) -> ToyTrainConfig:
    t = cfg.lab.train
    return ToyTrainConfig(
        steps=t.steps,
        lr=t.lr,
        features=t.features,
        coord_scale=t.coord_scale,
        eds_D=t.eds_D,
        eds_reference_side=t.eds_reference_side,
        eds_w_min=t.eds_w_min,
        size_bins=tuple(t.size_bins),
        L=cfg.codec.L,
        grid_h=cfg.codec.grid_h,
        grid_w=cfg.codec.grid_w,
        seed=cfg.seed,
    )


def validate_cfg(cfg: Config) -> None:
    """Build every runtime config once so range errors surface before any IO."""
    pe_from_cfg(cfg)
    eds_from_cfg(cfg)
    fusion_from_cfg(cfg)
    loss_weights_from_cfg(cfg)
    toy_train_from_cfg(cfg)
    if cfg.loss.tv_norm not in TV_NORMS:
        raise RangeError(f"loss.tv_norm must be one of {TV_NORMS}, got {cfg.loss.tv_norm!r}")
    if not 0.0 <= cfg.loss.silog_lambda <= 1.0:
        raise RangeError(f"loss.silog_lambda must lie in [0, 1], got {cfg.loss.silog_lambda}")
    if cfg.codec.uv_bins < 2:
        raise RangeError(f"codec.uv_bins must be >= 2, got {cfg.codec.uv_bins}")
    if cfg.lab.contrast.points < 2 or cfg.lab.contrast.L < 1:
        raise RangeError("lab.contrast needs points >= 2 and L >= 1")
    if cfg.lab.circles.R < 1:
        raise RangeError(f"lab.circles.R must be >= 1, got {cfg.lab.circles.R}")
    EDSConfig(w_min=cfg.lab.circles.w_min, D=cfg.lab.circles.D)
    if cfg.lab.workers < 1:
        raise RangeError(f"lab.workers must be >= 1, got {cfg.lab.workers}")
    for bins in (cfg.metrics.size_bins, cfg.lab.train.size_bins):
        if any(b <= a for a, b in zip(bins, bins[1:])):
            raise RangeError(f"size bins must be strictly increasing, got {list(bins)}")
