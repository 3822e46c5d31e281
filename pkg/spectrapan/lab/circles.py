"""Summed edge-distance weight of a radius-2R circle against a radius-R circle."""

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

import pandas as pd
from dataclasses_json import DataClassJsonMixin

from ..eds import EDSConfig, eds_weights
from ..errors import SceneError
from .scenes import THING_CLASSES, SceneSpec, Shape, generate_scene

logger = logging.getLogger("spectrapan")


@dataclass
class CirclesReport(DataClassJsonMixin):
    R: float
    D: float
    w_min: float
    big_area: int
    small_area: int
    big_weight: float
    small_weight: float

    @property
    def ratio(self) -> float:
        return self.big_weight / self.small_weight

    @property
    def area_ratio(self) -> float:
        return self.big_area / self.small_area

    def to_dict(self, encode_json=False):
        return {**super().to_dict(encode_json), "ratio": self.ratio, "area_ratio": self.area_ratio}


def circle_scene(R: float, D: float, margin: int = 4) -> SceneSpec:
    """Circles of radius 2R and R side by side on void, at least max(4D, 2) pixels apart."""
    if R < 1:
        raise SceneError(f"radius must be >= 1 pixel, got {R}")
    gap = max(4.0 * D, 2.0)
    height = int(math.ceil(2 * margin + 4 * R))
    width = int(math.ceil(2 * margin + 6 * R + gap))
    cy = height / 2
    big = Shape.circle(cy, margin + 2 * R, 2 * R, THING_CLASSES[0])
    small = Shape.circle(cy, margin + 4 * R + gap + R, R, THING_CLASSES[0])
    return SceneSpec(height, width, (big, small), name=f"circles-R{R:g}")


def circle_weight_ratio(R: float, cfg: EDSConfig) -> CirclesReport:
    if R < 8 * cfg.D:
        logger.warning(f"R = {R:g} < 8 D = {8 * cfg.D:g}, the perimeter and area regimes overlap")
    instances, _ = generate_scene(circle_scene(R, cfg.D))
    w = eds_weights(instances, cfg).weights
    big, small = instances.ids == 1, instances.ids == 2
    if not big.any() or not small.any():
        raise SceneError("a circle vanished from the scene")
    report = CirclesReport(
        R=float(R),
        D=float(cfg.D),
        w_min=float(cfg.w_min),
        big_area=int(big.sum()),
        small_area=int(small.sum()),
        big_weight=float(w[big].sum()),
        small_weight=float(w[small].sum()),
    )
    logger.info(f"circles R={R:g}: weight ratio {report.ratio:.4f}, area ratio {report.area_ratio:.4f}")
    return report


def circle_ratio_series(
    R: float,
    cfg: EDSConfig,
    D_factors: Sequence[float] = (0.25, 0.5, 1.0, 2.0),
    w_mins: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
) -> list[CirclesReport]:
    """Weight ratios over D at the configured w_min, then over w_min at the configured D."""
    runs = [replace(cfg, D=cfg.D * f) for f in D_factors] + [replace(cfg, w_min=w) for w in w_mins]
    return [circle_weight_ratio(R, c) for c in runs]


def series_dataframe(reports: Sequence[CirclesReport]) -> pd.DataFrame:
    return pd.DataFrame([r.to_dict() for r in reports])
