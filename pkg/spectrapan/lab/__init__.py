"""
Desk-scale imbalance experiments on synthetic scenes

1. Cross-assignment loss at instance borders (direct vs spectral embedding)
2. Edge-distance weight of two circles of radius 2R and R
3. Toy coupled training, IoU by instance size
"""

from .circles import CirclesReport, circle_ratio_series, circle_scene, circle_weight_ratio
from .loss_scale import LossScaleReport, loss_scale_analysis, run_loss_scale_suite
from .scenes import SceneSpec, Shape, generate_scene, loss_scale_suite, random_scene, roundtrip_scene, toy_suite
from .toy_train import ToyTrainConfig, ToyTrainResult, toy_coupled_train

__all__ = [
    "CirclesReport",
    "circle_ratio_series",
    "circle_scene",
    "circle_weight_ratio",
    "LossScaleReport",
    "loss_scale_analysis",
    "run_loss_scale_suite",
    "SceneSpec",
    "Shape",
    "generate_scene",
    "loss_scale_suite",
    "random_scene",
    "roundtrip_scene",
    "toy_suite",
    "ToyTrainConfig",
    "ToyTrainResult",
    "toy_coupled_train",
]
