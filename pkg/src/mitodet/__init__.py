"""Mitosis-detection pipeline stages around a pluggable detection scorer."""

from .augmentation import AugmentationPolicy, augment
from .config import PipelineConfig, load_config
from .dataset import Annotation, Label, SlideRecord, SplitPlan, Tile
from .evaluation import EvalReport, compute_prf, evaluate_run, match_detections, tune_threshold
from .geometry import Box, clip_box, flip_box, iou
from .postprocess import Detection, apply_threshold, nms

__version__ = "0.1.0"

__all__ = [
    "Annotation",
    "AugmentationPolicy",
    "Box",
    "Detection",
    "EvalReport",
    "Label",
    "PipelineConfig",
    "SlideRecord",
    "SplitPlan",
    "Tile",
    "apply_threshold",
    "augment",
    "clip_box",
    "compute_prf",
    "evaluate_run",
    "flip_box",
    "iou",
    "load_config",
    "match_detections",
    "nms",
    "tune_threshold",
]
