"""Pipeline configuration: one JSON document, every field defaulted."""

from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import anchors, dataset, evaluation, postprocess
from .augmentation import AugmentationPolicy
from .files import SchemaError, read_json
from .scorer import ScorerConfig

CONFIG_ENV = "MITODET_CONFIG"


@dataclass(frozen=True)
class PipelineConfig:
    tile_size: int = dataset.TILE_SIZE
    box_size: float = dataset.BOX_SIZE
    drop_prob: float = dataset.DROP_PROB
    split_counts: tuple[int, int, int] = (105, 15, 30)
    augmentation: AugmentationPolicy = field(default_factory=AugmentationPolicy)
    anchor_strides: tuple[int, ...] = anchors.DEFAULT_STRIDES
    anchor_scale: float = anchors.ANCHOR_SCALE
    positive_fraction: float = anchors.POSITIVE_FRACTION
    batch_size: int = anchors.BATCH_SIZE
    pos_iou: float = anchors.POS_IOU
    neg_iou: float = anchors.NEG_IOU
    nms_iou: float = postprocess.NMS_IOU
    eval_iou: float = evaluation.EVAL_IOU
    scorer: ScorerConfig = field(default_factory=ScorerConfig)
    seed: int = 0
    workers: int = 1

    def as_dict(self) -> dict:
        out = asdict(self)
        out["split_counts"] = list(self.split_counts)
        out["anchor_strides"] = list(self.anchor_strides)
        out["scorer"]["tp_score"] = list(self.scorer.tp_score)
        out["scorer"]["fp_score"] = list(self.scorer.fp_score)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> PipelineConfig:
        if not isinstance(data, dict):
            raise SchemaError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise SchemaError(f"unknown config keys: {unknown}")
        kwargs = dict(data)
        try:
            if "augmentation" in kwargs:
                kwargs["augmentation"] = AugmentationPolicy.from_dict(kwargs["augmentation"])
            if "scorer" in kwargs:
                sc = dict(kwargs["scorer"])
                for key in ("tp_score", "fp_score"):
                    if key in sc:
                        sc[key] = tuple(float(v) for v in sc[key])
                kwargs["scorer"] = ScorerConfig(**sc)
            if "split_counts" in kwargs:
                kwargs["split_counts"] = tuple(int(v) for v in kwargs["split_counts"])
            if "anchor_strides" in kwargs:
                kwargs["anchor_strides"] = tuple(int(v) for v in kwargs["anchor_strides"])
            cfg = cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"invalid config: {exc}") from None
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.tile_size < 1 or self.box_size <= 0:
            raise SchemaError("tile_size and box_size must be positive")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise SchemaError(f"drop_prob {self.drop_prob} outside [0, 1]")
        if len(self.split_counts) != 3 or min(self.split_counts) < 0:
            raise SchemaError(f"split_counts must be three non-negative counts: {self.split_counts}")
        if not self.anchor_strides or min(self.anchor_strides) < 1:
            raise SchemaError(f"anchor_strides must be positive: {self.anchor_strides}")
        if not self.pos_iou > self.neg_iou:
            raise SchemaError("pos_iou must exceed neg_iou")
        if not 0.0 < self.positive_fraction <= 1.0:
            raise SchemaError("positive_fraction must be in (0, 1]")
        if self.workers < 1:
            raise SchemaError("workers must be >= 1")

    def replace(self, **changes) -> PipelineConfig:
        data = self.as_dict()
        data.update(changes)
        return PipelineConfig.from_dict(data)


def load_config(path: str | Path | None = None) -> PipelineConfig:
    """Read a config file; falls back to ``$MITODET_CONFIG``, then to defaults."""
    if path is None:
        path = os.environ.get(CONFIG_ENV) or None
    if path is None:
        return PipelineConfig()
    return PipelineConfig.from_dict(read_json(path))
