"""Detection scorers and the delimited detection interchange format.

A scorer turns a tile into scored detections in tile coordinates. Two are
provided: :class:`OracleScorer`, which perturbs the tile's ground truth, and
:class:`FileScorer`, which replays detections loaded from disk.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .dataset import BOX_SIZE, Label, Tile
from .files import atomic_write_text
from .geometry import Box
from .postprocess import Detection

DETECTION_FIELDS = ("slide_id", "x", "y", "w", "h", "score", "label")


class DetectionFormatError(ValueError):
    pass


class Scorer(Protocol):
    def score_tile(self, tile: Tile, rng: np.random.Generator) -> list[Detection]: ...


@dataclass(frozen=True)
class ScorerConfig:
    recall_sim: float = 1.0
    fp_rate: float = 0.0
    jitter_sigma: float = 0.0
    tp_score: tuple[float, float] = (0.6, 1.0)
    fp_score: tuple[float, float] = (0.0, 0.7)
    box_size: float = BOX_SIZE
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.recall_sim <= 1.0:
            raise ValueError(f"recall_sim {self.recall_sim} outside [0, 1]")
        if self.fp_rate < 0 or self.jitter_sigma < 0:
            raise ValueError("fp_rate and jitter_sigma must be non-negative")
        for name in ("tp_score", "fp_score"):
            lo, hi = getattr(self, name)
            if not 0.0 <= lo <= hi <= 1.0:
                raise ValueError(f"{name} support [{lo}, {hi}] must lie within [0, 1]")


class OracleScorer:
    """Synthetic detector built from ground truth.

    Each mitotic annotation is found with probability ``recall_sim``, shifted
    by a per-axis uniform offset in ``[-jitter_sigma, jitter_sigma]`` and given
    a score from ``tp_score``. On top of that, a Poisson(``fp_rate``) number
    of spurious boxes land uniformly on the tile with scores from
    ``fp_score``. Scores are uniform on their stated supports.
    """

    def __init__(self, config: ScorerConfig):
        self.config = config

    def score_tile(self, tile: Tile, rng: np.random.Generator) -> list[Detection]:
        cfg = self.config
        out = []
        for ann in tile.annotations:
            if ann.label != Label.MITOTIC:
                continue
            if rng.random() >= cfg.recall_sim:
                continue
            dx, dy = rng.uniform(-cfg.jitter_sigma, cfg.jitter_sigma, size=2)
            score = rng.uniform(*cfg.tp_score)
            box = ann.box.translate(float(dx), float(dy))
            out.append(Detection(box, float(score), Label.MITOTIC, tile.slide_id, tile.tile_id))
        n_fp = int(rng.poisson(cfg.fp_rate))
        span = max(tile.size - cfg.box_size, 0.0)
        for _ in range(n_fp):
            x, y = rng.uniform(0.0, span, size=2)
            score = rng.uniform(*cfg.fp_score)
            box = Box(float(x), float(y), cfg.box_size, cfg.box_size)
            out.append(Detection(box, float(score), Label.MITOTIC, tile.slide_id, tile.tile_id))
        return out


def score_tile(tile: Tile, config: ScorerConfig, rng: np.random.Generator) -> list[Detection]:
    return OracleScorer(config).score_tile(tile, rng)


class FileScorer:
    """Replays stored slide-frame detections onto tiles by box center."""

    def __init__(self, predictions: Mapping[str, list[Detection]]):
        self.predictions = predictions

    def score_tile(self, tile: Tile, rng: np.random.Generator | None = None) -> list[Detection]:
        out = []
        for det in self.predictions.get(tile.slide_id, []):
            cx, cy = det.box.center
            if tile.origin_x <= cx < tile.origin_x + tile.size and tile.origin_y <= cy < tile.origin_y + tile.size:
                box = det.box.translate(-tile.origin_x, -tile.origin_y)
                out.append(Detection(box, det.score, det.label, det.slide_id, tile.tile_id))
        return out


def to_slide_frame(det: Detection, origin_x: float, origin_y: float) -> Detection:
    return Detection(
        det.box.translate(origin_x, origin_y), det.score, det.label, det.slide_id, None
    )


def format_detections(predictions: Mapping[str, Iterable[Detection]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(DETECTION_FIELDS)
    for slide_id, dets in predictions.items():
        for d in dets:
            # repr keeps full float round-trip precision
            writer.writerow(
                [slide_id, repr(d.box.x), repr(d.box.y), repr(d.box.w), repr(d.box.h),
                 repr(d.score), d.label.value]
            )
    return buf.getvalue()


def save_predictions(path: str | Path, predictions: Mapping[str, Iterable[Detection]]) -> None:
    atomic_write_text(path, format_detections(predictions))


def parse_detections(text: str, source: str = "<string>") -> dict[str, list[Detection]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None or tuple(h.strip() for h in header) != DETECTION_FIELDS:
        raise DetectionFormatError(
            f"{source}:1: header must be {','.join(DETECTION_FIELDS)}, got {header}"
        )
    out: dict[str, list[Detection]] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(DETECTION_FIELDS):
            raise DetectionFormatError(
                f"{source}:{lineno}: expected {len(DETECTION_FIELDS)} fields, got {len(row)}"
            )
        slide_id = row[0]
        values = {}
        for name, raw in zip(DETECTION_FIELDS[1:6], row[1:6]):
            try:
                values[name] = float(raw)
            except ValueError:
                raise DetectionFormatError(f"{source}:{lineno}: field {name}={raw!r} is not a number") from None
            if not math.isfinite(values[name]):
                raise DetectionFormatError(f"{source}:{lineno}: field {name}={raw!r} is not finite")
        if not 0.0 <= values["score"] <= 1.0:
            raise DetectionFormatError(
                f"{source}:{lineno}: field score={row[5]} outside [0, 1]"
            )
        try:
            label = Label.parse(row[6])
            box = Box(values["x"], values["y"], values["w"], values["h"])
        except ValueError as exc:
            raise DetectionFormatError(f"{source}:{lineno}: {exc}") from None
        out.setdefault(slide_id, []).append(Detection(box, values["score"], label, slide_id))
    return out


def load_predictions(path: str | Path) -> dict[str, list[Detection]]:
    """Read a detections file into ``{slide_id: [Detection, ...]}``."""
    path = Path(path)
    return parse_detections(path.read_text(encoding="utf-8"), source=str(path))
