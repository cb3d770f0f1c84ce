"""Single-scale, square anchor grids with IoU matching and minibatch sampling."""

from __future__ import annotations

import enum
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .dataset import Annotation
from .geometry import Box, boxes_to_array, iou_matrix

ANCHOR_SCALE = 50
ANCHOR_RATIO = 1.0
DEFAULT_STRIDES = (4, 8, 16, 32)
POS_IOU = 0.7
NEG_IOU = 0.3
BATCH_SIZE = 256
POSITIVE_FRACTION = 0.25


class AnchorLabel(enum.IntEnum):
    IGNORE = -1
    NEGATIVE = 0
    POSITIVE = 1


@dataclass
class AnchorGrid:
    stride: int
    scale: float
    tile_size: int
    boxes: np.ndarray  # (N, 4) xywh, row-major over feature cells
    ratio: float = ANCHOR_RATIO

    def __len__(self) -> int:
        return len(self.boxes)

    @property
    def anchors(self) -> list[Box]:
        return [Box(*map(float, row)) for row in self.boxes]


@dataclass
class AnchorLabels:
    labels: np.ndarray  # (N,) AnchorLabel values
    matched_gt: np.ndarray  # (N,) gt index for positives, -1 elsewhere
    max_iou: np.ndarray  # (N,)

    def indices(self, label: AnchorLabel) -> np.ndarray:
        return np.flatnonzero(self.labels == label)


def generate_anchors(tile_size: int, stride: int, scale: float = ANCHOR_SCALE) -> AnchorGrid:
    """One ``scale`` x ``scale`` anchor centered on every feature cell of the tile."""
    if stride < 1 or scale < 1 or tile_size < stride:
        raise ValueError(
            f"need stride >= 1, scale >= 1 and tile_size >= stride "
            f"(tile_size={tile_size}, stride={stride}, scale={scale})"
        )
    n = math.ceil(tile_size / stride)
    centers = (np.arange(n, dtype=np.float64) + 0.5) * stride
    cy, cx = np.meshgrid(centers, centers, indexing="ij")
    half = scale / 2.0
    boxes = np.stack(
        [cx.ravel() - half, cy.ravel() - half, np.full(n * n, scale, float), np.full(n * n, scale, float)],
        axis=1,
    )
    return AnchorGrid(stride=stride, scale=float(scale), tile_size=tile_size, boxes=boxes)


def concat_grids(grids: Sequence[AnchorGrid]) -> AnchorGrid:
    """Stack per-level grids into one anchor set (the stride of the first level is kept)."""
    if not grids:
        raise ValueError("no anchor grids to concatenate")
    return AnchorGrid(
        stride=grids[0].stride,
        scale=grids[0].scale,
        tile_size=grids[0].tile_size,
        boxes=np.concatenate([g.boxes for g in grids], axis=0),
    )


def _inside_fraction(boxes: np.ndarray, size: float) -> np.ndarray:
    iw = np.clip(np.minimum(boxes[:, 0] + boxes[:, 2], size) - np.maximum(boxes[:, 0], 0.0), 0, None)
    ih = np.clip(np.minimum(boxes[:, 1] + boxes[:, 3], size) - np.maximum(boxes[:, 1], 0.0), 0, None)
    return iw * ih / (boxes[:, 2] * boxes[:, 3])


def match_anchors(
    grid: AnchorGrid,
    gt: Sequence[Annotation],
    pos_iou: float = POS_IOU,
    neg_iou: float = NEG_IOU,
) -> AnchorLabels:
    """Label anchors against ground truth.

    Threshold labels come first, anchors with more than half their area
    outside the tile are then set to ignore, and finally each ground-truth
    box forces its best anchor positive. The best anchor is searched among
    in-tile anchors first and among all anchors only if none overlaps, so
    every ground-truth box ends with at least one positive matched to it.
    """
    if not pos_iou > neg_iou:
        raise ValueError(f"pos_iou ({pos_iou}) must exceed neg_iou ({neg_iou})")
    n = len(grid.boxes)
    labels = np.full(n, AnchorLabel.NEGATIVE, dtype=np.int64)
    matched = np.full(n, -1, dtype=np.int64)
    if not gt:
        return AnchorLabels(labels, matched, np.zeros(n))

    ious = iou_matrix(grid.boxes, boxes_to_array([a.box for a in gt]))
    best_gt = ious.argmax(axis=1)
    max_iou = ious[np.arange(n), best_gt]

    labels[(max_iou >= neg_iou) & (max_iou < pos_iou)] = AnchorLabel.IGNORE
    positive = max_iou >= pos_iou
    labels[positive] = AnchorLabel.POSITIVE
    matched[positive] = best_gt[positive]

    outside = _inside_fraction(grid.boxes, grid.tile_size) < 0.5
    labels[outside] = AnchorLabel.IGNORE
    matched[outside] = -1

    # forced anchors are claimed once so coincident gt boxes keep one each
    free = np.ones(n, dtype=bool)
    for g in range(len(gt)):
        col = np.where(free & ~outside, ious[:, g], -1.0)
        a = int(np.argmax(col))  # argmax returns the lowest index on ties
        if col[a] <= 0.0:
            col = np.where(free, ious[:, g], -1.0)
            a = int(np.argmax(col))
        labels[a] = AnchorLabel.POSITIVE
        matched[a] = g
        free[a] = False
    return AnchorLabels(labels, matched, max_iou)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def sample_minibatch(
    labels: AnchorLabels,
    batch_size: int = BATCH_SIZE,
    positive_fraction: float = POSITIVE_FRACTION,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw positives up to ``round(batch_size * positive_fraction)``, fill with negatives.

    Returns ``(indices, labels)`` with the sampled positives first. Ignored
    anchors are never drawn.
    """
    if not 0.0 < positive_fraction <= 1.0:
        raise ValueError(f"positive_fraction must be in (0, 1], got {positive_fraction}")
    if rng is None:
        rng = np.random.default_rng(0)
    pos = labels.indices(AnchorLabel.POSITIVE)
    neg = labels.indices(AnchorLabel.NEGATIVE)
    n_pos = min(len(pos), _round_half_up(batch_size * positive_fraction))
    n_neg = min(len(neg), batch_size - n_pos)
    pos_pick = rng.choice(pos, size=n_pos, replace=False) if n_pos else pos[:0]
    neg_pick = rng.choice(neg, size=n_neg, replace=False) if n_neg else neg[:0]
    idx = np.concatenate([pos_pick, neg_pick]).astype(np.int64)
    lab = np.concatenate(
        [np.full(n_pos, AnchorLabel.POSITIVE), np.full(n_neg, AnchorLabel.NEGATIVE)]
    ).astype(np.int64)
    return idx, lab
