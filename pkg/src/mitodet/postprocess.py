"""Confidence thresholding and per-class greedy non-maximum suppression."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .dataset import Label
from .geometry import Box, boxes_to_array, iou_matrix

NMS_IOU = 0.1


@dataclass(frozen=True)
class Detection:
    """A scored box; ``tile_id`` is set while the box is in tile coordinates."""

    box: Box
    score: float
    label: Label = Label.MITOTIC
    slide_id: str = ""
    tile_id: str | None = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.score) and 0.0 <= self.score <= 1.0):
            raise ValueError(f"detection score {self.score!r} outside [0, 1]")


def rank_order(dets: Sequence[Detection]) -> list[int]:
    """Indices by descending score, ties by ascending input position."""
    return sorted(range(len(dets)), key=lambda i: (-dets[i].score, i))


def nms(dets: Sequence[Detection], iou_threshold: float = NMS_IOU) -> list[Detection]:
    """Greedy NMS run separately for each label.

    A detection is dropped when its IoU with an already kept, higher ranked
    detection of the same label is ``>= iou_threshold``. The survivors come
    back in descending score order.
    """
    if not 0.0 <= iou_threshold:
        raise ValueError(f"iou_threshold must be non-negative, got {iou_threshold}")
    order = rank_order(dets)
    keep = np.zeros(len(dets), dtype=bool)
    for label in {d.label for d in dets}:
        idx = np.array([i for i in order if dets[i].label == label], dtype=np.int64)
        arr = boxes_to_array([dets[i].box for i in idx])
        ious = iou_matrix(arr, arr)
        alive = np.ones(len(idx), dtype=bool)
        for k in range(len(idx)):
            if not alive[k]:
                continue
            keep[idx[k]] = True
            alive[k + 1 :] &= ious[k, k + 1 :] < iou_threshold
    return [dets[i] for i in order if keep[i]]


def apply_threshold(dets: Sequence[Detection], tau: float) -> list[Detection]:
    """Detections with ``score >= tau``, in input order."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    return [d for d in dets if d.score >= tau]


def postprocess(
    dets: Sequence[Detection], tau: float, iou_threshold: float = NMS_IOU
) -> list[Detection]:
    """Threshold, then NMS."""
    return nms(apply_threshold(dets, tau), iou_threshold)
