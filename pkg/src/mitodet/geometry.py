"""Axis-aligned box arithmetic in continuous pixel coordinates.

Boxes are encoded as ``(x, y, w, h)`` with the origin at the top-left corner
and ``y`` growing downward. Every IoU threshold in the package is compared
with ``>=``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle; ``w`` and ``h`` must be strictly positive."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "w", "h"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ValueError(f"box {name}={value!r} is not finite")
            object.__setattr__(self, name, value)
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"degenerate box: w={self.w}, h={self.h}")

    @property
    def x2(self) -> float:
        return self.x + self.w

    @property
    def y2(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def center(self) -> tuple[float, float]:
        return self.x + self.w / 2, self.y + self.h / 2

    def translate(self, dx: float, dy: float) -> Box:
        return Box(self.x + dx, self.y + dy, self.w, self.h)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)

    def inside(self, frame_w: float, frame_h: float) -> bool:
        """True if the box lies within ``[0, frame_w] x [0, frame_h]``."""
        return self.x >= 0 and self.y >= 0 and self.x2 <= frame_w and self.y2 <= frame_h


def intersection_area(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes, in ``[0, 1]``."""
    inter = intersection_area(a, b)
    if inter == 0.0:
        return 0.0
    if a == b:
        return 1.0
    return inter / (a.area + b.area - inter)


def flip_box(b: Box, frame_w: float, frame_h: float, flip_h: bool, flip_v: bool) -> Box:
    """Mirror ``b`` about the vertical (``flip_h``) and/or horizontal (``flip_v``) axis of the frame."""
    if not b.inside(frame_w, frame_h):
        raise ValueError(f"{b} lies outside the {frame_w}x{frame_h} frame")
    # clamp so float rounding cannot push the mirrored box past an edge
    x = min(max(frame_w - b.x - b.w, 0.0), frame_w - b.w) if flip_h else b.x
    y = min(max(frame_h - b.y - b.h, 0.0), frame_h - b.h) if flip_v else b.y
    return Box(x, y, b.w, b.h)


def clip_box(b: Box, frame_w: float, frame_h: float) -> Box | None:
    """Intersect ``b`` with the frame; ``None`` when nothing of positive area remains."""
    x1 = max(b.x, 0.0)
    y1 = max(b.y, 0.0)
    x2 = min(b.x2, float(frame_w))
    y2 = min(b.y2, float(frame_h))
    if x2 <= x1 or y2 <= y1:
        return None
    if (x1, y1, x2, y2) == (b.x, b.y, b.x2, b.y2):
        return b
    return Box(x1, y1, x2 - x1, y2 - y1)


def boxes_to_array(boxes: list[Box]) -> np.ndarray:
    """Stack boxes into an ``(N, 4)`` float array of ``x, y, w, h``."""
    if not boxes:
        return np.zeros((0, 4), dtype=np.float64)
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64)


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU between ``(N, 4)`` and ``(M, 4)`` xywh arrays."""
    a = np.asarray(a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 4)
    ax1, ay1 = a[:, 0:1], a[:, 1:2]
    ax2, ay2 = ax1 + a[:, 2:3], ay1 + a[:, 3:4]
    bx1, by1 = b[:, 0], b[:, 1]
    bx2, by2 = bx1 + b[:, 2], by1 + b[:, 3]
    iw = np.clip(np.minimum(ax2, bx2) - np.maximum(ax1, bx1), 0.0, None)
    ih = np.clip(np.minimum(ay2, by2) - np.maximum(ay1, by1), 0.0, None)
    inter = iw * ih
    union = (a[:, 2] * a[:, 3])[:, None] + (b[:, 2] * b[:, 3])[None, :] - inter
    out = inter / union
    # identical boxes must compare as exactly 1 at any threshold
    same = np.all(a[:, None, :] == b[None, :, :], axis=2)
    out[same] = 1.0
    return out
