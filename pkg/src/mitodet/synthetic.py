"""Synthetic slides and tile images for the demo and tests."""

from __future__ import annotations

import numpy as np

from .dataset import BOX_SIZE, Annotation, Label, SlideRecord, Tile
from .geometry import Box

# eosin-pink background per scanner, slightly shifted to mimic scanner color casts
_SCANNER_TINTS = [
    (0.93, 0.72, 0.82),
    (0.88, 0.70, 0.86),
    (0.95, 0.78, 0.78),
    (0.90, 0.75, 0.90),
]
_NUCLEUS = {
    Label.MITOTIC: (0.25, 0.12, 0.40),
    Label.NON_MITOTIC: (0.50, 0.35, 0.65),
}


def _place_boxes(rng, n, width, height, box_size, taken, min_gap):
    boxes = []
    attempts = 0
    while len(boxes) < n:
        attempts += 1
        if attempts > 1000 * (n + 1):
            raise RuntimeError(f"could not place {n} separated boxes on a {width}x{height} slide")
        x = float(rng.integers(0, width - box_size + 1))
        y = float(rng.integers(0, height - box_size + 1))
        if all(abs(x - ox) >= box_size + min_gap or abs(y - oy) >= box_size + min_gap for ox, oy in taken):
            taken.append((x, y))
            boxes.append(Box(x, y, box_size, box_size))
    return boxes


def make_manifest(
    n_slides: int = 12,
    scanners: tuple[str, ...] = ("A", "B", "C"),
    size_range: tuple[int, int] = (5000, 7000),
    mitotic_per_slide: tuple[int, int] = (3, 12),
    non_mitotic_per_slide: tuple[int, int] = (2, 8),
    box_size: int = BOX_SIZE,
    seed: int = 0,
    min_gap: int = 10,
) -> list[SlideRecord]:
    """Slides with well-separated square annotations, scanners assigned round-robin.

    Boxes never overlap (they are at least ``min_gap`` pixels apart on one
    axis), so a noise-free detector survives NMS at any positive threshold.
    """
    rng = np.random.default_rng(seed)
    slides = []
    for i in range(n_slides):
        w, h = (int(v) for v in rng.integers(size_range[0], size_range[1] + 1, size=2))
        taken: list[tuple[float, float]] = []
        n_mit = int(rng.integers(mitotic_per_slide[0], mitotic_per_slide[1] + 1))
        n_non = int(rng.integers(non_mitotic_per_slide[0], non_mitotic_per_slide[1] + 1))
        anns = [Annotation(b, Label.MITOTIC) for b in _place_boxes(rng, n_mit, w, h, box_size, taken, min_gap)]
        anns += [
            Annotation(b, Label.NON_MITOTIC)
            for b in _place_boxes(rng, n_non, w, h, box_size, taken, min_gap)
        ]
        slides.append(
            SlideRecord(
                slide_id=f"slide_{i:03d}",
                scanner_id=scanners[i % len(scanners)],
                width=w,
                height=h,
                annotations=anns,
            )
        )
    return slides


def render_tile(
    tile: Tile, slide: SlideRecord, rng: np.random.Generator, scanners: list[str] | None = None
) -> np.ndarray:
    """Paint a tile: tinted tissue background, dark disks for annotated nuclei.

    Pixels beyond the slide edge stay zero, matching the tiler's padding.
    """
    scanners = scanners or sorted({slide.scanner_id})
    tint = np.array(_SCANNER_TINTS[scanners.index(slide.scanner_id) % len(_SCANNER_TINTS)])
    size = tile.size
    img = tint[None, None, :] + rng.normal(0.0, 0.03, size=(size, size, 3))
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    for ann in tile.annotations:
        cx, cy = ann.box.center
        r = min(ann.box.w, ann.box.h) / 2 * 0.8
        disk = (xx - cx) ** 2 + (yy - cy) ** 2 <= r * r
        img[disk] = np.array(_NUCLEUS[ann.label]) + rng.normal(0.0, 0.03, size=(int(disk.sum()), 3))
    ew = max(0, min(size, slide.width - tile.origin_x))
    eh = max(0, min(size, slide.height - tile.origin_y))
    img[eh:, :] = 0.0
    img[:, ew:] = 0.0
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
