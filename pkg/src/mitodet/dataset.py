"""Slide records, dataset splits, tiling and empty-tile rejection sampling."""

from __future__ import annotations

import enum
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .geometry import Box, clip_box

TILE_SIZE = 1024
BOX_SIZE = 50
DROP_PROB = 0.8
# clipped annotations keeping less than this share of their area are flagged
TRUNCATION_AREA = 0.25


class Label(str, enum.Enum):
    MITOTIC = "mitotic"
    NON_MITOTIC = "non_mitotic"

    @classmethod
    def parse(cls, value: str | Label) -> Label:
        try:
            return cls(value)
        except ValueError:
            raise ValueError(
                f"unknown label {value!r}; expected one of {[m.value for m in cls]}"
            ) from None


@dataclass(frozen=True)
class Annotation:
    box: Box
    label: Label = Label.MITOTIC
    truncated: bool = False


@dataclass
class SlideRecord:
    """A whole slide: scanner identity, pixel extent and its annotations."""

    slide_id: str
    scanner_id: str
    width: int
    height: int
    annotations: list[Annotation] = field(default_factory=list)
    image_source: Path | None = None

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError(f"slide {self.slide_id}: bad extent {self.width}x{self.height}")
        for i, ann in enumerate(self.annotations):
            if not ann.box.inside(self.width, self.height):
                raise ValueError(
                    f"slide {self.slide_id}: annotation {i} {ann.box.as_tuple()} "
                    f"exceeds the {self.width}x{self.height} slide"
                )

    def check_box_size(self, box_size: float = BOX_SIZE) -> None:
        """Raise if any annotation is not the canonical ``box_size`` square."""
        for i, ann in enumerate(self.annotations):
            if ann.box.w != box_size or ann.box.h != box_size:
                raise ValueError(
                    f"slide {self.slide_id}: annotation {i} is {ann.box.w}x{ann.box.h}, "
                    f"expected {box_size}x{box_size}"
                )


@dataclass
class Tile:
    slide_id: str
    origin_x: int
    origin_y: int
    size: int = TILE_SIZE
    annotations: list[Annotation] = field(default_factory=list)
    pixels: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def tile_id(self) -> str:
        return f"{self.slide_id}_x{self.origin_x}_y{self.origin_y}"

    @property
    def is_empty(self) -> bool:
        return not self.annotations


@dataclass
class SplitPlan:
    train: list[str]
    validation: list[str]
    test: list[str]
    seed: int | None = None
    held_out: str | None = None

    def as_dict(self) -> dict:
        return {
            "train": list(self.train),
            "validation": list(self.validation),
            "test": list(self.test),
            "seed": self.seed,
            "held_out": self.held_out,
        }


def _unique_ids(slides: Sequence[SlideRecord]) -> list[str]:
    ids = [s.slide_id for s in slides]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ValueError(f"duplicate slide ids: {dupes}")
    return ids


def split_random(
    slides: Sequence[SlideRecord], n_train: int, n_val: int, n_test: int, seed: int
) -> SplitPlan:
    """Uniformly random train/validation/test partition of the slides.

    Each part keeps the slides in manifest order; the permutation depends on
    ``seed`` alone.
    """
    ids = _unique_ids(slides)
    if min(n_train, n_val, n_test) < 0:
        raise ValueError(f"split counts must be non-negative: {(n_train, n_val, n_test)}")
    total = n_train + n_val + n_test
    if total != len(ids):
        raise ValueError(
            f"split counts {n_train}+{n_val}+{n_test}={total} do not match "
            f"the {len(ids)} slides in the manifest"
        )
    perm = np.random.default_rng(seed).permutation(len(ids))
    part = np.empty(len(ids), dtype=np.int64)
    part[perm[:n_train]] = 0
    part[perm[n_train : n_train + n_val]] = 1
    part[perm[n_train + n_val :]] = 2
    return SplitPlan(
        train=[i for i, p in zip(ids, part) if p == 0],
        validation=[i for i, p in zip(ids, part) if p == 1],
        test=[i for i, p in zip(ids, part) if p == 2],
        seed=seed,
    )


def split_leave_one_scanner_out(slides: Sequence[SlideRecord]) -> list[SplitPlan]:
    """One fold per scanner: that scanner's slides are the test set, the rest train."""
    _unique_ids(slides)
    scanners = sorted({s.scanner_id for s in slides})
    if len(scanners) < 2:
        raise ValueError(
            f"leave-one-scanner-out needs at least 2 scanners, got {scanners}"
        )
    plans = []
    for held in scanners:
        plans.append(
            SplitPlan(
                train=[s.slide_id for s in slides if s.scanner_id != held],
                validation=[],
                test=[s.slide_id for s in slides if s.scanner_id == held],
                held_out=held,
            )
        )
    return plans


def tile_count(width: int, height: int, tile_size: int = TILE_SIZE) -> int:
    return math.ceil(width / tile_size) * math.ceil(height / tile_size)


def tile_slide(
    slide: SlideRecord,
    tile_size: int = TILE_SIZE,
    center_rule: bool = True,
    pixels: np.ndarray | None = None,
) -> list[Tile]:
    """Cut a slide into a non-overlapping grid of ``tile_size`` squares.

    Tiles are listed row by row. Each annotation goes to the single tile that
    contains its center (a center on a grid line belongs to the right/bottom
    tile), then is clipped to that tile and moved into tile coordinates. With
    ``center_rule=False`` every overlapping tile receives a clipped copy.

    If ``pixels`` (an ``(height, width, 3)`` uint8 slide image) is given, each
    tile gets its crop, zero-padded out to ``tile_size`` at the slide edges.
    """
    if tile_size < 1:
        raise ValueError(f"tile_size must be >= 1, got {tile_size}")
    nx = math.ceil(slide.width / tile_size)
    ny = math.ceil(slide.height / tile_size)
    tiles = {
        (i, j): Tile(slide.slide_id, i * tile_size, j * tile_size, tile_size)
        for j in range(ny)
        for i in range(nx)
    }

    for ann in slide.annotations:
        if center_rule:
            cx, cy = ann.box.center
            i = min(int(cx // tile_size), nx - 1)
            j = min(int(cy // tile_size), ny - 1)
            targets = [(i, j)]
        else:
            b = ann.box
            targets = [
                (i, j)
                for j in range(int(b.y // tile_size), min(ny, math.ceil(b.y2 / tile_size)))
                for i in range(int(b.x // tile_size), min(nx, math.ceil(b.x2 / tile_size)))
            ]
        for key in targets:
            tile = tiles[key]
            extent_w = min(tile_size, slide.width - tile.origin_x)
            extent_h = min(tile_size, slide.height - tile.origin_y)
            local = ann.box.translate(-tile.origin_x, -tile.origin_y)
            clipped = clip_box(local, extent_w, extent_h)
            if clipped is None:
                continue
            truncated = clipped.area < TRUNCATION_AREA * ann.box.area
            tile.annotations.append(replace(ann, box=clipped, truncated=truncated))

    if pixels is not None:
        if pixels.shape[:2] != (slide.height, slide.width):
            raise ValueError(
                f"slide {slide.slide_id}: pixel buffer {pixels.shape[:2]} does not match "
                f"{slide.height}x{slide.width}"
            )
        for tile in tiles.values():
            crop = pixels[
                tile.origin_y : tile.origin_y + tile_size,
                tile.origin_x : tile.origin_x + tile_size,
            ]
            buf = np.zeros((tile_size, tile_size, pixels.shape[2]), dtype=pixels.dtype)
            buf[: crop.shape[0], : crop.shape[1]] = crop
            tile.pixels = buf

    return [tiles[(i, j)] for j in range(ny) for i in range(nx)]


def sample_training_tiles(
    tiles: Iterable[Tile], drop_prob: float, rng: np.random.Generator
) -> list[Tile]:
    """Keep every annotated tile; keep each empty tile with probability ``1 - drop_prob``.

    One uniform draw is consumed per empty tile, in input order.
    """
    if not 0.0 <= drop_prob <= 1.0:
        raise ValueError(f"drop_prob must be in [0, 1], got {drop_prob}")
    kept = []
    for tile in tiles:
        if not tile.is_empty or rng.random() >= drop_prob:
            kept.append(tile)
    return kept
