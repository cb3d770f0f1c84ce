"""Manifest, tile-manifest and image file handling.

All text artifacts are written atomically (temp file in the target directory,
then rename) and JSON is emitted with sorted keys so reruns are byte-identical.
"""

from __future__ import annotations

import io
import json
import os
import tempfile
from collections.abc import Sequence
from pathlib import Path

import numpy as np
from PIL import Image

from .dataset import Annotation, Label, SlideRecord, Tile
from .geometry import Box


class SchemaError(ValueError):
    """Input file does not match its documented schema."""


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def write_json(path: str | Path, obj) -> None:
    atomic_write_text(path, dumps(obj))


def read_json(path: str | Path):
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from None


def _annotation_to_dict(ann: Annotation) -> dict:
    out = {"x": ann.box.x, "y": ann.box.y, "w": ann.box.w, "h": ann.box.h, "label": ann.label.value}
    if ann.truncated:
        out["truncated"] = True
    return out


def _annotation_from_dict(data: dict, where: str) -> Annotation:
    if not isinstance(data, dict):
        raise SchemaError(f"{where}: annotation must be an object")
    missing = [k for k in ("x", "y", "w", "h") if k not in data]
    if missing:
        raise SchemaError(f"{where}: missing fields {missing}")
    try:
        box = Box(*(float(data[k]) for k in ("x", "y", "w", "h")))
        label = Label.parse(data.get("label", Label.MITOTIC.value))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"{where}: {exc}") from None
    return Annotation(box, label, bool(data.get("truncated", False)))


def slide_to_dict(slide: SlideRecord) -> dict:
    out = {
        "slide_id": slide.slide_id,
        "scanner_id": slide.scanner_id,
        "width": slide.width,
        "height": slide.height,
        "annotations": [_annotation_to_dict(a) for a in slide.annotations],
    }
    if slide.image_source is not None:
        out["image"] = str(slide.image_source)
    return out


def manifest_to_dict(slides: Sequence[SlideRecord]) -> dict:
    return {"slides": [slide_to_dict(s) for s in slides]}


def parse_manifest(data, base_dir: Path | None = None, box_size: float | None = None) -> list[SlideRecord]:
    """Build slide records from a decoded manifest.

    Relative image paths resolve against ``base_dir``. When ``box_size`` is
    given, every annotation must be a ``box_size`` square.
    """
    if not isinstance(data, dict) or not isinstance(data.get("slides"), list):
        raise SchemaError("manifest must be an object with a 'slides' list")
    slides = []
    seen = set()
    for i, raw in enumerate(data["slides"]):
        where = f"slides[{i}]"
        if not isinstance(raw, dict):
            raise SchemaError(f"{where}: slide must be an object")
        for key in ("slide_id", "scanner_id", "width", "height"):
            if key not in raw:
                raise SchemaError(f"{where}: missing field {key!r}")
        slide_id = str(raw["slide_id"])
        if slide_id in seen:
            raise SchemaError(f"{where}: duplicate slide_id {slide_id!r}")
        seen.add(slide_id)
        anns = [
            _annotation_from_dict(a, f"{where}.annotations[{j}]")
            for j, a in enumerate(raw.get("annotations", []))
        ]
        image = raw.get("image")
        if image is not None:
            image = Path(image)
            if base_dir is not None and not image.is_absolute():
                image = base_dir / image
        try:
            slide = SlideRecord(
                slide_id=slide_id,
                scanner_id=str(raw["scanner_id"]),
                width=int(raw["width"]),
                height=int(raw["height"]),
                annotations=anns,
                image_source=image,
            )
            if box_size is not None:
                slide.check_box_size(box_size)
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{where}: {exc}") from None
        slides.append(slide)
    return slides


def load_manifest(path: str | Path, box_size: float | None = None) -> list[SlideRecord]:
    path = Path(path)
    return parse_manifest(read_json(path), base_dir=path.parent, box_size=box_size)


def tile_to_dict(tile: Tile, image: str | None = None) -> dict:
    return {
        "tile_id": tile.tile_id,
        "slide_id": tile.slide_id,
        "origin_x": tile.origin_x,
        "origin_y": tile.origin_y,
        "size": tile.size,
        "image": image,
        "annotations": [_annotation_to_dict(a) for a in tile.annotations],
    }


def tile_from_dict(data: dict, where: str = "tile") -> Tile:
    try:
        tile = Tile(
            slide_id=str(data["slide_id"]),
            origin_x=int(data["origin_x"]),
            origin_y=int(data["origin_y"]),
            size=int(data["size"]),
            annotations=[
                _annotation_from_dict(a, f"{where}.annotations[{j}]")
                for j, a in enumerate(data.get("annotations", []))
            ],
        )
    except KeyError as exc:
        raise SchemaError(f"{where}: missing field {exc}") from None
    return tile


def load_tile_manifest(path: str | Path) -> tuple[list[Tile], list[str | None]]:
    """Tiles plus the image path (or ``None``) recorded for each."""
    path = Path(path)
    data = read_json(path)
    if not isinstance(data, dict) or not isinstance(data.get("tiles"), list):
        raise SchemaError(f"{path}: tile manifest must be an object with a 'tiles' list")
    tiles, images = [], []
    for i, raw in enumerate(data["tiles"]):
        tiles.append(tile_from_dict(raw, f"{path}:tiles[{i}]"))
        image = raw.get("image")
        images.append(str(path.parent / image) if image else None)
    return tiles, images


def tile_filename(tile: Tile) -> str:
    return f"{tile.tile_id}.png"


def read_rgb(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def write_png(path: str | Path, pixels: np.ndarray) -> None:
    buf = io.BytesIO()
    Image.fromarray(np.ascontiguousarray(pixels, dtype=np.uint8), mode="RGB").save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())
