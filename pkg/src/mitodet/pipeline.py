"""Multi-step pipeline runs shared by the CLI subcommands and the demo.

Every random draw comes from a stream derived from ``config.seed``, so a
run's outputs depend only on its config and input files.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from collections.abc import Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import files, synthetic
from .anchors import (
    AnchorLabel,
    concat_grids,
    generate_anchors,
    match_anchors,
    sample_minibatch,
)
from .augmentation import augment_with_trace, to_float, to_uint8
from .config import PipelineConfig
from .dataset import (
    SlideRecord,
    SplitPlan,
    Tile,
    sample_training_tiles,
    split_leave_one_scanner_out,
    split_random,
    tile_slide,
)
from .evaluation import CurvePoint, EvalReport, evaluate_run, threshold_curve, tune_threshold
from .postprocess import Detection, apply_threshold, nms
from .scorer import OracleScorer, Scorer, format_detections, to_slide_frame
from .streams import stage_stream, tile_stream

log = logging.getLogger(__name__)


def _map(fn, items, workers: int):
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def split_plans(
    slides: Sequence[SlideRecord], config: PipelineConfig, mode: str = "random",
    counts: tuple[int, int, int] | None = None,
) -> list[SplitPlan]:
    if mode == "random":
        n_train, n_val, n_test = counts or config.split_counts
        return [split_random(slides, n_train, n_val, n_test, config.seed)]
    if mode == "scanner":
        return split_leave_one_scanner_out(slides)
    raise ValueError(f"unknown split mode {mode!r}; expected 'random' or 'scanner'")


def proportional_counts(n: int, counts: tuple[int, int, int]) -> tuple[int, int, int]:
    """Scale split counts to ``n`` slides, keeping their ratios."""
    total = sum(counts)
    n_val = int(round(n * counts[1] / total))
    n_test = int(round(n * counts[2] / total))
    return n - n_val - n_test, n_val, n_test


def tile_slides(
    slides: Sequence[SlideRecord],
    config: PipelineConfig,
    out_dir: Path | None = None,
    write_pixels: bool = True,
) -> tuple[list[Tile], dict]:
    """Tile every slide; returns tiles and the tile-manifest document.

    When ``out_dir`` is given and a slide has an image, one PNG per tile is
    written there.
    """

    def work(slide: SlideRecord):
        pixels = None
        if write_pixels and out_dir is not None and slide.image_source is not None:
            pixels = files.read_rgb(slide.image_source)
        tiles = tile_slide(slide, config.tile_size, pixels=pixels)
        images = []
        for tile in tiles:
            name = None
            if tile.pixels is not None:
                name = files.tile_filename(tile)
                files.write_png(out_dir / name, tile.pixels)
                tile.pixels = None
            images.append(name)
        return tiles, images

    all_tiles, entries = [], []
    for tiles, images in _map(work, slides, config.workers):
        all_tiles.extend(tiles)
        entries.extend(files.tile_to_dict(t, img) for t, img in zip(tiles, images))
    doc = {"tile_size": config.tile_size, "tiles": entries}
    return all_tiles, doc


def training_tiles(
    tiles: Sequence[Tile], train_ids: Sequence[str], config: PipelineConfig, epoch: int = 0
) -> list[Tile]:
    """Training-split tiles after empty-tile rejection; redrawn per epoch."""
    train = set(train_ids)
    pool = [t for t in tiles if t.slide_id in train]
    return sample_training_tiles(pool, config.drop_prob, stage_stream(config.seed, "drop", epoch))


def augment_tile(
    tile: Tile, pixels: np.ndarray, config: PipelineConfig, epoch: int = 0
) -> tuple[np.ndarray, Tile, dict]:
    """Augment one tile; returns the 8-bit image, the moved tile and its trace record."""
    rng = tile_stream(config.seed, tile.slide_id, tile.origin_x, tile.origin_y, epoch, "augment")
    img, boxes, trace = augment_with_trace(
        to_float(pixels), [a.box for a in tile.annotations], config.augmentation, rng
    )
    moved = Tile(
        tile.slide_id,
        tile.origin_x,
        tile.origin_y,
        tile.size,
        [replace(a, box=b) for a, b in zip(tile.annotations, boxes)],
    )
    record = {"tile_id": tile.tile_id, "epoch": epoch, **trace.as_dict()}
    return to_uint8(img), moved, record


def trace_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def anchor_report(tile: Tile, config: PipelineConfig, epoch: int = 0, include_anchors: bool = False) -> dict:
    """Anchor grid, labels and one sampled minibatch for a tile."""
    grids = [generate_anchors(tile.size, s, config.anchor_scale) for s in config.anchor_strides]
    grid = concat_grids(grids)
    labels = match_anchors(grid, tile.annotations, config.pos_iou, config.neg_iou)
    rng = tile_stream(config.seed, tile.slide_id, tile.origin_x, tile.origin_y, epoch, "anchors")
    idx, lab = sample_minibatch(labels, config.batch_size, config.positive_fraction, rng)
    out = {
        "tile_id": tile.tile_id,
        "strides": list(config.anchor_strides),
        "scale": config.anchor_scale,
        "anchors_per_level": [len(g) for g in grids],
        "counts": {
            "positive": int((labels.labels == AnchorLabel.POSITIVE).sum()),
            "negative": int((labels.labels == AnchorLabel.NEGATIVE).sum()),
            "ignore": int((labels.labels == AnchorLabel.IGNORE).sum()),
        },
        "batch": {
            "indices": [int(i) for i in idx],
            "labels": [AnchorLabel(int(v)).name.lower() for v in lab],
            "positive": int((lab == AnchorLabel.POSITIVE).sum()),
            "negative": int((lab == AnchorLabel.NEGATIVE).sum()),
        },
        "positives": [
            {"anchor": int(a), "gt": int(labels.matched_gt[a])}
            for a in np.flatnonzero(labels.labels == AnchorLabel.POSITIVE)
        ],
    }
    if include_anchors:
        out["anchors"] = [[float(v) for v in row] for row in grid.boxes]
        out["labels"] = [AnchorLabel(int(v)).name.lower() for v in labels.labels]
    return out


def score_tiles(
    tiles: Sequence[Tile], scorer: Scorer, config: PipelineConfig, epoch: int = 0
) -> dict[str, list[Detection]]:
    """Run a scorer over tiles and collect slide-frame detections per slide."""

    def work(tile: Tile):
        rng = tile_stream(config.seed, tile.slide_id, tile.origin_x, tile.origin_y, epoch, "score")
        return [to_slide_frame(d, tile.origin_x, tile.origin_y) for d in scorer.score_tile(tile, rng)]

    out: dict[str, list[Detection]] = {}
    for tile, dets in zip(tiles, _map(work, tiles, config.workers)):
        out.setdefault(tile.slide_id, []).extend(dets)
    return out


def postprocess_predictions(
    predictions: Mapping[str, Sequence[Detection]], tau: float, config: PipelineConfig
) -> dict[str, list[Detection]]:
    return {sid: nms(apply_threshold(dets, tau), config.nms_iou) for sid, dets in predictions.items()}


def tune(
    predictions: Mapping[str, Sequence[Detection]],
    slides: Sequence[SlideRecord],
    config: PipelineConfig,
) -> tuple[float, EvalReport, list[CurvePoint]]:
    """NMS each slide, then search the threshold over all slides pooled."""
    known = {s.slide_id for s in slides}
    unknown = sorted(set(predictions) - known)
    if unknown:
        raise KeyError(f"predictions reference slides missing from the manifest: {unknown}")
    dets = [nms(predictions.get(s.slide_id, []), config.nms_iou) for s in slides]
    gts = [s.annotations for s in slides]
    tau, report = tune_threshold(dets, gts, config.eval_iou)
    return tau, report, threshold_curve(dets, gts, config.eval_iou)


def curve_csv(points: Sequence[CurvePoint]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["threshold", "tp", "fp", "fn", "precision", "recall", "f1"])
    for p in points:
        writer.writerow(
            [repr(p.threshold), p.tp, p.fp, p.fn, repr(p.precision), repr(p.recall), repr(p.f1)]
        )
    return buf.getvalue()


def write_report(report: EvalReport, out_dir: Path, stem: str = "report") -> None:
    files.write_json(out_dir / f"{stem}.json", report.as_dict())
    files.atomic_write_text(out_dir / f"{stem}.txt", report.to_table() + "\n")


def run_demo(
    out_dir: str | Path,
    config: PipelineConfig | None = None,
    n_slides: int = 12,
    augment_tiles: int = 2,
    plot: bool = True,
) -> EvalReport:
    """Synthetic end-to-end run writing every intermediate artifact to ``out_dir``."""
    config = config or PipelineConfig()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    slides = synthetic.make_manifest(n_slides=n_slides, box_size=int(config.box_size), seed=config.seed)
    files.write_json(out / "manifest.json", files.manifest_to_dict(slides))
    files.write_json(out / "config.json", config.as_dict())

    counts = proportional_counts(len(slides), config.split_counts)
    (plan,) = split_plans(slides, config, "random", counts)
    files.write_json(out / "split.json", plan.as_dict())
    files.write_json(out / "folds.json", [p.as_dict() for p in split_leave_one_scanner_out(slides)])

    tiles, tile_doc = tile_slides(slides, config)
    files.write_json(out / "tiles.json", tile_doc)

    train = training_tiles(tiles, plan.train, config, epoch=0)
    files.write_json(out / "training_tiles.json", {"epoch": 0, "tiles": [t.tile_id for t in train]})

    by_id = {s.slide_id: s for s in slides}
    scanners = sorted({s.scanner_id for s in slides})
    traces = []
    annotated = [t for t in train if not t.is_empty][:augment_tiles]
    for tile in annotated:
        rng = tile_stream(config.seed, tile.slide_id, tile.origin_x, tile.origin_y, 0, "render")
        pixels = synthetic.render_tile(tile, by_id[tile.slide_id], rng, scanners)
        img, _, record = augment_tile(tile, pixels, config, epoch=0)
        files.write_png(out / "augmented" / files.tile_filename(tile), img)
        traces.append(trace_line(record))
    files.atomic_write_text(out / "trace.jsonl", "".join(line + "\n" for line in traces))

    files.write_json(out / "anchors.json", [anchor_report(t, config) for t in annotated])

    predictions = score_tiles(tiles, OracleScorer(config.scorer), config)
    files.atomic_write_text(out / "detections.csv", format_detections(predictions))

    tau, tuned, points = tune(predictions, slides, config)
    write_report(tuned, out, "tuned")
    files.atomic_write_text(out / "pr_curve.csv", curve_csv(points))
    if plot:
        from .plotting import plot_threshold_curve

        plot_threshold_curve(points, out / "pr_curve.png", chosen=tau)

    post = postprocess_predictions(predictions, tau, config)
    files.atomic_write_text(out / "postprocessed.csv", format_detections(post))
    report = evaluate_run(predictions, slides, tau, config.eval_iou, config.nms_iou)
    write_report(report, out)
    log.info("demo finished: %d slides, %d tiles, F1=%.4f", len(slides), len(tiles), report.f1)
    return report
