"""Command-line entry point: ``mitodet <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import files, pipeline
from .config import CONFIG_ENV, PipelineConfig, load_config
from .dataset import SplitPlan, Tile
from .evaluation import evaluate_run
from .scorer import DetectionFormatError, FileScorer, OracleScorer, format_detections, load_predictions

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_MISSING = 3
EXIT_SCHEMA = 4
EXIT_VALIDATION = 5

log = logging.getLogger("mitodet")


def _emit(text: str, out: str | None) -> None:
    if out:
        files.atomic_write_text(out, text)
    else:
        sys.stdout.write(text)


def _read_plan(path: str) -> SplitPlan:
    data = files.read_json(path)
    if isinstance(data, list):
        if len(data) != 1:
            raise files.SchemaError(f"{path}: expected a single split plan, found {len(data)}")
        data = data[0]
    try:
        return SplitPlan(
            train=list(data["train"]),
            validation=list(data.get("validation", [])),
            test=list(data.get("test", [])),
            seed=data.get("seed"),
            held_out=data.get("held_out"),
        )
    except (KeyError, TypeError) as exc:
        raise files.SchemaError(f"{path}: not a split plan ({exc})") from None


def cmd_config(args, cfg: PipelineConfig) -> int:
    _emit(files.dumps(cfg.as_dict()), args.out)
    return EXIT_OK


def cmd_split(args, cfg: PipelineConfig) -> int:
    slides = files.load_manifest(args.manifest)
    counts = tuple(args.counts) if args.counts else None
    plans = pipeline.split_plans(slides, cfg, args.mode, counts)
    doc = plans[0].as_dict() if args.mode == "random" else [p.as_dict() for p in plans]
    _emit(files.dumps(doc), args.out)
    for p in plans:
        log.info(
            "%s: train=%d validation=%d test=%d",
            p.held_out or "random", len(p.train), len(p.validation), len(p.test),
        )
    return EXIT_OK


def cmd_tile(args, cfg: PipelineConfig) -> int:
    slides = files.load_manifest(args.manifest, box_size=cfg.box_size)
    out = Path(args.out)
    tiles, doc = pipeline.tile_slides(slides, cfg, out, write_pixels=not args.no_pixels)
    files.write_json(out / "tiles.json", doc)
    if args.train_split:
        plan = _read_plan(args.train_split)
        kept = pipeline.training_tiles(tiles, plan.train, cfg, args.epoch)
        files.write_json(
            out / "training_tiles.json", {"epoch": args.epoch, "tiles": [t.tile_id for t in kept]}
        )
        log.info("kept %d training tiles for epoch %d", len(kept), args.epoch)
    log.info("wrote %d tiles to %s", len(tiles), out)
    return EXIT_OK


def cmd_augment(args, cfg: PipelineConfig) -> int:
    tiles, images = files.load_tile_manifest(args.tiles)
    out = Path(args.out)
    traces, entries, skipped = [], [], 0
    for tile, image in zip(tiles, images):
        if image is None:
            skipped += 1
            continue
        img, moved, record = pipeline.augment_tile(tile, files.read_rgb(image), cfg, args.epoch)
        name = files.tile_filename(tile)
        files.write_png(out / name, img)
        traces.append(pipeline.trace_line(record) + "\n")
        entries.append(files.tile_to_dict(moved, name))
    files.atomic_write_text(out / "trace.jsonl", "".join(traces))
    files.write_json(out / "tiles.json", {"tile_size": cfg.tile_size, "epoch": args.epoch, "tiles": entries})
    if skipped:
        log.warning("skipped %d tiles without pixel data", skipped)
    return EXIT_OK


def cmd_anchors(args, cfg: PipelineConfig) -> int:
    if args.tiles:
        tiles, _ = files.load_tile_manifest(args.tiles)
        if args.tile_id:
            tiles = [t for t in tiles if t.tile_id == args.tile_id]
            if not tiles:
                raise files.SchemaError(f"tile {args.tile_id!r} not found in {args.tiles}")
    else:
        tiles = [Tile("grid", 0, 0, cfg.tile_size)]
    reports = [pipeline.anchor_report(t, cfg, args.epoch, include_anchors=args.full) for t in tiles]
    _emit(files.dumps(reports), args.out)
    return EXIT_OK


def cmd_score(args, cfg: PipelineConfig) -> int:
    tiles, _ = files.load_tile_manifest(args.tiles)
    if args.predictions:
        scorer = FileScorer(load_predictions(args.predictions))
    else:
        scorer = OracleScorer(cfg.scorer)
    predictions = pipeline.score_tiles(tiles, scorer, cfg)
    _emit(format_detections(predictions), args.out)
    return EXIT_OK


def cmd_postprocess(args, cfg: PipelineConfig) -> int:
    predictions = load_predictions(args.detections)
    _emit(format_detections(pipeline.postprocess_predictions(predictions, args.tau, cfg)), args.out)
    return EXIT_OK


def _curve_outputs(out: Path, points, tau, plot: bool) -> None:
    files.atomic_write_text(out / "pr_curve.csv", pipeline.curve_csv(points))
    if plot:
        from .plotting import plot_threshold_curve

        plot_threshold_curve(points, out / "pr_curve.png", chosen=tau)


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    slides = files.load_manifest(args.manifest)
    predictions = load_predictions(args.detections)
    report = evaluate_run(predictions, slides, args.tau, cfg.eval_iou, cfg.nms_iou)
    if args.out_dir:
        out = Path(args.out_dir)
        pipeline.write_report(report, out)
        _, _, points = pipeline.tune(predictions, slides, cfg)
        _curve_outputs(out, points, args.tau, not args.no_plot)
    print(report.to_table())
    return EXIT_OK


def cmd_tune(args, cfg: PipelineConfig) -> int:
    slides = files.load_manifest(args.manifest)
    predictions = load_predictions(args.detections)
    tau, report, points = pipeline.tune(predictions, slides, cfg)
    if args.out_dir:
        out = Path(args.out_dir)
        pipeline.write_report(report, out, "tuned")
        _curve_outputs(out, points, tau, not args.no_plot)
    print(report.to_table())
    return EXIT_OK


def cmd_demo(args, cfg: PipelineConfig) -> int:
    report = pipeline.run_demo(
        args.out, cfg, n_slides=args.slides, augment_tiles=args.augment_tiles, plot=not args.no_plot
    )
    print(report.to_table())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mitodet", description=__doc__)
    parser.add_argument("--config", help=f"JSON config file (default: ${CONFIG_ENV}, then built-in defaults)")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--workers", type=int, help="override config worker count")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", required=True)

    p = sub.add_parser("config", help="print the effective config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_config)

    p = sub.add_parser("split", help="split slides into train/validation/test")
    p.add_argument("--manifest", required=True)
    p.add_argument("--mode", choices=["random", "scanner"], default="random")
    p.add_argument("--counts", type=int, nargs=3, metavar=("TRAIN", "VAL", "TEST"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("tile", help="cut slides into tiles with reassigned annotations")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-pixels", action="store_true", help="write the tile manifest only")
    p.add_argument("--train-split", help="split plan; also write the sampled training tiles")
    p.add_argument("--epoch", type=int, default=0)
    p.set_defaults(func=cmd_tile)

    p = sub.add_parser("augment", help="augment tile images and log the draws")
    p.add_argument("--tiles", required=True, help="tile manifest from `tile`")
    p.add_argument("--out", required=True)
    p.add_argument("--epoch", type=int, default=0)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("anchors", help="anchor grid, labels and sampled minibatch")
    p.add_argument("--tiles", help="tile manifest; without it an empty tile is used")
    p.add_argument("--tile-id")
    p.add_argument("--epoch", type=int, default=0)
    p.add_argument("--full", action="store_true", help="include every anchor box and label")
    p.add_argument("--out")
    p.set_defaults(func=cmd_anchors)

    p = sub.add_parser("score", help="score tiles with the oracle or replay a detections file")
    p.add_argument("--tiles", required=True)
    p.add_argument("--predictions", help="detections file to replay instead of the oracle")
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("postprocess", help="threshold then per-class NMS")
    p.add_argument("--detections", required=True)
    p.add_argument("--tau", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_postprocess)

    for name, func, help_ in (
        ("evaluate", cmd_evaluate, "precision/recall/F1 at a fixed threshold"),
        ("tune-threshold", cmd_tune, "grid-search the F1-maximizing threshold"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--detections", required=True)
        p.add_argument("--manifest", required=True)
        if name == "evaluate":
            p.add_argument("--tau", type=float, required=True)
        p.add_argument("--out-dir")
        p.add_argument("--no-plot", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("demo", help="synthetic end-to-end run")
    p.add_argument("--out", default="demo_out")
    p.add_argument("--slides", type=int, default=12)
    p.add_argument("--augment-tiles", type=int, default=2)
    p.add_argument("--no-plot", action="store_true")
    p.set_defaults(func=cmd_demo)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.seed is not None:
            overrides["seed"] = args.seed
        if args.workers is not None:
            overrides["workers"] = args.workers
        if overrides:
            cfg = cfg.replace(**overrides)
        return args.func(args, cfg)
    except FileNotFoundError as exc:
        print(f"mitodet: missing file: {exc.filename or exc}", file=sys.stderr)
        return EXIT_MISSING
    except (files.SchemaError, DetectionFormatError) as exc:
        print(f"mitodet: schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (ValueError, KeyError) as exc:
        print(f"mitodet: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
