import math

import numpy as np
import pytest

from mitodet.dataset import Annotation, Label, Tile
from mitodet.evaluation import compute_prf, match_detections
from mitodet.geometry import Box
from mitodet.postprocess import Detection, nms
from mitodet.scorer import (
    DetectionFormatError,
    FileScorer,
    ScorerConfig,
    format_detections,
    load_predictions,
    parse_detections,
    save_predictions,
    score_tile,
)

HEADER = "slide_id,x,y,w,h,score,label\n"


def grid_tile(n_mitotic=4, n_non=1, spacing=200, slide_id="s", origin=(0, 0)):
    anns = [Annotation(Box(40 + spacing * i, 100, 50, 50)) for i in range(n_mitotic)]
    anns += [Annotation(Box(40 + spacing * i, 600, 50, 50), Label.NON_MITOTIC) for i in range(n_non)]
    return Tile(slide_id, origin[0], origin[1], 1024, anns)


class TestOracle:
    def test_perfect(self, rng):
        tile = grid_tile()
        dets = score_tile(tile, ScorerConfig(), rng)
        assert [d.box for d in dets] == [a.box for a in tile.annotations if a.label == Label.MITOTIC]
        assert all(0.6 <= d.score <= 1.0 and d.tile_id == tile.tile_id for d in dets)

    def test_silent(self, rng):
        assert score_tile(grid_tile(), ScorerConfig(recall_sim=0.0, fp_rate=0.0), rng) == []

    def test_deterministic(self):
        cfg = ScorerConfig(recall_sim=0.5, fp_rate=3, jitter_sigma=10)
        a = score_tile(grid_tile(), cfg, np.random.default_rng(1))
        b = score_tile(grid_tile(), cfg, np.random.default_rng(1))
        assert a == b

    def test_jitter_bounded(self, rng):
        cfg = ScorerConfig(jitter_sigma=7.5)
        tile = grid_tile()
        for _ in range(50):
            for d, a in zip(score_tile(tile, cfg, rng), tile.annotations):
                assert abs(d.box.x - a.box.x) <= 7.5 and abs(d.box.y - a.box.y) <= 7.5

    def test_spurious_on_tile(self, rng):
        cfg = ScorerConfig(recall_sim=0.0, fp_rate=20)
        dets = score_tile(grid_tile(), cfg, rng)
        assert dets
        assert all(d.box.inside(1024, 1024) and 0.0 <= d.score <= 0.7 for d in dets)

    def test_expected_count(self):
        cfg = ScorerConfig(recall_sim=0.6, fp_rate=1.5)
        tile = grid_tile(n_mitotic=4)
        rng = np.random.default_rng(5)
        counts = np.array([len(score_tile(tile, cfg, rng)) for _ in range(10_000)])
        mean = 0.6 * 4 + 1.5
        sigma = math.sqrt(4 * 0.6 * 0.4 + 1.5) / math.sqrt(10_000)
        assert abs(counts.mean() - mean) <= 3 * sigma

    # worst-case per-axis shift s keeps IoU >= 0.1 while (50 - s)^2 >= 5000 / 11, i.e. s <= 28.68
    @pytest.mark.parametrize("jitter", [0.0, 10.0, 28.0])
    def test_bounded_jitter_gives_perfect_f1(self, rng, jitter):
        cfg = ScorerConfig(jitter_sigma=jitter)
        tile = grid_tile(n_mitotic=5)
        for _ in range(200):
            dets = nms(score_tile(tile, cfg, rng), 0.1)
            r = match_detections(dets, tile.annotations, 0.1)
            assert (r.tp, r.fp, r.fn) == (5, 0, 0)

    def test_reported_operating_point(self):
        """Configured to the reported recall/precision, the pipeline lands near the reported F1."""
        recall, precision = 0.6084, 0.7319
        tile = grid_tile(n_mitotic=2, n_non=0, spacing=500)
        fp_rate = recall * 2 * (1 / precision - 1)
        cfg = ScorerConfig(recall_sim=recall, fp_rate=fp_rate)
        rng = np.random.default_rng(11)
        tp = fp = fn = 0
        for _ in range(4000):
            r = match_detections(nms(score_tile(tile, cfg, rng), 0.1), tile.annotations, 0.1)
            tp, fp, fn = tp + r.tp, fp + r.fp, fn + r.fn
        p, r_, f1 = compute_prf(tp, fp, fn)
        assert abs(p - precision) < 0.02
        assert abs(r_ - recall) < 0.02
        assert abs(f1 - 0.6645) < 0.02

    @pytest.mark.parametrize(
        "kwargs",
        [dict(recall_sim=1.5), dict(fp_rate=-1), dict(jitter_sigma=-0.1), dict(tp_score=(0.5, 1.2)), dict(fp_score=(0.6, 0.2))],
    )
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            ScorerConfig(**kwargs)


class TestFileScorer:
    def test_routes_by_center(self):
        preds = {"s": [Detection(Box(1000, 10, 50, 50), 0.7, slide_id="s"), Detection(Box(10, 10, 50, 50), 0.9, slide_id="s")]}
        scorer = FileScorer(preds)
        right = scorer.score_tile(Tile("s", 1024, 0))
        left = scorer.score_tile(Tile("s", 0, 0))
        assert [d.box for d in right] == [Box(-24, 10, 50, 50)]
        assert [d.box for d in left] == [Box(10, 10, 50, 50)]
        assert scorer.score_tile(Tile("other", 0, 0)) == []


class TestDetectionFile:
    def test_empty_with_header(self, tmp_path):
        path = tmp_path / "d.csv"
        path.write_text(HEADER)
        assert load_predictions(path) == {}

    def test_score_out_of_range(self):
        with pytest.raises(DetectionFormatError, match=r":3: field score=1.2"):
            parse_detections(HEADER + "s,0,0,50,50,0.5,mitotic\ns,0,0,50,50,1.2,mitotic\n")

    def test_unknown_label(self):
        with pytest.raises(DetectionFormatError, match=r":2: .*unknown label 'mitosis'"):
            parse_detections(HEADER + "s,0,0,50,50,0.5,mitosis\n")

    @pytest.mark.parametrize(
        "row,field",
        [("s,a,0,50,50,0.5,mitotic", "x"), ("s,0,inf,50,50,0.5,mitotic", "y"), ("s,0,0,nan,50,0.5,mitotic", "w")],
    )
    def test_bad_numbers(self, row, field):
        with pytest.raises(DetectionFormatError, match=f":2: field {field}="):
            parse_detections(HEADER + row + "\n")

    def test_degenerate_box(self):
        with pytest.raises(DetectionFormatError, match=":2:"):
            parse_detections(HEADER + "s,0,0,0,50,0.5,mitotic\n")

    def test_wrong_field_count(self):
        with pytest.raises(DetectionFormatError, match=":2: expected 7 fields"):
            parse_detections(HEADER + "s,0,0,50,50,0.5\n")

    def test_missing_header(self):
        with pytest.raises(DetectionFormatError, match=":1: header"):
            parse_detections("s,0,0,50,50,0.5,mitotic\n")

    def test_roundtrip(self, tmp_path, rng):
        preds = {}
        for k in range(4):
            sid = f"slide,{k}" if k == 3 else f"slide_{k}"
            preds[sid] = [
                Detection(
                    Box(*rng.uniform(-10, 5000, 2), *rng.uniform(1, 80, 2)),
                    float(rng.uniform(0, 1)),
                    Label.NON_MITOTIC if rng.random() < 0.3 else Label.MITOTIC,
                    sid,
                )
                for _ in range(int(rng.integers(1, 20)))
            ]
        path = tmp_path / "d.csv"
        save_predictions(path, preds)
        assert load_predictions(path) == preds
        assert format_detections(load_predictions(path)) == path.read_text()
