"""Detection F1 at an IoU threshold and exact confidence-threshold search."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .dataset import Annotation, Label, SlideRecord
from .geometry import boxes_to_array, iou_matrix
from .postprocess import NMS_IOU, Detection, apply_threshold, nms, rank_order

EVAL_IOU = 0.1


@dataclass
class EvalReport:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    threshold: float
    iou_threshold: float
    degenerate: bool = False

    @classmethod
    def from_counts(
        cls, tp: int, fp: int, fn: int, threshold: float, iou_threshold: float, **kw
    ) -> EvalReport:
        p, r, f1 = compute_prf(tp, fp, fn)
        return cls(tp, fp, fn, p, r, f1, threshold, iou_threshold, **kw)

    def as_dict(self) -> dict:
        return asdict(self)

    def to_table(self) -> str:
        rows = [
            ("threshold", f"{self.threshold:.6g}"),
            ("iou_threshold", f"{self.iou_threshold:.6g}"),
            ("tp", str(self.tp)),
            ("fp", str(self.fp)),
            ("fn", str(self.fn)),
            ("precision", f"{self.precision:.4f}"),
            ("recall", f"{self.recall:.4f}"),
            ("f1", f"{self.f1:.4f}"),
        ]
        if self.degenerate:
            rows.append(("degenerate", "yes (no detections)"))
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k:<{width}}  {v}" for k, v in rows)


@dataclass
class MatchResult:
    tp: int
    fp: int
    fn: int
    # (detection index, gt index, iou) into the caller's lists
    matches: list[tuple[int, int, float]] = field(default_factory=list)


def compute_prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall and F1 with every 0/0 taken as 0."""
    if min(tp, fp, fn) < 0:
        raise ValueError(f"counts must be non-negative: tp={tp}, fp={fp}, fn={fn}")
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _mitotic(items):
    return [i for i, x in enumerate(items) if x.label == Label.MITOTIC]


def _greedy_match(dets, gt, iou_threshold):
    """Greedy pass over mitotic detections in rank order.

    Returns the match list and, for every detection index, whether it
    claimed a ground-truth box.
    """
    det_idx = _mitotic(dets)
    gt_idx = _mitotic(gt)
    matched_det = np.zeros(len(dets), dtype=bool)
    matches = []
    if det_idx and gt_idx:
        ranked = [det_idx[k] for k in rank_order([dets[i] for i in det_idx])]
        ious = iou_matrix(
            boxes_to_array([dets[i].box for i in ranked]),
            boxes_to_array([gt[j].box for j in gt_idx]),
        )
        free = np.ones(len(gt_idx), dtype=bool)
        for row, d in enumerate(ranked):
            cand = np.where(free & (ious[row] >= iou_threshold), ious[row], -1.0)
            g = int(np.argmax(cand))  # lowest gt index on ties
            if cand[g] < 0:
                continue
            free[g] = False
            matched_det[d] = True
            matches.append((d, gt_idx[g], float(ious[row, g])))
    return matches, matched_det, len(det_idx), len(gt_idx)


def match_detections(
    dets: Sequence[Detection],
    gt: Sequence[Annotation],
    iou_threshold: float = EVAL_IOU,
) -> MatchResult:
    """One-to-one greedy matching of mitotic detections to mitotic ground truth.

    Detections are visited by descending score and each claims the free
    ground-truth box with the highest IoU, provided that IoU is at least
    ``iou_threshold``. Non-mitotic items on either side are ignored.
    """
    matches, _, n_det, n_gt = _greedy_match(dets, gt, iou_threshold)
    tp = len(matches)
    return MatchResult(tp=tp, fp=n_det - tp, fn=n_gt - tp, matches=matches)


@dataclass(frozen=True)
class CurvePoint:
    threshold: float
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float


def threshold_curve(
    dets_per_image: Sequence[Sequence[Detection]],
    gt_per_image: Sequence[Sequence[Annotation]],
    iou_threshold: float = EVAL_IOU,
) -> list[CurvePoint]:
    """Pooled counts at every candidate threshold, ascending.

    Candidates are 0 and every distinct mitotic detection score. Greedy
    matching in score order means the matches at threshold ``tau`` are the
    matches of the full pass restricted to detections scoring ``>= tau``, so a
    single pass per image yields the whole curve.
    """
    if len(dets_per_image) != len(gt_per_image):
        raise ValueError(
            f"{len(dets_per_image)} detection lists for {len(gt_per_image)} images"
        )
    scores, hits = [], []
    n_gt = 0
    for dets, gt in zip(dets_per_image, gt_per_image):
        _, matched, _, g = _greedy_match(dets, gt, iou_threshold)
        n_gt += g
        for i in _mitotic(dets):
            scores.append(dets[i].score)
            hits.append(matched[i])
    scores_arr = np.asarray(scores, dtype=np.float64)
    hits_arr = np.asarray(hits, dtype=bool)

    candidates = np.unique(np.concatenate([[0.0], scores_arr]))
    order = np.argsort(-scores_arr, kind="stable")
    sorted_scores = scores_arr[order]
    cum_tp = np.concatenate([[0], np.cumsum(hits_arr[order])])
    points = []
    for tau in candidates:
        # number of detections with score >= tau
        k = int(np.searchsorted(-sorted_scores, -tau, side="right"))
        tp = int(cum_tp[k])
        fp = k - tp
        fn = n_gt - tp
        points.append(CurvePoint(float(tau), tp, fp, fn, *compute_prf(tp, fp, fn)))
    return points


def _f1_exact(tp: int, fp: int, fn: int) -> Fraction:
    denom = 2 * tp + fp + fn
    return Fraction(2 * tp, denom) if denom and tp else Fraction(0)


def tune_threshold(
    dets_per_image: Sequence[Sequence[Detection]],
    gt_per_image: Sequence[Sequence[Annotation]],
    iou_threshold: float = EVAL_IOU,
) -> tuple[float, EvalReport]:
    """Confidence threshold maximizing F1 pooled over all images.

    Ties go to the largest threshold. With no detections at all the result is
    ``tau = 0`` and the report is flagged degenerate.
    """
    if not len(dets_per_image):
        raise ValueError("tune_threshold needs at least one image")
    points = threshold_curve(dets_per_image, gt_per_image, iou_threshold)
    best = points[0]
    for p in points[1:]:
        if _f1_exact(p.tp, p.fp, p.fn) >= _f1_exact(best.tp, best.fp, best.fn):
            best = p
    degenerate = len(points) == 1 and best.tp + best.fp == 0
    report = EvalReport.from_counts(
        best.tp, best.fp, best.fn, best.threshold, iou_threshold, degenerate=degenerate
    )
    return best.threshold, report


def evaluate_run(
    predictions: Mapping[str, Sequence[Detection]],
    manifest: Sequence[SlideRecord],
    tau: float,
    iou_threshold: float = EVAL_IOU,
    nms_iou: float = NMS_IOU,
) -> EvalReport:
    """Threshold, NMS and match every slide, summing counts into one report."""
    slides = {s.slide_id: s for s in manifest}
    unknown = sorted(set(predictions) - set(slides))
    if unknown:
        raise KeyError(f"predictions reference slides missing from the manifest: {unknown}")
    tp = fp = fn = 0
    for slide in manifest:
        dets = nms(apply_threshold(predictions.get(slide.slide_id, []), tau), nms_iou)
        result = match_detections(dets, slide.annotations, iou_threshold)
        tp += result.tp
        fp += result.fp
        fn += result.fn
    return EvalReport.from_counts(tp, fp, fn, tau, iou_threshold)
