"""CLEAR-MOT metrics, identity switches, recall, and recall-averaged AMOTA.

Matching is greedy center-distance within a radius among same-class pairs
(nuScenes-style). AMOTA sweeps a scalar output-score threshold over the
tracker's scored output boxes toward a grid of target recalls and averages
the recall-normalized MOTAR over the achieved points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from .decoding import TrackOutput
from .detections_io import Detection, TrackRecord


@dataclass(frozen=True)
class FrameMatchResult:
    matches: tuple[tuple[int, int], ...]  # (gt_track_id, pred_track_id)
    distances: tuple[float, ...]
    fp: int
    fn: int


def match_frame(preds: Sequence[TrackRecord], gts: Sequence[TrackRecord],
                radius: float) -> FrameMatchResult:
    """Greedy one-to-one matching by ascending center distance, same-class
    pairs only; ties resolve toward the lower pred index."""
    if radius <= 0.0:
        raise ValueError(f"match radius must be positive, got {radius}")
    candidates = []
    for pi, pred in enumerate(preds):
        for gi, gt in enumerate(gts):
            if pred.det.class_id != gt.det.class_id:
                continue
            dist = math.hypot(pred.det.x - gt.det.x, pred.det.y - gt.det.y)
            if dist <= radius:
                candidates.append((dist, pi, gi))
    candidates.sort()
    used_pred: set[int] = set()
    used_gt: set[int] = set()
    matches = []
    distances = []
    for dist, pi, gi in candidates:
        if pi in used_pred or gi in used_gt:
            continue
        used_pred.add(pi)
        used_gt.add(gi)
        matches.append((gts[gi].track_id, preds[pi].track_id))
        distances.append(dist)
    return FrameMatchResult(matches=tuple(matches), distances=tuple(distances),
                            fp=len(preds) - len(matches),
                            fn=len(gts) - len(matches))


@dataclass(frozen=True)
class MotSummary:
    mota: float | None  # None when there is no ground truth
    ids: int
    fp: int
    fn: int
    gt_total: int
    matched: int

    @property
    def recall(self) -> float:
        return self.matched / self.gt_total if self.gt_total else 0.0


def clear_mot(frames: Sequence[FrameMatchResult]) -> MotSummary:
    """CLEAR-MOT over a matched sequence.

    An identity switch is counted whenever a ground-truth track's matched
    prediction id differs from its previously matched id (gaps do not reset
    the comparison). MOTA = 1 - (FP + FN + IDS) / GT_total.
    """
    fp = sum(f.fp for f in frames)
    fn = sum(f.fn for f in frames)
    matched = sum(len(f.matches) for f in frames)
    gt_total = matched + fn
    last_pred: dict[int, int] = {}
    ids = 0
    for f in frames:
        for gt_id, pred_id in f.matches:
            prev = last_pred.get(gt_id)
            if prev is not None and prev != pred_id:
                ids += 1
            last_pred[gt_id] = pred_id
    mota = None if gt_total == 0 else 1.0 - (fp + fn + ids) / gt_total
    return MotSummary(mota=mota, ids=ids, fp=fp, fn=fn, gt_total=gt_total,
                      matched=matched)


def _frames_union(preds: TrackOutput, gts: TrackOutput) -> list[int]:
    frames = {r.det.frame for r in preds.records} | {r.det.frame for r in gts.records}
    return sorted(frames)


def evaluate_sequences(preds: Mapping[str, TrackOutput],
                       gts: Mapping[str, TrackOutput],
                       radius: float,
                       class_id: int | None = None) -> MotSummary:
    """Aggregate CLEAR-MOT over sequences, optionally for one class."""
    fp = fn = matched = ids = 0
    for seq_id, gt in gts.items():
        pred = preds.get(seq_id, TrackOutput(seq_id, ()))
        pred_by_frame = pred.by_frame()
        gt_by_frame = gt.by_frame()
        frame_results = []
        for frame in _frames_union(pred, gt):
            p = [r for r in pred_by_frame.get(frame, ())
                 if class_id is None or r.det.class_id == class_id]
            g = [r for r in gt_by_frame.get(frame, ())
                 if class_id is None or r.det.class_id == class_id]
            frame_results.append(match_frame(p, g, radius))
        s = clear_mot(frame_results)
        fp += s.fp
        fn += s.fn
        matched += s.matched
        ids += s.ids
    gt_total = matched + fn
    mota = None if gt_total == 0 else 1.0 - (fp + fn + ids) / gt_total
    return MotSummary(mota=mota, ids=ids, fp=fp, fn=fn, gt_total=gt_total,
                      matched=matched)


def motar(summary: MotSummary) -> float:
    """Recall-normalized MOTA: max(0, 1 - (IDS+FP+FN - (1-r) P) / (r P))."""
    p = summary.gt_total
    r = summary.recall
    if p == 0 or r == 0.0:
        return 0.0
    return max(0.0, 1.0 - (summary.ids + summary.fp + summary.fn
                           - (1.0 - r) * p) / (r * p))


@dataclass(frozen=True)
class AmotaPoint:
    target_recall: float
    threshold: float
    summary: MotSummary

    @property
    def motar(self) -> float:
        return motar(self.summary)


@dataclass(frozen=True)
class AmotaResult:
    amota: float
    points: tuple[AmotaPoint, ...]

    def mean_mota(self) -> float:
        vals = [p.summary.mota for p in self.points if p.summary.mota is not None]
        return sum(vals) / len(vals) if vals else 0.0

    def best_point(self) -> AmotaPoint | None:
        return max(self.points, key=lambda p: p.motar, default=None)


TrackerClosure = Callable[[float], Mapping[str, TrackOutput]]


def filter_output(preds: Mapping[str, TrackOutput],
                  threshold: float) -> dict[str, TrackOutput]:
    """Drop output boxes scoring below the threshold (the AMOTA sweep knob)."""
    out = {}
    for seq_id, track in preds.items():
        kept = tuple(r for r in track.records if r.det.score >= threshold)
        out[seq_id] = TrackOutput(seq_id, kept)
    return out


def static_tracker(preds: Mapping[str, TrackOutput]) -> TrackerClosure:
    return lambda threshold: filter_output(preds, threshold)


def amota(tracker: TrackerClosure, gts: Mapping[str, TrackOutput],
          radius: float, n_points: int = 40,
          class_id: int | None = None) -> AmotaResult:
    """Average MOTAR over achieved recall targets {1/n, ..., 1}.

    Candidate thresholds are the distinct output scores at threshold 0; for
    each target recall the tightest threshold still achieving it is used, and
    MOTAR is evaluated at the achieved recall. Unreached targets are skipped;
    with no positive recall at all the result is 0.
    """
    base = tracker(0.0)
    scores = sorted({r.det.score for track in base.values() for r in track.records})
    thresholds = [0.0] + scores
    curve: list[tuple[float, float, MotSummary]] = []
    for thr in thresholds:
        summary = evaluate_sequences(filter_output(base, thr), gts, radius,
                                     class_id)
        curve.append((summary.recall, thr, summary))
    points = []
    for k in range(1, n_points + 1):
        target = k / n_points
        reaching = [(rec, thr, s) for rec, thr, s in curve if rec >= target]
        if not reaching:
            continue
        rec, thr, summary = min(reaching, key=lambda item: (item[0], -item[1]))
        points.append(AmotaPoint(target_recall=target, threshold=thr,
                                 summary=summary))
    if not points:
        return AmotaResult(amota=0.0, points=())
    return AmotaResult(amota=sum(p.motar for p in points) / len(points),
                       points=tuple(points))


def amota_per_class(tracker: TrackerClosure, gts: Mapping[str, TrackOutput],
                    radius: float, class_ids: Sequence[int],
                    n_points: int = 40) -> dict[int, AmotaResult]:
    return {cid: amota(tracker, gts, radius, n_points, class_id=cid)
            for cid in class_ids}


def mean_amota(per_class: Mapping[int, AmotaResult]) -> float:
    if not per_class:
        return 0.0
    return sum(r.amota for r in per_class.values()) / len(per_class)
