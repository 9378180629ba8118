"""Sequence-level tracking pipelines.

Offline mode builds one whole-sequence graph, classifies all inter-frame
edges with full temporal context, and decodes tracks globally. The greedy
nearest-neighbor baseline provides an independent comparison tracker over the
same detections and metrics.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from typing import Mapping, Sequence

from .decoding import TrackOutput, extract_tracks, greedy_assign
from .detections_io import Detection, TrackRecord, whole_sequence_clip
from .graphbuild import ClassConfig, build_clip_graph
from .mpnmodel import Architecture, Mask, forward
from .onlinegraph import Connectivity, TrackState, run_online
from .relgeom import FeatureMode


def apply_score_floor(dets: Sequence[Detection], classes: ClassConfig) -> list[Detection]:
    return [d for d in dets if d.score >= classes.get(d.class_id).score_floor]


def track_offline(seq: Sequence[Detection], params, arch: Architecture,
                  classes: ClassConfig, mode: FeatureMode,
                  thresholds: Mapping[int, float], gate_scale: float = 1.0,
                  frame_period: float = 0.5) -> TrackOutput:
    dets = apply_score_floor(seq, classes)
    if not dets:
        return TrackOutput(seq[0].seq_id if seq else "", ())
    g = build_clip_graph(whole_sequence_clip(dets), classes, mode, gate_scale,
                         frame_period)
    logits = forward(g, params, arch, mask=Mask.FULL).data
    decisions = greedy_assign(logits, g, thresholds)
    return extract_tracks(decisions, g)


def track_sequences_offline(seqs: Mapping[str, Sequence[Detection]], params,
                            arch: Architecture, classes: ClassConfig,
                            mode: FeatureMode, thresholds: Mapping[int, float],
                            gate_scale: float = 1.0, frame_period: float = 0.5,
                            threads: int = 1) -> dict[str, TrackOutput]:
    def one(item):
        seq_id, dets = item
        return seq_id, track_offline(dets, params, arch, classes, mode,
                                     thresholds, gate_scale, frame_period)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return dict(pool.map(one, seqs.items()))
    return dict(map(one, seqs.items()))


def track_sequences_online(seqs: Mapping[str, Sequence[Detection]], params,
                           arch: Architecture, classes: ClassConfig,
                           mode: FeatureMode, thresholds: Mapping[int, float],
                           connectivity: Connectivity = Connectivity.PRUNE_SKIP,
                           gate_scale: float = 1.0, frame_period: float = 0.5,
                           history_len: int = 3, max_age: int = 3,
                           threads: int = 1) -> dict[str, TrackOutput]:
    def one(item):
        seq_id, dets = item
        state = TrackState(classes=classes, mode=connectivity,
                           feature_mode=mode, gate_scale=gate_scale,
                           frame_period=frame_period, history_len=history_len,
                           max_age=max_age)
        return seq_id, run_online(apply_score_floor(dets, classes), params,
                                  arch, state, thresholds, seq_id=seq_id)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return dict(pool.map(one, seqs.items()))
    return dict(map(one, seqs.items()))


def nn_baseline_track(seq: Sequence[Detection], classes: ClassConfig,
                      max_age: int = 3) -> TrackOutput:
    """Greedy nearest-neighbor tracker: per frame, match detections to the
    last position of each live track by ascending distance within the class
    velocity gate; unmatched detections start new tracks."""
    by_frame: dict[int, list[Detection]] = {}
    for det in seq:
        by_frame.setdefault(det.frame, []).append(det)
    records: list[TrackRecord] = []
    live: list[dict] = []  # {id, det, idle}
    next_id = 0
    for frame in sorted(by_frame):
        dets = by_frame[frame]
        pairs = []
        for ti, track in enumerate(live):
            spec = classes.get(track["det"].class_id)
            for di, det in enumerate(dets):
                if det.class_id != track["det"].class_id:
                    continue
                dt = det.t - track["det"].t
                dist = math.hypot(det.x - track["det"].x, det.y - track["det"].y)
                if dist <= spec.v_max * dt:
                    pairs.append((dist, ti, di))
        pairs.sort()
        used_t: set[int] = set()
        used_d: set[int] = set()
        for _, ti, di in pairs:
            if ti in used_t or di in used_d:
                continue
            used_t.add(ti)
            used_d.add(di)
            live[ti]["det"] = dets[di]
            live[ti]["idle"] = 0
            records.append(TrackRecord(dets[di], live[ti]["id"]))
        for di, det in enumerate(dets):
            if di in used_d:
                continue
            live.append({"id": next_id, "det": det, "idle": 0})
            records.append(TrackRecord(det, next_id))
            next_id += 1
        for ti, track in enumerate(live):
            if ti not in used_t and track["det"].frame != frame:
                track["idle"] += 1
        live = [t for t in live if t["idle"] <= max_age]
    records.sort(key=lambda r: (r.det.frame, r.track_id))
    return TrackOutput(seq[0].seq_id if seq else "", tuple(records))


def nn_baseline_sequences(seqs: Mapping[str, Sequence[Detection]],
                          classes: ClassConfig,
                          max_age: int = 3) -> dict[str, TrackOutput]:
    return {seq_id: nn_baseline_track(apply_score_floor(dets, classes), classes,
                                      max_age)
            for seq_id, dets in seqs.items()}


def gt_track_output(seq: Sequence[Detection], seq_id: str) -> TrackOutput:
    """Ground-truth detections (with gt ids) as a canonical track output."""
    records = tuple(TrackRecord(d, d.gt_track_id) for d in seq
                    if d.gt_track_id is not None and d.gt_track_id >= 0)
    return TrackOutput(seq_id, records)
