"""Greedy constrained assignment of positive edges and track extraction.

Edge scores are thresholded per class, then positives are assigned greedily
from the highest score down. A node may hold at most one positive edge toward
each frame; additionally, two groups of already-linked detections may only be
joined when their frame sets are disjoint, so decoded positives always form
valid tracks (one detection per frame per track).
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .autodiff import _sigmoid
from .detections_io import TrackRecord
from .graphbuild import ClipGraph, EdgeKind


class Decision(Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    SUPPRESSED = "suppressed"


@dataclass(frozen=True)
class EdgeDecision:
    edge_index: int  # index into the graph's edge list
    score: float
    decision: Decision


class _Components:
    """Union-find over nodes with per-component frame sets."""

    def __init__(self, frames: Sequence[int]):
        self.parent = list(range(len(frames)))
        self.frames = [{f} for f in frames]

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def can_join(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        return ra != rb and not (self.frames[ra] & self.frames[rb])

    def join(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if len(self.frames[ra]) < len(self.frames[rb]):
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.frames[ra] |= self.frames[rb]


def greedy_assign(logits: np.ndarray, g: ClipGraph,
                  thresholds: Mapping[int, float],
                  occupied: set[tuple[int, int]] | None = None,
                  components: _Components | None = None) -> list[EdgeDecision]:
    """Decide every inter-frame edge of `g` given its classifier logits.

    `thresholds` maps class_id to the per-class score threshold. `occupied`
    optionally pre-seeds (node, frame) slots already taken by committed
    positive edges (online use); `components` likewise pre-seeds linked
    groups.
    """
    inter = g.inter_indices()
    logits = np.asarray(logits, dtype=np.float64).reshape(-1)
    if logits.shape[0] != len(inter):
        raise ValueError(f"{logits.shape[0]} logits for {len(inter)} inter-frame edges")
    scores = _sigmoid(logits)
    occupied = set() if occupied is None else occupied
    comps = components or _Components([d.frame for d in g.nodes])

    order = []
    decisions: dict[int, EdgeDecision] = {}
    for k, edge_idx in enumerate(inter):
        e = g.edges[edge_idx]
        thr = thresholds[g.nodes[e.i].class_id]
        if scores[k] < thr:
            decisions[edge_idx] = EdgeDecision(edge_idx, float(scores[k]),
                                               Decision.NEGATIVE)
        else:
            order.append((-scores[k], edge_idx, k))
    order.sort()
    for _, edge_idx, k in order:
        e = g.edges[edge_idx]
        fi = g.nodes[e.i].frame
        fj = g.nodes[e.j].frame
        free = ((e.i, fj) not in occupied and (e.j, fi) not in occupied
                and comps.can_join(e.i, e.j))
        if free:
            occupied.add((e.i, fj))
            occupied.add((e.j, fi))
            comps.join(e.i, e.j)
            decisions[edge_idx] = EdgeDecision(edge_idx, float(scores[k]),
                                               Decision.POSITIVE)
        else:
            decisions[edge_idx] = EdgeDecision(edge_idx, float(scores[k]),
                                               Decision.SUPPRESSED)
    return [decisions[i] for i in inter]


@dataclass(frozen=True)
class TrackOutput:
    """Per-detection track-id assignments for one sequence."""

    seq_id: str
    records: tuple[TrackRecord, ...]

    def by_frame(self) -> dict[int, list[TrackRecord]]:
        out: dict[int, list[TrackRecord]] = {}
        for rec in self.records:
            out.setdefault(rec.det.frame, []).append(rec)
        return out


def extract_tracks(decisions: Sequence[EdgeDecision], g: ClipGraph) -> TrackOutput:
    """Connected components over positive edges become tracks.

    Rejects inputs whose positive components would place two detections in
    one frame (cannot happen for decisions made by greedy_assign).
    """
    parent = list(range(len(g.nodes)))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for dec in decisions:
        e = g.edges[dec.edge_index]
        if e.kind is not EdgeKind.INTER_FRAME:
            raise ValueError(f"decision on intra-frame edge {dec.edge_index}")
        if dec.decision is Decision.POSITIVE:
            parent[find(e.i)] = find(e.j)

    members: dict[int, list[int]] = {}
    for node in range(len(g.nodes)):
        members.setdefault(find(node), []).append(node)
    for nodes in members.values():
        frames = [g.nodes[n].frame for n in nodes]
        if len(frames) != len(set(frames)):
            raise ValueError("positive edges place two detections in one frame")

    ordered = sorted(members.values(),
                     key=lambda ns: (g.nodes[min(ns)].frame, min(ns)))
    records = []
    seq_id = g.nodes[0].seq_id if g.nodes else ""
    for track_id, nodes in enumerate(ordered):
        for n in sorted(nodes, key=lambda n: g.nodes[n].frame):
            records.append(TrackRecord(g.nodes[n], track_id))
    records.sort(key=lambda r: (r.det.frame, r.track_id))
    return TrackOutput(seq_id=seq_id, records=tuple(records))
