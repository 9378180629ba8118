"""Frame-by-frame evolving graph for online tracking.

Each frame, new detections are linked to the newest node of every active
track and to pooled unmatched detections (velocity-gated), plus intra-frame
edges among themselves. After edge classification and greedy decoding, the
graph evolves per the configured connectivity policy:

- prune_skip: negative candidates are deleted; each extended track gets edges
  from its new newest node to all older retained nodes (at most H-1), and the
  retained window is truncated to H, so any two retained nodes of a track stay
  within two hops of each other.
- consecutive: negative candidates are deleted; only consecutive chain edges
  are kept.
- dense: nothing is deleted; new detections link to every gated past node of
  the continuously growing graph.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .decoding import Decision, EdgeDecision, TrackOutput, greedy_assign
from .detections_io import Detection, TrackRecord
from .graphbuild import ClassConfig, ClipGraph, Edge, EdgeKind, inter_gate, intra_gate
from .mpnmodel import Architecture, Mask, forward
from .relgeom import FeatureMode, canonical_pair, edge_features


class Connectivity(Enum):
    DENSE = "dense"
    CONSECUTIVE = "consecutive"
    PRUNE_SKIP = "prune_skip"

    @classmethod
    def from_str(cls, s: str) -> "Connectivity":
        for mode in cls:
            if mode.value == s:
                return mode
        raise ValueError(f"unknown connectivity {s!r}")


@dataclass(frozen=True)
class FrameView:
    """The live graph exposed for one inference step."""

    graph: ClipGraph
    node_ids: tuple[int, ...]              # graph.nodes[k] is node node_ids[k]
    candidate_positions: tuple[int, ...]   # indices into graph.edges


@dataclass
class TrackState:
    """Evolving per-sequence tracker state (single writer)."""

    classes: ClassConfig
    mode: Connectivity = Connectivity.PRUNE_SKIP
    feature_mode: FeatureMode = FeatureMode.POLAR_TIME
    gate_scale: float = 1.0
    frame_period: float = 0.5
    history_len: int = 3
    max_age: int = 3

    nodes: dict[int, Detection] = field(default_factory=dict)   # live graph
    all_dets: dict[int, Detection] = field(default_factory=dict)
    edges: dict[tuple[int, int, EdgeKind], object] = field(default_factory=dict)
    tracks: dict[int, list[int]] = field(default_factory=dict)  # retained, newest last
    track_frames: dict[int, set[int]] = field(default_factory=dict)
    track_stale: dict[int, int] = field(default_factory=dict)
    node_track: dict[int, int] = field(default_factory=dict)
    unmatched: dict[int, int] = field(default_factory=dict)     # node id -> age
    assignment: dict[int, int] = field(default_factory=dict)
    next_track_id: int = 0
    next_node_id: int = 0
    last_t: float | None = None
    pending: list[tuple[int, int]] = field(default_factory=list)  # (past, new)

    def active_tracks(self) -> list[int]:
        return [tid for tid, stale in self.track_stale.items()
                if stale <= self.max_age]

    def _add_edge(self, a: int, b: int, kind: EdgeKind) -> tuple[int, int, EdgeKind]:
        pole, other = canonical_pair(self.nodes[a], self.nodes[b])
        i, j = (a, b) if pole is self.nodes[a] else (b, a)
        feat = edge_features(pole, other, self.feature_mode, self.frame_period)
        key = (i, j, kind)
        self.edges[key] = feat
        return key

    def _drop_node(self, node_id: int) -> None:
        self.nodes.pop(node_id, None)
        for key in [k for k in self.edges if node_id in k[:2]]:
            del self.edges[key]


def advance_frame(state: TrackState, dets: Sequence[Detection],
                  t: float) -> FrameView:
    """Add one frame of detections and return the inference graph view."""
    if state.last_t is not None and t <= state.last_t:
        raise ValueError(f"non-monotone frame time {t} after {state.last_t}")
    if state.pending:
        raise RuntimeError("advance_frame called with uncommitted decisions")
    state.last_t = t
    for det in dets:
        state.classes.get(det.class_id)

    new_ids = []
    for det in dets:
        node_id = state.next_node_id
        state.next_node_id += 1
        state.nodes[node_id] = det
        state.all_dets[node_id] = det
        new_ids.append(node_id)

    # Intra-frame context edges among the new detections.
    for ai in range(len(new_ids)):
        for bi in range(ai + 1, len(new_ids)):
            a, b = new_ids[ai], new_ids[bi]
            da, db = state.nodes[a], state.nodes[b]
            if da.class_id != db.class_id:
                continue
            spec = state.classes.get(da.class_id)
            if math.hypot(da.x - db.x, da.y - db.y) <= intra_gate(
                    spec, state.frame_period, state.gate_scale):
                state._add_edge(a, b, EdgeKind.INTRA_FRAME)

    # Inter-frame candidate edges from each new node to the allowed targets.
    if state.mode is Connectivity.DENSE:
        targets = [n for n in state.nodes if n not in new_ids]
    else:
        targets = [state.tracks[tid][-1] for tid in state.active_tracks()]
        targets.extend(state.unmatched)
    for b in new_ids:
        db = state.nodes[b]
        spec = state.classes.get(db.class_id)
        for a in targets:
            da = state.nodes[a]
            if da.class_id != db.class_id:
                continue
            dist = math.hypot(da.x - db.x, da.y - db.y)
            if dist <= inter_gate(spec, db.t - da.t, state.gate_scale):
                state._add_edge(a, b, EdgeKind.INTER_FRAME)
                state.pending.append((a, b))

    return build_view(state)


def build_view(state: TrackState) -> FrameView:
    node_ids = sorted(state.nodes,
                      key=lambda n: (state.nodes[n].frame, n))
    index = {n: k for k, n in enumerate(node_ids)}
    edge_keys = sorted(state.edges,
                       key=lambda key: (index[key[0]], index[key[1]], key[2].value))
    edges = [Edge(index[i], index[j], kind, state.edges[(i, j, kind)])
             for i, j, kind in edge_keys]
    positions = {}
    for pos, (i, j, kind) in enumerate(edge_keys):
        positions[(i, j, kind)] = pos
    candidates = tuple(positions[(a, b, EdgeKind.INTER_FRAME)]
                       for a, b in state.pending)
    graph = ClipGraph(nodes=[state.nodes[n] for n in node_ids], edges=edges)
    return FrameView(graph=graph, node_ids=tuple(node_ids),
                     candidate_positions=candidates)


def commit(state: TrackState, decisions: Sequence[EdgeDecision]) -> dict[int, int]:
    """Apply per-candidate decisions; returns node-id -> track-id assignments
    made this frame. Decision edge indices refer to the pending candidate
    list of the last advance_frame call."""
    n_cand = len(state.pending)
    seen = set()
    for dec in decisions:
        if not (0 <= dec.edge_index < n_cand) or dec.edge_index in seen:
            raise ValueError(f"decision for nonexistent candidate edge "
                             f"{dec.edge_index} (have {n_cand})")
        seen.add(dec.edge_index)
    if len(seen) != n_cand:
        raise ValueError(f"{n_cand - len(seen)} candidate edges lack a decision")

    by_new: dict[int, list[tuple[float, int, int]]] = {}
    for dec in decisions:
        past, new = state.pending[dec.edge_index]
        if dec.decision is Decision.POSITIVE:
            by_new.setdefault(new, []).append((-dec.score, past, dec.edge_index))

    assigned: dict[int, int] = {}
    used_edges: set[int] = set()
    extended: set[int] = set()

    def join(node_id: int, track_id: int) -> None:
        state.node_track[node_id] = track_id
        state.assignment[node_id] = track_id
        assigned[node_id] = track_id
        state.tracks[track_id].append(node_id)
        state.tracks[track_id].sort(key=lambda n: state.all_dets[n].frame)
        state.track_frames[track_id].add(state.all_dets[node_id].frame)

    for new in sorted(by_new, key=lambda n: by_new[n][0][0]):
        track_id: int | None = None
        absorbed: list[tuple[int, int]] = []
        for _, past, edge_pos in sorted(by_new[new]):
            if past in state.node_track:
                tid = state.node_track[past]
                if track_id is None and tid not in extended:
                    track_id = tid
                    used_edges.add(edge_pos)
                elif track_id == tid:
                    used_edges.add(edge_pos)  # extra in-track link (dense)
            elif past in state.unmatched:
                absorbed.append((past, edge_pos))
        if track_id is None and absorbed:
            track_id = state.next_track_id
            state.next_track_id += 1
            state.tracks[track_id] = []
            state.track_frames[track_id] = set()
            state.track_stale[track_id] = 0
        if track_id is None:
            continue
        for past, edge_pos in absorbed:
            # A singleton may only join when its frame is still free in the
            # track; decode constraints cannot see full track membership.
            if state.all_dets[past].frame in state.track_frames[track_id]:
                continue
            del state.unmatched[past]
            join(past, track_id)
            used_edges.add(edge_pos)
        join(new, track_id)
        extended.add(track_id)

    # Graph evolution per connectivity policy.
    if state.mode is not Connectivity.DENSE:
        for pos, (past, new) in enumerate(state.pending):
            if pos not in used_edges:
                state.edges.pop((past, new, EdgeKind.INTER_FRAME), None)
    if state.mode is Connectivity.PRUNE_SKIP:
        for tid in extended:
            retained = state.tracks[tid]
            newest = retained[-1]
            while len(retained) > state.history_len:
                state._drop_node(retained.pop(0))
            for older in retained[:-1]:
                key = (older, newest, EdgeKind.INTER_FRAME)
                if key not in state.edges:
                    state._add_edge(older, newest, EdgeKind.INTER_FRAME)

    # Age the pool, retire expired singletons, then admit unassigned new
    # detections at age 0.
    for node_id in list(state.unmatched):
        state.unmatched[node_id] += 1
        if state.unmatched[node_id] > state.max_age:
            del state.unmatched[node_id]
            state._drop_node(node_id)
            state.assignment[node_id] = state.next_track_id
            state.next_track_id += 1
    for node_id in state.nodes:
        if (node_id not in state.node_track and node_id not in state.unmatched
                and node_id not in state.assignment):
            state.unmatched[node_id] = 0

    for tid in list(state.track_stale):
        state.track_stale[tid] = 0 if tid in extended else state.track_stale[tid] + 1
        if (state.track_stale[tid] > state.max_age
                and state.mode is not Connectivity.DENSE):
            for node_id in state.tracks[tid]:
                state._drop_node(node_id)
            state.tracks[tid] = []

    state.pending.clear()
    return assigned


def finalize(state: TrackState, seq_id: str) -> TrackOutput:
    """Flush pooled singletons and emit per-detection track assignments."""
    if state.pending:
        raise RuntimeError("finalize called with uncommitted decisions")
    for node_id in sorted(state.unmatched):
        state.assignment[node_id] = state.next_track_id
        state.next_track_id += 1
    state.unmatched.clear()
    records = [TrackRecord(state.all_dets[n], tid)
               for n, tid in sorted(state.assignment.items())]
    records.sort(key=lambda r: (r.det.frame, r.track_id))
    return TrackOutput(seq_id=seq_id, records=tuple(records))


def run_online(seq: Sequence[Detection], params, arch: Architecture,
               state: TrackState, thresholds: Mapping[int, float],
               seq_id: str | None = None) -> TrackOutput:
    """Stream one sequence through the evolving graph with online masking."""
    by_frame: dict[int, list[Detection]] = {}
    for det in seq:
        by_frame.setdefault(det.frame, []).append(det)
    for frame in sorted(by_frame):
        dets = by_frame[frame]
        view = advance_frame(state, dets, dets[0].t)
        decisions = decide_candidates(view, params, arch, thresholds)
        commit(state, decisions)
    sid = seq_id if seq_id is not None else (seq[0].seq_id if seq else "")
    return finalize(state, sid)


def decide_candidates(view: FrameView, params, arch: Architecture,
                      thresholds: Mapping[int, float]) -> list[EdgeDecision]:
    """Classify the view, then greedily decide only the candidate edges."""
    if not view.candidate_positions:
        return []
    logits = forward(view.graph, params, arch, mask=Mask.PAST_PRESENT)
    inter_positions = view.graph.inter_indices()
    logit_of = {pos: logits.data[k, 0] for k, pos in enumerate(inter_positions)}
    cand_graph = ClipGraph(nodes=view.graph.nodes,
                           edges=[view.graph.edges[p]
                                  for p in view.candidate_positions])
    cand_logits = np.array([logit_of[p] for p in view.candidate_positions])
    return greedy_assign(cand_logits, cand_graph, thresholds)
