"""Sparse multiplex clip-graph construction with velocity gating.

Inter-frame edges link same-class detections across frames whose displacement
is physically reachable (distance <= gate_scale * v_max * |dt|); intra-frame
edges link same-class detections of one frame within twice that reach over one
frame period. Ground-truth labeling marks inter-frame edges positive when both
endpoints share a track identity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

from .detections_io import Clip, Detection
from .relgeom import EdgeFeature, FeatureMode, canonical_pair, edge_features


class UnknownClassError(KeyError):
    pass


@dataclass(frozen=True)
class ClassSpec:
    class_id: int
    name: str
    v_max: float  # meters/second
    score_floor: float = 0.0

    def __post_init__(self):
        if self.v_max <= 0.0:
            raise ValueError(f"v_max for class {self.name!r} must be positive")
        if not (0.0 <= self.score_floor <= 1.0):
            raise ValueError(f"score_floor for class {self.name!r} outside [0, 1]")


@dataclass(frozen=True)
class ClassConfig:
    """Per-class physical limits and detection score floors."""

    specs: tuple[ClassSpec, ...]

    def __post_init__(self):
        ids = [s.class_id for s in self.specs]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate class ids in class config")

    def get(self, class_id: int) -> ClassSpec:
        for spec in self.specs:
            if spec.class_id == class_id:
                return spec
        raise UnknownClassError(f"unknown class_id {class_id}")

    def by_name(self, name: str) -> ClassSpec:
        for spec in self.specs:
            if spec.name == name:
                return spec
        raise UnknownClassError(f"unknown class name {name!r}")

    def ids(self) -> list[int]:
        return [s.class_id for s in self.specs]


class EdgeKind(Enum):
    INTER_FRAME = "inter"
    INTRA_FRAME = "intra"


@dataclass(frozen=True)
class Edge:
    i: int  # pole endpoint (earlier frame, or lexicographic for intra-frame)
    j: int
    kind: EdgeKind
    feature: EdgeFeature


@dataclass
class ClipGraph:
    """Nodes, typed edges with initial features, optional inter-frame labels."""

    nodes: list[Detection]
    edges: list[Edge]
    labels: list[int | None] | None = None  # aligned with edges; None on intra

    def inter_indices(self) -> list[int]:
        return [k for k, e in enumerate(self.edges)
                if e.kind is EdgeKind.INTER_FRAME]

    def inter_labels(self) -> list[int]:
        if self.labels is None:
            raise ValueError("graph has no labels")
        out = [self.labels[k] for k in self.inter_indices()]
        assert all(l is not None for l in out)
        return out  # type: ignore[return-value]


def inter_gate(spec: ClassSpec, dt: float, gate_scale: float) -> float:
    return gate_scale * spec.v_max * abs(dt)


def intra_gate(spec: ClassSpec, tau: float, gate_scale: float) -> float:
    return gate_scale * 2.0 * spec.v_max * tau


def build_clip_graph(clip: Clip, classes: ClassConfig, mode: FeatureMode,
                     gate_scale: float = 1.0,
                     frame_period: float = 0.5) -> ClipGraph:
    """Build the sparse multiplex graph over one clip.

    Cross-class pairs are never linked; an unknown class id raises
    UnknownClassError.
    """
    if gate_scale <= 0.0:
        raise ValueError(f"gate_scale must be positive, got {gate_scale}")
    nodes = clip.detections()
    for det in nodes:
        classes.get(det.class_id)  # fail early, naming the class
    edges: list[Edge] = []
    n = len(nodes)
    for a in range(n):
        da = nodes[a]
        spec = classes.get(da.class_id)
        for b in range(a + 1, n):
            db = nodes[b]
            if db.class_id != da.class_id:
                continue
            dist = math.hypot(da.x - db.x, da.y - db.y)
            if da.frame == db.frame:
                if dist <= intra_gate(spec, frame_period, gate_scale):
                    pole, other = canonical_pair(da, db)
                    i, j = (a, b) if pole is da else (b, a)
                    edges.append(Edge(i, j, EdgeKind.INTRA_FRAME,
                                      edge_features(pole, other, mode, frame_period)))
            else:
                if dist <= inter_gate(spec, db.t - da.t, gate_scale):
                    pole, other = canonical_pair(da, db)
                    i, j = (a, b) if pole is da else (b, a)
                    edges.append(Edge(i, j, EdgeKind.INTER_FRAME,
                                      edge_features(pole, other, mode, frame_period)))
    return ClipGraph(nodes=nodes, edges=edges)


def label_edges(g: ClipGraph) -> ClipGraph:
    """Attach binary labels to inter-frame edges from ground-truth track ids.

    Negative gt ids mark known false-positive boxes; their edges are always
    labeled 0. Intra-frame edges stay unlabeled.
    """
    for k, det in enumerate(g.nodes):
        if det.gt_track_id is None:
            raise ValueError(f"node {k} has no gt_track_id; cannot label edges")
    labels: list[int | None] = []
    for e in g.edges:
        if e.kind is EdgeKind.INTRA_FRAME:
            labels.append(None)
            continue
        gi = g.nodes[e.i].gt_track_id
        gj = g.nodes[e.j].gt_track_id
        labels.append(1 if (gi == gj and gi is not None and gi >= 0) else 0)
    return ClipGraph(nodes=g.nodes, edges=g.edges, labels=labels)


def vmax_from_gt(sequences: Iterable[list[Detection]], classes: ClassConfig,
                 safety: float = 1.1, floor: float = 1.0) -> dict[int, float]:
    """Estimate per-class v_max from ground-truth tracks.

    The maximum consecutive-observation speed per class is inflated by a
    safety factor; classes with no observed motion fall back to `floor`, and
    classes absent from the data keep their configured v_max.
    """
    best: dict[int, float] = {}
    for seq in sequences:
        tracks: dict[tuple[int, int], list[Detection]] = {}
        for det in seq:
            if det.gt_track_id is None or det.gt_track_id < 0:
                continue
            tracks.setdefault((det.class_id, det.gt_track_id), []).append(det)
        for (class_id, _), dets in tracks.items():
            dets.sort(key=lambda d: d.frame)
            for prev, cur in zip(dets, dets[1:]):
                dt = cur.t - prev.t
                if dt <= 0.0:
                    continue
                speed = math.hypot(cur.x - prev.x, cur.y - prev.y) / dt
                best[class_id] = max(best.get(class_id, 0.0), speed)
    out: dict[int, float] = {}
    for spec in classes.specs:
        if spec.class_id in best:
            out[spec.class_id] = max(best[spec.class_id] * safety, floor)
        else:
            out[spec.class_id] = spec.v_max
    return out
