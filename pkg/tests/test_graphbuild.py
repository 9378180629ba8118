import math

import numpy as np
import pytest

from polartrack.detections_io import Clip, Detection
from polartrack.graphbuild import (
    ClassConfig,
    ClassSpec,
    EdgeKind,
    UnknownClassError,
    build_clip_graph,
    label_edges,
    vmax_from_gt,
)
from polartrack.relgeom import FeatureMode

CLASSES = ClassConfig((ClassSpec(0, "car", 15.0), ClassSpec(1, "pedestrian", 2.5)))


def det(frame, t, x, y=0.0, yaw=0.0, cid=0, gt=None):
    return Detection("s", frame, t, x, y, yaw, cid, 0.9, gt)


def clip_of(dets):
    by_frame = {}
    for d in dets:
        by_frame.setdefault(d.frame, []).append(d)
    return Clip(tuple((f, by_frame[f][0].t, tuple(by_frame[f]))
                      for f in sorted(by_frame)))


def test_gate_arithmetic_excludes_pair():
    # 8 m apart over 0.5 s: 15 * 0.5 = 7.5 < 8, no edge at gate 1.0.
    c = clip_of([det(0, 0.0, 0.0), det(1, 0.5, 8.0)])
    g = build_clip_graph(c, CLASSES, FeatureMode.POLAR_TIME, gate_scale=1.0)
    assert g.edges == []


def test_gate_arithmetic_doubled_scale():
    c = clip_of([det(0, 0.0, 0.0), det(1, 0.5, 8.0)])
    g = build_clip_graph(c, CLASSES, FeatureMode.POLAR_TIME, gate_scale=2.0)
    assert len(g.edges) == 1
    assert g.edges[0].kind is EdgeKind.INTER_FRAME


def test_single_detection_graph():
    g = build_clip_graph(clip_of([det(0, 0.0, 0.0)]), CLASSES,
                         FeatureMode.POLAR_TIME)
    assert len(g.nodes) == 1 and g.edges == []


def test_unknown_class_raises():
    c = clip_of([det(0, 0.0, 0.0, cid=9)])
    with pytest.raises(UnknownClassError, match="9"):
        build_clip_graph(c, CLASSES, FeatureMode.POLAR_TIME)


def test_cross_class_pairs_never_linked():
    c = clip_of([det(0, 0.0, 0.0, cid=0), det(1, 0.5, 0.5, cid=1)])
    g = build_clip_graph(c, CLASSES, FeatureMode.POLAR_TIME)
    assert g.edges == []


def test_intra_frame_gate_uses_frame_period():
    # Pedestrians 2 m apart in one frame: gate = 2 * 2.5 * 0.5 = 2.5 >= 2.
    near = clip_of([det(0, 0.0, 0.0, cid=1), det(0, 0.0, 2.0, cid=1)])
    far = clip_of([det(0, 0.0, 0.0, cid=1), det(0, 0.0, 2.6, cid=1)])
    g_near = build_clip_graph(near, CLASSES, FeatureMode.POLAR_TIME)
    g_far = build_clip_graph(far, CLASSES, FeatureMode.POLAR_TIME)
    assert [e.kind for e in g_near.edges] == [EdgeKind.INTRA_FRAME]
    assert g_far.edges == []


def _random_clip(rng, n_frames=4, per_frame=4):
    dets = []
    for f in range(n_frames):
        for _ in range(int(rng.integers(0, per_frame + 1))):
            dets.append(det(f, 0.5 * f, float(rng.uniform(-30, 30)),
                            float(rng.uniform(-30, 30)),
                            float(rng.uniform(-3, 3)),
                            cid=int(rng.integers(0, 2))))
    return clip_of(dets) if dets else clip_of([det(0, 0.0, 0.0)])


def _brute_force_edge_set(clip, gate_scale, tau=0.5):
    vmax = {0: 15.0, 1: 2.5}
    nodes = [d for _, _, dets in clip.frames for d in dets]
    expected = set()
    for a in range(len(nodes)):
        for b in range(len(nodes)):
            if a >= b or nodes[a].class_id != nodes[b].class_id:
                continue
            da, db = nodes[a], nodes[b]
            dist = math.hypot(da.x - db.x, da.y - db.y)
            v = vmax[da.class_id]
            if da.frame == db.frame:
                if dist <= gate_scale * 2.0 * v * tau:
                    expected.add((a, b, "intra"))
            elif dist <= gate_scale * v * abs(db.t - da.t):
                expected.add((a, b, "inter"))
    return expected


def test_gating_matches_brute_force_enumeration():
    rng = np.random.default_rng(21)
    for _ in range(50):
        clip = _random_clip(rng)
        for gate_scale in (0.5, 1.0, 2.0):
            g = build_clip_graph(clip, CLASSES, FeatureMode.POLAR_TIME,
                                 gate_scale=gate_scale)
            got = {(min(e.i, e.j), max(e.i, e.j), e.kind.value) for e in g.edges}
            assert got == _brute_force_edge_set(clip, gate_scale)


def test_edge_count_monotone_in_gate_scale():
    rng = np.random.default_rng(5)
    for _ in range(20):
        clip = _random_clip(rng, n_frames=5, per_frame=5)
        counts = [len(build_clip_graph(clip, CLASSES, FeatureMode.POLAR_TIME,
                                       gate_scale=s).edges)
                  for s in (0.5, 1.0, 2.0)]
        assert counts[0] <= counts[1] <= counts[2]


def test_no_self_or_duplicate_edges_and_valid_kinds():
    rng = np.random.default_rng(9)
    clip = _random_clip(rng, n_frames=5, per_frame=6)
    g = build_clip_graph(clip, CLASSES, FeatureMode.POLAR_TIME)
    seen = set()
    for e in g.edges:
        assert e.i != e.j
        key = (min(e.i, e.j), max(e.i, e.j), e.kind)
        assert key not in seen
        seen.add(key)
        same_frame = g.nodes[e.i].frame == g.nodes[e.j].frame
        assert same_frame == (e.kind is EdgeKind.INTRA_FRAME)
        if e.kind is EdgeKind.INTER_FRAME:
            assert g.nodes[e.i].frame < g.nodes[e.j].frame  # pole is earlier


def test_label_same_track_across_gap():
    c = clip_of([det(0, 0.0, 0.0, gt=7), det(3, 1.5, 3.0, gt=7)])
    g = label_edges(build_clip_graph(c, CLASSES, FeatureMode.POLAR_TIME))
    assert g.labels == [1]


def test_label_different_tracks():
    c = clip_of([det(0, 0.0, 0.0, gt=7), det(1, 0.5, 1.0, gt=9)])
    g = label_edges(build_clip_graph(c, CLASSES, FeatureMode.POLAR_TIME))
    assert g.labels == [0]


def test_intra_frame_edges_unlabeled():
    c = clip_of([det(0, 0.0, 0.0, gt=7), det(0, 0.0, 1.0, gt=7),
                 det(1, 0.5, 0.5, gt=7)])
    g = label_edges(build_clip_graph(c, CLASSES, FeatureMode.POLAR_TIME))
    for e, lab in zip(g.edges, g.labels):
        assert (lab is None) == (e.kind is EdgeKind.INTRA_FRAME)
    assert g.inter_labels() == [1, 1]


def test_label_requires_gt_ids():
    c = clip_of([det(0, 0.0, 0.0, gt=None), det(1, 0.5, 1.0, gt=3)])
    with pytest.raises(ValueError, match="gt_track_id"):
        label_edges(build_clip_graph(c, CLASSES, FeatureMode.POLAR_TIME))


def test_negative_gt_ids_label_zero():
    c = clip_of([det(0, 0.0, 0.0, gt=-5), det(1, 0.5, 1.0, gt=-5)])
    g = label_edges(build_clip_graph(c, CLASSES, FeatureMode.POLAR_TIME))
    assert g.labels == [0]


def test_vmax_from_gt_basic():
    seq = [det(0, 0.0, 0.0, gt=1), det(1, 0.5, 5.0, gt=1)]
    est = vmax_from_gt([seq], CLASSES)
    assert est[0] == pytest.approx(11.0)  # 5 m / 0.5 s * 1.1


def test_vmax_from_gt_stationary_floor():
    seq = [det(0, 0.0, 1.0, gt=1), det(1, 0.5, 1.0, gt=1)]
    est = vmax_from_gt([seq], CLASSES)
    assert est[0] == 1.0


def test_vmax_from_gt_empty_class_keeps_config():
    seq = [det(0, 0.0, 0.0, gt=1), det(1, 0.5, 5.0, gt=1)]  # class 0 only
    est = vmax_from_gt([seq], CLASSES)
    assert est[1] == 2.5
