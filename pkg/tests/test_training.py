import numpy as np
import pytest

from polartrack.detections_io import Clip, split_clips
from polartrack.graphbuild import ClassConfig, ClassSpec, EdgeKind, build_clip_graph, label_edges
from polartrack.mpnmodel import Architecture, forward, init_params
from polartrack.relgeom import FeatureMode
from polartrack.synthgen import NoiseSpec, corrupt, default_agents, fill_fp_ids, generate_scene
from polartrack.training import (
    AugmentConfig,
    TrainConfig,
    TrainingError,
    augment_clip,
    edge_accuracy,
    sample_noise_stds,
    train,
    write_history_csv,
)

CLASSES = ClassConfig((ClassSpec(0, "car", 15.0), ClassSpec(1, "pedestrian", 2.5)))
ARCH = Architecture()


def make_clips(n_seqs, n_frames=8, seed=0, noise=None, n_cars=2, n_peds=2,
               radius=20.0):
    from polartrack.synthgen import SceneSpec
    clips = []
    rng = np.random.default_rng(seed)
    for s in range(n_seqs):
        agents = default_agents(rng, CLASSES, n_cars=n_cars, n_pedestrians=n_peds)
        gt = generate_scene(f"s{s}", agents, n_frames, 0.5, CLASSES,
                            seed=seed * 1000 + s,
                            scene=SceneSpec(world_radius=radius))
        dets = gt if noise is None else fill_fp_ids(
            corrupt(gt, NoiseSpec(**noise, seed=seed * 1000 + s + 7), CLASSES))
        clips.extend(split_clips(dets, clip_len=n_frames, stride=n_frames))
    return clips


def small_cfg(**kw):
    defaults = dict(epochs=3, batch_size=8, lr=1e-3, restart_epochs=10,
                    augment=False, seed=0)
    defaults.update(kw)
    return TrainConfig(**defaults)


def test_augment_injection_count():
    # frame with 10 real boxes, frac 0.8, fixed 2 -> exactly 10 injected
    dets = tuple(
        __import__("polartrack.detections_io", fromlist=["Detection"]).Detection(
            "s", f, 0.5 * f, float(k), 0.0, 0.0, 0, 0.9, k)
        for f in range(2) for k in range(10))
    by_frame = {}
    for d in dets:
        by_frame.setdefault(d.frame, []).append(d)
    clip = Clip(tuple((f, by_frame[f][0].t, tuple(by_frame[f]))
                      for f in sorted(by_frame)))
    cfg = AugmentConfig(fp_fraction=(0.8, 0.8), fp_fixed=(2, 2),
                        node_drop=(0.0, 0.0), frame_drop=0.0,
                        noise_distance=(0.0, 0.0), noise_polar=(0.0, 0.0),
                        noise_yaw=(0.0, 0.0), edge_drop=0.0)
    from polartrack.training import _inject_false_positives
    frames, _ = _inject_false_positives(list(clip.frames), cfg, CLASSES,
                                        np.random.default_rng(0), -1)
    for _, _, frame_dets in frames:
        assert len(frame_dets) == 20  # 10 real + round(0.8*10) + 2


def test_augment_empty_frame_gets_fixed_boxes():
    from polartrack.detections_io import Detection
    from polartrack.training import _inject_false_positives
    frames = [(0, 0.0, (Detection("s", 0, 0.0, 1.0, 1.0, 0.0, 0, 0.9, 1),)),
              (1, 0.5, ())]
    cfg = AugmentConfig(fp_fixed=(3, 3), fp_fraction=(0.0, 0.0))
    out, _ = _inject_false_positives(frames, cfg, CLASSES,
                                     np.random.default_rng(0), -1)
    assert len(out[1][2]) == 3


def test_augment_zero_noise_preserves_labels_except_fps():
    clips = make_clips(1, n_frames=6, seed=3)
    cfg = AugmentConfig(fp_fraction=(0.5, 0.5), fp_fixed=(1, 1),
                        node_drop=(0.0, 0.0), frame_drop=0.0,
                        noise_distance=(0.0, 0.0), noise_polar=(0.0, 0.0),
                        noise_yaw=(0.0, 0.0), edge_drop=0.0)
    g = augment_clip(clips[0], CLASSES, FeatureMode.POLAR_TIME, cfg,
                     np.random.default_rng(0))
    base = label_edges(build_clip_graph(clips[0], CLASSES, FeatureMode.POLAR_TIME))
    base_pos = {(base.nodes[e.i].pose_key(), base.nodes[e.j].pose_key())
                for e, l in zip(base.edges, base.labels) if l == 1}
    aug_pos = {(g.nodes[e.i].pose_key(), g.nodes[e.j].pose_key())
               for e, l in zip(g.edges, g.labels) if l == 1}
    assert aug_pos == base_pos  # injected FPs never gain positive labels
    assert any(d.gt_track_id < 0 for d in g.nodes)


def test_augment_injected_edges_negative():
    clips = make_clips(1, n_frames=5, seed=4)
    cfg = AugmentConfig(node_drop=(0.0, 0.0), frame_drop=0.0, edge_drop=0.0)
    g = augment_clip(clips[0], CLASSES, FeatureMode.POLAR_TIME, cfg,
                     np.random.default_rng(1))
    for e, lab in zip(g.edges, g.labels):
        if e.kind is EdgeKind.INTER_FRAME:
            if g.nodes[e.i].gt_track_id < 0 or g.nodes[e.j].gt_track_id < 0:
                assert lab == 0


def test_augment_node_drop_fraction():
    clips = make_clips(1, n_frames=6, seed=5, n_cars=6, n_peds=6)
    cfg = AugmentConfig(fp_fraction=(0.0, 0.0), fp_fixed=(1, 1),
                        node_drop=(0.5, 0.5), frame_drop=0.0, edge_drop=0.0)
    g = augment_clip(clips[0], CLASSES, FeatureMode.POLAR_TIME, cfg,
                     np.random.default_rng(2))
    n_original = len(clips[0].detections())
    n_kept_real = sum(1 for d in g.nodes if d.gt_track_id >= 0)
    # about half the (real + 1 fp per frame) nodes survive
    assert n_kept_real < 0.75 * n_original


def test_augment_requires_two_frames_after_dropping():
    clips = make_clips(1, n_frames=4, seed=6)
    cfg = AugmentConfig(frame_drop=0.95)
    g = augment_clip(clips[0], CLASSES, FeatureMode.POLAR_TIME, cfg,
                     np.random.default_rng(3))
    assert len({d.frame for d in g.nodes}) >= 2


def test_sample_noise_stds_within_ranges():
    cfg = AugmentConfig()
    stds = sample_noise_stds(cfg, CLASSES, np.random.default_rng(0))
    for sd, sp, sy in stds.values():
        assert cfg.noise_distance[0] <= sd <= cfg.noise_distance[1]
        assert cfg.noise_polar[0] <= sp <= cfg.noise_polar[1]
        assert cfg.noise_yaw[0] <= sy <= cfg.noise_yaw[1]


def test_training_reproducible():
    clips = make_clips(2, n_frames=6, seed=7)
    r1 = train(clips, CLASSES, ARCH, small_cfg(epochs=2, augment=True))
    r2 = train(clips, CLASSES, ARCH, small_cfg(epochs=2, augment=True))
    assert [row["loss"] for row in r1.history] == pytest.approx(
        [row["loss"] for row in r2.history], abs=1e-12)
    for name in r1.params.names():
        assert np.array_equal(r1.params[name].data, r2.params[name].data)


def test_training_loss_finite_at_init_and_decreasing():
    clips = make_clips(3, n_frames=8, seed=8,
                       noise=dict(fp_rate=0.5, fn_prob=0.1, pos_std=0.1,
                                  yaw_std=0.05))
    res = train(clips, CLASSES, ARCH, small_cfg(epochs=12))
    losses = [row["loss"] for row in res.history]
    assert all(np.isfinite(losses))
    assert losses[-1] < losses[0]


def test_gradient_flow_reaches_every_mlp():
    # A clustered scene, so the graph carries past, present, and future edges.
    from polartrack.synthgen import SceneSpec
    rng = np.random.default_rng(9)
    agents = default_agents(rng, CLASSES, n_cars=3, n_pedestrians=3)
    gt = generate_scene("s0", agents, 6, 0.5, CLASSES, seed=9000,
                        scene=SceneSpec(world_radius=8.0))
    clips = split_clips(gt, clip_len=6, stride=6)
    params = init_params(ARCH, seed=0)
    from polartrack import autodiff as ad
    from polartrack.mpnmodel import Mask
    g = label_edges(build_clip_graph(clips[0], CLASSES, FeatureMode.POLAR_TIME))
    assert any(e.kind is EdgeKind.INTRA_FRAME for e in g.edges)
    labels = np.array(g.inter_labels())
    params.zero_grad()
    loss = None
    for logits in forward(g, params, ARCH, mask=Mask.FULL, all_steps=True):
        term = ad.focal_loss(logits, labels, 2.0, 0.25)
        loss = term if loss is None else ad.add(loss, term)
    loss.backward()
    for name, tensor in params.items():
        assert tensor.grad is not None and np.any(tensor.grad != 0.0), name


def test_overfit_small_set():
    clips = make_clips(2, n_frames=6, seed=10)
    cfg = small_cfg(epochs=80, batch_size=1, lr=3e-3, restart_epochs=1000,
                    focal_alpha=0.5, augment=False)
    res = train(clips, CLASSES, ARCH, cfg)
    assert edge_accuracy(clips, CLASSES, ARCH, res.params, cfg) >= 0.95


def test_augmentation_improves_false_positive_rejection():
    # Robustness A/B: train on clean boxes with and without augmentation,
    # validate on detector-corrupted clips. At desk scale the stable,
    # repeatable augmentation benefit is false-positive rejection (precision
    # on noisy graphs); the recall axis trades against it at any fixed
    # threshold in runs this small.
    train_clips = make_clips(5, n_frames=8, seed=11)
    noisy_val = make_clips(4, n_frames=8, seed=12,
                           noise=dict(fp_rate=2.0, fn_prob=0.2, pos_std=0.4,
                                      yaw_std=0.25))
    kw = dict(epochs=60, batch_size=1, lr=3e-3, restart_epochs=1000,
              focal_alpha=0.5, seed=0)
    plain = train(train_clips, CLASSES, ARCH, small_cfg(augment=False, **kw))
    augmented = train(train_clips, CLASSES, ARCH, small_cfg(augment=True, **kw))

    def val_precision(params):
        tp = fp = 0
        for clip in noisy_val:
            g = label_edges(build_clip_graph(clip, CLASSES, FeatureMode.POLAR_TIME))
            if not g.inter_indices():
                continue
            labels = np.array(g.inter_labels())
            logits = forward(g, params, ARCH).data.reshape(-1)
            tp += int(np.sum((logits >= 0.0) & (labels == 1)))
            fp += int(np.sum((logits >= 0.0) & (labels == 0)))
        return tp / max(tp + fp, 1)

    assert val_precision(augmented.params) >= val_precision(plain.params)


def test_history_csv_columns(tmp_path):
    clips = make_clips(1, n_frames=6, seed=13)
    res = train(clips, CLASSES, ARCH, small_cfg(epochs=2))
    path = tmp_path / "log.csv"
    write_history_csv(res.history, path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "epoch,loss,precision,recall"
    assert len(lines) == 3
