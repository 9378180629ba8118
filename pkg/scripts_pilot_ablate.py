"""Pilot for the ablation-direction acceptance run (not shipped)."""
import sys
import time

import numpy as np

from polartrack.detections_io import split_clips
from polartrack.evaluation import amota_per_class, mean_amota, static_tracker
from polartrack.graphbuild import ClassConfig, ClassSpec
from polartrack.mpnmodel import Architecture
from polartrack.onlinegraph import Connectivity
from polartrack.relgeom import FeatureMode
from polartrack.synthgen import NoiseSpec, SceneSpec, corrupt, fill_fp_ids, generate_scene, grouped_agents
from polartrack.tracker import gt_track_output, track_sequences_offline, track_sequences_online
from polartrack.training import TrainConfig, train

CLASSES = ClassConfig((ClassSpec(0, "car", 15.0), ClassSpec(1, "pedestrian", 2.5)))
ARCH = Architecture()
SCENE = SceneSpec(world_radius=20.0)
NOISE = dict(fp_rate=1.0, fn_prob=0.1, pos_std=0.15, yaw_std=0.05)
TRAIN_FRAMES = 20
EVAL_FRAMES = 28


def make_sequences(n, seed0, n_frames):
    gt, det = {}, {}
    rng = np.random.default_rng(seed0)
    for k in range(n):
        seq_id = f"s{seed0}_{k}"
        agents = grouped_agents(rng, CLASSES, 1, 3, 2, 4)
        g = generate_scene(seq_id, agents, n_frames, 0.5, CLASSES,
                           seed=seed0 + k, scene=SCENE)
        gt[seq_id] = g
        det[seq_id] = corrupt(g, NoiseSpec(**NOISE, seed=seed0 + k + 1), CLASSES)
    return gt, det


def main(n_train=20, n_eval=20, epochs=30, bs=4, lr=3e-3, alpha=0.5, thr=0.65):
    t0 = time.time()
    _, train_det = make_sequences(n_train, 2000, TRAIN_FRAMES)
    eval_gt, eval_det = make_sequences(n_eval, 8000, EVAL_FRAMES)
    gts = {k: gt_track_output(v, k) for k, v in eval_gt.items()}
    clips = []
    for seq in train_det.values():
        clips.extend(split_clips(fill_fp_ids(seq), 11, 5))
    thresholds = {0: thr, 1: thr}

    def amota_of(preds):
        return mean_amota(amota_per_class(static_tracker(preds), gts, 2.0,
                                          [0, 1], 40))

    models = {}
    for mode in (FeatureMode.POLAR_TIME, FeatureMode.POLAR_RAW,
                 FeatureMode.CARTESIAN_TIME):
        cfg = TrainConfig(epochs=epochs, batch_size=bs, lr=lr,
                          restart_epochs=1000, focal_alpha=alpha,
                          feature_mode=mode, augment=False, seed=0)
        res = train(clips, CLASSES, ARCH, cfg)
        models[mode] = res.params
        preds = track_sequences_offline(eval_det, res.params, ARCH, CLASSES,
                                        mode, thresholds)
        print(f"feature_mode={mode.value}: AMOTA={amota_of(preds):.4f} "
              f"({time.time()-t0:.0f}s)", flush=True)

    pt = models[FeatureMode.POLAR_TIME]
    for scale in (0.5, 1.0, 2.0):
        preds = track_sequences_offline(eval_det, pt, ARCH, CLASSES,
                                        FeatureMode.POLAR_TIME, thresholds,
                                        gate_scale=scale)
        print(f"gate_scale={scale}: AMOTA={amota_of(preds):.4f}", flush=True)

    for conn in (Connectivity.DENSE, Connectivity.CONSECUTIVE,
                 Connectivity.PRUNE_SKIP):
        preds = track_sequences_online(eval_det, pt, ARCH, CLASSES,
                                       FeatureMode.POLAR_TIME, thresholds,
                                       connectivity=conn)
        print(f"connectivity={conn.value}: AMOTA={amota_of(preds):.4f} "
              f"({time.time()-t0:.0f}s)", flush=True)
    print(f"total {time.time()-t0:.0f}s")


if __name__ == "__main__":
    main(*(
        [int(a) for a in sys.argv[1:3]] + [int(sys.argv[3]), int(sys.argv[4])]
        + [float(a) for a in sys.argv[5:]]) if len(sys.argv) > 1 else ())
