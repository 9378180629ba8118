"""Pilot for the end-to-end desk-scale acceptance run (not shipped)."""
import sys
import time

import numpy as np

from polartrack.detections_io import split_clips, group_by_sequence
from polartrack.evaluation import amota_per_class, mean_amota, static_tracker, evaluate_sequences
from polartrack.graphbuild import ClassConfig, ClassSpec
from polartrack.mpnmodel import Architecture
from polartrack.relgeom import FeatureMode
from polartrack.synthgen import NoiseSpec, SceneSpec, corrupt, fill_fp_ids, generate_scene, grouped_agents
from polartrack.tracker import gt_track_output, nn_baseline_sequences, track_sequences_offline
from polartrack.training import TrainConfig, train

CLASSES = ClassConfig((ClassSpec(0, "car", 15.0), ClassSpec(1, "pedestrian", 2.5)))
ARCH = Architecture()
SCENE = SceneSpec(world_radius=20.0)
NOISE = dict(fp_rate=1.0, fn_prob=0.1, pos_std=0.15, yaw_std=0.05)
N_CARS, N_PEDS = 3, 5
N_FRAMES = 16


def make_sequences(n, seed0):
    gt = {}
    det = {}
    rng = np.random.default_rng(seed0)
    for k in range(n):
        seq_id = f"s{seed0}_{k}"
        agents = grouped_agents(rng, CLASSES, n_car_platoons=1, cars_per_platoon=3,
                                n_ped_groups=1, peds_per_group=5)
        g = generate_scene(seq_id, agents, N_FRAMES, 0.5, CLASSES,
                           seed=seed0 + k, scene=SCENE)
        gt[seq_id] = g
        det[seq_id] = corrupt(g, NoiseSpec(**NOISE, seed=seed0 + k + 1), CLASSES)
    return gt, det


def main(n_train, n_eval, epochs, bs, lr, alpha, thr):
    t0 = time.time()
    train_gt, train_det = make_sequences(n_train, 1000)
    eval_gt, eval_det = make_sequences(n_eval, 9000)
    clips = []
    for seq in train_det.values():
        clips.extend(split_clips(fill_fp_ids(seq), 11, 5))
    print(f"{len(clips)} training clips; gen {time.time()-t0:.0f}s")

    t1 = time.time()
    cfg = TrainConfig(epochs=epochs, batch_size=bs, lr=lr, restart_epochs=1000,
                      focal_alpha=alpha, augment=False, seed=0)
    res = train(clips, CLASSES, ARCH, cfg,
                log=lambda r: print(f"  ep{r['epoch']}: loss {r['loss']:.4f} "
                                    f"p {r['precision']:.3f} r {r['recall']:.3f}",
                                    flush=True))
    print(f"train {time.time()-t1:.0f}s")

    t2 = time.time()
    thresholds = {0: thr, 1: thr}
    preds = track_sequences_offline(eval_det, res.params, ARCH, CLASSES,
                                    FeatureMode.POLAR_TIME, thresholds)
    gts = {k: gt_track_output(v, k) for k, v in eval_gt.items()}
    per = amota_per_class(static_tracker(preds), gts, 2.0, [0, 1], 40)
    model_amota = mean_amota(per)
    summ = evaluate_sequences(preds, gts, 2.0)
    print(f"track+eval {time.time()-t2:.0f}s")

    nn_preds = nn_baseline_sequences(eval_det, CLASSES)
    nn_per = amota_per_class(static_tracker(nn_preds), gts, 2.0, [0, 1], 40)
    nn_amota = mean_amota(nn_per)
    nn_summ = evaluate_sequences(nn_preds, gts, 2.0)
    print(f"model AMOTA={model_amota:.4f} (car {per[0].amota:.3f} ped {per[1].amota:.3f}) "
          f"MOTA={summ.mota:.3f} IDS={summ.ids}")
    print(f"nn    AMOTA={nn_amota:.4f} (car {nn_per[0].amota:.3f} ped {nn_per[1].amota:.3f}) "
          f"MOTA={nn_summ.mota:.3f} IDS={nn_summ.ids}")
    print(f"total {time.time()-t0:.0f}s")


if __name__ == "__main__":
    args = [float(a) for a in sys.argv[1:]]
    n_train, n_eval, epochs, bs = (int(a) for a in args[:4])
    lr, alpha, thr = args[4:]
    main(n_train, n_eval, epochs, bs, lr, alpha, thr)
