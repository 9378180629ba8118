"""Training loop with detector-noise augmentation and deep supervision.

Each optimizer step consumes a batch of clips; every inter-frame edge is an
independent focal-loss sample, supervised at every message-passing step.
Augmentation mimics real detectors: injected false-positive boxes, node and
frame dropout, Gaussian perturbation of initial edge features, and edge
dropout.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import OptimizerState, ParameterSet, optimizer_step
from .detections_io import Clip, Detection
from .graphbuild import ClassConfig, ClipGraph, Edge, EdgeKind, build_clip_graph, label_edges
from .mpnmodel import Architecture, Mask, forward, init_params
from .relgeom import EdgeFeature, FeatureMode, wrap_angle


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class AugmentConfig:
    fp_fraction: tuple[float, float] = (0.7, 0.9)   # per class
    fp_fixed: tuple[int, int] = (1, 3)              # per frame
    node_drop: tuple[float, float] = (0.4, 0.6)     # per frame
    frame_drop: float = 0.05
    noise_distance: tuple[float, float] = (0.05, 0.35)   # std range, meters
    noise_polar: tuple[float, float] = (0.1, 0.25)       # std range, radians
    noise_yaw: tuple[float, float] = (0.05, 0.25)        # std range, radians
    edge_drop: float = 0.2

    def __post_init__(self):
        for lo, hi in (self.fp_fraction, self.node_drop):
            if not (0.0 <= lo <= hi <= 1.0):
                raise ValueError("fraction ranges must sit inside [0, 1]")
        for lo, hi in (self.noise_distance, self.noise_polar, self.noise_yaw):
            if lo < 0.0 or hi < lo:
                raise ValueError("noise std ranges must be non-negative")
        if not (0.0 <= self.frame_drop <= 1.0 and 0.0 <= self.edge_drop <= 1.0):
            raise ValueError("drop probabilities must sit inside [0, 1]")


def sample_noise_stds(cfg: AugmentConfig, classes: ClassConfig,
                      rng: np.random.Generator) -> dict[int, tuple[float, float, float]]:
    """Per-class (distance, polar angle, orientation) stds, drawn once per
    training run from the configured ranges."""
    out = {}
    for spec in classes.specs:
        out[spec.class_id] = (float(rng.uniform(*cfg.noise_distance)),
                              float(rng.uniform(*cfg.noise_polar)),
                              float(rng.uniform(*cfg.noise_yaw)))
    return out


def _pose_ranges(dets: Sequence[Detection]):
    xs = [d.x for d in dets]
    ys = [d.y for d in dets]
    yaws = [d.yaw for d in dets]
    return (min(xs), max(xs)), (min(ys), max(ys)), (min(yaws), max(yaws))


def _inject_false_positives(frames, cfg: AugmentConfig, classes: ClassConfig,
                            rng: np.random.Generator, next_fp_id: int):
    """Per frame: round(frac_c * n_c) boxes per class plus a fixed count,
    uniform within the labeled-pose coordinate ranges."""
    clip_dets = [d for _, _, dets in frames for d in dets]
    by_class: dict[int, list[Detection]] = {}
    for d in clip_dets:
        by_class.setdefault(d.class_id, []).append(d)
    if not by_class:
        return frames, next_fp_id
    frac = {cid: float(rng.uniform(*cfg.fp_fraction)) for cid in by_class}
    fixed = int(rng.integers(cfg.fp_fixed[0], cfg.fp_fixed[1] + 1))
    class_pool = sorted(by_class)
    out = []
    for frame, t, dets in frames:
        injected = []
        frame_by_class: dict[int, list[Detection]] = {}
        for d in dets:
            frame_by_class.setdefault(d.class_id, []).append(d)
        wanted = [(cid, round(frac[cid] * len(frame_by_class.get(cid, []))))
                  for cid in class_pool]
        wanted = [(cid, n) for cid, n in wanted if n > 0]
        wanted += [(class_pool[int(rng.integers(len(class_pool)))], 1)
                   for _ in range(fixed)]
        seq_id = dets[0].seq_id if dets else clip_dets[0].seq_id
        for cid, count in wanted:
            source = frame_by_class.get(cid) or by_class[cid]
            (x_lo, x_hi), (y_lo, y_hi), (w_lo, w_hi) = _pose_ranges(source)
            for _ in range(count):
                injected.append(Detection(
                    seq_id, frame, t,
                    float(rng.uniform(x_lo, x_hi)), float(rng.uniform(y_lo, y_hi)),
                    float(rng.uniform(w_lo, w_hi)), cid,
                    float(rng.uniform(0.1, 0.6)), gt_track_id=next_fp_id))
                next_fp_id -= 1
        out.append((frame, t, tuple(dets) + tuple(injected)))
    return out, next_fp_id


def _drop_nodes_and_frames(frames, cfg: AugmentConfig, rng: np.random.Generator):
    for _ in range(20):
        kept_frames = [f for f in frames if rng.random() >= cfg.frame_drop]
        if len(kept_frames) >= 2:
            break
    else:
        kept_frames = list(frames)
    out = []
    for frame, t, dets in kept_frames:
        frac = float(rng.uniform(*cfg.node_drop))
        n_drop = round(frac * len(dets))
        keep = np.ones(len(dets), dtype=bool)
        if n_drop:
            keep[rng.choice(len(dets), size=n_drop, replace=False)] = False
        out.append((frame, t, tuple(d for d, k in zip(dets, keep) if k)))
    return out


def _perturb_features(g: ClipGraph, stds, frame_period: float,
                      mode: FeatureMode, rng: np.random.Generator) -> ClipGraph:
    edges = []
    for e in g.edges:
        sd, sp, sy = stds[g.nodes[e.i].class_id]
        f = e.feature
        denom = 1.0
        if mode is not FeatureMode.POLAR_RAW:
            denom = f.d_t if f.d_t > 0.0 else frame_period
        if mode is FeatureMode.CARTESIAN_TIME:
            feat = EdgeFeature(
                f.v_or_d + float(rng.normal(0.0, sd)) / denom,
                f.polar_angle_or_dx + float(rng.normal(0.0, sd)) / denom,
                wrap_angle(f.d_yaw_or_dy + float(rng.normal(0.0, sy))),
                f.d_t)
        else:
            feat = EdgeFeature(
                f.v_or_d + float(rng.normal(0.0, sd)) / denom,
                wrap_angle(f.polar_angle_or_dx + float(rng.normal(0.0, sp))),
                wrap_angle(f.d_yaw_or_dy + float(rng.normal(0.0, sy))),
                f.d_t)
        edges.append(Edge(e.i, e.j, e.kind, feat))
    return ClipGraph(nodes=g.nodes, edges=edges, labels=g.labels)


def _drop_edges(g: ClipGraph, p: float, rng: np.random.Generator) -> ClipGraph:
    keep = rng.random(len(g.edges)) >= p
    edges = [e for e, k in zip(g.edges, keep) if k]
    labels = [l for l, k in zip(g.labels, keep) if k] if g.labels is not None else None
    return ClipGraph(nodes=g.nodes, edges=edges, labels=labels)


def augment_clip(clip: Clip, classes: ClassConfig, mode: FeatureMode,
                 cfg: AugmentConfig, rng: np.random.Generator,
                 stds: dict[int, tuple[float, float, float]] | None = None,
                 gate_scale: float = 1.0, frame_period: float = 0.5,
                 fp_id_start: int = -1000000) -> ClipGraph:
    """Augmented, labeled clip graph. Every input detection needs a
    gt_track_id; injected boxes get unique negative ids (always-negative
    edges)."""
    if stds is None:
        stds = sample_noise_stds(cfg, classes, rng)
    frames, _ = _inject_false_positives(list(clip.frames), cfg, classes, rng,
                                        fp_id_start)
    frames = _drop_nodes_and_frames(frames, cfg, rng)
    g = label_edges(build_clip_graph(Clip(frames=tuple(frames)), classes, mode,
                                     gate_scale, frame_period))
    g = _perturb_features(g, stds, frame_period, mode, rng)
    return _drop_edges(g, cfg.edge_drop, rng)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 180
    batch_size: int = 64
    lr: float = 1e-3
    restart_epochs: int = 10
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    feature_mode: FeatureMode = FeatureMode.POLAR_TIME
    gate_scale: float = 1.0
    frame_period: float = 0.5
    augment: bool = True
    seed: int = 0


@dataclass
class TrainResult:
    params: ParameterSet
    opt: OptimizerState
    history: list[dict]
    noise_stds: dict[int, tuple[float, float, float]]


def _clip_loss(g: ClipGraph, params: ParameterSet, arch: Architecture,
               cfg: TrainConfig):
    labels = np.array(g.inter_labels())
    step_logits = forward(g, params, arch, mask=Mask.FULL, all_steps=True)
    loss = None
    for logits in step_logits:
        term = ad.focal_loss(logits, labels, cfg.focal_gamma, cfg.focal_alpha)
        loss = term if loss is None else ad.add(loss, term)
    final_scores = 1.0 / (1.0 + np.exp(-step_logits[-1].data.reshape(-1)))
    pred = final_scores >= 0.5
    tp = int(np.sum(pred & (labels == 1)))
    fp = int(np.sum(pred & (labels == 0)))
    fn = int(np.sum(~pred & (labels == 1)))
    return loss, (tp, fp, fn)


def train(clips: Sequence[Clip], classes: ClassConfig, arch: Architecture,
          cfg: TrainConfig, augment_cfg: AugmentConfig | None = None,
          params: ParameterSet | None = None,
          val_clips: Sequence[Clip] | None = None,
          log=None) -> TrainResult:
    """Train the edge classifier on labeled clips.

    Reproducible per seed: shuffling and per-clip augmentation use rng streams
    derived from (seed, epoch, clip index) only.
    """
    augment_cfg = augment_cfg or AugmentConfig()
    params = params or init_params(arch, seed=cfg.seed)
    opt = OptimizerState.init(params, cycle_len=cfg.restart_epochs)
    stds = sample_noise_stds(augment_cfg, classes,
                             np.random.default_rng([cfg.seed, 1]))

    plain_cache: dict[int, ClipGraph] = {}

    def clip_graph(idx: int, epoch: int) -> ClipGraph:
        if cfg.augment:
            rng = np.random.default_rng([cfg.seed, 2, epoch, idx])
            return augment_clip(clips[idx], classes, cfg.feature_mode,
                                augment_cfg, rng, stds=stds,
                                gate_scale=cfg.gate_scale,
                                frame_period=cfg.frame_period,
                                fp_id_start=-1000000 * (idx + 1))
        if idx not in plain_cache:
            plain_cache[idx] = label_edges(build_clip_graph(
                clips[idx], classes, cfg.feature_mode, cfg.gate_scale,
                cfg.frame_period))
        return plain_cache[idx]

    history: list[dict] = []
    for epoch in range(cfg.epochs):
        order = np.random.default_rng([cfg.seed, 3, epoch]).permutation(len(clips))
        epoch_losses = []
        tp = fp = fn = 0
        for b0 in range(0, len(order), cfg.batch_size):
            batch = order[b0:b0 + cfg.batch_size]
            params.zero_grad()
            total = None
            n_used = 0
            counts = []
            for idx in batch:
                g = clip_graph(int(idx), epoch)
                if not g.inter_indices():
                    continue
                loss, c = _clip_loss(g, params, arch, cfg)
                counts.append(c)
                total = loss if total is None else ad.add(total, loss)
                n_used += 1
            if total is None:
                continue
            total = ad.scale(total, 1.0 / n_used)
            if not math.isfinite(total.item()):
                raise TrainingError(
                    f"non-finite loss at epoch {epoch} batch {b0 // cfg.batch_size}")
            total.backward()
            optimizer_step(params, opt, cfg.lr)
            epoch_losses.append(total.item())
            for c in counts:
                tp += c[0]
                fp += c[1]
                fn += c[2]
        row = {
            "epoch": epoch,
            "loss": float(np.mean(epoch_losses)) if epoch_losses else float("nan"),
            "precision": tp / (tp + fp) if tp + fp else 0.0,
            "recall": tp / (tp + fn) if tp + fn else 0.0,
        }
        if val_clips:
            row["val_loss"] = evaluate_loss(val_clips, classes, arch, params, cfg)
        history.append(row)
        if log is not None:
            log(row)
        opt.advance_epoch()
    return TrainResult(params=params, opt=opt, history=history, noise_stds=stds)


def evaluate_loss(clips: Sequence[Clip], classes: ClassConfig,
                  arch: Architecture, params: ParameterSet,
                  cfg: TrainConfig) -> float:
    losses = []
    for clip in clips:
        g = label_edges(build_clip_graph(clip, classes, cfg.feature_mode,
                                         cfg.gate_scale, cfg.frame_period))
        if not g.inter_indices():
            continue
        loss, _ = _clip_loss(g, params, arch, cfg)
        losses.append(loss.item())
    return float(np.mean(losses)) if losses else float("nan")


def edge_accuracy(clips: Sequence[Clip], classes: ClassConfig,
                  arch: Architecture, params: ParameterSet,
                  cfg: TrainConfig) -> float:
    """Fraction of inter-frame edges classified correctly at score 0.5."""
    correct = total = 0
    for clip in clips:
        g = label_edges(build_clip_graph(clip, classes, cfg.feature_mode,
                                         cfg.gate_scale, cfg.frame_period))
        if not g.inter_indices():
            continue
        labels = np.array(g.inter_labels())
        logits = forward(g, params, arch).data.reshape(-1)
        correct += int(np.sum((logits >= 0.0) == (labels == 1)))
        total += labels.size
    return correct / total if total else 1.0


def write_history_csv(history: Sequence[dict], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "precision", "recall"])
        for row in history:
            writer.writerow([row["epoch"], row["loss"], row["precision"],
                             row["recall"]])
