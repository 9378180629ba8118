"""Command-line entry point: synth-gen, train, track-offline, track-online,
eval, grad-check, ablate.

Every run dumps its fully resolved configuration (including the seed) next to
its outputs, so rerunning from that file reproduces the outputs bit-exactly.
Exit codes: 0 success, 1 runtime error, 2 configuration/usage error.
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .config import ConfigError, RunConfig
from .decoding import TrackOutput
from .detections_io import (
    FormatError,
    group_by_sequence,
    parse_detections,
    parse_tracks,
    serialize_detections,
    serialize_tracks,
    split_clips,
)
from .evaluation import amota_per_class, evaluate_sequences, mean_amota, static_tracker
from .graphbuild import UnknownClassError, build_clip_graph, label_edges
from .mpnmodel import Mask, forward, init_params, load_model, save_model
from .onlinegraph import Connectivity
from .relgeom import FeatureMode
from .synthgen import corrupt, default_agents, fill_fp_ids, generate_scene
from .tracker import (
    gt_track_output,
    nn_baseline_sequences,
    track_sequences_offline,
    track_sequences_online,
)
from .training import train as run_training
from .training import write_history_csv


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="YAML config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override a config key (dotted)")
    p.add_argument("--threads", type=int, default=None,
                   help="cap worker threads (overrides config)")


def _load_config(args) -> RunConfig:
    overrides = {}
    for item in args.overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value
    if args.threads is not None:
        overrides["threads"] = args.threads
    return RunConfig.load(args.config, overrides)


def _read_detections(path: Path):
    with open(path) as fh:
        return parse_detections(fh)


def _read_tracks_by_seq(path: Path) -> dict[str, TrackOutput]:
    with open(path) as fh:
        records = parse_tracks(fh)
    out: dict[str, list] = {}
    for rec in records:
        out.setdefault(rec.det.seq_id, []).append(rec)
    return {seq: TrackOutput(seq, tuple(recs)) for seq, recs in out.items()}


def cmd_synth_gen(args) -> int:
    cfg = _load_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    classes = cfg.classes()
    s = cfg.tree["synth"]
    rng = np.random.default_rng(cfg.seed)
    gt_all = []
    det_all = []
    for k in range(int(s["n_sequences"])):
        agents = default_agents(rng, classes, int(s["n_cars"]),
                                int(s["n_pedestrians"]),
                                safety=float(cfg.tree["vmax_safety"]))
        seq_id = f"seq{k:04d}"
        gt = generate_scene(seq_id, agents, int(s["n_frames"]),
                            cfg.frame_period, classes, seed=cfg.seed * 10000 + k,
                            scene=cfg.scene_spec())
        gt_all.extend(gt)
        det_all.extend(corrupt(gt, cfg.noise_spec(seed=cfg.seed * 10000 + k + 1),
                               classes))
    with open(out_dir / "gt_tracks.jsonl", "w") as fh:
        serialize_tracks(
            (rec for seq in group_by_sequence(gt_all).values()
             for rec in gt_track_output(seq, seq[0].seq_id).records), fh)
    with open(out_dir / "detections.jsonl", "w") as fh:
        serialize_detections(det_all, fh)
    cfg.dump(out_dir / "run_config.yaml")
    print(f"wrote {len(gt_all)} gt boxes and {len(det_all)} detections to {out_dir}")
    return 0


def _clips_from_detections(dets, cfg: RunConfig):
    t = cfg.tree["train"]
    clips = []
    for seq in group_by_sequence(dets).values():
        clips.extend(split_clips(seq, int(t["clip_len"]), int(t["clip_stride"])))
    return clips


def cmd_train(args) -> int:
    cfg = _load_config(args)
    dets = fill_fp_ids(_read_detections(Path(args.data)))
    seqs = group_by_sequence(dets)
    names = sorted(seqs)
    val_fraction = float(cfg.tree["train"]["val_fraction"])
    n_val = int(len(names) * val_fraction)
    val_names = set(names[len(names) - n_val:])
    train_clips = _clips_from_detections(
        [d for n in names if n not in val_names for d in seqs[n]], cfg)
    val_clips = _clips_from_detections(
        [d for n in val_names for d in seqs[n]], cfg) if n_val else None
    if not train_clips:
        raise ConfigError("no training clips (check clip_len vs sequence length)")
    result = run_training(train_clips, cfg.classes(), cfg.architecture(),
                          cfg.train_config(), cfg.augment_config(),
                          val_clips=val_clips,
                          log=lambda row: print(
                              f"epoch {row['epoch']}: loss {row['loss']:.5f} "
                              f"p {row['precision']:.3f} r {row['recall']:.3f}"))
    out = Path(args.out)
    save_model(out, result.params, cfg.architecture(), result.opt,
               extra_meta={"feature_mode": cfg.tree["feature_mode"]})
    if args.log:
        write_history_csv(result.history, Path(args.log))
    cfg.dump(out.with_suffix(out.suffix + ".config.yaml"))
    print(f"saved checkpoint to {out}")
    return 0


def _tracks(args, cfg: RunConfig, online: bool) -> dict[str, TrackOutput]:
    params, arch, _, meta = load_model(Path(args.ckpt))
    mode = FeatureMode.from_str(meta.get("feature_mode",
                                         cfg.tree["feature_mode"]))
    seqs = group_by_sequence(_read_detections(Path(args.data)))
    kwargs = dict(params=params, arch=arch, classes=cfg.classes(), mode=mode,
                  thresholds=cfg.decode_thresholds(),
                  gate_scale=cfg.gate_scale, frame_period=cfg.frame_period,
                  threads=cfg.threads)
    if online:
        o = cfg.tree["online"]
        return track_sequences_online(
            seqs, connectivity=cfg.connectivity(),
            history_len=int(o["history_len"]), max_age=int(o["max_age"]),
            **kwargs)
    return track_sequences_offline(seqs, **kwargs)


def _write_tracks(outputs: dict[str, TrackOutput], path: Path) -> None:
    with open(path, "w") as fh:
        for seq_id in sorted(outputs):
            serialize_tracks(outputs[seq_id].records, fh)


def cmd_track(args, online: bool) -> int:
    cfg = _load_config(args)
    outputs = _tracks(args, cfg, online)
    out = Path(args.out)
    _write_tracks(outputs, out)
    cfg.dump(out.with_suffix(out.suffix + ".config.yaml"))
    n = sum(len(o.records) for o in outputs.values())
    print(f"wrote {n} tracked boxes to {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    gts = _read_tracks_by_seq(Path(args.gt))
    preds = _read_tracks_by_seq(Path(args.pred))
    radius = float(cfg.tree["eval"]["match_radius_m"])
    n_points = int(cfg.tree["eval"]["amota_points"])
    classes = cfg.classes()
    per_class = amota_per_class(static_tracker(preds), gts, radius,
                                [s.class_id for s in classes.specs], n_points)
    rows = []
    for spec in classes.specs:
        result = per_class[spec.class_id]
        for p in result.points:
            s = p.summary
            rows.append([spec.name, f"{p.target_recall:.4f}", f"{p.threshold:.6f}",
                         "" if s.mota is None else f"{s.mota:.6f}",
                         f"{p.motar:.6f}", s.ids, s.fp, s.fn,
                         f"{s.recall:.6f}", ""])
        rows.append([spec.name, "summary", "", "", "", "", "", "", "",
                     f"{result.amota:.6f}"])
    overall = mean_amota(per_class)
    rows.append(["all", "summary", "", "", "", "", "", "", "", f"{overall:.6f}"])
    if args.report:
        with open(args.report, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["class", "recall_point", "threshold", "MOTA",
                             "MOTAR", "IDS", "FP", "FN", "recall", "AMOTA"])
            writer.writerows(rows)
    print(f"AMOTA {overall:.4f}")
    for spec in classes.specs:
        print(f"  {spec.name}: {per_class[spec.class_id].amota:.4f}")
    return 0


def cmd_grad_check(args) -> int:
    cfg = _load_config(args)
    from .detections_io import Detection, whole_sequence_clip
    rng = np.random.default_rng(cfg.seed)
    dets = [Detection("g", f, 0.5 * f, float(rng.uniform(-6, 6)),
                      float(rng.uniform(-6, 6)), float(rng.uniform(-3, 3)),
                      0, 0.9, k) for f in range(2) for k in range(3)]
    classes = cfg.classes()
    g = label_edges(build_clip_graph(whole_sequence_clip(dets), classes,
                                     cfg.feature_mode(), cfg.gate_scale,
                                     cfg.frame_period))
    arch = cfg.architecture()
    params = init_params(arch, seed=cfg.seed)
    labels = np.array(g.inter_labels())

    def closure():
        return ad.focal_loss(forward(g, params, arch), labels, 2.0, 0.25)

    err = ad.grad_check(closure, params, n_samples=200,
                        rng=np.random.default_rng(cfg.seed))
    print(f"max relative gradient error: {err:.3e}")
    return 0 if err < 1e-4 else 1


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    classes = cfg.classes()
    arch = cfg.architecture()
    thresholds = cfg.decode_thresholds()
    radius = float(cfg.tree["eval"]["match_radius_m"])
    n_points = int(cfg.tree["eval"]["amota_points"])
    eval_dets = group_by_sequence(_read_detections(Path(args.eval_data)))
    gts = _read_tracks_by_seq(Path(args.eval_gt))
    class_ids = [s.class_id for s in classes.specs]

    def train_model(mode: FeatureMode):
        dets = fill_fp_ids(_read_detections(Path(args.train_data)))
        clips = _clips_from_detections(dets, cfg)
        tc = cfg.train_config()
        tc = type(tc)(**{**tc.__dict__, "feature_mode": mode})
        return run_training(clips, classes, arch, tc, cfg.augment_config()).params

    def load_params():
        params, larch, _, meta = load_model(Path(args.ckpt))
        return params, larch, FeatureMode.from_str(
            meta.get("feature_mode", cfg.tree["feature_mode"]))

    rows = []
    if args.axis == "feature_mode":
        for mode in (FeatureMode.POLAR_TIME, FeatureMode.POLAR_RAW,
                     FeatureMode.CARTESIAN_TIME):
            params = train_model(mode)
            preds = track_sequences_offline(
                eval_dets, params, arch, classes, mode, thresholds,
                cfg.gate_scale, cfg.frame_period, cfg.threads)
            rows.append((mode.value, preds))
    elif args.axis == "gate_scale":
        params, larch, mode = load_params()
        for scale in (0.5, 1.0, 2.0):
            preds = track_sequences_offline(
                eval_dets, params, larch, classes, mode, thresholds,
                scale, cfg.frame_period, cfg.threads)
            rows.append((f"{scale}x", preds))
    elif args.axis == "connectivity":
        params, larch, mode = load_params()
        o = cfg.tree["online"]
        for conn in (Connectivity.DENSE, Connectivity.CONSECUTIVE,
                     Connectivity.PRUNE_SKIP):
            preds = track_sequences_online(
                eval_dets, params, larch, classes, mode, thresholds,
                connectivity=conn, gate_scale=cfg.gate_scale,
                frame_period=cfg.frame_period,
                history_len=int(o["history_len"]), max_age=int(o["max_age"]),
                threads=cfg.threads)
            rows.append((conn.value, preds))
    else:
        raise ConfigError(f"unknown ablation axis {args.axis!r}")

    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["axis", "variant", "AMOTA", "MOTA", "IDS", "FP", "FN",
                         "recall"])
        for variant, preds in rows:
            per_class = amota_per_class(static_tracker(preds), gts, radius,
                                        class_ids, n_points)
            summary = evaluate_sequences(preds, gts, radius)
            writer.writerow([args.axis, variant, f"{mean_amota(per_class):.6f}",
                             "" if summary.mota is None else f"{summary.mota:.6f}",
                             summary.ids, summary.fp, summary.fn,
                             f"{summary.recall:.6f}"])
            print(f"{args.axis}={variant}: AMOTA {mean_amota(per_class):.4f}")
    cfg.dump(Path(args.out).with_suffix(".config.yaml"))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="polartrack",
        description="Geometric-relations 3D multi-object tracker")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("synth-gen", help="generate synthetic gt + detections")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("train", help="train the edge classifier")
    _add_common(p)
    p.add_argument("--data", required=True, help="detections with gt ids (jsonl)")
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--log", default=None, help="training log CSV")

    for name in ("track-offline", "track-online"):
        p = sub.add_parser(name, help=f"{name.split('-')[1]} tracking")
        _add_common(p)
        p.add_argument("--ckpt", required=True)
        p.add_argument("--data", required=True)
        p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="CLEAR-MOT / AMOTA evaluation")
    _add_common(p)
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--report", default=None, help="per-point CSV report")

    p = sub.add_parser("grad-check", help="finite-difference gradient check")
    _add_common(p)

    p = sub.add_parser("ablate", help="sweep one design axis, emit CSV")
    _add_common(p)
    p.add_argument("--axis", required=True,
                   choices=["feature_mode", "gate_scale", "connectivity"])
    p.add_argument("--train-data", default=None)
    p.add_argument("--eval-data", required=True)
    p.add_argument("--eval-gt", required=True)
    p.add_argument("--ckpt", default=None)
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    handlers = {
        "synth-gen": cmd_synth_gen,
        "train": cmd_train,
        "track-offline": lambda a: cmd_track(a, online=False),
        "track-online": lambda a: cmd_track(a, online=True),
        "eval": cmd_eval,
        "grad-check": cmd_grad_check,
        "ablate": cmd_ablate,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, FormatError, UnknownClassError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
