import csv
import json
import os
from pathlib import Path

import numpy as np
import pytest
import yaml

from polartrack.cli import main
from polartrack.config import ConfigError, RunConfig
from polartrack.detections_io import parse_detections, parse_tracks
from polartrack.mpnmodel import Architecture, init_params, save_model


@pytest.fixture()
def fast_cfg(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump({
        "seed": 3,
        "synth": {"n_sequences": 3, "n_frames": 8, "n_cars": 2,
                  "n_pedestrians": 1, "world_radius": 18.0},
        "train": {"epochs": 2, "batch_size": 4, "clip_len": 4,
                  "clip_stride": 4},
        "eval": {"amota_points": 8},
    }))
    return path


def run(*argv):
    return main([str(a) for a in argv])


def test_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        run("frobnicate")
    assert exc.value.code == 2


def test_no_subcommand_exits_2():
    assert run() == 2


def test_config_unknown_key_rejected(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("feature_mod: polar_time\n")
    with pytest.raises(ConfigError, match="unknown config key"):
        RunConfig.load(bad)


def test_config_defaults_and_overrides(tmp_path):
    cfg = RunConfig.load(None, {"gate_scale": "2.0",
                                "decode.threshold.car": "0.7",
                                "online.connectivity": "dense"})
    assert cfg.gate_scale == 2.0
    assert cfg.decode_thresholds()[0] == 0.7
    assert cfg.connectivity().value == "dense"


def test_config_env_seed(tmp_path, monkeypatch):
    monkeypatch.setenv("POLARTRACK_SEED", "77")
    assert RunConfig.load(None).seed == 77
    cfg_file = tmp_path / "c.yaml"
    cfg_file.write_text("seed: 5\n")
    assert RunConfig.load(cfg_file).seed == 5  # file wins over env


def test_config_roundtrip_dump(tmp_path):
    cfg = RunConfig.load(None, {"seed": "9"})
    out = tmp_path / "resolved.yaml"
    cfg.dump(out)
    again = RunConfig.load(out)
    assert again.tree == cfg.tree


def test_synth_gen_outputs_parse(tmp_path, fast_cfg):
    out = tmp_path / "data"
    assert run("synth-gen", "--config", fast_cfg, "--out", out) == 0
    with open(out / "detections.jsonl") as fh:
        dets = parse_detections(fh)
    with open(out / "gt_tracks.jsonl") as fh:
        gt = parse_tracks(fh)
    assert len(dets) > 0 and len(gt) > 0
    assert (out / "run_config.yaml").exists()
    assert {d.seq_id for d in dets} == {r.det.seq_id for r in gt}


def test_synth_gen_reproducible(tmp_path, fast_cfg):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    run("synth-gen", "--config", fast_cfg, "--out", out1)
    run("synth-gen", "--config", fast_cfg, "--out", out2)
    assert (out1 / "detections.jsonl").read_text() == \
        (out2 / "detections.jsonl").read_text()


def test_eval_identical_files_perfect(tmp_path, fast_cfg):
    out = tmp_path / "data"
    run("synth-gen", "--config", fast_cfg, "--out", out)
    report = tmp_path / "report.csv"
    code = run("eval", "--config", fast_cfg, "--gt", out / "gt_tracks.jsonl",
               "--pred", out / "gt_tracks.jsonl", "--report", report)
    assert code == 0
    rows = list(csv.reader(report.open()))
    assert rows[0][0] == "class"
    summary = [r for r in rows if r[0] == "all" and r[1] == "summary"]
    assert float(summary[0][-1]) == pytest.approx(1.0)


def test_train_track_eval_pipeline(tmp_path, fast_cfg):
    data = tmp_path / "data"
    run("synth-gen", "--config", fast_cfg, "--out", data)
    ckpt = tmp_path / "model.npz"
    log = tmp_path / "log.csv"
    assert run("train", "--config", fast_cfg, "--data",
               data / "detections.jsonl", "--out", ckpt, "--log", log) == 0
    assert ckpt.exists() and log.exists()
    rows = list(csv.reader(log.open()))
    assert rows[0] == ["epoch", "loss", "precision", "recall"]

    pred = tmp_path / "tracks.jsonl"
    assert run("track-offline", "--config", fast_cfg, "--ckpt", ckpt,
               "--data", data / "detections.jsonl", "--out", pred) == 0
    with open(pred) as fh:
        records = parse_tracks(fh)
    assert records

    pred_online = tmp_path / "tracks_online.jsonl"
    assert run("track-online", "--config", fast_cfg, "--ckpt", ckpt,
               "--data", data / "detections.jsonl", "--out", pred_online) == 0
    assert run("eval", "--config", fast_cfg, "--gt", data / "gt_tracks.jsonl",
               "--pred", pred) == 0


def test_grad_check_command(fast_cfg):
    assert run("grad-check", "--config", fast_cfg) == 0


def test_ablate_connectivity_three_rows(tmp_path, fast_cfg):
    data = tmp_path / "data"
    run("synth-gen", "--config", fast_cfg, "--out", data)
    ckpt = tmp_path / "model.npz"
    save_model(ckpt, init_params(Architecture(), seed=0), Architecture(),
               extra_meta={"feature_mode": "polar_time"})
    out = tmp_path / "ablate.csv"
    code = run("ablate", "--config", fast_cfg, "--axis", "connectivity",
               "--eval-data", data / "detections.jsonl",
               "--eval-gt", data / "gt_tracks.jsonl",
               "--ckpt", ckpt, "--out", out)
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert [r[1] for r in rows[1:]] == ["dense", "consecutive", "prune_skip"]


def test_missing_data_file_exits_2(tmp_path, fast_cfg):
    assert run("eval", "--config", fast_cfg, "--gt", tmp_path / "nope.jsonl",
               "--pred", tmp_path / "nope.jsonl") == 2
