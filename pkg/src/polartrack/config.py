"""Run configuration: defaults, YAML loading, dotted-key overrides.

Unknown keys are rejected; every key has a documented default (see DEFAULTS).
The resolved configuration can be dumped next to run outputs so any run can
be reproduced bit-exactly from its log.
"""
from __future__ import annotations

import copy
import os
from pathlib import Path
from typing import Any, Mapping

import yaml

from .graphbuild import ClassConfig, ClassSpec
from .mpnmodel import Architecture
from .onlinegraph import Connectivity
from .relgeom import FeatureMode
from .synthgen import NoiseSpec, SceneSpec
from .training import AugmentConfig, TrainConfig

SEED_ENV_VAR = "POLARTRACK_SEED"

DEFAULTS: dict[str, Any] = {
    "version": 1,
    "seed": 0,
    "threads": 1,
    "feature_mode": "polar_time",
    "frame_period_s": 0.5,
    "gate_scale": 1.0,
    "vmax_safety": 1.1,
    "classes": {"car": 0, "pedestrian": 1},
    "vmax": {"car": 15.0, "pedestrian": 2.5},
    "score_floor": {"car": 0.0, "pedestrian": 0.0},
    "decode": {"threshold": {"car": 0.65, "pedestrian": 0.65}},
    "online": {"history_len": 3, "max_age": 3, "connectivity": "prune_skip"},
    "model": {"L": 4, "leaky_slope": 0.01},
    "train": {
        "epochs": 180,
        "batch_size": 64,
        "lr": 1e-3,
        "restart_epochs": 10,
        "focal_gamma": 2.0,
        "focal_alpha": 0.25,
        "clip_len": 11,
        "clip_stride": 9,
        "val_fraction": 0.1,
        "augment": True,
    },
    "augment": {
        "fp_fraction": [0.7, 0.9],
        "fp_fixed": [1, 3],
        "node_drop": [0.4, 0.6],
        "frame_drop": 0.05,
        "noise_distance": [0.05, 0.35],
        "noise_polar": [0.1, 0.25],
        "noise_yaw": [0.05, 0.25],
        "edge_drop": 0.2,
    },
    "eval": {"match_radius_m": 2.0, "amota_points": 40},
    "synth": {
        "n_sequences": 10,
        "n_frames": 20,
        "n_cars": 3,
        "n_pedestrians": 3,
        "world_radius": 25.0,
        "resample_every": 5,
        "fp_rate": 1.0,
        "fn_prob": 0.1,
        "pos_std": 0.15,
        "yaw_std": 0.05,
    },
}

# Sections whose sub-keys are user-defined names (class names), not a fixed set.
_OPEN_SECTIONS = {"classes", "vmax", "score_floor", "decode.threshold"}


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: Mapping, path: str = "") -> None:
    for key, value in override.items():
        here = f"{path}.{key}" if path else key
        if path in _OPEN_SECTIONS:
            base[key] = value
            continue
        if key not in base:
            raise ConfigError(f"unknown config key {here!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"config key {here!r} expects a mapping")
            _merge(base[key], value, here)
        else:
            base[key] = value


def _parse_scalar(text: str) -> Any:
    return yaml.safe_load(text)


class RunConfig:
    """Resolved configuration tree with typed accessors."""

    def __init__(self, tree: dict[str, Any]):
        self.tree = tree
        self._validate()

    @classmethod
    def load(cls, path: str | Path | None = None,
             overrides: Mapping[str, Any] | None = None) -> "RunConfig":
        tree = copy.deepcopy(DEFAULTS)
        explicit_seed = False
        if path is not None:
            with open(path) as fh:
                data = yaml.safe_load(fh) or {}
            if not isinstance(data, Mapping):
                raise ConfigError(f"config file {path} is not a mapping")
            explicit_seed = "seed" in data
            _merge(tree, data)
        if overrides:
            for dotted, value in overrides.items():
                node = tree
                parts = dotted.split(".")
                for k, part in enumerate(parts[:-1]):
                    prefix = ".".join(parts[:k + 1])
                    if part not in node:
                        if prefix in _OPEN_SECTIONS or any(
                                prefix.startswith(s + ".") for s in _OPEN_SECTIONS):
                            node[part] = {}
                        else:
                            raise ConfigError(f"unknown config key {dotted!r}")
                    node = node[part]
                    if not isinstance(node, dict):
                        raise ConfigError(f"config key {dotted!r} is not nested")
                leaf_parent = ".".join(parts[:-1])
                if parts[-1] not in node and leaf_parent not in _OPEN_SECTIONS:
                    raise ConfigError(f"unknown config key {dotted!r}")
                node[parts[-1]] = (_parse_scalar(value)
                                   if isinstance(value, str) else value)
                if dotted == "seed":
                    explicit_seed = True
        if not explicit_seed and SEED_ENV_VAR in os.environ:
            tree["seed"] = int(os.environ[SEED_ENV_VAR])
        return cls(tree)

    def _validate(self) -> None:
        t = self.tree
        try:
            FeatureMode.from_str(t["feature_mode"])
            Connectivity.from_str(t["online"]["connectivity"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if t["frame_period_s"] <= 0:
            raise ConfigError("frame_period_s must be positive")
        if t["gate_scale"] <= 0:
            raise ConfigError("gate_scale must be positive")
        names = set(t["classes"])
        for section in ("vmax", "score_floor"):
            extra = set(t[section]) - names
            if extra:
                raise ConfigError(f"{section} names unknown classes {sorted(extra)}")
        extra = set(t["decode"]["threshold"]) - names
        if extra:
            raise ConfigError(f"decode.threshold names unknown classes {sorted(extra)}")
        self.classes()  # validates vmax positivity / score floors

    def dump(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            yaml.safe_dump(self.tree, fh, sort_keys=False)

    @property
    def seed(self) -> int:
        return int(self.tree["seed"])

    @property
    def threads(self) -> int:
        return int(self.tree["threads"])

    @property
    def frame_period(self) -> float:
        return float(self.tree["frame_period_s"])

    @property
    def gate_scale(self) -> float:
        return float(self.tree["gate_scale"])

    def feature_mode(self) -> FeatureMode:
        return FeatureMode.from_str(self.tree["feature_mode"])

    def connectivity(self) -> Connectivity:
        return Connectivity.from_str(self.tree["online"]["connectivity"])

    def classes(self) -> ClassConfig:
        specs = []
        for name, class_id in self.tree["classes"].items():
            vmax = self.tree["vmax"].get(name)
            if vmax is None:
                raise ConfigError(f"missing vmax for class {name!r}")
            specs.append(ClassSpec(
                class_id=int(class_id), name=name, v_max=float(vmax),
                score_floor=float(self.tree["score_floor"].get(name, 0.0))))
        return ClassConfig(tuple(specs))

    def decode_thresholds(self) -> dict[int, float]:
        classes = self.classes()
        out = {}
        for spec in classes.specs:
            out[spec.class_id] = float(
                self.tree["decode"]["threshold"].get(spec.name, 0.65))
        return out

    def architecture(self) -> Architecture:
        return Architecture(steps=int(self.tree["model"]["L"]),
                            leaky_slope=float(self.tree["model"]["leaky_slope"]))

    def train_config(self) -> TrainConfig:
        t = self.tree["train"]
        return TrainConfig(
            epochs=int(t["epochs"]), batch_size=int(t["batch_size"]),
            lr=float(t["lr"]), restart_epochs=int(t["restart_epochs"]),
            focal_gamma=float(t["focal_gamma"]), focal_alpha=float(t["focal_alpha"]),
            feature_mode=self.feature_mode(), gate_scale=self.gate_scale,
            frame_period=self.frame_period, augment=bool(t["augment"]),
            seed=self.seed)

    def augment_config(self) -> AugmentConfig:
        a = self.tree["augment"]
        pair = lambda key: tuple(float(v) for v in a[key])
        return AugmentConfig(
            fp_fraction=pair("fp_fraction"),
            fp_fixed=tuple(int(v) for v in a["fp_fixed"]),
            node_drop=pair("node_drop"), frame_drop=float(a["frame_drop"]),
            noise_distance=pair("noise_distance"), noise_polar=pair("noise_polar"),
            noise_yaw=pair("noise_yaw"), edge_drop=float(a["edge_drop"]))

    def noise_spec(self, seed: int | None = None) -> NoiseSpec:
        s = self.tree["synth"]
        return NoiseSpec(fp_rate=float(s["fp_rate"]), fn_prob=float(s["fn_prob"]),
                         pos_std=float(s["pos_std"]), yaw_std=float(s["yaw_std"]),
                         seed=self.seed if seed is None else seed)

    def scene_spec(self) -> SceneSpec:
        s = self.tree["synth"]
        return SceneSpec(world_radius=float(s["world_radius"]),
                         resample_every=int(s["resample_every"]),
                         vmax_safety=float(self.tree["vmax_safety"]))
