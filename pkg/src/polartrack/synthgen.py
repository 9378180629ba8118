"""Desk-scale ground-truth generator and detector corruption model.

Agents follow unicycle kinematics (heading equals motion direction) with
piecewise-constant speed and turn rate, so trajectories exercise the
turn-following behavior of the polar edge parametrization. The corruption
model produces detector-like input: misses, Poisson clutter, and Gaussian
pose noise, with true boxes scoring higher than clutter on average.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .detections_io import Detection
from .graphbuild import ClassConfig

TRUE_SCORE_RANGE = (0.5, 1.0)
CLUTTER_SCORE_RANGE = (0.1, 0.6)


@dataclass(frozen=True)
class AgentSpec:
    class_id: int
    speed_range: tuple[float, float]      # m/s; must stay below v_max / safety
    yaw_rate_range: tuple[float, float]   # rad/s
    spawn_frame: int = 0
    despawn_frame: int | None = None      # exclusive; None = whole sequence
    initial_pose: tuple[float, float, float] | None = None  # x, y, yaw

    def validate(self, v_max: float, safety: float, frame_period: float) -> None:
        if self.speed_range[0] < 0 or self.speed_range[1] > v_max / safety:
            raise ValueError(
                f"agent speed range {self.speed_range} exceeds v_max {v_max} "
                f"/ safety {safety} for class {self.class_id}")
        max_rate = max(abs(self.yaw_rate_range[0]), abs(self.yaw_rate_range[1]))
        if max_rate * frame_period >= math.pi / 2:
            raise ValueError("yaw rate allows >= pi/2 heading change per frame")


@dataclass(frozen=True)
class NoiseSpec:
    fp_rate: float = 1.0        # expected clutter boxes per frame (Poisson)
    fn_prob: float = 0.1        # per-detection miss probability
    pos_std: float = 0.15       # meters
    yaw_std: float = 0.05       # radians
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.fn_prob <= 1.0):
            raise ValueError(f"fn_prob {self.fn_prob} outside [0, 1]")
        if self.fp_rate < 0 or self.pos_std < 0 or self.yaw_std < 0:
            raise ValueError("noise rates and stds must be non-negative")


@dataclass(frozen=True)
class SceneSpec:
    """Scenario-level knobs for generate_scene."""

    world_radius: float = 60.0
    resample_every: int = 5     # frames between (speed, yaw rate) resampling
    vmax_safety: float = 1.1


def generate_scene(seq_id: str, agents: list[AgentSpec], n_frames: int,
                   frame_period: float, classes: ClassConfig, seed: int,
                   scene: SceneSpec = SceneSpec()) -> list[Detection]:
    """Simulate ground-truth tracks; gt_track_id is the agent index.

    x += v cos(yaw) tau, y += v sin(yaw) tau, yaw += w tau, with (v, w)
    piecewise-constant and resampled every `resample_every` frames. Agents
    drifting outside the world radius get steered back toward the center at
    the next resample point.
    """
    if n_frames < 2:
        raise ValueError(f"n_frames must be >= 2, got {n_frames}")
    rng = np.random.default_rng(seed)
    dets: list[Detection] = []
    for track_id, spec in enumerate(agents):
        v_max = classes.get(spec.class_id).v_max
        spec.validate(v_max, scene.vmax_safety, frame_period)
        last = n_frames if spec.despawn_frame is None else spec.despawn_frame
        if spec.initial_pose is not None:
            x, y, yaw = spec.initial_pose
        else:
            r = scene.world_radius * math.sqrt(rng.uniform(0.0, 0.8))
            theta = rng.uniform(-math.pi, math.pi)
            x, y = r * math.cos(theta), r * math.sin(theta)
            yaw = float(rng.uniform(-math.pi, math.pi))
        v = float(rng.uniform(*spec.speed_range))
        w = float(rng.uniform(*spec.yaw_rate_range))
        for frame in range(spec.spawn_frame, min(last, n_frames)):
            if (frame - spec.spawn_frame) % scene.resample_every == 0:
                v = float(rng.uniform(*spec.speed_range))
                w = float(rng.uniform(*spec.yaw_rate_range))
                if math.hypot(x, y) > scene.world_radius:
                    bearing = math.atan2(-y, -x)
                    max_w = max(abs(spec.yaw_rate_range[0]),
                                abs(spec.yaw_rate_range[1]), 1e-3)
                    err = (bearing - yaw + math.pi) % (2 * math.pi) - math.pi
                    w = max(-max_w, min(max_w, err / (scene.resample_every * frame_period)))
            dets.append(Detection(seq_id, frame, frame * frame_period, x, y,
                                  yaw, spec.class_id, 1.0, gt_track_id=track_id))
            x += v * math.cos(yaw) * frame_period
            y += v * math.sin(yaw) * frame_period
            yaw += w * frame_period
    dets.sort(key=lambda d: d.frame)
    return dets


def default_agents(rng: np.random.Generator, classes: ClassConfig,
                   n_cars: int, n_pedestrians: int,
                   safety: float = 1.1) -> list[AgentSpec]:
    """Mixed-class agent pool with speeds spanning up to the gating limit."""
    agents = []
    car = classes.by_name("car")
    ped = classes.by_name("pedestrian")
    for _ in range(n_cars):
        hi = float(rng.uniform(0.5, 0.98)) * car.v_max / safety
        agents.append(AgentSpec(car.class_id, (0.3 * hi, hi), (-0.35, 0.35)))
    for _ in range(n_pedestrians):
        hi = float(rng.uniform(0.5, 0.98)) * ped.v_max / safety
        agents.append(AgentSpec(ped.class_id, (0.3 * hi, hi), (-0.8, 0.8)))
    return agents


def grouped_agents(rng: np.random.Generator, classes: ClassConfig,
                   n_car_platoons: int = 1, cars_per_platoon: int = 3,
                   n_ped_groups: int = 1, peds_per_group: int = 4,
                   world_radius: float = 20.0,
                   safety: float = 1.1) -> list[AgentSpec]:
    """Crowded scenes: car platoons along shared lanes and pedestrian groups
    walking together, so per-frame displacements rival inter-object spacing."""
    car = classes.by_name("car")
    ped = classes.by_name("pedestrian")
    agents: list[AgentSpec] = []
    for _ in range(n_car_platoons):
        heading = float(rng.uniform(-math.pi, math.pi))
        cx, cy = rng.uniform(-0.4 * world_radius, 0.4 * world_radius, size=2)
        speed_hi = float(rng.uniform(0.6, 0.95)) * car.v_max / safety
        along = 0.0
        for _ in range(cars_per_platoon):
            lateral = float(rng.uniform(-0.8, 0.8))
            x = cx - along * math.cos(heading) - lateral * math.sin(heading)
            y = cy - along * math.sin(heading) + lateral * math.cos(heading)
            agents.append(AgentSpec(
                car.class_id,
                (0.8 * speed_hi, speed_hi),
                (-0.1, 0.1),
                initial_pose=(x, y, heading + float(rng.uniform(-0.05, 0.05)))))
            along += float(rng.uniform(7.0, 13.0))
    for _ in range(n_ped_groups):
        heading = float(rng.uniform(-math.pi, math.pi))
        cx, cy = rng.uniform(-0.5 * world_radius, 0.5 * world_radius, size=2)
        speed_hi = float(rng.uniform(0.75, 0.98)) * ped.v_max / safety
        for _ in range(peds_per_group):
            agents.append(AgentSpec(
                ped.class_id,
                (0.8 * speed_hi, speed_hi),
                (-0.25, 0.25),
                initial_pose=(cx + float(rng.normal(0.0, 1.3)),
                              cy + float(rng.normal(0.0, 1.3)),
                              heading + float(rng.uniform(-0.2, 0.2)))))
    return agents


def corrupt(gt: list[Detection], noise: NoiseSpec,
            classes: ClassConfig) -> list[Detection]:
    """Detector-style corruption of a ground-truth sequence.

    Surviving true boxes keep their gt_track_id; clutter carries none.
    """
    rng = np.random.default_rng(noise.seed)
    by_frame: dict[int, list[Detection]] = {}
    for det in gt:
        by_frame.setdefault(det.frame, []).append(det)
    out: list[Detection] = []
    class_ids = classes.ids()
    for frame in sorted(by_frame):
        frame_dets = by_frame[frame]
        t = frame_dets[0].t
        for det in frame_dets:
            if rng.random() < noise.fn_prob:
                continue
            out.append(Detection(
                det.seq_id, det.frame, det.t,
                det.x + float(rng.normal(0.0, noise.pos_std)) if noise.pos_std else det.x,
                det.y + float(rng.normal(0.0, noise.pos_std)) if noise.pos_std else det.y,
                det.yaw + float(rng.normal(0.0, noise.yaw_std)) if noise.yaw_std else det.yaw,
                det.class_id,
                float(rng.uniform(*TRUE_SCORE_RANGE)),
                gt_track_id=det.gt_track_id))
        xs = [d.x for d in frame_dets]
        ys = [d.y for d in frame_dets]
        lo_x, hi_x = min(xs) - 10.0, max(xs) + 10.0
        lo_y, hi_y = min(ys) - 10.0, max(ys) + 10.0
        for _ in range(rng.poisson(noise.fp_rate)):
            out.append(Detection(
                frame_dets[0].seq_id, frame, t,
                float(rng.uniform(lo_x, hi_x)), float(rng.uniform(lo_y, hi_y)),
                float(rng.uniform(-math.pi, math.pi)),
                int(rng.choice(class_ids)),
                float(rng.uniform(*CLUTTER_SCORE_RANGE)),
                gt_track_id=None))
    return out


def fill_fp_ids(dets: list[Detection], start: int = -1) -> list[Detection]:
    """Give id-less detections unique negative gt ids (known false positives),
    as edge labeling requires every node to carry an id."""
    out = []
    next_id = start
    for det in dets:
        if det.gt_track_id is None:
            out.append(Detection(det.seq_id, det.frame, det.t, det.x, det.y,
                                 det.yaw, det.class_id, det.score,
                                 gt_track_id=next_id))
            next_id -= 1
        else:
            out.append(det)
    return out
