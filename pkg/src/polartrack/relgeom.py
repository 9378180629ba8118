"""Pairwise relational edge features between oriented planar detections.

The default parametrization expresses the relation of a detection pair in the
earlier detection's local polar frame: (velocity, polar angle from the pole's
heading, heading difference, time gap). Two ablation variants are provided:
raw-distance polar (no time normalization) and time-normalized Cartesian
world-frame offsets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from .detections_io import Detection

TWO_PI = 2.0 * math.pi

# Guard against duplicate timestamps when normalizing by elapsed time.
TAU_EPS = 1e-6


class FeatureMode(Enum):
    POLAR_TIME = "polar_time"
    POLAR_RAW = "polar_raw"
    CARTESIAN_TIME = "cartesian_time"

    @classmethod
    def from_str(cls, s: str) -> "FeatureMode":
        for mode in cls:
            if mode.value == s:
                return mode
        raise ValueError(f"unknown feature_mode {s!r}; expected one of "
                         f"{[m.value for m in cls]}")


@dataclass(frozen=True)
class EdgeFeature:
    """4-component initial edge feature; meaning of the first three components
    depends on the feature mode (polar: velocity-or-distance, polar angle,
    heading difference; Cartesian: dx/dt, dy/dt, heading difference)."""

    v_or_d: float
    polar_angle_or_dx: float
    d_yaw_or_dy: float
    d_t: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.v_or_d, self.polar_angle_or_dx, self.d_yaw_or_dy, self.d_t)


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]; the upper boundary is inclusive."""
    if not math.isfinite(a):
        raise ValueError(f"cannot wrap non-finite angle {a!r}")
    r = a - TWO_PI * math.ceil((a - math.pi) / TWO_PI)
    # Float roundoff in the division can land exactly on the open boundary.
    if r <= -math.pi:
        r += TWO_PI
    elif r > math.pi:
        r -= TWO_PI
    return r


def _signed_polar_angle(src: "Detection", dst: "Detection") -> float:
    """Signed CCW angle from src's heading to the displacement toward dst."""
    dx = dst.x - src.x
    dy = dst.y - src.y
    if dx == 0.0 and dy == 0.0:
        return 0.0
    hx, hy = math.cos(src.yaw), math.sin(src.yaw)
    return wrap_angle(math.atan2(hx * dy - hy * dx, hx * dx + hy * dy))


def canonical_pair(a: "Detection", b: "Detection") -> tuple["Detection", "Detection"]:
    """Order a detection pair as (pole, other).

    Inter-frame pairs: the temporally earlier detection is the pole.
    Intra-frame pairs: the pole is chosen from rigid-transform-invariant
    pairwise quantities (each side's polar angle, then heading difference), so
    undirected edges get deterministic features that do not depend on the
    world frame. Exactly symmetric pairs fall back to lexicographic pose
    order, where both candidate features coincide anyway.
    """
    if a.frame != b.frame:
        return (a, b) if a.frame < b.frame else (b, a)
    key_a = (_signed_polar_angle(a, b), wrap_angle(a.yaw - b.yaw))
    key_b = (_signed_polar_angle(b, a), wrap_angle(b.yaw - a.yaw))
    if key_a < key_b:
        return (a, b)
    if key_b < key_a:
        return (b, a)
    if (a.x, a.y, a.yaw) <= (b.x, b.y, b.yaw):
        return (a, b)
    return (b, a)


def edge_features(pole: "Detection", other: "Detection", mode: FeatureMode,
                  tau: float) -> EdgeFeature:
    """Relational feature of the (pole, other) pair.

    `tau` is the nominal frame period used as the time scale for intra-frame
    pairs (which have zero elapsed time). Callers must pass a canonically
    ordered pair, see canonical_pair().
    """
    if tau <= 0.0:
        raise ValueError(f"frame period tau must be positive, got {tau}")
    intra = pole.frame == other.frame
    dt = other.t - pole.t
    denom = tau if intra else max(dt, TAU_EPS)
    d_yaw = wrap_angle(pole.yaw - other.yaw)
    d_t = 0.0 if intra else dt

    if mode is FeatureMode.CARTESIAN_TIME:
        return EdgeFeature((pole.x - other.x) / denom,
                           (pole.y - other.y) / denom, d_yaw, d_t)

    dx = other.x - pole.x
    dy = other.y - pole.y
    dist = math.hypot(dx, dy)
    if dist == 0.0:
        angle = 0.0
    else:
        # Signed CCW angle from the pole's heading to the displacement.
        hx, hy = math.cos(pole.yaw), math.sin(pole.yaw)
        angle = wrap_angle(math.atan2(hx * dy - hy * dx, hx * dx + hy * dy))
    first = dist / denom if mode is FeatureMode.POLAR_TIME else dist
    return EdgeFeature(first, angle, d_yaw, d_t)
