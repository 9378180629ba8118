"""Canonical detection/track file formats: parsing, validation, clip slicing.

The canonical detection format is UTF-8 newline-delimited JSON, one object per
line with keys exactly `seq_id, frame, t, x, y, yaw, class_id, score` and
optional `gt_track_id`. The track output format is the same plus a required
`track_id` and no `gt_track_id`. Angles are radians, distances meters, time
seconds; all detections of one sequence live in a single fixed world frame.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import IO, Iterable

from .relgeom import wrap_angle

DETECTION_KEYS = ("seq_id", "frame", "t", "x", "y", "yaw", "class_id", "score")
OPTIONAL_DETECTION_KEYS = ("gt_track_id",)


class FormatError(ValueError):
    """Malformed record or inconsistent sequence ordering."""


@dataclass(frozen=True)
class Detection:
    """One oriented 3D object observation reduced to planar pose + heading."""

    seq_id: str
    frame: int
    t: float
    x: float
    y: float
    yaw: float
    class_id: int
    score: float
    gt_track_id: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    def pose_key(self) -> tuple[float, float, float]:
        return (self.x, self.y, self.yaw)


@dataclass(frozen=True)
class TrackRecord:
    """A detection with its assigned track identity (canonical track format)."""

    det: Detection
    track_id: int


@dataclass(frozen=True)
class Clip:
    """An ordered window of frames from one sequence."""

    frames: tuple[tuple[int, float, tuple[Detection, ...]], ...]

    @property
    def clip_len(self) -> int:
        return len(self.frames)

    def detections(self) -> list[Detection]:
        return [d for _, _, dets in self.frames for d in dets]


def _parse_record(obj: dict, lineno: int, *, track: bool) -> tuple[Detection, int | None]:
    required = set(DETECTION_KEYS) | ({"track_id"} if track else set())
    allowed = required | (set() if track else set(OPTIONAL_DETECTION_KEYS))
    keys = set(obj)
    if not required.issubset(keys):
        raise FormatError(f"line {lineno}: missing keys {sorted(required - keys)}")
    if not keys.issubset(allowed):
        raise FormatError(f"line {lineno}: unexpected keys {sorted(keys - allowed)}")
    try:
        frame = int(obj["frame"])
        t = float(obj["t"])
        score = float(obj["score"])
        det = Detection(
            seq_id=str(obj["seq_id"]),
            frame=frame,
            t=t,
            x=float(obj["x"]),
            y=float(obj["y"]),
            yaw=float(obj["yaw"]),
            class_id=int(obj["class_id"]),
            score=score,
            gt_track_id=None if obj.get("gt_track_id") is None else int(obj["gt_track_id"]),
        )
    except (TypeError, ValueError) as exc:
        raise FormatError(f"line {lineno}: bad field value ({exc})") from exc
    if frame < 0:
        raise FormatError(f"line {lineno}: negative frame index {frame}")
    if not math.isfinite(t):
        raise FormatError(f"line {lineno}: non-finite timestamp")
    if not (0.0 <= score <= 1.0):
        raise FormatError(f"line {lineno}: score {score} outside [0, 1]")
    track_id = int(obj["track_id"]) if track else None
    if track and track_id < 0:
        raise FormatError(f"line {lineno}: negative track_id {track_id}")
    return det, track_id


def _validate_order(dets: Iterable[Detection]) -> None:
    last: dict[str, tuple[int, float]] = {}
    for det in dets:
        prev = last.get(det.seq_id)
        if prev is not None:
            pframe, pt = prev
            if det.frame < pframe:
                raise FormatError(
                    f"non-monotone frame indices in sequence {det.seq_id!r} "
                    f"({pframe} then {det.frame})")
            if det.frame == pframe and det.t != pt:
                raise FormatError(
                    f"inconsistent timestamps for frame {det.frame} in "
                    f"sequence {det.seq_id!r}")
            if det.frame > pframe and det.t <= pt:
                raise FormatError(
                    f"non-monotone timestamps in sequence {det.seq_id!r} "
                    f"(frame {det.frame})")
        last[det.seq_id] = (det.frame, det.t)


def _iter_json_lines(stream: IO) -> Iterable[tuple[int, dict]]:
    for lineno, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(obj, dict):
            raise FormatError(f"line {lineno}: record is not an object")
        yield lineno, obj


def parse_detections(stream: IO) -> list[Detection]:
    """Parse canonical detection records, validating per-sequence ordering."""
    dets = [_parse_record(obj, lineno, track=False)[0]
            for lineno, obj in _iter_json_lines(stream)]
    _validate_order(dets)
    return dets


def parse_tracks(stream: IO) -> list[TrackRecord]:
    """Parse canonical track output records."""
    recs = []
    for lineno, obj in _iter_json_lines(stream):
        det, track_id = _parse_record(obj, lineno, track=True)
        recs.append(TrackRecord(det, track_id))
    _validate_order(r.det for r in recs)
    return recs


def _detection_obj(det: Detection) -> dict:
    obj = {"seq_id": det.seq_id, "frame": det.frame, "t": det.t, "x": det.x,
           "y": det.y, "yaw": det.yaw, "class_id": det.class_id,
           "score": det.score}
    if det.gt_track_id is not None:
        obj["gt_track_id"] = det.gt_track_id
    return obj


def serialize_detections(dets: Iterable[Detection], stream: IO) -> None:
    for det in dets:
        stream.write(json.dumps(_detection_obj(det)) + "\n")


def serialize_tracks(records: Iterable[TrackRecord], stream: IO) -> None:
    for rec in records:
        obj = _detection_obj(rec.det)
        obj.pop("gt_track_id", None)
        obj["track_id"] = rec.track_id
        stream.write(json.dumps(obj) + "\n")


def group_by_sequence(dets: Iterable[Detection]) -> dict[str, list[Detection]]:
    """Group detections by sequence, sorted by (frame, input order)."""
    seqs: dict[str, list[Detection]] = {}
    for det in dets:
        seqs.setdefault(det.seq_id, []).append(det)
    for dets_in_seq in seqs.values():
        dets_in_seq.sort(key=lambda d: d.frame)
    return seqs


def split_clips(seq: list[Detection], clip_len: int, stride: int) -> list[Clip]:
    """Slice one sequence into sliding frame windows.

    A trailing partial window is kept when it has at least 2 frames and covers
    frames beyond the previous window; fully redundant windows are dropped.
    """
    if clip_len < 2:
        raise ValueError(f"clip_len must be >= 2, got {clip_len}")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    if not seq:
        return []
    by_frame: dict[int, list[Detection]] = {}
    for det in seq:
        by_frame.setdefault(det.frame, []).append(det)
    frames = sorted(by_frame)
    times = {f: by_frame[f][0].t for f in frames}
    n = len(frames)
    clips: list[Clip] = []
    covered = 0
    for start in range(0, n, stride):
        end = min(start + clip_len, n)
        if end - start < 2 or end <= covered:
            continue
        window = tuple(
            (f, times[f], tuple(by_frame[f])) for f in frames[start:end])
        clips.append(Clip(frames=window))
        covered = end
    return clips


def whole_sequence_clip(seq: list[Detection]) -> Clip:
    """View an entire sequence as one clip (offline whole-sequence graphs)."""
    by_frame: dict[int, list[Detection]] = {}
    for det in seq:
        by_frame.setdefault(det.frame, []).append(det)
    frames = sorted(by_frame)
    return Clip(frames=tuple(
        (f, by_frame[f][0].t, tuple(by_frame[f])) for f in frames))
