"""Point-cloud data model, JSON Lines frame streams and the radar mount transform.

Points are held as an ``(n, 5)`` float array with columns
``x, y, z, doppler, snr`` so that per-frame work stays vectorized; the
:class:`RadarPoint` record is the scalar view of one row.
"""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

logger = logging.getLogger(__name__)

FORMAT_TAG = "fade-frames/1"
DEFAULT_T_FRAME = 0.05
#: radar unambiguous limits for the reference waveform
R_MAX = 7.28
V_MAX = 8.5556

X, Y, Z, DOPPLER, SNR = range(5)
POINT_FIELDS = ("x", "y", "z", "v", "snr")


class FrameFormatError(ValueError):
    """Base class for frame-stream data errors."""


class MalformedRecord(FrameFormatError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


class NonMonotoneTime(FrameFormatError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno


@dataclass(frozen=True)
class RadarPoint:
    x: float
    y: float
    z: float
    doppler: float = 0.0
    snr: float = 0.0
    world: bool = False

    def as_row(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z, self.doppler, self.snr], dtype=float)


@dataclass(frozen=True)
class SensorPose:
    """Radar mount: height above the floor and downward tilt (radians)."""

    h: float = 2.0
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.h) and self.h >= 0):
            raise ValueError(f"mount height must be finite and >= 0, got {self.h}")
        if not math.isfinite(self.theta):
            raise ValueError("tilt angle must be finite")

    def rotation(self) -> np.ndarray:
        # rotation by -theta about the sensor x axis
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])

    def to_dict(self) -> dict:
        return {"h": self.h, "theta": self.theta}


@dataclass(frozen=True, eq=False)
class PointFrame:
    frame_index: int
    t: float
    points: np.ndarray = field(default_factory=lambda: np.empty((0, 5)))
    world: bool = False

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.size == 0:
            pts = np.empty((0, 5))
        if pts.ndim != 2 or pts.shape[1] != 5:
            raise ValueError(f"points must have shape (n, 5), got {pts.shape}")
        pts = pts.copy()
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_points(cls, frame_index: int, t: float, points: Iterable[RadarPoint],
                    world: bool = False) -> "PointFrame":
        rows = [p.as_row() for p in points]
        arr = np.vstack(rows) if rows else np.empty((0, 5))
        return cls(frame_index, t, arr, world)

    def __len__(self) -> int:
        return len(self.points)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PointFrame):
            return NotImplemented
        return (self.frame_index == other.frame_index and self.t == other.t
                and self.world == other.world
                and np.array_equal(self.points, other.points))

    def point(self, i: int) -> RadarPoint:
        x, y, z, v, snr = self.points[i]
        return RadarPoint(x, y, z, v, snr, self.world)

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def doppler(self) -> np.ndarray:
        return self.points[:, DOPPLER]


@dataclass
class FrameStream(Sequence):
    """Parsed stream: header values plus the frames in order."""

    frames: list
    t_frame: float = DEFAULT_T_FRAME
    pose: SensorPose = field(default_factory=SensorPose)
    rejected: int = 0

    def __getitem__(self, i):
        return self.frames[i]

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[PointFrame]:
        return iter(self.frames)


def sensor_to_world(p, pose: SensorPose):
    """Map sensor-frame coordinates to the world frame (z = height above floor).

    Accepts a :class:`RadarPoint`, a :class:`PointFrame`, or an ``(n, >=3)``
    array whose first three columns are coordinates. Doppler and SNR are
    carried through unchanged.
    """
    rot = pose.rotation()
    offset = np.array([0.0, 0.0, pose.h])
    if isinstance(p, RadarPoint):
        x, y, z = rot @ np.array([p.x, p.y, p.z]) + offset
        return RadarPoint(float(x), float(y), float(z), p.doppler, p.snr, world=True)
    if isinstance(p, PointFrame):
        if p.world:
            return p
        return PointFrame(p.frame_index, p.t, sensor_to_world(p.points, pose), world=True)
    arr = np.array(p, dtype=float)
    if len(arr):
        arr[:, :3] = arr[:, :3] @ rot.T + offset
    return arr


def world_to_sensor(points: np.ndarray, pose: SensorPose) -> np.ndarray:
    """Inverse of :func:`sensor_to_world` for ``(n, >=3)`` arrays."""
    arr = np.array(points, dtype=float)
    if len(arr):
        arr[:, :3] = (arr[:, :3] - np.array([0.0, 0.0, pose.h])) @ pose.rotation()
    return arr


def _number(rec: dict, key: str, lineno: int) -> float:
    if key not in rec:
        raise MalformedRecord(lineno, f"missing key {key!r}")
    val = rec[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise MalformedRecord(lineno, f"field {key!r} is not a number")
    val = float(val)
    if not math.isfinite(val):
        raise MalformedRecord(lineno, f"field {key!r} is not finite")
    return val


def _parse_points(raw, lineno: int) -> np.ndarray:
    if not isinstance(raw, list):
        raise MalformedRecord(lineno, "'points' must be a list")
    arr = np.empty((len(raw), 5))
    for k, rec in enumerate(raw):
        if not isinstance(rec, dict):
            raise MalformedRecord(lineno, f"point {k} is not an object")
        for c, key in enumerate(POINT_FIELDS):
            arr[k, c] = _number(rec, key, lineno)
        if arr[k, SNR] < 0:
            raise MalformedRecord(lineno, f"point {k} has negative snr")
    return arr


def _in_limits(points: np.ndarray) -> np.ndarray:
    rng = np.linalg.norm(points[:, :3], axis=1)
    return (rng <= R_MAX) & (np.abs(points[:, DOPPLER]) <= V_MAX)


def parse_frame_stream(source) -> FrameStream:
    """Parse a JSON Lines frame stream.

    ``source`` may be a path, a text or binary file object, or a string of
    JSON Lines. Points beyond the radar's unambiguous range or speed are
    dropped and counted in ``FrameStream.rejected``.
    """
    if isinstance(source, (str, bytes)) and not _looks_like_path(source):
        text = source.decode() if isinstance(source, bytes) else source
        return _parse_lines(io.StringIO(text))
    if hasattr(source, "read"):
        return _parse_lines(source)
    with open(source, "r", encoding="utf-8") as fh:
        return _parse_lines(fh)


def _looks_like_path(s) -> bool:
    if isinstance(s, bytes):
        return False
    return "\n" not in s and not s.lstrip().startswith("{") and s != ""


def _parse_lines(fh: IO) -> FrameStream:
    stream = FrameStream(frames=[])
    last_index = None
    last_t = None
    for lineno, line in enumerate(fh, start=1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        line = line.strip()
        if not line:
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(lineno, f"invalid JSON ({exc.msg})") from None
        if not isinstance(rec, dict):
            raise MalformedRecord(lineno, "record is not an object")
        if "format" in rec:
            if rec["format"] != FORMAT_TAG:
                raise MalformedRecord(lineno, f"unknown format {rec['format']!r}")
            if stream.frames:
                raise MalformedRecord(lineno, "header after frame records")
            if "t_frame" in rec:
                stream.t_frame = _number(rec, "t_frame", lineno)
                if stream.t_frame <= 0:
                    raise MalformedRecord(lineno, "t_frame must be positive")
            if "pose" in rec:
                pose = rec["pose"]
                if not isinstance(pose, dict):
                    raise MalformedRecord(lineno, "'pose' must be an object")
                try:
                    stream.pose = SensorPose(_number(pose, "h", lineno),
                                             _number(pose, "theta", lineno))
                except ValueError as exc:
                    raise MalformedRecord(lineno, str(exc)) from None
            continue
        if "frame" not in rec:
            raise MalformedRecord(lineno, "missing key 'frame'")
        idx = rec["frame"]
        if isinstance(idx, bool) or not isinstance(idx, int):
            raise MalformedRecord(lineno, "'frame' must be an integer")
        t = _number(rec, "t", lineno)
        if "points" not in rec:
            raise MalformedRecord(lineno, "missing key 'points'")
        pts = _parse_points(rec["points"], lineno)
        if last_index is not None and idx <= last_index:
            raise NonMonotoneTime(lineno, f"frame index {idx} after {last_index}")
        if last_t is not None and t <= last_t:
            raise NonMonotoneTime(lineno, f"time {t} after {last_t}")
        last_index, last_t = idx, t
        keep = _in_limits(pts)
        dropped = int(len(pts) - keep.sum())
        if dropped:
            stream.rejected += dropped
            pts = pts[keep]
        stream.frames.append(PointFrame(idx, t, pts))
    if stream.rejected:
        logger.warning("rejected %d points outside radar limits", stream.rejected)
    return stream


def _point_record(row) -> dict:
    return {k: float(v) for k, v in zip(POINT_FIELDS, row)}


def header_record(t_frame: float = DEFAULT_T_FRAME, pose: SensorPose | None = None) -> dict:
    pose = pose or SensorPose()
    return {"format": FORMAT_TAG, "t_frame": t_frame, "pose": pose.to_dict()}


def dump_frame_stream(frames: Iterable[PointFrame], t_frame: float = DEFAULT_T_FRAME,
                      pose: SensorPose | None = None) -> str:
    """Serialize frames (sensor-frame coordinates) to JSON Lines text."""
    out = [json.dumps(header_record(t_frame, pose))]
    for fr in frames:
        out.append(json.dumps({"frame": int(fr.frame_index), "t": float(fr.t),
                               "points": [_point_record(r) for r in fr.points]}))
    return "\n".join(out) + "\n"


def write_frame_stream(path, frames: Iterable[PointFrame], t_frame: float = DEFAULT_T_FRAME,
                       pose: SensorPose | None = None) -> None:
    text = dump_frame_stream(frames, t_frame, pose)
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write frame stream to {path}: {exc}") from exc
