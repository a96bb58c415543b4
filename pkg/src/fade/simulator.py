"""Synthetic labelled scenes: actor kinematics, body point clouds, clutter and ghosts.

Body scatter sizes and counts are invented and non-physical; they are sized
so that a person forms a cluster at the default clustering settings.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .frames import (DEFAULT_T_FRAME, R_MAX, V_MAX, PointFrame, SensorPose, world_to_sensor,
                     write_frame_stream)

G = 9.81
REST_HEIGHT = 0.3
ADL_MAX_SPEED = 1.2
KINDS = ("walk", "stand", "sit", "squat", "fall")


class InvalidScript(ValueError):
    pass


@dataclass(frozen=True)
class Action:
    start_t: float
    kind: str
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "Action":
        d = dict(d)
        try:
            start = float(d.pop("t"))
            kind = d.pop("kind")
        except KeyError as exc:
            raise InvalidScript(f"action missing {exc.args[0]!r}") from None
        if kind not in KINDS:
            raise InvalidScript(f"unknown action kind {kind!r}")
        return cls(start, kind, d)

    def to_dict(self) -> dict:
        return {"t": self.start_t, "kind": self.kind, **self.params}


@dataclass(frozen=True)
class ActorScript:
    actor_id: int
    start: tuple = (0.0, 3.0)
    height: float = 1.1
    timeline: tuple = ()

    @classmethod
    def from_dict(cls, d: dict) -> "ActorScript":
        return cls(int(d.get("id", 0)), tuple(d.get("start", (0.0, 3.0))),
                   float(d.get("height", 1.1)),
                   tuple(Action.from_dict(a) for a in d.get("timeline", ())))

    def to_dict(self) -> dict:
        return {"id": self.actor_id, "start": list(self.start), "height": self.height,
                "timeline": [a.to_dict() for a in self.timeline]}


@dataclass(frozen=True)
class NoiseSpec:
    pos_sigma: float = 0.02
    doppler_sigma: float = 0.1
    p_detect: float = 1.0
    clutter_rate: float = 2.0
    ghost_wall: tuple | None = None
    ghost_p: float = 0.3
    n_torso: int = 12
    n_limb: int = 4
    limb_doppler_sigma: float = 0.1
    clutter_doppler_sigma: float = 0.3

    def __post_init__(self):
        for name in ("p_detect", "ghost_p"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("pos_sigma", "doppler_sigma", "clutter_rate", "limb_doppler_sigma",
                     "clutter_doppler_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.n_limb % 2:
            raise ValueError("n_limb must be even (limbs come in mirrored pairs)")

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        d = dict(d)
        if d.get("ghost_wall") is not None:
            d["ghost_wall"] = tuple(tuple(map(float, v)) for v in d["ghost_wall"])
        return cls(**d)

    @classmethod
    def room(cls, **kw) -> "NoiseSpec":
        """Denser bodies with flickering detections, light clutter."""
        base = dict(n_torso=24, n_limb=4, p_detect=0.85, clutter_rate=2.0)
        base.update(kw)
        return cls(**base)

    @classmethod
    def quiet(cls, **kw) -> "NoiseSpec":
        """No noise, full detection, no clutter."""
        base = dict(pos_sigma=0.0, doppler_sigma=0.0, p_detect=1.0, clutter_rate=0.0,
                    limb_doppler_sigma=0.0, clutter_doppler_sigma=0.0)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        d = asdict(self)
        if self.ghost_wall is not None:
            d["ghost_wall"] = [list(v) for v in self.ghost_wall]
        return d


@dataclass(frozen=True)
class TruthEvent:
    actor: int
    kind: str
    fall_start_t: float
    impact_t: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Trajectory:
    """Ground truth sampled at frame times. ``states[k, a]`` is ``x, y, z, vx, vy, vz``."""

    t: np.ndarray
    actor_ids: list
    states: np.ndarray
    events: list

    def centroid(self, actor: int) -> np.ndarray:
        return self.states[:, self.actor_ids.index(actor), :3]

    def vz(self, actor: int) -> np.ndarray:
        return self.states[:, self.actor_ids.index(actor), 5]


# --- vertical / horizontal segments -------------------------------------------------------

@dataclass
class _Seg:
    t0: float
    t1: float
    p0: np.ndarray
    v0: np.ndarray
    a: np.ndarray
    cosine: tuple | None = None  # (delta, duration) smooth move profile

    def at(self, t):
        s = t - self.t0
        if self.cosine is not None:
            delta, dur = self.cosine
            ph = math.pi * s / dur
            pos = self.p0 + delta * (1 - math.cos(ph)) / 2
            vel = delta * math.pi / (2 * dur) * math.sin(ph)
            return pos, vel
        return self.p0 + self.v0 * s + 0.5 * self.a * s * s, self.v0 + self.a * s


def fall_kinematics(drop: float, a_fall: float, v0: float = 0.0) -> tuple[float, float]:
    """Duration and impact speed of a constant-acceleration drop of ``drop`` metres."""
    a = abs(a_fall)
    v0 = abs(v0)
    v1 = math.sqrt(v0 * v0 + 2 * a * drop)
    return (v1 - v0) / a, v1


def _vertical_move(t0, z0, z1, speed):
    """Raised-cosine move whose peak speed is ``speed``."""
    delta = z1 - z0
    if abs(delta) < 1e-12:
        return [], t0
    dur = math.pi * abs(delta) / (2 * speed)
    seg = _Seg(t0, t0 + dur, np.array([z0]), np.zeros(1), np.zeros(1),
               cosine=(np.array([delta]), dur))
    return [seg], t0 + dur


def _hold(t0, t1, z):
    return _Seg(t0, t1, np.array([z]), np.zeros(1), np.zeros(1))


def _compile(script: ActorScript, duration: float):
    """Vertical and horizontal segment lists plus truth events for one actor."""
    z = float(script.height)
    xy = np.array(script.start, dtype=float)
    zsegs, hsegs, events = [], [], []
    t_free = 0.0
    for act in sorted(script.timeline, key=lambda a: a.start_t):
        if act.start_t < t_free - 1e-9:
            raise InvalidScript(f"actor {script.actor_id}: action at t={act.start_t} overlaps "
                                f"previous action ending at t={t_free:.3f}")
        t0 = act.start_t
        p = act.params
        if t0 > t_free:
            zsegs.append(_hold(t_free, t0, z))
        if act.kind == "walk":
            speed = float(p.get("speed", 1.0))
            if speed <= 0:
                raise InvalidScript("walk speed must be positive")
            if "to" in p:
                targets = [np.array(p["to"], dtype=float)]
            elif "path" in p:
                targets = [np.array(w, dtype=float) for w in p["path"]]
            else:
                vel = np.array(p.get("velocity", (speed, 0.0)), dtype=float)
                targets = [xy + vel * float(p.get("duration", 1.0))]
                speed = float(np.linalg.norm(vel))
            t = t0
            for tgt in targets:
                dist = float(np.linalg.norm(tgt - xy))
                if dist == 0 or speed == 0:
                    continue
                dur = dist / speed
                hsegs.append(_Seg(t, t + dur, xy.copy(), (tgt - xy) / dur, np.zeros(2)))
                t += dur
                xy = tgt
            zsegs.append(_hold(t0, t, z))
            t_end = t
            if p.get("adl", True):
                events.append(TruthEvent(script.actor_id, "adl", t0, t_end))
        elif act.kind in ("stand", "sit"):
            default = script.height if act.kind == "stand" else 0.7
            target = float(p.get("height", default))
            speed = float(p.get("speed", 0.8))
            if speed > ADL_MAX_SPEED:
                raise InvalidScript(f"{act.kind} speed {speed} exceeds {ADL_MAX_SPEED} m/s")
            segs, t_end = _vertical_move(t0, z, target, speed)
            zsegs += segs
            z = target
            hold = float(p.get("hold", 0.0))
            if hold:
                zsegs.append(_hold(t_end, t_end + hold, z))
            if segs:
                events.append(TruthEvent(script.actor_id, "adl", t0, t_end))
            t_end += hold
        elif act.kind == "squat":
            depth = float(p.get("depth", 0.5))
            speed = float(p.get("speed", 1.0))
            if speed > ADL_MAX_SPEED:
                raise InvalidScript(f"squat speed {speed} exceeds {ADL_MAX_SPEED} m/s")
            segs, t1 = _vertical_move(t0, z, z - depth, speed)
            hold = float(p.get("hold", 0.5))
            zsegs += segs + [_hold(t1, t1 + hold, z - depth)]
            segs2, t_end = _vertical_move(t1 + hold, z - depth, z, speed)
            zsegs += segs2
            events.append(TruthEvent(script.actor_id, "adl", t0, t_end))
        elif act.kind == "fall":
            a_fall = -abs(float(p.get("a_fall", -7.0)))
            if abs(a_fall) >= G:
                raise InvalidScript(f"fall acceleration {a_fall} must stay below 1 g")
            rest = float(p.get("rest_height", REST_HEIGHT))
            pre = float(p.get("pre_fall", 0.2))
            pre_drop = float(p.get("pre_fall_drop", 0.03)) if pre > 0 else 0.0
            if rest >= z:
                raise InvalidScript("rest height must be below the current torso height")
            t = t0
            v = 0.0
            if pre > 0:
                a_pre = -2 * pre_drop / pre ** 2
                zsegs.append(_Seg(t, t + pre, np.array([z]), np.zeros(1), np.array([a_pre])))
                z -= pre_drop
                v = a_pre * pre
                t += pre
            fall_start = t
            dur, _ = fall_kinematics(z - rest, a_fall, v)
            zsegs.append(_Seg(t, t + dur, np.array([z]), np.array([v]), np.array([a_fall])))
            drift = float(p.get("drift", 0.0))
            if drift:
                ang = math.radians(float(p.get("direction", 0.0)))
                dvec = drift * np.array([math.cos(ang), math.sin(ang)])
                hsegs.append(_Seg(t, t + dur, xy.copy(), dvec / dur, np.zeros(2)))
                xy = xy + dvec
            t += dur
            impact = t
            z = rest
            rest_dur = max(float(p.get("rest", 1.5)), 1.0)
            zsegs.append(_hold(t, t + rest_dur, z))
            t_end = t + rest_dur
            events.append(TruthEvent(script.actor_id, "fall", fall_start, impact))
        t_free = t_end
    if t_free < duration:
        zsegs.append(_hold(t_free, duration + 1.0, z))
    return zsegs, hsegs, events, np.array(script.start, dtype=float)


def _eval_segments(segs, t, default):
    for s in segs:
        if s.t0 - 1e-12 <= t < s.t1:
            return s.at(t)
    return None


def synth_trajectory(script: ActorScript, t_frame: float = DEFAULT_T_FRAME,
                     duration: float | None = None) -> Trajectory:
    """Sample one actor's torso centroid and vertical velocity at frame times."""
    return synth_scene([script], t_frame, duration)


def _frame_times(duration: float, t_frame: float) -> np.ndarray:
    n = int(round(duration / t_frame))
    return np.arange(n) * t_frame


def _script_end(script: ActorScript) -> float:
    _, _, events, _ = _compile(script, 0.0)
    ends = [e.impact_t for e in events] + [a.start_t for a in script.timeline]
    return max(ends, default=0.0) + 2.0


def synth_scene(scripts: Sequence[ActorScript], t_frame: float = DEFAULT_T_FRAME,
                duration: float | None = None) -> Trajectory:
    if duration is None:
        duration = max((_script_end(s) for s in scripts), default=1.0)
    times = _frame_times(duration, t_frame)
    states = np.zeros((len(times), len(scripts), 6))
    events = []
    for a, sc in enumerate(scripts):
        zsegs, hsegs, evs, xy0 = _compile(sc, duration)
        events += evs
        xy = xy0.copy()
        hidx = 0
        for k, t in enumerate(times):
            zr = _eval_segments(zsegs, t, None)
            zpos, zvel = (zr[0][0], zr[1][0]) if zr else (zsegs[-1].p0[0], 0.0)
            hr = _eval_segments(hsegs, t, None)
            if hr is not None:
                pos, vel = hr
            else:
                done = [s for s in hsegs if s.t1 <= t]
                pos = done[-1].at(done[-1].t1)[0] if done else xy
                vel = np.zeros(2)
            states[k, a] = [pos[0], pos[1], zpos, vel[0], vel[1], zvel]
    events.sort(key=lambda e: (e.fall_start_t, e.actor))
    return Trajectory(times, [s.actor_id for s in scripts], states, events)


# --- point clouds --------------------------------------------------------------------------

TORSO_HALF = np.array([0.2, 0.15, 0.3])
LIMB_HALF = np.array([0.2, 0.15, 0.45])
SENSE_BOX = ((-3.0, 3.0), (0.5, 6.0), (0.0, 2.5))


@dataclass
class _Body:
    torso: np.ndarray
    limbs: np.ndarray
    limb_factor: np.ndarray


def _ellipsoid(rng, n, half) -> np.ndarray:
    out = np.empty((0, 3))
    while len(out) < n:
        cand = rng.uniform(-1, 1, size=(2 * n + 4, 3))
        cand = cand[np.sum(cand ** 2, axis=1) <= 1]
        out = np.vstack([out, cand])
    return out[:n] * half


def _body(rng, noise: NoiseSpec) -> _Body:
    torso = _ellipsoid(rng, noise.n_torso, TORSO_HALF) if noise.n_torso else np.empty((0, 3))
    if len(torso):
        torso -= torso.mean(axis=0)
    half = _ellipsoid(rng, noise.n_limb // 2, LIMB_HALF)
    limbs = np.vstack([half, -half]) if len(half) else np.empty((0, 3))
    factor = rng.uniform(0.2, 0.6, size=len(half))
    return _Body(torso, limbs, np.concatenate([factor, factor]))


def radial_speed(pos: np.ndarray, vel: np.ndarray, pose: SensorPose) -> float:
    d = np.asarray(pos, dtype=float) - np.array([0.0, 0.0, pose.h])
    n = np.linalg.norm(d)
    return float(np.dot(vel, d) / n) if n > 0 else 0.0


def mirror(points: np.ndarray, wall) -> np.ndarray:
    """Reflect ``(n, >=3)`` points across the plane ``(point, normal)``."""
    p0 = np.asarray(wall[0], dtype=float)
    n = np.asarray(wall[1], dtype=float)
    n = n / np.linalg.norm(n)
    out = np.array(points, dtype=float)
    d = (out[:, :3] - p0) @ n
    out[:, :3] -= 2 * d[:, None] * n
    return out


def _actor_points(rng, body: _Body, state, noise: NoiseSpec, pose: SensorPose) -> np.ndarray:
    pos, vel = state[:3], state[3:]
    vr = radial_speed(pos, vel, pose)
    nt, nl = len(body.torso), len(body.limbs)
    pts = np.empty((nt + nl, 5))
    pts[:nt, :3] = pos + body.torso
    pts[nt:, :3] = pos + body.limbs
    if noise.pos_sigma:
        pts[:, :3] += rng.normal(0, noise.pos_sigma, size=(nt + nl, 3))
    pts[:nt, 3] = vr
    pts[nt:, 3] = vr * body.limb_factor
    if noise.doppler_sigma:
        pts[:nt, 3] += rng.normal(0, noise.doppler_sigma, size=nt)
    if noise.limb_doppler_sigma and nl:
        pts[nt:, 3] += rng.normal(0, noise.limb_doppler_sigma, size=nl)
    pts[:, 4] = np.maximum(rng.normal(15.0, 3.0, size=nt + nl), 0.0)
    return pts


def _in_radar_limits(sensor_pts: np.ndarray) -> np.ndarray:
    return ((np.linalg.norm(sensor_pts[:, :3], axis=1) <= R_MAX)
            & (np.abs(sensor_pts[:, 3]) <= V_MAX))


def synth_pointcloud(truth: Trajectory, noise: NoiseSpec, pose: SensorPose | None = None,
                     rng=None, world: bool = False) -> list[PointFrame]:
    """Per-frame point clouds for a sampled scene.

    Frames are returned in sensor coordinates unless ``world`` is true. Points
    beyond the radar's unambiguous range or speed are not emitted.
    """
    pose = pose or SensorPose()
    rng = np.random.default_rng(rng)
    bodies = [_body(rng, noise) for _ in truth.actor_ids]
    frames = []
    for k, t in enumerate(truth.t):
        chunks = []
        for a, body in enumerate(bodies):
            pts = _actor_points(rng, body, truth.states[k, a], noise, pose)
            keep = rng.random(len(pts)) < noise.p_detect
            chunks.append(pts[keep])
            if noise.ghost_wall is not None:
                ghost = mirror(pts, noise.ghost_wall)
                chunks.append(ghost[rng.random(len(ghost)) < noise.ghost_p])
        n_clutter = rng.poisson(noise.clutter_rate) if noise.clutter_rate else 0
        if n_clutter:
            cl = np.empty((n_clutter, 5))
            for c, (lo, hi) in enumerate(SENSE_BOX):
                cl[:, c] = rng.uniform(lo, hi, size=n_clutter)
            cl[:, 3] = rng.normal(0, noise.clutter_doppler_sigma, size=n_clutter)
            cl[:, 4] = np.maximum(rng.normal(8.0, 2.0, size=n_clutter), 0.0)
            chunks.append(cl)
        pts = np.vstack(chunks) if chunks else np.empty((0, 5))
        sensor = world_to_sensor(pts, pose)
        ok = _in_radar_limits(sensor)
        frames.append(PointFrame(k, float(t), pts[ok] if world else sensor[ok], world=world))
    return frames


# --- scenario files ------------------------------------------------------------------------

@dataclass
class Scenario:
    seed: int
    duration: float
    actors: list
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    pose: SensorPose = field(default_factory=lambda: SensorPose(2.0, 0.1745))
    t_frame: float = DEFAULT_T_FRAME

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            pose = d.get("pose", {"h": 2.0, "theta": 0.1745})
            return cls(seed=int(d["seed"]), duration=float(d["duration"]),
                       actors=[ActorScript.from_dict(a) for a in d.get("actors", [])],
                       noise=NoiseSpec.from_dict(d.get("noise", {})),
                       pose=SensorPose(float(pose["h"]), float(pose["theta"])),
                       t_frame=float(d.get("t_frame", DEFAULT_T_FRAME)))
        except (KeyError, TypeError) as exc:
            raise InvalidScript(f"bad scenario: {exc}") from None

    @classmethod
    def load(cls, path) -> "Scenario":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {"seed": self.seed, "duration": self.duration, "t_frame": self.t_frame,
                "actors": [a.to_dict() for a in self.actors], "noise": self.noise.to_dict(),
                "pose": self.pose.to_dict()}

    def generate(self, world: bool = False) -> tuple[list[PointFrame], Trajectory]:
        truth = synth_scene(self.actors, self.t_frame, self.duration)
        frames = synth_pointcloud(truth, self.noise, self.pose, rng=self.seed, world=world)
        return frames, truth


def dump_truth(events) -> str:
    return "".join(json.dumps(e.to_dict()) + "\n" for e in events)


def load_truth(source) -> list[TruthEvent]:
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            out.append(TruthEvent(int(d["actor"]), str(d["kind"]), float(d["fall_start_t"]),
                                  float(d["impact_t"])))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"truth line {lineno}: {exc}") from None
    return out


def write_dataset(frames, events, frames_path, truth_path, t_frame: float = DEFAULT_T_FRAME,
                  pose: SensorPose | None = None) -> None:
    write_frame_stream(frames_path, frames, t_frame, pose)
    try:
        with open(truth_path, "w", encoding="utf-8") as fh:
            fh.write(dump_truth(events))
    except OSError as exc:
        raise OSError(f"cannot write truth file {truth_path}: {exc}") from exc


__all__ = [
    "ActorScript", "Action", "NoiseSpec", "TruthEvent", "Trajectory", "Scenario",
    "InvalidScript", "synth_trajectory", "synth_scene", "synth_pointcloud", "write_dataset",
    "load_truth", "dump_truth", "fall_kinematics", "mirror", "radial_speed",
]
