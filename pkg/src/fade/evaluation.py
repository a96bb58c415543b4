"""Event matching, detection metrics and synthetic benchmark scenes."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .detector import FallEvent
from .simulator import Action, ActorScript, NoiseSpec, Scenario, synth_scene


@dataclass
class MetricsReport:
    tp: int
    fp: int
    fn: int
    precision: float | None = None
    recall: float | None = None
    f1: float | None = None
    by_users: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {"tp": self.tp, "fp": self.fp, "fn": self.fn, "precision": self.precision,
             "recall": self.recall, "f1": self.f1}
        if self.by_users:
            d["by_users"] = {str(k): v.to_dict() for k, v in sorted(self.by_users.items())}
        if self.timing:
            d["timing"] = self.timing
        return d


def metrics(tp: int, fp: int, fn: int) -> MetricsReport:
    """Precision, recall and F1; ratios with a zero denominator are None."""
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    p = tp / (tp + fp) if tp + fp else None
    r = tp / (tp + fn) if tp + fn else None
    f1 = 2 * p * r / (p + r) if p is not None and r is not None and p + r > 0 else None
    return MetricsReport(tp, fp, fn, p, r, f1)


def _event_time(e) -> float:
    return float(e.t if hasattr(e, "t") else e["t"])


def match_events(detected, truth, tol: float = 2.0) -> tuple[int, int, int]:
    """Greedy one-to-one matching of detections to ground-truth falls.

    A detection is eligible for a fall when it lies within
    ``[fall_start_t - tol, impact_t + tol]``; among eligible unmatched falls
    the one whose ``[fall_start_t, impact_t]`` interval is closest wins (ties
    go to the nearest impact, then the earliest). Returns ``(tp, fp, fn)``.
    """
    falls = sorted((e for e in truth if e.kind == "fall"), key=lambda e: (e.impact_t, e.actor))
    used = [False] * len(falls)
    tp = fp = 0
    for t in sorted(_event_time(d) for d in detected):
        best, best_key = None, None
        for k, f in enumerate(falls):
            if used[k] or not (f.fall_start_t - tol <= t <= f.impact_t + tol):
                continue
            gap = max(f.fall_start_t - t, 0.0, t - f.impact_t)
            key = (gap, abs(t - f.impact_t), k)
            if best_key is None or key < best_key:
                best, best_key = k, key
        if best is None:
            fp += 1
        else:
            used[best] = True
            tp += 1
    return tp, fp, len(falls) - sum(used)


def timing_summary(frame_ms) -> dict:
    ms = np.asarray(frame_ms, dtype=float)
    if ms.size == 0:
        return {}
    return {"mean_ms": float(ms.mean()), "p95_ms": float(np.percentile(ms, 95)),
            "frames": int(ms.size)}


def evaluate(detected, truth, tol: float = 2.0, frame_ms=None) -> MetricsReport:
    tp, fp, fn = match_events(detected, truth, tol)
    rep = metrics(tp, fp, fn)
    users = len({e.actor for e in truth})
    if users:
        rep.by_users = {users: metrics(tp, fp, fn)}
    if frame_ms is not None:
        rep.timing = timing_summary(frame_ms)
    return rep


def aggregate(results: Iterable[tuple[int, tuple[int, int, int]]]) -> MetricsReport:
    """Pool ``(n_users, (tp, fp, fn))`` scenario results into one report with breakdown."""
    totals = np.zeros(3, dtype=int)
    per: dict[int, np.ndarray] = {}
    for users, counts in results:
        c = np.asarray(counts, dtype=int)
        totals += c
        per.setdefault(users, np.zeros(3, dtype=int))
        per[users] += c
    rep = metrics(*map(int, totals))
    rep.by_users = {u: metrics(*map(int, c)) for u, c in sorted(per.items())}
    return rep


def load_events(source) -> list[FallEvent]:
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
            out.append(FallEvent(int(d["track_id"]), float(d["t"]), float(d.get("peak_v", math.nan)),
                                 float(d.get("peak_a", math.nan)), float(d.get("peak_p", math.nan))))
        except (ValueError, KeyError, TypeError) as exc:
            raise ValueError(f"events line {lineno}: {exc}") from None
    return out


def dump_events(events) -> str:
    return "".join(json.dumps(e.to_dict()) + "\n" for e in events)


# --- benchmark scenes ----------------------------------------------------------------------

def _place(rng, n: int, min_sep: float = 2.0):
    """Actor start positions in the room, pairwise at least ``min_sep`` apart."""
    out = []
    while len(out) < n:
        p = np.array([rng.uniform(-1.8, 1.8), rng.uniform(1.8, 4.8)])
        if all(np.linalg.norm(p - q) >= min_sep for q in out):
            out.append(p)
    return out


def _fall_action(rng, t0: float) -> Action:
    return Action(t0, "fall", {"a_fall": -float(rng.uniform(5.0, 9.0)),
                               "direction": float(rng.uniform(0, 360)),
                               "drift": float(rng.uniform(0.0, 0.5)),
                               "rest": 2.0})


def _adl_actions(rng, kind: str, t0: float, start, height: float):
    if kind == "sit":
        return [Action(t0, "sit", {"height": float(rng.uniform(0.6, 0.8)),
                                   "speed": float(rng.uniform(0.6, 1.2)), "hold": 1.5})]
    if kind == "squat":
        return [Action(t0, "squat", {"depth": float(rng.uniform(0.4, 0.6)),
                                     "speed": float(rng.uniform(0.7, 1.2)), "hold": 0.8})]
    if kind == "stand-up":
        low = float(rng.uniform(0.6, 0.75))
        return [Action(t0, "sit", {"height": low, "speed": 0.8, "hold": 1.0}),
                Action(t0 + 3.0, "stand", {"height": height,
                                           "speed": float(rng.uniform(0.7, 1.2))})]
    if kind == "walk":
        ang = rng.uniform(0, 2 * math.pi)
        to = np.asarray(start) + 1.5 * np.array([math.cos(ang), math.sin(ang)])
        to = np.clip(to, [-2.5, 1.2], [2.5, 5.5])
        return [Action(t0, "walk", {"to": [float(to[0]), float(to[1])],
                                    "speed": float(rng.uniform(0.5, 1.3))})]
    raise ValueError(f"unknown ADL {kind!r}")


ADL_KINDS = ("sit", "squat", "walk", "stand-up")


def benchmark_scenario(seed: int, n_actors: int = 1, falls: int = 1, adl: str | None = None,
                       noise: NoiseSpec | None = None, duration: float = 9.0) -> Scenario:
    """A seeded room scene: the first ``falls`` actors fall, the rest perform ADLs.

    With ``adl`` set every non-falling actor performs that activity, otherwise a
    random one. Each actor walks a little before acting so that tracks form.
    """
    rng = np.random.default_rng(seed)
    while True:
        sc = _draw_scene(rng, seed, n_actors, falls, adl, noise, duration)
        if n_actors < 2 or _min_separation(sc) >= MIN_SEPARATION:
            return sc


MIN_SEPARATION = 1.2


def _min_separation(sc: Scenario) -> float:
    truth = synth_scene(sc.actors, sc.t_frame, sc.duration)
    xy = truth.states[:, :, :2]
    best = math.inf
    for i in range(xy.shape[1]):
        for j in range(i + 1, xy.shape[1]):
            best = min(best, float(np.linalg.norm(xy[:, i] - xy[:, j], axis=1).min()))
    return best


def _draw_scene(rng, seed, n_actors, falls, adl, noise, duration) -> Scenario:
    starts = _place(rng, n_actors)
    actors = []
    for a in range(n_actors):
        height = float(rng.uniform(1.05, 1.3))
        t_act = float(rng.uniform(2.5, 3.5))
        lead = Action(0.0, "walk", {"velocity": [float(v) for v in rng.uniform(-0.3, 0.3, 2)],
                                    "duration": 1.2, "adl": False})
        if a < falls:
            acts = [lead, _fall_action(rng, t_act)]
        else:
            kind = adl or ADL_KINDS[int(rng.integers(len(ADL_KINDS)))]
            acts = [lead] + _adl_actions(rng, kind, t_act, starts[a], height)
        actors.append(ActorScript(a + 1, (float(starts[a][0]), float(starts[a][1])), height,
                                  tuple(acts)))
    return Scenario(seed=seed, duration=duration, actors=actors, noise=noise or NoiseSpec.room())


__all__ = [
    "MetricsReport", "metrics", "match_events", "evaluate", "aggregate", "timing_summary",
    "load_events", "dump_events", "benchmark_scenario", "ADL_KINDS",
]
