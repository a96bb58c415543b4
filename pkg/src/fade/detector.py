"""Sliding-window threshold fall decision on IMM features."""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass
from typing import Iterable

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array

from .imm import ImmConfig, ImmFilter, ImmState


@dataclass(frozen=True)
class DetectorConfig:
    v_thre: float = -2.0
    a_thre: float = -3.0
    p_thre: float = 0.5
    window: int = 20
    refractory: float = 2.0

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if not 0 < self.p_thre < 1:
            raise ValueError("p_thre must lie in (0, 1)")
        if self.refractory < 0:
            raise ValueError("refractory must be >= 0")


@dataclass(frozen=True)
class FallEvent:
    track_id: int
    t: float
    peak_v: float
    peak_a: float
    peak_p: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FeatureRow:
    t: float
    track_id: int
    z_meas: float | None
    z_hat: float
    v_hat: float
    a_hat: float
    mu_ca: float
    decision: int


FEATURE_COLUMNS = ("t", "track_id", "z_meas", "z_hat", "v_hat", "a_hat", "mu_ca", "decision")


def threshold_decide(history, cfg: DetectorConfig, track_id: int = 0) -> FallEvent | None:
    """Fire when velocity, acceleration and CA probability all cross within the window.

    ``history`` holds ``(t, [z, v, a], mu_ca)`` tuples, oldest first; only the
    last ``cfg.window`` entries are considered. Positive accelerations never
    count toward the acceleration condition.
    """
    recent = list(history)[-cfg.window:]
    if not recent:
        return None
    v = np.array([h[1][1] for h in recent])
    a = np.array([h[1][2] for h in recent])
    p = np.array([h[2] for h in recent])
    neg = a[a < 0]
    if neg.size == 0:
        return None
    peak_v, peak_a, peak_p = float(v.min()), float(neg.min()), float(p.max())
    if peak_v <= cfg.v_thre and peak_a <= cfg.a_thre and peak_p >= cfg.p_thre:
        return FallEvent(track_id, float(recent[-1][0]), peak_v, peak_a, peak_p)
    return None


@dataclass
class _TrackDetector:
    filter: ImmFilter
    ring: deque
    last_event_t: float | None = None


class StreamDetector:
    """One IMM filter and decision ring per confirmed track id."""

    def __init__(self, imm_cfg: ImmConfig | None = None, det_cfg: DetectorConfig | None = None,
                 record_features: bool = False):
        self.imm_cfg = imm_cfg or ImmConfig()
        self.det_cfg = det_cfg or DetectorConfig()
        self.record_features = record_features
        self.features: list[FeatureRow] = []
        self._tracks: dict[int, _TrackDetector] = {}

    @property
    def active_ids(self) -> list[int]:
        return sorted(self._tracks)

    def state(self, track_id: int) -> ImmState:
        return self._tracks[track_id].filter.state

    def drop(self, track_id: int) -> None:
        self._tracks.pop(track_id, None)

    def update(self, track_id: int, t: float, z: float | None, v0: float = 0.0) -> FallEvent | None:
        """Feed one measurement (``None`` for a miss) for a track."""
        td = self._tracks.get(track_id)
        if td is None:
            if z is None:
                return None
            flt = ImmFilter(self.imm_cfg)
            st = flt.start(z, v0, t)
            td = _TrackDetector(flt, deque(maxlen=self.det_cfg.window))
            self._tracks[track_id] = td
        else:
            st = td.filter.step(z, t)
        td.ring.append((t, st.x_comb.copy(), st.mu_ca))
        event = None
        cfg = self.det_cfg
        if td.last_event_t is None or t - td.last_event_t >= cfg.refractory:
            event = threshold_decide(td.ring, cfg, track_id)
            if event is not None:
                td.last_event_t = t
        if self.record_features:
            self.features.append(FeatureRow(t, track_id, z, st.z, st.v, st.a, st.mu_ca,
                                            int(event is not None)))
        return event

    def step(self, outputs) -> list[FallEvent]:
        """Process one frame of tracker outputs; tracks no longer reported are dropped."""
        seen = set()
        events = []
        for out in outputs:
            seen.add(out.track_id)
            ev = self.update(out.track_id, out.t, out.z, out.velocity[2])
            if ev is not None:
                events.append(ev)
        for tid in list(self._tracks):
            if tid not in seen:
                del self._tracks[tid]
        return events


def detect_stream(measurements: Iterable[tuple[int, float, float | None]],
                  imm_cfg: ImmConfig | None = None,
                  det_cfg: DetectorConfig | None = None) -> list[FallEvent]:
    """Fall events from time-ordered ``(track_id, t, z)`` tuples.

    A track id that stops appearing keeps its filter; use
    :class:`StreamDetector` directly to model track deletion.
    """
    det = StreamDetector(imm_cfg, det_cfg)
    events = []
    for tid, t, z in measurements:
        ev = det.update(tid, t, z)
        if ev is not None:
            events.append(ev)
    return events


class FallDetector(BaseEstimator):
    """IMM feature extractor + threshold decider for a single vertical track.

    ``X`` is an ``(n, 2)`` array of ``(t, z)`` rows in time order.
    :meth:`transform` returns ``[z_hat, v_hat, a_hat, mu_ca]`` per row and
    :meth:`predict` a 0/1 fall flag per row. There is nothing to learn, so
    :meth:`fit` only validates parameters.
    """

    def __init__(self, t=0.05, transition=((0.95, 0.05), (0.10, 0.90)), q_cv=(1e-4, 1e-2, 0.0),
                 q_ca=(1e-4, 1e-2, 1.0), r=0.0025, u_fit_window=10, mu_init=(0.9, 0.1),
                 v_thre=-2.0, a_thre=-3.0, p_thre=0.5, window=20, refractory=2.0):
        self.t = t
        self.transition = transition
        self.q_cv = q_cv
        self.q_ca = q_ca
        self.r = r
        self.u_fit_window = u_fit_window
        self.mu_init = mu_init
        self.v_thre = v_thre
        self.a_thre = a_thre
        self.p_thre = p_thre
        self.window = window
        self.refractory = refractory

    def _configs(self) -> tuple[ImmConfig, DetectorConfig]:
        imm = ImmConfig(t=self.t, transition=_tup(self.transition), q_cv=_tup(self.q_cv),
                        q_ca=_tup(self.q_ca), r=self.r, u_fit_window=self.u_fit_window,
                        mu_init=tuple(self.mu_init), p_switch=self.p_thre)
        det = DetectorConfig(self.v_thre, self.a_thre, self.p_thre, self.window, self.refractory)
        return imm, det

    def fit(self, X=None, y=None):
        self._configs()
        self.fitted_ = True
        return self

    def _run(self, X):
        X = check_array(X)
        if X.shape[1] != 2:
            raise ValueError("X must have columns (t, z)")
        imm, det = self._configs()
        sd = StreamDetector(imm, det, record_features=True)
        for t, z in X:
            sd.update(0, float(t), float(z))
        return sd.features

    def transform(self, X):
        rows = self._run(X)
        return np.array([[r.z_hat, r.v_hat, r.a_hat, r.mu_ca] for r in rows])

    def predict(self, X):
        return np.array([r.decision for r in self._run(X)], dtype=int)

    def fit_transform(self, X, y=None):
        return self.fit(X).transform(X)


def _tup(x):
    arr = np.asarray(x, dtype=float)
    return tuple(map(tuple, arr)) if arr.ndim == 2 else tuple(arr)


__all__ = [
    "DetectorConfig", "FallEvent", "FeatureRow", "FEATURE_COLUMNS", "threshold_decide",
    "StreamDetector", "detect_stream", "FallDetector",
]
