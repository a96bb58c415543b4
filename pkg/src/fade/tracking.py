"""Multi-user centroid tracker.

Trajectories are born by inter-frame direct starting, promoted or dropped by
M-of-N logic, fed by chi-square gated nearest-neighbour association and
smoothed by a 3-D constant-velocity Kalman filter.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.stats import chi2

logger = logging.getLogger(__name__)

MEAS_DIM = 3
_H = np.hstack([np.eye(3), np.zeros((3, 3))])


class TrackStatus(str, Enum):
    TEST = "test"
    CONFIRMED = "confirmed"


class MNDecision(str, Enum):
    PROMOTE = "promote"
    KEEP = "keep"
    DELETE = "delete"


def gate_threshold(probability: float, dim: int = MEAS_DIM) -> float:
    """Chi-square quantile used as the elliptic gate size."""
    return float(chi2.ppf(probability, dim))


@dataclass(frozen=True)
class TrackerConfig:
    v_min: float = 0.1
    v_max: float = 4.0
    t_s: float = 0.05
    m_confirm: int = 3
    n_window: int = 4
    m_delete: int = 1
    delete_window: int = 10
    gate_probability: float = 0.99
    gamma: float | None = None
    process_noise: float = 10.0
    measurement_noise: float = 0.0025

    def __post_init__(self):
        if not 0 <= self.v_min < self.v_max:
            raise ValueError("need 0 <= v_min < v_max")
        if self.t_s <= 0:
            raise ValueError("t_s must be positive")
        if not 1 <= self.m_confirm <= self.n_window:
            raise ValueError("need 1 <= m_confirm <= n_window")
        if not 1 <= self.m_delete <= self.delete_window:
            raise ValueError("need 1 <= m_delete <= delete_window")
        if not 0 < self.gate_probability < 1:
            raise ValueError("gate_probability must lie in (0, 1)")
        if self.gamma is None:
            object.__setattr__(self, "gamma", gate_threshold(self.gate_probability))
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.process_noise < 0 or self.measurement_noise <= 0:
            raise ValueError("noise settings must be non-negative (measurement > 0)")


@dataclass
class Track:
    id: int
    x: np.ndarray
    P: np.ndarray
    birth_t: float
    last_update_t: float
    status: TrackStatus = TrackStatus.TEST
    history: list = field(default_factory=list)
    last_centroid: np.ndarray | None = None
    z_hat: np.ndarray | None = None
    S: np.ndarray | None = None
    measurement: np.ndarray | None = None

    @property
    def position(self) -> np.ndarray:
        return self.x[:3]

    @property
    def confirmed(self) -> bool:
        return self.status is TrackStatus.CONFIRMED


@dataclass(frozen=True)
class TrackOutput:
    """Per-frame report for one confirmed track."""

    track_id: int
    t: float
    position: np.ndarray
    z: float | None
    newly_confirmed: bool = False
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))


def cv_transition(dt: float) -> np.ndarray:
    F = np.eye(6)
    F[0, 3] = F[1, 4] = F[2, 5] = dt
    return F


def cv_process_noise(dt: float, q: float) -> np.ndarray:
    """Continuous white-acceleration noise of intensity ``q`` on each axis."""
    Q = np.zeros((6, 6))
    for a in range(3):
        Q[a, a] = dt ** 3 / 3
        Q[a, a + 3] = Q[a + 3, a] = dt ** 2 / 2
        Q[a + 3, a + 3] = dt
    return q * Q


def new_track(track_id: int, prev: np.ndarray, cur: np.ndarray, t: float,
              cfg: TrackerConfig, dt: float | None = None) -> Track:
    """Test track seeded from a two-frame centroid pair."""
    dt = cfg.t_s if dt is None else dt
    cur = np.asarray(cur, dtype=float)
    x = np.concatenate([cur, (cur - np.asarray(prev, dtype=float)) / dt])
    r = cfg.measurement_noise
    P = np.diag([r] * 3 + [2 * r / dt ** 2] * 3)
    P[0, 3] = P[1, 4] = P[2, 5] = P[3, 0] = P[4, 1] = P[5, 2] = r / dt
    return Track(track_id, x, P, birth_t=t - dt, last_update_t=t,
                 history=[True, True], last_centroid=cur.copy())


def kf_predict(track: Track, t_s: float, cfg: TrackerConfig) -> tuple[np.ndarray, np.ndarray]:
    """Advance the track to the next frame; return predicted position and innovation covariance."""
    F = cv_transition(t_s)
    track.x = F @ track.x
    P = F @ track.P @ F.T + cv_process_noise(t_s, cfg.process_noise)
    track.P = 0.5 * (P + P.T)
    track.z_hat = track.x[:3].copy()
    track.S = track.P[:3, :3] + cfg.measurement_noise * np.eye(3)
    track.measurement = None
    return track.z_hat, track.S


def normalized_distances(z_hat: np.ndarray, S: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Squared Mahalanobis distance of each candidate from ``z_hat``."""
    v = np.asarray(candidates, dtype=float).reshape(-1, 3) - z_hat
    sol = np.linalg.solve(S, v.T)
    return np.einsum("ij,ji->i", v, sol)


class Gate:
    """Nearest-neighbour gating; counts singular innovation covariances."""

    def __init__(self, gamma: float):
        self.gamma = gamma
        self.singular = 0

    def __call__(self, z_hat, S, centroids, available=None) -> int | None:
        centroids = np.asarray(centroids, dtype=float).reshape(-1, 3)
        if len(centroids) == 0:
            return None
        try:
            d = normalized_distances(z_hat, S, centroids)
        except np.linalg.LinAlgError:
            self.singular += 1
            return None
        ok = d <= self.gamma
        if available is not None:
            ok &= available
        if not ok.any():
            return None
        d = np.where(ok, d, np.inf)
        return int(np.argmin(d))


def gate_and_associate(z_hat, S, centroids, gamma: float, available=None) -> int | None:
    """Index of the in-gate centroid with smallest normalized distance, else None."""
    return Gate(gamma)(z_hat, S, centroids, available)


def kf_update(track: Track, z, cfg: TrackerConfig) -> Track:
    z = np.asarray(z, dtype=float)
    R = cfg.measurement_noise * np.eye(3)
    S = track.P[:3, :3] + R
    K = np.linalg.solve(S, track.P[:3, :]).T
    track.x = track.x + K @ (z - track.x[:3])
    IKH = np.eye(6) - K @ _H
    P = IKH @ track.P @ IKH.T + K @ R @ K.T
    track.P = 0.5 * (P + P.T)
    track.last_centroid = track.x[:3].copy()
    track.measurement = z
    return track


def mn_decide(history, status: TrackStatus, cfg: TrackerConfig) -> MNDecision:
    """M-of-N verdict for a hit/miss history (oldest first, includes the birth pair)."""
    if status is TrackStatus.TEST:
        if len(history) < cfg.n_window:
            return MNDecision.KEEP
        hits = sum(bool(h) for h in history[:cfg.n_window])
        return MNDecision.PROMOTE if hits >= cfg.m_confirm else MNDecision.DELETE
    recent = history[-cfg.delete_window:]
    if len(recent) < cfg.delete_window:
        return MNDecision.KEEP
    hits = sum(bool(h) for h in recent)
    return MNDecision.DELETE if hits < cfg.m_delete else MNDecision.KEEP


def mn_update(track: Track, associated: bool, cfg: TrackerConfig) -> MNDecision:
    track.history.append(bool(associated))
    keep = max(cfg.n_window, cfg.delete_window)
    if len(track.history) > keep and track.confirmed:
        del track.history[:-keep]
    decision = mn_decide(track.history, track.status, cfg)
    if decision is MNDecision.PROMOTE:
        track.status = TrackStatus.CONFIRMED
    return decision


def direct_start(prev, cur, cfg: TrackerConfig, claimed=None, dt: float | None = None):
    """Greedy pairing of previous/current centroids under the speed constraint.

    Returns ``(i_prev, j_cur)`` index pairs, shortest distance first. Current
    centroids flagged in ``claimed`` are skipped.
    """
    prev = np.asarray(prev, dtype=float).reshape(-1, 3)
    cur = np.asarray(cur, dtype=float).reshape(-1, 3)
    if len(prev) == 0 or len(cur) == 0:
        return []
    dt = cfg.t_s if dt is None else dt
    D = np.linalg.norm(cur[None, :, :] - prev[:, None, :], axis=2)
    lo, hi = cfg.v_min * dt, cfg.v_max * dt
    ok = (D >= lo) & (D <= hi)
    if claimed is not None:
        ok &= ~np.asarray(claimed, dtype=bool)[None, :]
    ii, jj = np.nonzero(ok)
    order = np.lexsort((jj, ii, D[ii, jj]))
    used_p, used_c, pairs = set(), set(), []
    for k in order:
        i, j = int(ii[k]), int(jj[k])
        if i in used_p or j in used_c:
            continue
        used_p.add(i)
        used_c.add(j)
        pairs.append((i, j))
    return pairs


class Tracker:
    """Frame-by-frame track manager. Feed centroids in time order via :meth:`step`."""

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        self.tracks: list[Track] = []
        self.gate = Gate(self.cfg.gamma)
        self._next_id = 1
        self._prev: np.ndarray = np.empty((0, 3))
        self._last_t: float | None = None
        self.deleted: list[int] = []

    @property
    def confirmed(self) -> list[Track]:
        return [tr for tr in self.tracks if tr.confirmed]

    def _dt(self, t: float) -> float:
        if self._last_t is None:
            return self.cfg.t_s
        dt = t - self._last_t
        return dt if dt > 0 else self.cfg.t_s

    def step(self, centroids, t: float) -> list[TrackOutput]:
        cfg = self.cfg
        cen = np.asarray(centroids, dtype=float).reshape(-1, 3)
        dt = self._dt(t)
        self._last_t = t
        self.deleted = []
        if not self.tracks and len(cen) == 0:
            self._prev = cen
            return []

        for tr in self.tracks:
            kf_predict(tr, dt, cfg)

        available = np.ones(len(cen), dtype=bool)
        hit: dict[int, int] = {}
        ordered = sorted(self.tracks, key=lambda tr: (not tr.confirmed, tr.id))
        for tr in ordered:
            if not available.any():
                break
            j = self.gate(tr.z_hat, tr.S, cen, available)
            if j is not None:
                hit[tr.id] = j
                available[j] = False

        out: list[TrackOutput] = []
        survivors = []
        for tr in self.tracks:
            j = hit.get(tr.id)
            if j is not None:
                kf_update(tr, cen[j], cfg)
                tr.last_update_t = t
            was_confirmed = tr.confirmed
            decision = mn_update(tr, j is not None, cfg)
            if decision is MNDecision.DELETE:
                self.deleted.append(tr.id)
                continue
            survivors.append(tr)
            if tr.confirmed:
                z = float(cen[j, 2]) if j is not None else None
                out.append(TrackOutput(tr.id, t, tr.x[:3].copy(), z,
                                       not was_confirmed, tr.x[3:].copy()))
        self.tracks = survivors

        leftover = cen[available]
        born = np.zeros(len(leftover), dtype=bool)
        for i, j in direct_start(self._prev, leftover, cfg, dt=dt):
            self.tracks.append(new_track(self._next_id, self._prev[i], leftover[j], t, cfg, dt))
            self._next_id += 1
            born[j] = True
        self._prev = leftover[~born]
        return out

    def reset(self) -> None:
        self.__init__(self.cfg)


__all__ = [
    "TrackerConfig", "Track", "TrackStatus", "TrackOutput", "MNDecision", "Tracker", "Gate",
    "gate_threshold", "direct_start", "kf_predict", "kf_update", "gate_and_associate",
    "normalized_distances", "mn_decide", "mn_update", "new_track", "cv_transition",
    "cv_process_noise",
]
