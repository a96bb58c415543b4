"""Two-model interacting multiple model filter on the vertical axis.

Model 0 is constant velocity (ADL), model 1 constant acceleration (FALL).
The state of each model is ``[z, v, a]``; only ``z`` is measured.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

MODELS = ("CV", "CA")
CV, CA = 0, 1
_LOG_2PI = math.log(2.0 * math.pi)


class DegenerateProbability(ArithmeticError):
    pass


class RankDeficient(ValueError):
    pass


def _as_matrix(value, shape, name) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.shape == (shape[0],) and len(shape) == 2:
        arr = np.diag(arr)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    return arr


@dataclass(frozen=True)
class ImmConfig:
    """Filter settings. ``transition[i, j]`` is P(model j now | model i before)."""

    t: float = 0.05
    transition: tuple = ((0.95, 0.05), (0.10, 0.90))
    q_cv: tuple = (1e-4, 1e-2, 0.0)
    q_ca: tuple = (1e-4, 1e-2, 1.0)
    r: float = 0.0025
    u_fit_window: int = 10
    mu_init: tuple = (0.9, 0.1)
    p_switch: float = 0.5

    def __post_init__(self):
        G = self.gamma_matrix
        if np.any(G < 0) or np.any(np.abs(G.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("transition matrix must be row-stochastic")
        mu = np.asarray(self.mu_init, dtype=float)
        if mu.shape != (2,) or np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-12:
            raise ValueError("mu_init must be a probability 2-vector")
        if self.t <= 0 or self.r <= 0:
            raise ValueError("t and r must be positive")
        for name in ("q_cv", "q_ca"):
            Q = _as_matrix(getattr(self, name), (3, 3), name)
            if np.any(np.linalg.eigvalsh(0.5 * (Q + Q.T)) < -1e-12):
                raise ValueError(f"{name} must be positive semi-definite")
        if self.u_fit_window and self.u_fit_window < 3:
            raise ValueError("u_fit_window must be 0 (disabled) or >= 3")

    @property
    def gamma_matrix(self) -> np.ndarray:
        G = np.asarray(self.transition, dtype=float)
        if G.shape != (2, 2):
            raise ValueError("transition matrix must be 2x2")
        return G

    def Q(self, model: int) -> np.ndarray:
        return _as_matrix(self.q_ca if model == CA else self.q_cv, (3, 3), "q")


def cv_matrix(T: float) -> np.ndarray:
    return np.array([[1.0, T, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])


def ca_matrix(T: float) -> np.ndarray:
    return np.array([[1.0, T, T * T / 2], [0.0, 1.0, T], [0.0, 0.0, 1.0]])


def transition_matrices(T: float) -> tuple[np.ndarray, np.ndarray]:
    return cv_matrix(T), ca_matrix(T)


@dataclass
class ImmState:
    x: np.ndarray
    P: np.ndarray
    mu: np.ndarray
    u: np.ndarray = field(default_factory=lambda: np.zeros(3))
    t: float | None = None
    x_comb: np.ndarray | None = None
    P_comb: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.array(self.x, dtype=float).reshape(2, 3)
        self.P = np.array(self.P, dtype=float).reshape(2, 3, 3)
        self.mu = np.array(self.mu, dtype=float)
        if self.x_comb is None:
            self.x_comb, self.P_comb = combine(self.x, self.P, self.mu)

    @classmethod
    def initial(cls, z: float, v: float = 0.0, cfg: ImmConfig | None = None,
                t: float | None = None, P0=(None, 1.0, 4.0)) -> "ImmState":
        cfg = cfg or ImmConfig()
        x = np.array([[z, v, 0.0], [z, v, 0.0]])
        p = np.diag([cfg.r if P0[0] is None else P0[0], P0[1], P0[2]])
        return cls(x, np.stack([p, p]), np.array(cfg.mu_init, dtype=float), t=t)

    @property
    def z(self) -> float:
        return float(self.x_comb[0])

    @property
    def v(self) -> float:
        return float(self.x_comb[1])

    @property
    def a(self) -> float:
        return float(self.x_comb[2])

    @property
    def mu_ca(self) -> float:
        return float(self.mu[CA])

    def copy(self) -> "ImmState":
        return ImmState(self.x.copy(), self.P.copy(), self.mu.copy(), self.u.copy(), self.t,
                        self.x_comb.copy(), self.P_comb.copy())


def combine(x: np.ndarray, P: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Moment-matched mixture of per-model Gaussians with weights ``w``."""
    xm = w @ x
    d = x - xm
    Pm = np.einsum("j,jab->ab", w, P) + np.einsum("j,ja,jb->ab", w, d, d)
    return xm, 0.5 * (Pm + Pm.T)


def imm_mix(state: ImmState, gamma, mu_init=None):
    """Input interaction: mixed priors per model and predicted model probabilities.

    Returns ``(x0, P0, c)``. When a model's predicted probability vanishes its
    prior is mixed with the current model probabilities instead.
    """
    G = np.asarray(gamma, dtype=float)
    mu = state.mu
    c = mu @ G
    if np.all(c < 1e-30):
        if mu_init is None:
            raise DegenerateProbability("all predicted model probabilities vanished")
        logger.warning("degenerate model probabilities, resetting to %s", mu_init)
        mu = np.asarray(mu_init, dtype=float)
        state.mu = mu.copy()
        c = mu @ G
    x0 = np.empty_like(state.x)
    P0 = np.empty_like(state.P)
    for j in range(len(c)):
        w = G[:, j] * mu / c[j] if c[j] > 1e-30 else mu.copy()
        w = w / w.sum()
        x0[j], P0[j] = combine(state.x, state.P, w)
    return x0, P0, c


def _scalar_update(x, P, y, r):
    S = P[0, 0] + r
    K = P[:, 0] / S
    innov = y - x[0]
    x = x + K * innov
    IKH = np.eye(3) - np.outer(K, [1.0, 0.0, 0.0])
    P = IKH @ P @ IKH.T + r * np.outer(K, K)
    loglik = -0.5 * (_LOG_2PI + math.log(S) + innov * innov / S)
    return x, 0.5 * (P + P.T), loglik


def imm_step(state: ImmState, y: float | None, cfg: ImmConfig, t: float | None = None,
             T: float | None = None) -> ImmState:
    """One IMM cycle: mix, model-matched filtering, probability update, output combination.

    ``y=None`` performs the prediction half only. A pending input ``u`` is
    added to the CA prediction and then cleared.
    """
    T = cfg.t if T is None else T
    x0, P0, c = imm_mix(state, cfg.gamma_matrix, cfg.mu_init)
    Fs = transition_matrices(T)
    x = np.empty_like(x0)
    P = np.empty_like(P0)
    logl = np.zeros(2)
    for j in range(2):
        xp = Fs[j] @ x0[j]
        if j == CA:
            xp = xp + state.u
        Pp = Fs[j] @ P0[j] @ Fs[j].T + cfg.Q(j)
        if y is None:
            x[j], P[j] = xp, 0.5 * (Pp + Pp.T)
        else:
            x[j], P[j], logl[j] = _scalar_update(xp, Pp, float(y), cfg.r)
    if y is None:
        mu = c / c.sum()
    else:
        with np.errstate(divide="ignore"):
            logw = logl + np.log(c)
        logw -= logw.max()
        w = np.exp(logw)
        mu = w / w.sum()
    x_comb, P_comb = combine(x, P, mu)
    return ImmState(x, P, mu, np.zeros(3), t, x_comb, P_comb)


def fit_quadratic(times, ys, t_now: float) -> np.ndarray:
    """Least-squares ``[z, v, a]`` at ``t_now`` from a quadratic fit of ``(times, ys)``."""
    tau = np.asarray(times, dtype=float) - t_now
    ys = np.asarray(ys, dtype=float)
    if len(np.unique(tau)) < 3:
        raise RankDeficient("need at least 3 distinct sample times")
    A = np.vander(tau, 3, increasing=True)
    coef, *_ = np.linalg.lstsq(A, ys, rcond=None)
    c0, c1, c2 = coef
    return np.array([c0, c1, 2.0 * c2])


def estimate_input_u(times, ys, t_now: float, x_ca, T: float) -> np.ndarray:
    """Input that moves the CA prediction onto the fitted kinematics at ``t_now``.

    ``x_ca`` is the CA posterior one step (``T``) before ``t_now``. Returns zeros
    when the window cannot support a quadratic fit.
    """
    try:
        target = fit_quadratic(times, ys, t_now)
    except RankDeficient:
        return np.zeros(3)
    return target - ca_matrix(T) @ np.asarray(x_ca, dtype=float)


class ImmFilter:
    """Stateful per-track wrapper: runs :func:`imm_step` and schedules the switch input."""

    def __init__(self, cfg: ImmConfig | None = None):
        self.cfg = cfg or ImmConfig()
        self.state: ImmState | None = None
        self._times: list[float] = []
        self._ys: list[float] = []

    def start(self, z: float, v: float = 0.0, t: float | None = None) -> ImmState:
        self.state = ImmState.initial(z, v, self.cfg, t)
        self._times, self._ys = [], []
        if t is not None:
            self._remember(t, z)
        return self.state

    def _remember(self, t, y):
        self._times.append(t)
        self._ys.append(y)
        n = max(self.cfg.u_fit_window, 1)
        if len(self._times) > n:
            del self._times[0], self._ys[0]

    def step(self, y: float | None, t: float | None = None) -> ImmState:
        cfg = self.cfg
        prev = self.state
        T = cfg.t
        if t is not None and prev.t is not None and t > prev.t:
            T = t - prev.t
        new = imm_step(prev, y, cfg, t=t, T=T)
        if y is not None and t is not None:
            self._remember(t, y)
        window = cfg.u_fit_window
        if (window and prev.mu[CA] < cfg.p_switch <= new.mu[CA]
                and len(self._times) >= window and t is not None):
            new.u = estimate_input_u(self._times, self._ys, t + cfg.t, new.x[CA], cfg.t)
        self.state = new
        return new


def cv_kalman_filter(ys, cfg: ImmConfig, z0: float | None = None, v0: float = 0.0,
                     P0=(None, 1.0)) -> np.ndarray:
    """Single constant-velocity Kalman filter over ``[z, v]``; returns filtered ``z``."""
    T = cfg.t
    F = np.array([[1.0, T], [0.0, 1.0]])
    Q = cfg.Q(CV)[:2, :2]
    ys = np.asarray(ys, dtype=float)
    x = np.array([ys[0] if z0 is None else z0, v0])
    P = np.diag([cfg.r if P0[0] is None else P0[0], P0[1]])
    out = np.empty(len(ys))
    for k, y in enumerate(ys):
        if k:
            x = F @ x
            P = F @ P @ F.T + Q
        S = P[0, 0] + cfg.r
        K = P[:, 0] / S
        x = x + K * (y - x[0])
        IKH = np.eye(2) - np.outer(K, [1.0, 0.0])
        P = IKH @ P @ IKH.T + cfg.r * np.outer(K, K)
        out[k] = x[0]
    return out


__all__ = [
    "ImmConfig", "ImmState", "ImmFilter", "imm_mix", "imm_step", "estimate_input_u",
    "fit_quadratic", "combine", "cv_matrix", "ca_matrix", "cv_kalman_filter",
    "DegenerateProbability", "RankDeficient", "MODELS", "CV", "CA",
]
