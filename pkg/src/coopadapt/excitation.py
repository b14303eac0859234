"""Excitation metrics and stability monitors.

Persistency of excitation is measured through sliding-window Gramians
(1/T) integral of Y'Y; a team's collective level uses the sum of the
members' window integrals, which can be positive definite even when every
individual window is singular.  Lyapunov values for each update-law regime
are computed with true-parameter knowledge, a privilege reserved to monitors
and tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GramianWindow:
    """Sliding trapezoid integral (1/T) int_{t-T}^t Y'Y dtau at a fixed step.

    Samples are pushed once per simulation step; before the window fills the
    integral covers the span seen so far.  The window slides monotonically.
    """

    def __init__(self, window_s: float, step_s: float, dim: int = 4):
        if window_s <= 0.0 or step_s <= 0.0:
            raise ValueError("window and step must be positive")
        self.window_s = float(window_s)
        self.step_s = float(step_s)
        self.dim = int(dim)
        self._maxlen = int(round(window_s / step_s)) + 1
        self._buf = np.zeros((self._maxlen, dim, dim))
        self._head = 0
        self._count = 0
        self._sum = np.zeros((dim, dim))

    def push(self, Y) -> None:
        """Append one regressor sample (the Gramian increment Y'Y is stored)."""
        Y = np.asarray(Y, dtype=float)
        G = Y.T @ Y
        if self._count == self._maxlen:
            self._sum -= self._buf[self._head]
        else:
            self._count += 1
        self._buf[self._head] = G
        self._sum += G
        self._head = (self._head + 1) % self._maxlen

    @property
    def n_samples(self) -> int:
        return self._count

    def _oldest_newest(self) -> tuple[np.ndarray, np.ndarray]:
        newest = self._buf[(self._head - 1) % self._maxlen]
        if self._count < self._maxlen:
            oldest = self._buf[0]
        else:
            oldest = self._buf[self._head]
        return oldest, newest

    def integral(self) -> np.ndarray:
        """Normalized window integral; symmetric positive semidefinite."""
        if self._count == 0:
            raise ValueError("window is empty")
        if self._count == 1:
            return self._buf[0].copy()
        oldest, newest = self._oldest_newest()
        span = (self._count - 1) * self.step_s
        raw = (self._sum - 0.5 * oldest - 0.5 * newest) * self.step_s
        out = raw / span
        return 0.5 * (out + out.T)


def pe_level(window: GramianWindow) -> float:
    """Smallest eigenvalue of the window integral (the excitation level)."""
    w = np.linalg.eigvalsh(window.integral())
    return float(max(w[0], 0.0)) if w[0] > -1e-12 else float(w[0])


def collective_pe_level(windows) -> float:
    """Smallest eigenvalue of the summed window integrals of a team."""
    windows = list(windows)
    if not windows:
        raise ValueError("need at least one window")
    total = sum(w.integral() for w in windows)
    return float(np.linalg.eigvalsh(total)[0])


def deficiency_directions(window: GramianWindow, tol: float = 1e-6) -> np.ndarray:
    """Orthonormal basis (columns) of the near-null space of the Gramian.

    Directions with eigenvalue below tol times the largest eigenvalue are the
    parameter combinations this window cannot identify.
    """
    M = window.integral()
    w, v = np.linalg.eigh(M)
    wmax = w[-1]
    if wmax <= 0.0:
        return np.eye(window.dim)
    return v[:, w < tol * wmax]


@dataclass(frozen=True)
class ConsensusError:
    """Synchronization diagnostics over a set of estimates."""

    xi: np.ndarray  # consecutive differences a_hat[i+1] - a_hat[i]
    xi_norm: float
    max_pairwise: float


def consensus_error(estimates) -> ConsensusError:
    """Stacked consecutive differences plus the max pairwise estimate distance."""
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    n = est.shape[0]
    xi = np.diff(est, axis=0)
    max_pair = 0.0
    for i in range(n):
        d = np.linalg.norm(est[i + 1 :] - est[i], axis=1)
        if d.size:
            max_pair = max(max_pair, float(d.max()))
    return ConsensusError(xi=xi, xi_norm=float(np.linalg.norm(xi)), max_pairwise=max_pair)


_REGIMES = ("direct", "centralized", "consensus", "switching", "delayed", "composite")


def lyapunov_value(
    regime: str,
    s_list,
    h_list,
    a_tilde_list,
    p_list,
    channel_energy: float = 0.0,
    b_tilde_list=(),
    q_list=(),
) -> float:
    """Regime-appropriate Lyapunov value.

    V = sum_i 0.5 s_i' H_i s_i + sum 0.5 a_tilde' P^-1 a_tilde
    plus 0.5 * channel energy for delayed runs and 0.5 b_tilde' Q^-1 b_tilde
    when arm parameters adapt.  Centralized runs pass a single shared
    a_tilde.  Requires the true parameters (monitor privilege).
    """
    if regime not in _REGIMES:
        raise ValueError(f"unknown regime {regime!r}")
    if regime != "delayed" and channel_energy != 0.0:
        raise ValueError("channel energy only applies to the delayed regime")
    v = 0.0
    for s, H in zip(s_list, h_list, strict=True):
        s = np.asarray(s, dtype=float)
        v += 0.5 * float(s @ np.asarray(H, dtype=float) @ s)
    for at, P in zip(a_tilde_list, p_list, strict=True):
        at = np.asarray(at, dtype=float)
        v += 0.5 * float(at @ np.linalg.solve(np.asarray(P, dtype=float), at))
    for bt, Q in zip(b_tilde_list, q_list, strict=True):
        bt = np.asarray(bt, dtype=float)
        v += 0.5 * float(bt @ np.linalg.solve(np.asarray(Q, dtype=float), bt))
    return v + 0.5 * float(channel_energy)


@dataclass
class LyapunovTrace:
    """Logged Lyapunov samples with numerically differenced rate."""

    regime: str
    t: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def append(self, t: float, v: float) -> None:
        if v < -1e-12:
            raise ValueError("Lyapunov value must be nonnegative")
        self.t.append(float(t))
        self.v.append(float(v))

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self.t), np.asarray(self.v)

    def vdot(self) -> np.ndarray:
        """Central-difference rate on the logged grid (one-sided at the ends)."""
        t, v = self.arrays()
        if t.size < 2:
            return np.zeros(t.size)
        return np.gradient(v, t)

    def step_increases(self) -> np.ndarray:
        """Positive parts of the per-sample increments."""
        _, v = self.arrays()
        return np.maximum(np.diff(v), 0.0)
