"""Parameter update laws: direct, centralized, consensus, switching, delayed, composite.

Every law returns the time derivative of an estimate vector; integration is
the simulator's job.  All laws are linear in their error inputs and pure, so
per-robot updates may be evaluated concurrently from a frozen snapshot of the
team's estimates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _check_spd(name: str, mat: np.ndarray) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(mat, mat.T, atol=1e-10):
        raise ValueError(f"{name} must be symmetric")
    if np.any(np.linalg.eigvalsh(mat) <= 0.0):
        raise ValueError(f"{name} must be positive definite")
    return mat


@dataclass(frozen=True)
class AdaptationGains:
    """SPD gain matrices: p drives payload estimates, q_robot the arm's own,
    k_consensus the estimate coupling."""

    p: np.ndarray
    q_robot: np.ndarray | None = None
    k_consensus: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "p", _check_spd("p", self.p))
        if self.q_robot is not None:
            object.__setattr__(self, "q_robot", _check_spd("q_robot", self.q_robot))
        if self.k_consensus is not None:
            object.__setattr__(self, "k_consensus", _check_spd("k_consensus", self.k_consensus))

    @classmethod
    def diag(cls, p: float, dim: int = 4, k_consensus: float | None = None,
             q_robot: float | None = None, q_dim: int | None = None) -> "AdaptationGains":
        return cls(
            p=np.eye(dim) * float(p),
            k_consensus=None if k_consensus is None else np.eye(dim) * float(k_consensus),
            q_robot=None if q_robot is None else np.eye(q_dim or dim) * float(q_robot),
        )


@dataclass
class EstimateState:
    """Current estimates: one payload vector per robot, optional arm vectors."""

    a_hat: np.ndarray  # (n_robots, 4)
    b_hat: np.ndarray | None = None

    def __post_init__(self):
        self.a_hat = np.atleast_2d(np.asarray(self.a_hat, dtype=float))
        if not np.all(np.isfinite(self.a_hat)):
            raise ValueError("estimates must be finite")


def _check_pair(Y, s):
    Y = np.asarray(Y, dtype=float)
    s = np.asarray(s, dtype=float).reshape(-1)
    if Y.ndim != 2 or Y.shape[0] != s.shape[0]:
        raise ValueError(f"regressor {Y.shape} does not match error vector ({s.shape[0]},)")
    return Y, s


def direct_update(gains: AdaptationGains, Y, s) -> np.ndarray:
    """Tracking-error-driven update -P Y' s."""
    Y, s = _check_pair(Y, s)
    return -gains.p @ (Y.T @ s)


def centralized_update(gains: AdaptationGains, samples) -> np.ndarray:
    """Shared-estimate update -P sum_i Y_i' s_i over all robots' samples."""
    samples = list(samples)
    if not samples:
        raise ValueError("centralized update needs at least one (Y, s) sample")
    acc = None
    for Y, s in samples:
        Y, s = _check_pair(Y, s)
        acc = Y.T @ s if acc is None else acc + Y.T @ s
    return -gains.p @ acc


def consensus_coupling(k: np.ndarray, i: int, estimates: np.ndarray) -> np.ndarray:
    """All-to-all coupling (K/n) sum_j (a_hat_j - a_hat_i); equals K*(mean - a_hat_i)."""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    n = estimates.shape[0]
    return k @ (estimates.sum(axis=0) - n * estimates[i]) / n


def consensus_update(gains: AdaptationGains, i: int, Y, s, estimates) -> np.ndarray:
    """Decentralized update with all-to-all coupling through the estimate mean."""
    if gains.k_consensus is None:
        raise ValueError("consensus update needs k_consensus")
    Y, s = _check_pair(Y, s)
    coup = consensus_coupling(gains.k_consensus, i, estimates)
    return -gains.p @ (Y.T @ s - coup)


def switching_coupling(i: int, estimates: np.ndarray, active) -> np.ndarray:
    """Neighbour coupling sum_{j in N_i(t)} K_ij (a_hat_j - a_hat_i)."""
    estimates = np.atleast_2d(np.asarray(estimates, dtype=float))
    n = estimates.shape[0]
    coup = np.zeros(estimates.shape[1])
    for j, k_ij in active:
        if not (0 <= j < n):
            raise ValueError(f"neighbor id {j} out of range for {n} robots")
        coup += k_ij @ (estimates[j] - estimates[i])
    return coup


def switching_update(gains: AdaptationGains, i: int, Y, s, estimates, active) -> np.ndarray:
    """Update over the currently active neighbour set, per-edge SPD gains K_ij."""
    Y, s = _check_pair(Y, s)
    coup = switching_coupling(i, estimates, active)
    return -gains.p @ (Y.T @ s - coup)


def delayed_coupling(neighbors, channels) -> np.ndarray:
    """Wave-variable coupling sum_j G_ji tau_ji from the incoming channels."""
    acc = None
    for j in neighbors:
        if j not in channels:
            raise ValueError(f"missing channel for declared neighbor {j}")
        g_ji, tau_ji = channels[j]
        term = g_ji @ tau_ji
        acc = term if acc is None else acc + term
    if acc is None:
        return None
    return acc


def delayed_update(gains: AdaptationGains, i: int, Y, s, neighbors, channels) -> np.ndarray:
    """Update driven by delayed wave signals tau_ji scaled by the edge factors."""
    Y, s = _check_pair(Y, s)
    coup = delayed_coupling(neighbors, channels)
    if coup is None:
        coup = np.zeros(gains.p.shape[0])
    return -gains.p @ (Y.T @ s - coup)


def composite_update(gains: AdaptationGains, i: int, Y, s, W, e, coupling) -> np.ndarray:
    """Tracking plus filtered-modeling-error update with any network coupling term."""
    Y, s = _check_pair(Y, s)
    W = np.atleast_2d(np.asarray(W, dtype=float))
    e = np.atleast_1d(np.asarray(e, dtype=float))
    if W.shape[0] != e.shape[0]:
        raise ValueError(f"W rows {W.shape[0]} do not match e length {e.shape[0]}")
    coupling = np.zeros(gains.p.shape[0]) if coupling is None else np.asarray(coupling, dtype=float)
    return -gains.p @ (Y.T @ s + W.T @ e - coupling)


def robot_param_update(gains: AdaptationGains, Z, s) -> np.ndarray:
    """Arm-specific parameter update -Q Z' s."""
    if gains.q_robot is None:
        raise ValueError("robot_param_update needs q_robot gain")
    Z, s = _check_pair(Z, s)
    return -gains.q_robot @ (Z.T @ s)
