"""Sliding-variable bookkeeping and the certainty-equivalence tracking controller."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from coopadapt.dynamics import JointState, PlanarModel, regressor, rigid_body_terms


@dataclass(frozen=True)
class ReferenceSignal:
    """Desired position, velocity and acceleration at one instant."""

    qd: np.ndarray
    qd_dot: np.ndarray
    qd_ddot: np.ndarray

    def __post_init__(self):
        for name in ("qd", "qd_dot", "qd_ddot"):
            v = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if not (self.qd.shape == self.qd_dot.shape == self.qd_ddot.shape):
            raise ValueError("reference components must share one shape")


@dataclass(frozen=True)
class SlidingState:
    """Tracking error, sliding variable and the shifted reference rates.

    Satisfies s = q_tilde_dot + diag(lam) q_tilde by construction.
    """

    q_tilde: np.ndarray
    q_tilde_dot: np.ndarray
    s: np.ndarray
    qr_dot: np.ndarray
    qr_ddot: np.ndarray


@dataclass(frozen=True)
class ControllerGains:
    """Sliding-surface slope lam (positive diagonal, 1/s) and feedback K_D."""

    lam: np.ndarray
    kd: np.ndarray

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float))
        kd = np.asarray(self.kd, dtype=float)
        if np.any(lam <= 0.0):
            raise ValueError("lambda entries must be positive")
        if kd.ndim == 0:
            raise ValueError("kd must be a matrix (or use diag_gains)")
        if kd.shape[0] != kd.shape[1]:
            raise ValueError("kd must be square")
        if not np.allclose(kd, kd.T, atol=1e-12):
            raise ValueError("kd must be symmetric")
        if np.any(np.linalg.eigvalsh(kd) <= 0.0):
            raise ValueError("kd must be positive definite")
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "kd", kd)

    @classmethod
    def diag_gains(cls, lam: float, kd: float, n: int) -> "ControllerGains":
        return cls(lam=np.full(n, float(lam)), kd=np.eye(n) * float(kd))


def sliding_state(state: JointState, ref: ReferenceSignal, gains: ControllerGains) -> SlidingState:
    """Sliding variable s = q_tilde_dot + lam*q_tilde and reference rates.

    qr_dot = qd_dot - lam*q_tilde, qr_ddot = qd_ddot - lam*q_tilde_dot, and
    s = qd - qr_dot.
    """
    q = state.q
    if q.shape != ref.qd.shape:
        raise ValueError("state and reference dimensions differ")
    lam = gains.lam if gains.lam.shape == q.shape else np.full(q.shape, gains.lam[0])
    q_tilde = q - ref.qd
    q_tilde_dot = state.qd - ref.qd_dot
    qr_dot = ref.qd_dot - lam * q_tilde
    qr_ddot = ref.qd_ddot - lam * q_tilde_dot
    s = state.qd - qr_dot
    return SlidingState(q_tilde=q_tilde, q_tilde_dot=q_tilde_dot, s=s, qr_dot=qr_dot, qr_ddot=qr_ddot)


def control_torque(
    model: PlanarModel,
    a_hat: np.ndarray,
    sliding: SlidingState,
    state: JointState,
    gains: ControllerGains,
    b_hat: np.ndarray | None = None,
) -> np.ndarray:
    """Certainty-equivalence torque: model feedforward plus -K_D s feedback.

    The arm's own parameters are taken as known from the model unless b_hat
    supplies estimated link parameters; the payload always enters through the
    estimate a_hat via its regressor.
    """
    a_hat = np.asarray(a_hat, dtype=float).reshape(-1)
    if a_hat.shape[0] != 4:
        raise ValueError("a_hat must have 4 entries")
    if b_hat is None:
        H, C, g = rigid_body_terms(model.without_payload(), state.q, state.qd)
        known = H @ sliding.qr_ddot + C @ sliding.qr_dot + g
    else:
        b_hat = np.asarray(b_hat, dtype=float).reshape(-1)
        Z = regressor(model, state.q, state.qd, sliding.qr_dot, sliding.qr_ddot, range(model.n_links))
        if b_hat.shape[0] != Z.shape[1]:
            raise ValueError("b_hat length must be 4*n_links")
        known = Z @ b_hat
    Y = regressor(model, state.q, state.qd, sliding.qr_dot, sliding.qr_ddot, [model.payload_index])
    return known + Y @ a_hat - gains.kd @ sliding.s
