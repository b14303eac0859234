"""Filtered regressors for composite adaptation: torque and energy variants.

A fully discrete low-pass filter F = (1-gamma)/(1-gamma z^-1) is applied to
the joint torques (or to the mechanical power), and summation by parts trades
the unmeasurable acceleration for the generalized momentum H*qd scaled by
beta = (1-gamma)/(gamma*T).  The bracketed filter inputs are built column by
column from unit-parameter dynamics, so W stays exactly linear in the
parameters and e = W a_hat - F[measurement] equals W a_tilde up to the
backward-difference residual of the momentum term.

All filters use the constant-history convention: state starts as if the
first input had been applied forever, which avoids a startup impulse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from coopadapt.dynamics import PlanarModel, _kernel, _unit_param_rows


def filter_beta(gamma: float, step: float) -> float:
    """Momentum scaling beta = (1-gamma)/(gamma*T) of the discrete identity."""
    _check_gamma(gamma)
    if step <= 0.0:
        raise ValueError("sample step must be positive")
    return (1.0 - gamma) / (gamma * step)


def suppression_steps(gamma: float) -> int:
    """Samples to discard before trusting filtered errors (5 time constants)."""
    _check_gamma(gamma)
    return int(np.ceil(5.0 / (1.0 - gamma) - 1e-9))


def _check_gamma(gamma: float) -> None:
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must be in (0, 1)")


@dataclass
class LowPassState:
    """First-order discrete low pass y+ = gamma*y + (1-gamma)*x, DC gain 1."""

    gamma: float
    y: np.ndarray
    step: float

    def __post_init__(self):
        _check_gamma(self.gamma)
        self.y = np.asarray(self.y, dtype=float)


def lp_step(state: LowPassState, x) -> np.ndarray:
    """Advance the filter one sample and return the new output."""
    x = np.asarray(x, dtype=float)
    state.y = state.gamma * state.y + (1.0 - state.gamma) * x
    return state.y


def lp_filter_sequence(gamma: float, xs, initial=None) -> np.ndarray:
    """Filter a sample sequence along axis 0.

    With initial=None the constant-history convention is used (previous
    output equal to the first sample); otherwise `initial` is the assumed
    previous output.
    """
    _check_gamma(gamma)
    xs = np.asarray(xs, dtype=float)
    y_prev = xs[0] if initial is None else np.broadcast_to(np.asarray(initial, float), xs.shape[1:])
    zi = (gamma * y_prev)[None, ...]
    out, _ = lfilter([1.0 - gamma], [1.0, -gamma], xs, axis=0, zi=zi)
    return out


@dataclass(frozen=True)
class CompositeSample:
    """Filtered regressor W and modeling error e at one sample."""

    W: np.ndarray
    e: np.ndarray
    kind: str


def modeling_error(W, a_hat, filtered_measurement) -> np.ndarray:
    """Modeling error e = W a_hat - filtered measurement.

    Accepts a single sample (W 2-d) or a stacked history (W 3-d with the
    measurement stacked along axis 0).
    """
    W = np.asarray(W, dtype=float)
    a_hat = np.asarray(a_hat, dtype=float).reshape(-1)
    y = np.asarray(filtered_measurement, dtype=float)
    if W.shape[-1] != a_hat.shape[0]:
        raise ValueError(f"W columns {W.shape[-1]} do not match a_hat length {a_hat.shape[0]}")
    return W @ a_hat - y


class TorqueRegressorFilter:
    """Streaming filtered-torque regressor; one W block (n x cols) per sample.

    update() consumes the per-unit-parameter momentum columns rho_f = H_f qd,
    the transposed-Coriolis columns C_f' qd and gravity columns g_f, plus the
    applied torque, all sampled on the same fixed grid.
    """

    def __init__(self, gamma: float, step: float):
        self.gamma = gamma
        self.beta = filter_beta(gamma, step)
        self._yx: np.ndarray | None = None
        self._ym: np.ndarray | None = None

    def update(self, rho_cols, ct_qd_cols, g_cols, tau):
        x = self.beta * rho_cols + ct_qd_cols - g_cols
        tau = np.asarray(tau, dtype=float)
        if self._yx is None:
            self._yx = x.copy()
            self._ym = tau.copy()
        else:
            g = self.gamma
            self._yx = g * self._yx + (1.0 - g) * x
            self._ym = g * self._ym + (1.0 - g) * tau
        return self.beta * rho_cols - self._yx, self._ym.copy()


class EnergyRegressorFilter:
    """Streaming filtered-energy regressor; one W row per sample.

    update() consumes unit-parameter kinetic energies ke_f = 0.5 qd' H_f qd,
    unit gravity powers qd' g_f, and the measured mechanical power qd' tau.
    """

    def __init__(self, gamma: float, step: float):
        self.gamma = gamma
        self.beta = filter_beta(gamma, step)
        self._yx: np.ndarray | None = None
        self._ym: float | None = None

    def update(self, ke_cols, qd_g_cols, power: float):
        x = self.beta * ke_cols - qd_g_cols
        if self._yx is None:
            self._yx = np.array(x, dtype=float)
            self._ym = float(power)
        else:
            g = self.gamma
            self._yx = g * self._yx + (1.0 - g) * x
            self._ym = g * self._ym + (1.0 - g) * float(power)
        W_row = (self.beta * ke_cols - self._yx)[None, :]
        return W_row, self._ym


def _unit_ingredients(model: PlanarModel, q_hist, qd_hist, bodies, chunk: int = 4096):
    """Per-sample unit-parameter momentum/Coriolis/gravity columns over a history."""
    q_hist = np.atleast_2d(np.asarray(q_hist, dtype=float))
    qd_hist = np.atleast_2d(np.asarray(qd_hist, dtype=float))
    if q_hist.shape != qd_hist.shape:
        raise ValueError("q and qd histories must share one shape")
    if q_hist.shape[0] < 1:
        raise ValueError("history must contain at least one sample")
    A = _unit_param_rows(model, bodies)
    kern = _kernel(model)
    rho, ct_qd, g_cols, ke, qd_g = [], [], [], [], []
    for k0 in range(0, q_hist.shape[0], chunk):
        q = q_hist[k0 : k0 + chunk]
        qd = qd_hist[k0 : k0 + chunk]
        H, C, g = kern.terms(q, qd, A)
        r = np.einsum("tpij,tj->tpi", H, qd)
        rho.append(r)
        ct_qd.append(np.einsum("tpji,tj->tpi", C, qd))
        g_cols.append(g)
        ke.append(0.5 * np.einsum("tpi,ti->tp", r, qd))
        qd_g.append(np.einsum("tpi,ti->tp", g, qd))
    return (np.concatenate(rho), np.concatenate(ct_qd), np.concatenate(g_cols),
            np.concatenate(ke), np.concatenate(qd_g))


def filtered_torque_regressor(model: PlanarModel, q_hist, qd_hist, gamma: float,
                              step: float, bodies=None) -> np.ndarray:
    """Filtered-torque regressor over a uniformly sampled history.

    Returns W of shape (samples, n_joints, 4*len(bodies)); the selector
    defaults to the payload alone.  W a equals the low-pass filtered torque
    sequence up to the backward-difference residual of the momentum term.
    """
    beta = filter_beta(gamma, step)
    if bodies is None:
        bodies = [model.payload_index]
    rho, ct_qd, g_cols, _, _ = _unit_ingredients(model, q_hist, qd_hist, bodies)
    x = beta * rho + ct_qd - g_cols  # (T, P, n)
    filt = lp_filter_sequence(gamma, x)
    return np.swapaxes(beta * rho - filt, 1, 2)  # (T, n, P)


def filtered_energy_regressor(model: PlanarModel, q_hist, qd_hist, gamma: float,
                              step: float, bodies=None) -> np.ndarray:
    """Filtered-energy regressor over a history: shape (samples, 1, 4*len(bodies)).

    Scalar-valued rows; W a equals the low-pass filtered mechanical power up
    to the backward-difference residual of the kinetic-energy term.
    """
    beta = filter_beta(gamma, step)
    if bodies is None:
        bodies = [model.payload_index]
    _, _, _, ke, qd_g = _unit_ingredients(model, q_hist, qd_hist, bodies)
    x = beta * ke - qd_g  # (T, P)
    filt = lp_filter_sequence(gamma, x)
    return (beta * ke - filt)[:, None, :]


def surrogate_torque(model: PlanarModel, q_hist, qd_hist, step: float) -> np.ndarray:
    """Backward-difference torque (d(H qd)/dt by differences - C' qd + g).

    This is the exact sampled signal whose low-pass filtering the torque
    regressor reproduces; it matches the applied torque to O(step).
    """
    rho, ct_qd, g_cols, _, _ = _unit_ingredients(
        model, q_hist, qd_hist, range(model.n_links)
        if model.payload is None else list(range(model.n_links)) + [model.payload_index]
    )
    a_full = np.concatenate(
        [b.as_array() for b in model.body_params]
        + ([model.payload.as_array()] if model.payload is not None else [])
    )
    rho_t = np.einsum("tpi,p->ti", rho, a_full)
    rest = np.einsum("tpi,p->ti", ct_qd - g_cols, a_full)
    drho = np.empty_like(rho_t)
    drho[0] = 0.0
    drho[1:] = np.diff(rho_t, axis=0) / step
    return drho - rest


def surrogate_power(model: PlanarModel, q_hist, qd_hist, step: float) -> np.ndarray:
    """Backward-difference mechanical power (dKE/dt by differences + qd' g)."""
    bodies = (range(model.n_links) if model.payload is None
              else list(range(model.n_links)) + [model.payload_index])
    _, _, _, ke, qd_g = _unit_ingredients(model, q_hist, qd_hist, bodies)
    a_full = np.concatenate(
        [b.as_array() for b in model.body_params]
        + ([model.payload.as_array()] if model.payload is not None else [])
    )
    ke_t = ke @ a_full
    g_t = qd_g @ a_full
    dke = np.empty_like(ke_t)
    dke[0] = 0.0
    dke[1:] = np.diff(ke_t) / step
    return dke + g_t
