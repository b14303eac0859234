"""Planar serial-arm rigid-body dynamics, linear in barycentric inertial parameters.

Each body carries four parameters taken about its own link-frame origin: mass
``m``, first mass moment ``(hx, hy) = m * com`` and rotational inertia ``izz``
about the frame origin z-axis.  In these coordinates the mass matrix, the
Coriolis matrix (built from Christoffel symbols) and the gravity vector are
exactly linear in the parameters, so regressors can be assembled column by
column from unit-parameter evaluations with no approximation.

The low-level kernel is batched over a leading axis so the same code path
serves single queries, time histories and robot teams.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

PARAM_LABELS = ("m", "hx", "hy", "izz")


class SingularMassMatrixError(ValueError):
    """Raised when the mass matrix cannot be inverted."""


@dataclass(frozen=True)
class BodyParams:
    """Barycentric inertial parameters of one planar body.

    m is the mass (kg), (hx, hy) the first mass moment m*com (kg*m) in the
    body frame, and izz the rotational inertia (kg*m^2) about the body frame
    origin.  Any real values are storable; estimates routinely pass through
    nonphysical territory (negative mass included), so physical consistency
    is a separate predicate, not a constructor constraint.
    """

    m: float
    hx: float
    hy: float
    izz: float

    @classmethod
    def from_com(cls, m: float, com: tuple[float, float], izz_com: float) -> "BodyParams":
        """Build from mass, centre of mass and inertia about the COM."""
        cx, cy = com
        return cls(m=m, hx=m * cx, hy=m * cy, izz=izz_com + m * (cx * cx + cy * cy))

    @classmethod
    def from_array(cls, a) -> "BodyParams":
        a = np.asarray(a, dtype=float).reshape(4)
        return cls(m=float(a[0]), hx=float(a[1]), hy=float(a[2]), izz=float(a[3]))

    def as_array(self) -> np.ndarray:
        return np.array([self.m, self.hx, self.hy, self.izz], dtype=float)


def is_physical(params: BodyParams) -> bool:
    """Physical-consistency predicate: m > 0, izz > 0 and izz*m >= hx^2 + hy^2.

    The last condition is the parallel-axis requirement that the inertia
    about the COM stays nonnegative.
    """
    return (
        params.m > 0.0
        and params.izz > 0.0
        and params.izz * params.m >= params.hx**2 + params.hy**2
    )


def offset_param_map(offset) -> np.ndarray:
    """Linear map taking params about a frame at `offset` to the parent frame.

    Parallel-axis composition for a pure translation (dx, dy): m' = m,
    h' = m*d + h, izz' = izz + 2 d.h + m |d|^2.
    """
    dx, dy = float(offset[0]), float(offset[1])
    return np.array(
        [
            [1.0, 0.0, 0.0, 0.0],
            [dx, 1.0, 0.0, 0.0],
            [dy, 0.0, 1.0, 0.0],
            [dx * dx + dy * dy, 2.0 * dx, 2.0 * dy, 1.0],
        ]
    )


def compose_params(base: BodyParams, extra: BodyParams, offset=(0.0, 0.0)) -> BodyParams:
    """Rigidly merge `extra` (given about a translated frame) into `base`."""
    merged = base.as_array() + offset_param_map(offset) @ extra.as_array()
    return BodyParams.from_array(merged)


@dataclass(frozen=True)
class PlanarModel:
    """Serial chain of revolute planar links with an optional rigid payload.

    Link frame i sits at joint i; the next joint lies at distance
    link_lengths[i] along the link's x-axis.  joint_offsets are constant
    angles added to the joint variables.  The payload attaches rigidly to the
    terminal link frame at payload_offset (terminal-frame coordinates).
    Immutable after construction; safe to share between concurrent runs.
    """

    link_lengths: tuple[float, ...]
    joint_offsets: tuple[float, ...]
    body_params: tuple[BodyParams, ...]
    payload: BodyParams | None = None
    payload_offset: tuple[float, float] = (0.0, 0.0)
    gravity: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "link_lengths", tuple(float(l) for l in self.link_lengths))
        object.__setattr__(self, "joint_offsets", tuple(float(o) for o in self.joint_offsets))
        object.__setattr__(self, "body_params", tuple(self.body_params))
        object.__setattr__(self, "payload_offset", tuple(float(v) for v in self.payload_offset))
        object.__setattr__(self, "gravity", tuple(float(v) for v in self.gravity))
        if len(self.link_lengths) < 1:
            raise ValueError("model needs at least one link")
        if any(l <= 0.0 for l in self.link_lengths):
            raise ValueError("link lengths must be positive")
        if len(self.joint_offsets) != len(self.link_lengths):
            raise ValueError("joint_offsets length must match link count")
        if len(self.body_params) != len(self.link_lengths):
            raise ValueError("body_params length must match link count")
        if len(self.payload_offset) != 2 or len(self.gravity) != 2:
            raise ValueError("payload_offset and gravity must be 2-vectors")

    @property
    def n_links(self) -> int:
        return len(self.link_lengths)

    @property
    def payload_index(self) -> int:
        """Body index of the payload in regressor selectors."""
        if self.payload is None:
            raise ValueError("model has no payload")
        return self.n_links

    def with_payload(self, payload: BodyParams, offset=(0.0, 0.0)) -> "PlanarModel":
        return replace(self, payload=payload, payload_offset=tuple(offset))

    def without_payload(self) -> "PlanarModel":
        return replace(self, payload=None)

    def folded(self) -> "PlanarModel":
        """Equivalent payload-free model with the payload merged into the terminal link."""
        if self.payload is None:
            return self
        bodies = list(self.body_params)
        bodies[-1] = compose_params(bodies[-1], self.payload, self.payload_offset)
        return replace(self, body_params=tuple(bodies), payload=None)


@dataclass(frozen=True)
class JointState:
    """Joint positions and velocities."""

    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        qd = np.asarray(self.qd, dtype=float)
        if q.shape != qd.shape or q.ndim != 1:
            raise ValueError("q and qd must be matching 1-d arrays")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))):
            raise ValueError("joint state must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qd", qd)


def as_param_vector(x, n_bodies: int = 1) -> np.ndarray:
    """Validate a flat parameter vector of length 4*n_bodies."""
    a = np.asarray(x, dtype=float).reshape(-1)
    if a.shape[0] != 4 * n_bodies:
        raise ValueError(f"expected parameter vector of length {4 * n_bodies}, got {a.shape[0]}")
    return a


# ---------------------------------------------------------------------------
# batched kernel
# ---------------------------------------------------------------------------


class PlanarKernel:
    """Batched evaluator of the per-link basis tensors of one chain geometry.

    lengths/offsets may be (n,) for a single chain or (B, n) for a robot
    batch; q then carries the same leading batch axis.  All outputs keep the
    batch axis.  The basis tensors let H, dH/dq and g be assembled for any
    number of parameter sets with plain matrix products.
    """

    def __init__(self, lengths, offsets, gravity):
        lengths = np.atleast_2d(np.asarray(lengths, dtype=float))
        offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
        self.lengths = lengths  # (B, n)
        self.offsets = offsets
        self.gravity = np.atleast_2d(np.asarray(gravity, dtype=float))  # (B, 2)
        n = lengths.shape[1]
        self.n = n
        idx = np.arange(n)
        self._jmask = (idx[:, None] > idx[None, :]).astype(float)[:, :, None]  # (b, j, 1)
        self._mx = np.maximum(idx[:, None], idx[None, :])  # (m, j)
        self._dmask = (self._mx[None, :, :] < idx[:, None, None]).astype(float)[..., None]
        self._sig = (idx[None, :] <= idx[:, None]).astype(float)  # (b, j)

    def bases(self, q):
        """Return (BH, dBH, Bg) basis tensors for batch q of shape (B, n)."""
        n = self.n
        q = np.asarray(q, dtype=float)
        th = np.cumsum(q + self.offsets, axis=-1)  # (B, n)
        c = np.cos(th)
        s = np.sin(th)
        E = np.stack((c, s), axis=-1)  # (B, n, 2) unit vector along link
        N = np.stack((-s, c), axis=-1)  # left normal
        B = E.shape[0]
        lE = self.lengths[..., None] * E
        lN = self.lengths[..., None] * N
        cumN = np.concatenate((np.zeros((B, 1, 2)), np.cumsum(lN, axis=1)), axis=1)
        cumE = np.concatenate((np.zeros((B, 1, 2)), np.cumsum(lE, axis=1)), axis=1)
        # J[t, b, j] = d(origin of frame b)/dq_j
        J = (cumN[:, :n, None, :] - cumN[:, None, :n, :]) * self._jmask
        # dJ[t, b, m, j] = d^2(origin b)/dq_m dq_j
        dJ = -(cumE[:, :n, None, None, :] - cumE[:, self._mx][:, None]) * self._dmask

        sig = self._sig
        whx = np.einsum("tbjx,tbx->tbj", J, N)
        why = -np.einsum("tbjx,tbx->tbj", J, E)
        BH = np.empty((B, n, 4, n, n))
        BH[:, :, 0] = np.einsum("tbix,tbjx->tbij", J, J)
        BH[:, :, 1] = whx[..., :, None] * sig[:, None, :] + sig[:, :, None] * whx[..., None, :]
        BH[:, :, 2] = why[..., :, None] * sig[:, None, :] + sig[:, :, None] * why[..., None, :]
        BH[:, :, 3] = sig[:, :, None] * sig[:, None, :]

        # d/dq_k of the first-moment weights; dE/dq_k = N*sig, dN/dq_k = -E*sig
        dwhx = np.einsum("tbkix,tbx->tbki", dJ, N) + why[:, :, None, :] * sig[None, :, :, None]
        dwhy = -np.einsum("tbkix,tbx->tbki", dJ, E) - whx[:, :, None, :] * sig[None, :, :, None]
        dBH = np.zeros((B, n, 4, n, n, n))
        dBH[:, :, 0] = np.einsum("tbkix,tbjx->tbkij", dJ, J) + np.einsum(
            "tbkjx,tbix->tbkij", dJ, J
        )
        dBH[:, :, 1] = (
            dwhx[..., :, None] * sig[:, None, None, :] + sig[:, None, :, None] * dwhx[..., None, :]
        )
        dBH[:, :, 2] = (
            dwhy[..., :, None] * sig[:, None, None, :] + sig[:, None, :, None] * dwhy[..., None, :]
        )

        g2 = np.broadcast_to(self.gravity, (B, 2))
        Bg = np.zeros((B, n, 4, n))
        Bg[:, :, 0] = -np.einsum("tbjx,tx->tbj", J, g2)
        Bg[:, :, 1] = -np.einsum("tbx,tx->tb", N, g2)[..., None] * sig
        Bg[:, :, 2] = np.einsum("tbx,tx->tb", E, g2)[..., None] * sig
        return BH, dBH, Bg

    def terms(self, q, qd, A):
        """Assemble (H, C, g) batches for parameter rows A.

        A has shape (P, n, 4) shared across the batch or (B, P, n, 4); the
        result is H (B, P, n, n), C (B, P, n, n), g (B, P, n) where C uses
        Christoffel symbols of H contracted with qd.
        """
        n = self.n
        q = np.asarray(q, dtype=float)
        qd = np.asarray(qd, dtype=float)
        BH, dBH, Bg = self.bases(q)
        B = BH.shape[0]
        A = np.asarray(A, dtype=float)
        if A.ndim == 3:
            Af = np.broadcast_to(A.reshape(1, -1, n * 4), (B, A.shape[0], n * 4))
        else:
            Af = A.reshape(B, A.shape[1], n * 4)
        H = (Af @ BH.reshape(B, n * 4, n * n)).reshape(B, -1, n, n)
        dH = (Af @ dBH.reshape(B, n * 4, n * n * n)).reshape(B, -1, n, n, n)
        g = Af @ Bg.reshape(B, n * 4, n)
        C = christoffel_coriolis(dH, qd)
        return H, C, g


def christoffel_coriolis(dH, qd) -> np.ndarray:
    """Coriolis matrix from mass-matrix partials dH[..., k, i, j] = dH_ij/dq_k.

    C_ij = 0.5 * sum_k (dH_ij/dq_k + dH_ik/dq_j - dH_jk/dq_i) qd_k, which
    makes Hdot - 2C exactly skew-symmetric.
    """
    t1 = np.einsum("tpkij,tk->tpij", dH, qd)
    Y = np.einsum("tpabj,tj->tpab", dH, qd)
    return 0.5 * (t1 + np.swapaxes(Y, -1, -2) - Y)


def _effective_link_params(model: PlanarModel) -> np.ndarray:
    """Per-link parameter rows with the payload folded into the terminal link."""
    A = np.array([[b.m, b.hx, b.hy, b.izz] for b in model.body_params], dtype=float)
    if model.payload is not None:
        A[-1] += offset_param_map(model.payload_offset) @ model.payload.as_array()
    return A


def _unit_param_rows(model: PlanarModel, bodies) -> np.ndarray:
    """Unit-parameter rows (one per selected body and component) for regressors."""
    nb = model.n_links
    bodies = list(bodies)
    if not bodies:
        raise ValueError("body selector must not be empty")
    if len(set(bodies)) != len(bodies):
        raise ValueError("body selector contains duplicates")
    pay_map = offset_param_map(model.payload_offset)
    rows = np.zeros((4 * len(bodies), nb, 4))
    for k, b in enumerate(bodies):
        if b == nb:
            if model.payload is None:
                raise ValueError("payload selected but model has no payload")
            rows[4 * k : 4 * k + 4, nb - 1, :] = pay_map.T
        elif 0 <= b < nb:
            for f in range(4):
                rows[4 * k + f, b, f] = 1.0
        else:
            raise ValueError(f"body index {b} out of range")
    return rows


def _kernel(model: PlanarModel) -> PlanarKernel:
    return PlanarKernel(model.link_lengths, model.joint_offsets, model.gravity)


def _check_vec(name: str, x, n: int) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {v.shape}")
    return v


# ---------------------------------------------------------------------------
# public single-query operations
# ---------------------------------------------------------------------------


def rigid_body_terms(model: PlanarModel, q, qd) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Mass matrix, Coriolis matrix and gravity vector at one state."""
    n = model.n_links
    q = _check_vec("q", q, n)
    qd = _check_vec("qd", qd, n)
    A = _effective_link_params(model)[None, :, :]
    H, C, g = _kernel(model).terms(q[None, :], qd[None, :], A)
    return H[0, 0], C[0, 0], g[0, 0]


def mass_matrix(model: PlanarModel, q) -> np.ndarray:
    """Symmetric joint-space mass matrix H(q)."""
    n = model.n_links
    q = _check_vec("q", q, n)
    H, _, _ = rigid_body_terms(model, q, np.zeros(n))
    return H


def coriolis_matrix(model: PlanarModel, q, qd) -> np.ndarray:
    """Coriolis/centripetal matrix C(q, qd) from Christoffel symbols of H."""
    _, C, _ = rigid_body_terms(model, q, qd)
    return C


def gravity_vector(model: PlanarModel, q) -> np.ndarray:
    """Generalized gravity torque g(q) = dPE/dq."""
    n = model.n_links
    q = _check_vec("q", q, n)
    _, _, g = rigid_body_terms(model, q, np.zeros(n))
    return g


def potential_energy(model: PlanarModel, q) -> float:
    """Gravitational potential energy of the chain (payload included)."""
    n = model.n_links
    q = _check_vec("q", q, n)
    A = _effective_link_params(model)
    th = np.cumsum(q + np.asarray(model.joint_offsets))
    E = np.stack((np.cos(th), np.sin(th)), axis=-1)
    N = np.stack((-np.sin(th), np.cos(th)), axis=-1)
    origins = np.vstack((np.zeros(2), np.cumsum(np.asarray(model.link_lengths)[:, None] * E, axis=0)))[:-1]
    g2 = np.asarray(model.gravity)
    pe = 0.0
    for b in range(n):
        pe -= A[b, 0] * g2 @ origins[b] + A[b, 1] * g2 @ E[b] + A[b, 2] * g2 @ N[b]
    return float(pe)


def kinetic_energy(model: PlanarModel, q, qd) -> float:
    """Kinetic energy 0.5 * qd' H(q) qd."""
    H = mass_matrix(model, q)
    qd = _check_vec("qd", qd, model.n_links)
    return float(0.5 * qd @ H @ qd)


def inverse_dynamics(model: PlanarModel, q, qd, qdd) -> np.ndarray:
    """Joint torques H(q) qdd + C(q, qd) qd + g(q)."""
    n = model.n_links
    qdd = _check_vec("qdd", qdd, n)
    H, C, g = rigid_body_terms(model, q, qd)
    return H @ qdd + C @ np.asarray(qd, dtype=float) + g


def forward_dynamics(model: PlanarModel, q, qd, tau) -> np.ndarray:
    """Joint accelerations solving H qdd = tau - C qd - g."""
    n = model.n_links
    tau = _check_vec("tau", tau, n)
    H, C, g = rigid_body_terms(model, q, qd)
    rhs = tau - C @ np.asarray(qd, dtype=float) - g
    try:
        qdd = np.linalg.solve(H, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMassMatrixError(f"mass matrix is singular: {exc}") from None
    if not np.all(np.isfinite(qdd)):
        raise SingularMassMatrixError("mass matrix solve produced non-finite accelerations")
    return qdd


def regressor(model: PlanarModel, q, qd, qr_dot, qr_ddot, bodies) -> np.ndarray:
    """Regressor Y with Y a = H(a) qr_ddot + C(a, q, qd) qr_dot + g(a).

    One 4-column block per selected body, in selector order with component
    order (m, hx, hy, izz).  Links are indexed 0..n_links-1; the payload is
    model.payload_index.  Columns are exact unit-parameter evaluations of the
    dynamics, so linearity holds to round-off.
    """
    n = model.n_links
    q = _check_vec("q", q, n)
    qd = _check_vec("qd", qd, n)
    qr_dot = _check_vec("qr_dot", qr_dot, n)
    qr_ddot = _check_vec("qr_ddot", qr_ddot, n)
    A = _unit_param_rows(model, bodies)
    H, C, g = _kernel(model).terms(q[None, :], qd[None, :], A)
    cols = H[0] @ qr_ddot + C[0] @ qr_dot + g[0]  # (4*len(bodies), n)
    return cols.T


def payload_regressor(model: PlanarModel, q, qd, qr_dot, qr_ddot) -> np.ndarray:
    """Regressor block of the payload parameters alone (n x 4)."""
    return regressor(model, q, qd, qr_dot, qr_ddot, [model.payload_index])
