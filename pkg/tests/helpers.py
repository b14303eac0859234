"""Shared test fixtures/oracles kept independent of the library's code paths.

The Lagrangian and potential-energy oracles below use plain per-link forward
kinematics plus finite differences, so they share no code with the batched
basis-tensor kernel they are checking.
"""

from __future__ import annotations

import numpy as np

from coopadapt.dynamics import BodyParams, PlanarModel, PlanarKernel, _effective_link_params

REF_PAYLOAD = BodyParams(m=1.0, hx=0.1, hy=0.0, izz=0.05)


def make_ref_arm(payload: bool = True, gravity=(0.0, -9.81), link_lengths=(0.5, 0.4, 0.3),
                 masses=(2.0, 1.4, 0.8)) -> PlanarModel:
    """Three-link arm used across the tests; slender-rod links."""
    bodies = tuple(
        BodyParams.from_com(m, (l / 2.0, 0.0), m * l * l / 12.0)
        for m, l in zip(masses, link_lengths)
    )
    model = PlanarModel(
        link_lengths=link_lengths,
        joint_offsets=(0.0,) * len(link_lengths),
        body_params=bodies,
        gravity=gravity,
    )
    if payload:
        model = model.with_payload(REF_PAYLOAD, offset=(link_lengths[-1], 0.0))
    return model


def random_model(rng, n: int | None = None, payload: bool = True, gravity: bool = True,
                 physical: bool = True) -> PlanarModel:
    n = int(n if n is not None else rng.integers(1, 4))
    lengths = rng.uniform(0.3, 0.8, n)
    offsets = rng.uniform(-0.4, 0.4, n)
    bodies = []
    for i in range(n):
        if physical:
            m = rng.uniform(0.5, 2.5)
            com = (rng.uniform(0.1, 0.9) * lengths[i], rng.uniform(-0.1, 0.1))
            bodies.append(BodyParams.from_com(m, com, rng.uniform(0.02, 0.2)))
        else:
            bodies.append(BodyParams(*rng.uniform(-1.0, 1.0, 4)))
    g = (rng.uniform(-3, 3), rng.uniform(-12, -3)) if gravity else (0.0, 0.0)
    model = PlanarModel(tuple(lengths), tuple(offsets), tuple(bodies), gravity=g)
    if payload:
        pl = BodyParams.from_com(
            rng.uniform(0.3, 1.5), (rng.uniform(-0.15, 0.2), rng.uniform(-0.1, 0.1)),
            rng.uniform(0.01, 0.1),
        )
        model = model.with_payload(pl, offset=(lengths[-1] * rng.uniform(0.5, 1.0), rng.uniform(-0.1, 0.1)))
    return model


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------


def fk_points(model: PlanarModel, q):
    """World positions of link COMs, payload COM and link angles (plain loop FK)."""
    th = 0.0
    o = np.zeros(2)
    coms, thetas, masses, izz_coms = [], [], [], []

    def com_of(b: BodyParams):
        return np.array([b.hx / b.m, b.hy / b.m]) if b.m != 0 else np.zeros(2)

    for i in range(model.n_links):
        th = th + q[i] + model.joint_offsets[i]
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        b = model.body_params[i]
        coms.append(o + R @ com_of(b))
        thetas.append(th)
        masses.append(b.m)
        izz_coms.append(b.izz - (b.hx**2 + b.hy**2) / b.m if b.m else b.izz)
        if i == model.n_links - 1 and model.payload is not None:
            p = model.payload
            attach = o + R @ np.array(model.payload_offset)
            coms.append(attach + R @ com_of(p))
            thetas.append(th)
            masses.append(p.m)
            izz_coms.append(p.izz - (p.hx**2 + p.hy**2) / p.m if p.m else p.izz)
        o = o + R @ np.array([model.link_lengths[i], 0.0])
    return np.array(coms), np.array(thetas), np.array(masses), np.array(izz_coms)


def kinetic_energy_oracle(model: PlanarModel, q, qd, eps: float = 1e-7) -> float:
    """KE from COM velocities via finite-difference Jacobians of the loop FK."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    n = model.n_links
    coms0, _, masses, izz_coms = fk_points(model, q)
    nb = coms0.shape[0]
    J = np.zeros((nb, 2, n))
    for j in range(n):
        dq = np.zeros(n)
        dq[j] = eps
        cp, _, _, _ = fk_points(model, q + dq)
        cm, _, _, _ = fk_points(model, q - dq)
        J[:, :, j] = (cp - cm) / (2 * eps)
    ke = 0.0
    body_link = list(range(n)) + ([n - 1] if model.payload is not None else [])
    for b in range(nb):
        v = J[b] @ qd
        w = np.sum(qd[: body_link[b] + 1])
        ke += 0.5 * masses[b] * v @ v + 0.5 * izz_coms[b] * w * w
    return float(ke)


def mass_matrix_oracle(model: PlanarModel, q) -> np.ndarray:
    """H by polarization of the KE oracle (KE is exactly quadratic in qd)."""
    n = model.n_links
    H = np.zeros((n, n))
    basis = np.eye(n)
    for i in range(n):
        H[i, i] = 2.0 * kinetic_energy_oracle(model, q, basis[i])
    for i in range(n):
        for j in range(i + 1, n):
            ke = kinetic_energy_oracle(model, q, basis[i] + basis[j])
            H[i, j] = H[j, i] = ke - 0.5 * H[i, i] - 0.5 * H[j, j]
    return H


def potential_energy_oracle(model: PlanarModel, q) -> float:
    coms, _, masses, _ = fk_points(model, q)
    g = np.asarray(model.gravity)
    return float(-np.sum(masses[:, None] * coms @ g))


def mass_matrix_rate_fd(model: PlanarModel, q, qd, delta: float = 1e-6) -> np.ndarray:
    """Hdot by central differences along the velocity direction."""
    from coopadapt.dynamics import mass_matrix

    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    return (mass_matrix(model, q + delta * qd) - mass_matrix(model, q - delta * qd)) / (2 * delta)


def batch_rigid_terms(model: PlanarModel, Q, QD):
    """Vectorized (H, C, g) over a state history via the batched kernel."""
    A = _effective_link_params(model)[None]  # one parameter row: the true model
    kern = PlanarKernel(model.link_lengths, model.joint_offsets, model.gravity)
    H, C, g = kern.terms(np.atleast_2d(Q), np.atleast_2d(QD), A)
    return H[:, 0], C[:, 0], g[:, 0]


def batch_inverse_dynamics(model: PlanarModel, Q, QD, QDD) -> np.ndarray:
    H, C, g = batch_rigid_terms(model, Q, QD)
    QD = np.atleast_2d(QD)
    QDD = np.atleast_2d(QDD)
    return (
        np.einsum("tij,tj->ti", H, QDD) + np.einsum("tij,tj->ti", C, QD) + g
    )
