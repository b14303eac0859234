"""Reference trajectory generators with analytic derivatives.

Joint-space trajectories are sinusoid sums per joint.  Task-space modes pin
either the tip orientation (translation_only) or the tip position
(rotation_only) of a 3-link planar arm and are resolved to joint space by a
closed-form inverse-kinematics preprocessor; velocities and accelerations
come from the exact task Jacobian, never from numerical differentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from coopadapt.control import ReferenceSignal
from coopadapt.dynamics import PlanarModel


class TrajectoryError(ValueError):
    """Unreachable or singular reference path."""


@dataclass(frozen=True)
class SinusoidTerm:
    amplitude_rad: float
    frequency_hz: float
    phase_rad: float = 0.0


@dataclass(frozen=True)
class JointSinusoidSpec:
    """Per-joint sinusoid sums around constant offsets."""

    joints: tuple[tuple[SinusoidTerm, ...], ...]
    offsets_rad: tuple[float, ...]

    def __post_init__(self):
        if len(self.joints) != len(self.offsets_rad):
            raise ValueError("joints and offsets_rad lengths differ")


@dataclass(frozen=True)
class TranslationOnlySpec:
    """Tip traces a two-sine Lissajous path at constant tip orientation.

    The payload frame never rotates, so rotational-inertia excitation is
    structurally absent from this robot's motion.
    """

    center_m: tuple[float, float]
    amplitude_m: tuple[float, float]
    frequency_hz: tuple[float, float]
    phase_rad: tuple[float, float] = (0.0, np.pi / 2)
    orientation_rad: float = 0.0
    elbow: str = "up"


@dataclass(frozen=True)
class RotationOnlySpec:
    """Tip pinned at a fixed point while the tip orientation oscillates.

    The payload frame origin never accelerates and gravity-free runs then
    carry no payload-mass excitation.
    """

    point_m: tuple[float, float]
    orientation_offset_rad: float
    terms: tuple[SinusoidTerm, ...]
    elbow: str = "up"


def _sinusoid_arrays(joints, offsets, ts):
    ts = np.asarray(ts, dtype=float)
    n = len(joints)
    Q = np.tile(np.asarray(offsets, dtype=float), (ts.shape[0], 1))
    QD = np.zeros((ts.shape[0], n))
    QDD = np.zeros((ts.shape[0], n))
    for j, terms in enumerate(joints):
        for term in terms:
            w = 2.0 * np.pi * term.frequency_hz
            arg = w * ts + term.phase_rad
            Q[:, j] += term.amplitude_rad * np.sin(arg)
            QD[:, j] += term.amplitude_rad * w * np.cos(arg)
            QDD[:, j] -= term.amplitude_rad * w * w * np.sin(arg)
    return Q, QD, QDD


def tip_pose(model: PlanarModel, q) -> tuple[np.ndarray, float]:
    """Forward kinematics of the tip: position of the terminal link's far end
    and the terminal link orientation."""
    q = np.asarray(q, dtype=float)
    th = np.cumsum(q + np.asarray(model.joint_offsets))
    lengths = np.asarray(model.link_lengths)
    p = np.array([np.sum(lengths * np.cos(th)), np.sum(lengths * np.sin(th))])
    return p, float(th[-1])


class JointTrajectory:
    """Sampled joint sinusoids; analytic derivatives."""

    def __init__(self, spec: JointSinusoidSpec):
        self.spec = spec
        self.n = len(spec.joints)

    def sample(self, ts):
        return _sinusoid_arrays(self.spec.joints, self.spec.offsets_rad, ts)


class TaskSpaceTrajectory:
    """Closed-form 3R inverse kinematics of a task-space pose path.

    Joint rates solve J qdot = xdot with the analytic task Jacobian
    (tip position rows plus the orientation row of ones), accelerations use
    the analytic Jacobian rate, so the sampled references are exact.
    """

    def __init__(self, spec, lengths, joint_offsets):
        if len(lengths) != 3:
            raise TrajectoryError("task-space modes require a 3-link arm")
        self.spec = spec
        self.l = np.asarray(lengths, dtype=float)
        self.offsets = np.asarray(joint_offsets, dtype=float)
        self.elbow = 1.0 if spec.elbow == "up" else -1.0
        self.n = 3

    def _task_path(self, ts):
        ts = np.asarray(ts, dtype=float)
        spec = self.spec
        if isinstance(spec, TranslationOnlySpec):
            ax, ay = spec.amplitude_m
            wx, wy = 2.0 * np.pi * np.asarray(spec.frequency_hz, dtype=float)
            px, py = spec.phase_rad
            p = np.stack(
                (spec.center_m[0] + ax * np.sin(wx * ts + px),
                 spec.center_m[1] + ay * np.sin(wy * ts + py)), axis=1)
            pd = np.stack((ax * wx * np.cos(wx * ts + px), ay * wy * np.cos(wy * ts + py)), axis=1)
            pdd = np.stack((-ax * wx**2 * np.sin(wx * ts + px), -ay * wy**2 * np.sin(wy * ts + py)), axis=1)
            phi = np.full_like(ts, spec.orientation_rad)
            phid = np.zeros_like(ts)
            phidd = np.zeros_like(ts)
        else:
            p = np.tile(np.asarray(spec.point_m, dtype=float), (ts.shape[0], 1))
            pd = np.zeros_like(p)
            pdd = np.zeros_like(p)
            phi = np.full_like(ts, spec.orientation_offset_rad)
            phid = np.zeros_like(ts)
            phidd = np.zeros_like(ts)
            for term in spec.terms:
                w = 2.0 * np.pi * term.frequency_hz
                arg = w * ts + term.phase_rad
                phi += term.amplitude_rad * np.sin(arg)
                phid += term.amplitude_rad * w * np.cos(arg)
                phidd -= term.amplitude_rad * w * w * np.sin(arg)
        return p, pd, pdd, phi, phid, phidd

    def sample(self, ts):
        ts = np.asarray(ts, dtype=float)
        l1, l2, l3 = self.l
        p, pd, pdd, phi, phid, phidd = self._task_path(ts)
        w = p - l3 * np.stack((np.cos(phi), np.sin(phi)), axis=1)
        r2 = np.einsum("ti,ti->t", w, w)
        D = (r2 - l1**2 - l2**2) / (2.0 * l1 * l2)
        if np.any(np.abs(D) > 1.0 - 1e-9):
            raise TrajectoryError("task-space path leaves the dexterous workspace")
        alpha = self.elbow * np.arccos(D)
        th1 = np.arctan2(w[:, 1], w[:, 0]) - np.arctan2(l2 * np.sin(alpha), l1 + l2 * np.cos(alpha))
        th1 = np.unwrap(th1) if ts.shape[0] > 1 else th1
        th = np.stack((th1, th1 + alpha, phi), axis=1)
        Q = np.empty_like(th)
        Q[:, 0] = th[:, 0]
        Q[:, 1:] = np.diff(th, axis=1)
        Q -= self.offsets
        if ts.shape[0] > 1:
            dq = np.abs(np.diff(Q, axis=0)).max(axis=1)
            dt = np.maximum(np.diff(ts), 1e-12)
            if np.any((dq > 0.5) & (dq / dt > 50.0)):
                raise TrajectoryError("inverse kinematics branch jump along the path")

        # task Jacobian: tip rows + orientation row of ones
        c = np.cos(th)
        s = np.sin(th)
        lx = self.l[None, :] * (-s)  # d tip / d theta_k, x-part
        ly = self.l[None, :] * c
        J = np.empty((ts.shape[0], 3, 3))
        # d tip / d q_j = sum_{k >= j} l_k * normal_k
        for j in range(3):
            J[:, 0, j] = np.sum(lx[:, j:], axis=1)
            J[:, 1, j] = np.sum(ly[:, j:], axis=1)
        J[:, 2, :] = 1.0
        det = np.linalg.det(J)
        if np.any(np.abs(det) < 1e-8):
            raise TrajectoryError("task Jacobian is singular along the path")
        xd = np.concatenate((pd, phid[:, None]), axis=1)
        xdd = np.concatenate((pdd, phidd[:, None]), axis=1)
        QD = np.linalg.solve(J, xd[:, :, None])[:, :, 0]
        thd = np.cumsum(QD, axis=1)
        # Jdot tip rows: sum_{k>=j} l_k * (-e_k) * thetadot_k
        Jdot = np.zeros_like(J)
        gx = self.l[None, :] * (-c) * thd
        gy = self.l[None, :] * (-s) * thd
        for j in range(3):
            Jdot[:, 0, j] = np.sum(gx[:, j:], axis=1)
            Jdot[:, 1, j] = np.sum(gy[:, j:], axis=1)
        QDD = np.linalg.solve(J, (xdd - np.einsum("tij,tj->ti", Jdot, QD))[:, :, None])[:, :, 0]
        return Q, QD, QDD


def resolve_trajectory(spec, model: PlanarModel):
    """Bind a trajectory spec to an arm, returning a sampleable trajectory."""
    if isinstance(spec, JointSinusoidSpec):
        if len(spec.joints) != model.n_links:
            raise TrajectoryError("joint count of trajectory and arm differ")
        return JointTrajectory(spec)
    if isinstance(spec, (TranslationOnlySpec, RotationOnlySpec)):
        return TaskSpaceTrajectory(spec, model.link_lengths, model.joint_offsets)
    raise TypeError(f"unknown trajectory spec {type(spec).__name__}")


def reference(trajectory, t: float) -> ReferenceSignal:
    """Reference signal at one instant."""
    Q, QD, QDD = trajectory.sample(np.array([float(t)]))
    return ReferenceSignal(qd=Q[0], qd_dot=QD[0], qd_ddot=QDD[0])
