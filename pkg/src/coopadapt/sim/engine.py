"""Deterministic fixed-step integration of the coupled robot/estimate system.

Classical RK4 advances the continuous states (joints, velocities, parameter
estimates).  Everything sampled -- delay-line outputs, the active edge set,
filtered-regressor errors -- is computed once at the step's start from a
frozen snapshot of the team and held constant across the RK4 stages, so
per-robot updates see synchronous estimates and FIFO delays stay exact.
Identical inputs produce bit-identical logs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from coopadapt.dynamics import PARAM_LABELS, _effective_link_params, _unit_param_rows
from coopadapt.excitation import GramianWindow, consensus_error
from coopadapt.network import DelayLine
from coopadapt.sim._core import team_eval
from coopadapt.sim.scenario import Scenario, ScenarioError, validate_scenario
from coopadapt.sim.trajectories import resolve_trajectory


class SimulationDiverged(RuntimeError):
    pass


@dataclass
class TimeSeries:
    """Uniformly sampled run log (decimated to the configured rate)."""

    t: np.ndarray
    q: np.ndarray  # (L, R, n)
    qd: np.ndarray
    s: np.ndarray
    tau: np.ndarray
    a_hat: np.ndarray  # (L, R, 4)
    v: np.ndarray
    vdot_formula: np.ndarray
    vdot_direct: np.ndarray
    pe_robot: np.ndarray  # (L, R)
    pe_collective: np.ndarray
    consensus_max: np.ndarray
    energy: np.ndarray
    b_hat: np.ndarray | None = None

    @property
    def n_robots(self) -> int:
        return self.q.shape[1]

    @property
    def n_joints(self) -> int:
        return self.q.shape[2]

    def column_names(self) -> list[str]:
        R, n = self.n_robots, self.n_joints
        cols = ["t"]
        for r in range(R):
            cols += [f"r{r}_q{j}" for j in range(n)]
            cols += [f"r{r}_qd{j}" for j in range(n)]
            cols += [f"r{r}_s{j}" for j in range(n)]
            cols += [f"r{r}_ahat_{lbl}" for lbl in PARAM_LABELS]
        cols += ["V", "pe_collective", "consensus_max"]
        for r in range(R):
            cols += [f"r{r}_tau{j}" for j in range(n)]
        cols += [f"r{r}_pe_level" for r in range(R)]
        cols += ["energy", "vdot_formula", "vdot_direct"]
        if self.b_hat is not None:
            for r in range(R):
                cols += [f"r{r}_bhat{j}" for j in range(self.b_hat.shape[2])]
        return cols

    def stacked(self) -> np.ndarray:
        R = self.n_robots
        L = self.t.shape[0]
        parts = [self.t[:, None]]
        for r in range(R):
            parts += [self.q[:, r], self.qd[:, r], self.s[:, r], self.a_hat[:, r]]
        parts += [self.v[:, None], self.pe_collective[:, None], self.consensus_max[:, None]]
        for r in range(R):
            parts.append(self.tau[:, r])
        parts.append(self.pe_robot)
        parts += [self.energy[:, None], self.vdot_formula[:, None], self.vdot_direct[:, None]]
        if self.b_hat is not None:
            for r in range(R):
                parts.append(self.b_hat[:, r])
        return np.concatenate(parts, axis=1).reshape(L, -1)

    def to_csv(self, path) -> None:
        cols = self.column_names()
        data = self.stacked()
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(",".join(cols) + "\n")
            for row in data:
                fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def read_csv_columns(cls, path) -> dict[str, np.ndarray]:
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip().split(",")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return {name: data[:, k] for k, name in enumerate(header)}


@dataclass
class RunResult:
    scenario: Scenario
    timeseries: TimeSeries
    summary: dict
    diverged: bool
    v_full: np.ndarray
    vdot_formula_full: np.ndarray
    vdot_direct_full: np.ndarray


class _Channel:
    """One directed delayed channel with exact running energy bookkeeping.

    Transmits estimate waves; the stored channel energy tracks the error
    waves G' a_tilde (the quantity the delay-augmented Lyapunov function
    integrates), whose disagreement signals tau are identical because the
    true parameters are constant.
    """

    def __init__(self, steps: int, v0: np.ndarray, e0_sq: float, h: float):
        self.line = DelayLine(steps, v0)
        self.h = h
        self.steps = steps
        self._ering = np.full(max(steps, 1), e0_sq)
        self._eptr = 0
        self._esum = steps * e0_sq
        self._last_in = e0_sq
        self._last_out = e0_sq

    def exchange(self, v: np.ndarray, e_sq: float) -> np.ndarray:
        if self.steps == 0:
            return v.copy()
        u = self.line.push_pop(v)
        out = float(self._ering[self._eptr])
        self._ering[self._eptr] = e_sq
        self._eptr = (self._eptr + 1) % self.steps
        self._esum += e_sq - out
        self._last_in = e_sq
        self._last_out = out
        return u

    def energy(self) -> float:
        # trapezoid of |error wave|^2 over the in-flight window [t-T, t]
        if self.steps == 0:
            return 0.0
        return self.h * (self._esum + 0.5 * self._last_out - 0.5 * self._last_in)


class Simulation:
    """Prepared, mutable run state for one scenario."""

    def __init__(self, scenario: Scenario):
        issues = validate_scenario(scenario)
        if issues:
            raise ScenarioError("; ".join(issues))
        self.sc = scenario
        sc = scenario
        R = sc.n_robots
        n = sc.robots[0].model.n_links
        self.R, self.n = R, n
        self.h = sc.step_s
        self.N = sc.n_steps
        self.closed_loop = sc.regime != "open_loop"
        self.centralized = sc.regime == "centralized"
        self.adapt_b = sc.robot_adaptation_gain is not None

        self.lengths = np.array([r.model.link_lengths for r in sc.robots], dtype=float)
        self.offsets = np.array([r.model.joint_offsets for r in sc.robots], dtype=float)
        self.gx, self.gy = sc.robots[0].model.gravity

        # parameter rows: 0 plant, 1 known links, 2..5 payload units, 6.. link units
        P = 6 + (4 * n if self.adapt_b else 0)
        self.P = P
        A = np.zeros((R, P, n, 4))
        for r, rob in enumerate(sc.robots):
            A[r, 0] = _effective_link_params(rob.model)
            A[r, 1] = _effective_link_params(rob.model.without_payload())
            if rob.model.payload is not None:
                A[r, 2:6] = _unit_param_rows(rob.model, [rob.model.payload_index])
            if self.adapt_b:
                A[r, 6:] = _unit_param_rows(rob.model, range(n))
        self.A = A

        # reference samples on the half-step grid shared by the RK4 stages
        ts_half = np.arange(2 * self.N + 1) * (0.5 * self.h)
        self.refq = np.empty((ts_half.shape[0], R, n))
        self.refqd = np.empty_like(self.refq)
        self.refqdd = np.empty_like(self.refq)
        for r, rob in enumerate(sc.robots):
            traj = resolve_trajectory(rob.trajectory, rob.model)
            Q, QD, QDD = traj.sample(ts_half)
            self.refq[:, r] = Q
            self.refqd[:, r] = QD
            self.refqdd[:, r] = QDD

        self.lam = np.full(n, sc.lambda_per_s)
        self.kd_diag = np.full(n, sc.kd_nms_per_rad)
        pg = sc.adaptation_gain
        self.pdiag = np.array(pg if isinstance(pg, tuple) else (pg,) * 4, dtype=float)
        self.qgain = sc.robot_adaptation_gain or 0.0
        self.kg = sc.k_gain
        self.a_true = (sc.robots[0].model.payload.as_array()
                       if sc.robots[0].model.payload is not None else np.zeros(4))
        self.b_true = np.array(
            [np.concatenate([b.as_array() for b in rob.model.body_params]) for rob in sc.robots]
        )

        # flat state: [Q, QD, AH, (BH)]
        self.sz_ah = 4 if self.centralized else 4 * R
        self.sz_bh = 4 * n * R if self.adapt_b else 0
        self.D = 2 * R * n + self.sz_ah + self.sz_bh
        self.x = np.zeros(self.D)
        Q0 = np.array([
            rob.q0_rad if rob.q0_rad is not None else self.refq[0, r]
            for r, rob in enumerate(sc.robots)
        ], dtype=float)
        QD0 = np.array([
            rob.qd0_rad if rob.qd0_rad is not None else self.refqd[0, r]
            for r, rob in enumerate(sc.robots)
        ], dtype=float)
        q_v, qd_v, ah_v, bh_v = self._views(self.x)
        q_v[:] = Q0
        qd_v[:] = QD0
        ah_v.reshape(-1, 4)[:] = np.asarray(sc.a_hat0)
        if self.adapt_b:
            bh_v[:] = self.b_true
        self.t = 0.0
        self.k = 0

        # network
        self.edges = [tuple(e) for e in sc.edges]
        self.g_scalar = np.sqrt(self.kg) if self.kg > 0 else 0.0
        self.channels: dict[tuple[int, int], _Channel] = {}
        if sc.regime == "delayed":
            steps = int(round(sc.delay_s / self.h))
            ah0 = np.asarray(sc.a_hat0, dtype=float)
            a_true0 = (sc.robots[0].model.payload.as_array()
                       if sc.robots[0].model.payload is not None else np.zeros(4))
            e0 = self.kg * float((ah0 - a_true0) @ (ah0 - a_true0))
            for (i, j) in self.edges:
                v0 = self.g_scalar * ah0
                self.channels[(i, j)] = _Channel(steps, v0, e0, self.h)  # i -> j
                self.channels[(j, i)] = _Channel(steps, v0, e0, self.h)

        # composite filters (payload columns only), constant-history init
        self.comp_torque = sc.composite_kind in ("torque", "both")
        self.comp_energy = sc.composite_kind in ("energy", "both")
        if self.comp_torque or self.comp_energy:
            self.beta = (1.0 - sc.composite_gamma) / (sc.composite_gamma * self.h)
            self.supp = int(np.ceil(5.0 / (1.0 - sc.composite_gamma) - 1e-9))
        self._zt = None
        self._zm = None
        self._ze = None
        self._zme = None

        self.windows = [GramianWindow(sc.pe_window_s, self.h, dim=4) for _ in range(R)]

        # core output buffers: one persistent set for samples, one for stages
        def bufset():
            return dict(
                qdd=np.empty((R, n)), s=np.empty((R, n)), cols=np.zeros((R, P, n)),
                tau=np.empty((R, n)), h0=np.empty((R, n, n)), mom=np.empty((R, P, n)),
                ctqd=np.empty((R, P, n)), g=np.empty((R, P, n)), ke=np.empty((R, P)),
                pe=np.empty(R),
            )

        self._sb = bufset()
        self._tb = bufset()
        self._wff = np.zeros((R, P))
        self._dx = [np.empty(self.D) for _ in range(4)]
        self._xtmp = np.empty(self.D)

    # -- state access ------------------------------------------------------

    def _views(self, x):
        R, n = self.R, self.n
        q = x[: R * n].reshape(R, n)
        qd = x[R * n : 2 * R * n].reshape(R, n)
        ah = x[2 * R * n : 2 * R * n + self.sz_ah]
        bh = x[2 * R * n + self.sz_ah :].reshape(R, -1) if self.adapt_b else None
        return q, qd, ah, bh

    @property
    def state(self):
        q, qd, ah, bh = self._views(self.x)
        return {
            "q": q.copy(), "qd": qd.copy(),
            "a_hat": self._ah2d(ah).copy(),
            "b_hat": None if bh is None else bh.copy(),
            "t": self.t,
        }

    def _ah2d(self, ah):
        if self.centralized:
            return np.broadcast_to(ah, (self.R, 4))
        return ah.reshape(self.R, 4)

    # -- core wrapper ------------------------------------------------------

    def _eval(self, x, half_idx, bufs, want_extras):
        q, qd, ah, bh = self._views(x)
        ah2 = self._ah2d(ah)
        wff = self._wff
        if self.closed_loop:
            wff[:, 1] = 0.0 if self.adapt_b else 1.0
            wff[:, 2:6] = ah2
            if self.adapt_b:
                wff[:, 6:] = bh
        rc = team_eval(
            self.lengths, self.offsets, self.gx, self.gy, self.A, wff,
            q, qd,
            self.refq[half_idx], self.refqd[half_idx], self.refqdd[half_idx],
            self.lam, self.kd_diag, self.closed_loop, want_extras,
            bufs["qdd"], bufs["s"], bufs["cols"], bufs["tau"], bufs["h0"],
            bufs["mom"], bufs["ctqd"], bufs["g"], bufs["ke"], bufs["pe"],
        )
        if rc != 0:
            raise SimulationDiverged(f"singular mass matrix for robot {rc - 1} at t={self.t:.6f}")
        return q, qd, ah, bh

    def _assemble_dx(self, x, bufs, coup, wte, dx):
        R, n = self.R, self.n
        q, qd, ah, bh = self._views(x)
        dx[: R * n] = qd.reshape(-1)
        dx[R * n : 2 * R * n] = bufs["qdd"].reshape(-1)
        off = 2 * R * n
        if not self.closed_loop:
            dx[off:] = 0.0
            return
        yts = np.einsum("rfi,ri->rf", bufs["cols"][:, 2:6, :], bufs["s"])
        if self.centralized:
            dx[off : off + 4] = -self.pdiag * yts.sum(axis=0)
        else:
            drive = yts
            if wte is not None:
                drive = drive + wte
            if coup is not None:
                drive = drive - coup
            dx[off : off + self.sz_ah] = (-self.pdiag * drive).reshape(-1)
        if self.adapt_b:
            zts = np.einsum("rfi,ri->rf", bufs["cols"][:, 6:, :], bufs["s"])
            dx[off + self.sz_ah :] = (-self.qgain * zts).reshape(-1)

    # -- per-step sampled quantities ----------------------------------------

    def _coupling(self, ah2d, t):
        """Frozen network coupling at the step start; also the V-rate pieces."""
        sc = self.sc
        if sc.regime in ("open_loop", "direct", "centralized") or (sc.regime == "consensus" and self.kg == 0.0):
            return None, 0.0, 0.0
        R = self.R
        coup = np.zeros((R, 4))
        quad = 0.0
        tau_sq = 0.0
        if sc.regime == "consensus":
            mean = ah2d.mean(axis=0)
            coup[:] = self.kg * (mean - ah2d)
            for i in range(R):
                for j in range(i + 1, R):
                    d = ah2d[i] - ah2d[j]
                    quad += (self.kg / R) * float(d @ d)
        elif sc.regime == "switching":
            for (i, j) in sc.schedule.active_edges(t):
                d = ah2d[j] - ah2d[i]
                coup[i] += self.kg * d
                coup[j] -= self.kg * d
                quad += self.kg * float(d @ d)
        elif sc.regime == "delayed":
            gs = self.g_scalar
            for (i, j) in self.edges:
                v_ij = gs * ah2d[i]
                v_ji = gs * ah2d[j]
                ei_sq = self.kg * float((ah2d[i] - self.a_true) @ (ah2d[i] - self.a_true))
                ej_sq = self.kg * float((ah2d[j] - self.a_true) @ (ah2d[j] - self.a_true))
                u_ij = self.channels[(i, j)].exchange(v_ij, ei_sq)  # arrives at j
                u_ji = self.channels[(j, i)].exchange(v_ji, ej_sq)  # arrives at i
                tau_ji = u_ji - v_ij
                tau_ij = u_ij - v_ji
                coup[i] += gs * tau_ji
                coup[j] += gs * tau_ij
                tau_sq += float(tau_ji @ tau_ji) + float(tau_ij @ tau_ij)
        return coup, quad, tau_sq

    def _composite(self, k, ah2d, bufs):
        """Filtered-regressor errors from the step-start sample; frozen per step.

        Only the payload columns of W are formed; the arms' own (known)
        parameters enter through the measurement side, so the modeling error
        is W a_tilde for the payload alone.
        """
        if not (self.comp_torque or self.comp_energy):
            return None, 0.0
        mom = bufs["mom"][:, 1:6, :]  # row 0 of slice: known links; rows 1..4: payload units
        ctqd = bufs["ctqd"][:, 1:6, :]
        gg = bufs["g"][:, 1:6, :]
        ke = bufs["ke"][:, 1:6]
        _, qd, _, _ = self._views(self.x)
        wte = np.zeros((self.R, 4))
        esq = 0.0
        gme = self.sc.composite_gamma
        if self.comp_torque:
            xin = self.beta * mom + ctqd - gg
            if self._zt is None:
                self._zt = xin.copy()
                self._zm = bufs["tau"].copy()
            else:
                self._zt = gme * self._zt + (1.0 - gme) * xin
                self._zm = gme * self._zm + (1.0 - gme) * bufs["tau"]
            Wall = self.beta * mom - self._zt  # (R, 5, n)
            W = Wall[:, 1:, :]
            if k >= self.supp:
                e = np.einsum("rfi,rf->ri", W, ah2d) + Wall[:, 0, :] - self._zm
                wte += np.einsum("rfi,ri->rf", W, e)
                esq += float(np.sum(e * e))
        if self.comp_energy:
            qdg = np.einsum("rfi,ri->rf", gg, qd)
            xin_e = self.beta * ke - qdg
            power = np.einsum("ri,ri->r", qd, bufs["tau"])
            if self._ze is None:
                self._ze = xin_e.copy()
                self._zme = power.copy()
            else:
                self._ze = gme * self._ze + (1.0 - gme) * xin_e
                self._zme = gme * self._zme + (1.0 - gme) * power
            Wall_e = self.beta * ke - self._ze  # (R, 5)
            We = Wall_e[:, 1:]
            if k >= self.supp:
                ee = np.einsum("rf,rf->r", We, ah2d) + Wall_e[:, 0] - self._zme
                wte += We * ee[:, None]
                esq += float(ee @ ee)
        return (wte if self.sc.composite_inject else None), esq

    def _lyapunov(self, bufs, ah2d, bh):
        q, qd, _, _ = self._views(self.x)
        s = bufs["s"]
        v = 0.0
        for r in range(self.R):
            v += 0.5 * float(s[r] @ bufs["h0"][r] @ s[r])
        if self.closed_loop:
            if self.centralized:
                at = ah2d[0] - self.a_true
                v += 0.5 * float(at @ (at / self.pdiag))
            else:
                at = ah2d - self.a_true
                v += 0.5 * float(np.sum(at * at / self.pdiag))
            if self.adapt_b:
                bt = bh - self.b_true
                v += 0.5 * float(np.sum(bt * bt)) / self.qgain
            for ch in self.channels.values():
                v += 0.5 * ch.energy()
        return v

    # -- main loop -----------------------------------------------------------

    def run(self) -> RunResult:
        sc = self.sc
        t0 = time.perf_counter()
        N = self.N
        decim = sc.log_decimation
        L = N // decim + 1
        R, n = self.R, self.n
        ts = TimeSeries(
            t=np.zeros(L), q=np.zeros((L, R, n)), qd=np.zeros((L, R, n)),
            s=np.zeros((L, R, n)), tau=np.zeros((L, R, n)), a_hat=np.zeros((L, R, 4)),
            v=np.zeros(L), vdot_formula=np.zeros(L), vdot_direct=np.zeros(L),
            pe_robot=np.zeros((L, R)), pe_collective=np.zeros(L),
            consensus_max=np.zeros(L), energy=np.zeros(L),
            b_hat=np.zeros((L, R, 4 * n)) if self.adapt_b else None,
        )
        v_full = np.zeros(N + 1)
        vdf_full = np.zeros(N + 1)
        vdd_full = np.zeros(N + 1)
        diverged = False
        reason = ""
        row = 0
        k = 0
        try:
            for k in range(N + 1):
                q, qd, ah, bh = self._eval(self.x, 2 * k, self._sb, True)
                ah2d = self._ah2d(ah)
                coup, quad, tau_sq = self._coupling(ah2d, self.t)
                wte, esq = self._composite(k, ah2d, self._sb)
                if self.closed_loop:
                    for r in range(R):
                        self.windows[r].push(self._sb["cols"][r, 2:6, :].T)
                v_now = self._lyapunov(self._sb, ah2d, bh)
                vd_direct = -float(np.sum(self.kd_diag * self._sb["s"] ** 2)) - quad - 0.5 * tau_sq
                vd_formula = vd_direct - (esq if (wte is not None) else 0.0)
                v_full[k] = v_now
                vdf_full[k] = vd_formula
                vdd_full[k] = vd_direct
                if k % decim == 0:
                    if not np.all(np.isfinite(self.x)) or np.abs(self.x).max() > 1e6:
                        raise SimulationDiverged(f"state diverged at t={self.t:.6f}")
                    ts.t[row] = self.t
                    ts.q[row] = q
                    ts.qd[row] = qd
                    ts.s[row] = self._sb["s"]
                    ts.tau[row] = self._sb["tau"]
                    ts.a_hat[row] = ah2d
                    if self.adapt_b:
                        ts.b_hat[row] = bh
                    ts.v[row] = v_now
                    ts.vdot_formula[row] = vd_formula
                    ts.vdot_direct[row] = vd_direct
                    if self.closed_loop:
                        for r in range(R):
                            w = np.linalg.eigvalsh(self.windows[r].integral())
                            ts.pe_robot[row, r] = max(w[0], 0.0)
                        total = sum(wn.integral() for wn in self.windows)
                        ts.pe_collective[row] = max(np.linalg.eigvalsh(total)[0], 0.0)
                        ts.consensus_max[row] = consensus_error(ah2d).max_pairwise
                    kin = 0.0
                    for r in range(R):
                        kin += 0.5 * float(qd[r] @ self._sb["h0"][r] @ qd[r])
                    ts.energy[row] = kin + float(self._sb["pe"].sum())
                    row += 1
                if k < N:
                    self._advance(coup, wte)
        except (SimulationDiverged, np.linalg.LinAlgError, FloatingPointError) as exc:
            diverged = True
            reason = str(exc)
        wall = time.perf_counter() - t0
        if diverged:
            ts = _truncate(ts, row)
            v_full = v_full[: k + 1]
            vdf_full = vdf_full[: k + 1]
            vdd_full = vdd_full[: k + 1]
        summary = self._summary(ts, v_full, wall, diverged, reason)
        return RunResult(
            scenario=sc, timeseries=ts, summary=summary, diverged=diverged,
            v_full=v_full, vdot_formula_full=vdf_full, vdot_direct_full=vdd_full,
        )

    def _advance(self, coup, wte):
        h = self.h
        x = self.x
        k2idx = 2 * self.k + 1
        k4idx = 2 * self.k + 2
        dx1, dx2, dx3, dx4 = self._dx
        self._assemble_dx(x, self._sb, coup, wte, dx1)
        np.multiply(dx1, 0.5 * h, out=self._xtmp)
        self._xtmp += x
        self._eval(self._xtmp, k2idx, self._tb, False)
        self._assemble_dx(self._xtmp, self._tb, coup, wte, dx2)
        np.multiply(dx2, 0.5 * h, out=self._xtmp)
        self._xtmp += x
        self._eval(self._xtmp, k2idx, self._tb, False)
        self._assemble_dx(self._xtmp, self._tb, coup, wte, dx3)
        np.multiply(dx3, h, out=self._xtmp)
        self._xtmp += x
        self._eval(self._xtmp, k4idx, self._tb, False)
        self._assemble_dx(self._xtmp, self._tb, coup, wte, dx4)
        dx1 += dx4
        dx2 += dx3
        dx1 += 2.0 * dx2
        x += (h / 6.0) * dx1
        self.k += 1
        self.t = self.k * h

    # -- summary -------------------------------------------------------------

    def _summary(self, ts, v_full, wall, diverged, reason) -> dict:
        sc = self.sc
        out = {
            "scenario": sc.name,
            "regime": sc.regime,
            "duration_s": sc.duration_s,
            "step_s": sc.step_s,
            "n_robots": self.R,
            "wall_time_s": wall,
            "diverged": diverged,
        }
        if reason:
            out["divergence_reason"] = reason
        if ts.t.shape[0] == 0:
            return out
        a_norm = float(np.linalg.norm(self.a_true))
        final_ah = ts.a_hat[-1]
        errs = final_ah - self.a_true
        out["final"] = {
            "a_true": self.a_true.tolist(),
            "a_hat": final_ah.tolist(),
            "param_error": errs.tolist(),
            "param_error_rel": (np.linalg.norm(errs, axis=1) / max(a_norm, 1e-12)).tolist(),
            "consensus_max": float(ts.consensus_max[-1]),
        }
        out["final_param_error_rel"] = float(np.max(np.linalg.norm(errs, axis=1)) / max(a_norm, 1e-12))
        last5 = ts.t >= ts.t[-1] - 5.0
        out["tracking"] = {
            "s_inf_last_5s": float(np.abs(ts.s[last5]).max()) if last5.any() else float("nan"),
            "s_inf": float(np.abs(ts.s).max()),
        }
        dv = np.diff(v_full)
        trunc_tol = self.h * self.h * max(1.0, float(np.abs(dv).max()) / self.h if dv.size else 1.0)
        out["lyapunov"] = {
            "v0": float(v_full[0]),
            "v_final": float(v_full[-1]),
            "max_step_increase": float(dv.max()) if dv.size else 0.0,
            "step_increase_tolerance": 10.0 * trunc_tol,
            "violations": int(np.sum(dv > 10.0 * trunc_tol)),
        }
        if self.closed_loop and not diverged:
            pe = {"collective_lambda_min": float(ts.pe_collective[-1]), "per_robot": []}
            for r in range(self.R):
                M = self.windows[r].integral()
                w, vec = np.linalg.eigh(M)
                deficient = [PARAM_LABELS[int(np.argmax(np.abs(vec[:, i])))]
                             for i in range(4) if w[i] < 1e-6 * max(w[-1], 1e-300)]
                pe["per_robot"].append(
                    {
                        "lambda_min": float(max(w[0], 0.0)),
                        "lambda_max": float(w[-1]),
                        "deficient_directions": deficient,
                    }
                )
            out["pe"] = pe
        return out


def _truncate(ts: TimeSeries, rows: int) -> TimeSeries:
    kw = {}
    for name in ("t", "q", "qd", "s", "tau", "a_hat", "v", "vdot_formula", "vdot_direct",
                 "pe_robot", "pe_collective", "consensus_max", "energy"):
        kw[name] = getattr(ts, name)[:rows]
    kw["b_hat"] = None if ts.b_hat is None else ts.b_hat[:rows]
    return TimeSeries(**kw)


def run(scenario: Scenario) -> RunResult:
    """Validate, integrate and summarize one scenario."""
    return Simulation(scenario).run()
