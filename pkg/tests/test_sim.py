import numpy as np
import pytest

from coopadapt import dynamics as dyn
from coopadapt.network import SwitchSchedule
from coopadapt.sim import (
    Scenario,
    ScenarioError,
    Simulation,
    load_scenario,
    run,
    scenario_from_dict,
    scenario_to_dict,
    validate_scenario,
)
from coopadapt.sim._core import team_eval
from helpers import make_ref_arm


def packaged(name):
    from importlib.resources import files

    return str(files("coopadapt") / "scenarios" / name)


@pytest.fixture(scope="module")
def coupled():
    return load_scenario(packaged("two_robot_coupled.yaml"))


@pytest.fixture(scope="module")
def pendulum():
    return load_scenario(packaged("free_pendulum.yaml"))


class TestScenarioIO:
    def test_round_trip_dict(self, coupled):
        doc = scenario_to_dict(coupled)
        again = scenario_from_dict(doc)
        assert scenario_to_dict(again) == doc

    def test_all_packaged_scenarios_validate(self):
        from importlib.resources import files

        names = sorted(p.name for p in (files("coopadapt") / "scenarios").iterdir())
        assert len(names) >= 8
        for name in names:
            sc = load_scenario(packaged(name))
            assert validate_scenario(sc) == [], name

    def test_malformed(self):
        with pytest.raises(ScenarioError):
            scenario_from_dict({"name": "x"})

    def test_validation_catches_bad_delay(self, coupled):
        sc = coupled.with_overrides(regime="delayed", edges=((0, 1),), delay_s=0.2505)
        issues = validate_scenario(sc)
        assert any("multiple of step_s" in m for m in issues)
        ok = coupled.with_overrides(regime="delayed", edges=((0, 1),), delay_s=0.25)
        assert validate_scenario(ok) == []

    def test_validation_rejects_delay_plus_switching(self, coupled):
        sched = SwitchSchedule.cyclic((((0, 1),), ((0, 1),)), dwell=0.5)
        sc = coupled.with_overrides(regime="switching", schedule=sched, delay_s=0.25)
        assert any("cannot be combined" in m for m in validate_scenario(sc))

    def test_validation_rejects_disconnected_union(self, coupled):
        sc = load_scenario(packaged("three_robot_switching.yaml"))
        sched = SwitchSchedule.cyclic((((0, 1),), ((0, 1),)), dwell=0.5)
        bad = sc.with_overrides(schedule=sched)
        assert any("disconnected union graph" in m for m in validate_scenario(bad))

    def test_validation_rejects_composite_with_arm_adaptation(self, coupled):
        sc = coupled.with_overrides(composite_kind="torque", robot_adaptation_gain=1.0)
        assert any("arm-parameter" in m for m in validate_scenario(sc))


class TestCoreAgainstReferenceKernel:
    def test_team_eval_matches_public_dynamics(self, rng):
        # the jitted stepper core against the numpy implementation it mirrors
        from coopadapt.control import ControllerGains, ReferenceSignal, sliding_state, control_torque
        from coopadapt.dynamics import _effective_link_params, _unit_param_rows

        robots = [make_ref_arm(), make_ref_arm(link_lengths=(0.45, 0.42, 0.33), masses=(1.8, 1.2, 0.7))]
        R, n, P = 2, 3, 6
        lengths = np.array([m.link_lengths for m in robots])
        offsets = np.array([m.joint_offsets for m in robots])
        A = np.zeros((R, P, n, 4))
        for r, m in enumerate(robots):
            A[r, 0] = _effective_link_params(m)
            A[r, 1] = _effective_link_params(m.without_payload())
            A[r, 2:6] = _unit_param_rows(m, [m.payload_index])
        bufs = dict(qdd=np.empty((R, n)), s=np.empty((R, n)), cols=np.zeros((R, P, n)),
                    tau=np.empty((R, n)), h0=np.empty((R, n, n)), mom=np.empty((R, P, n)),
                    ctqd=np.empty((R, P, n)), g=np.empty((R, P, n)), ke=np.empty((R, P)),
                    pe=np.empty(R))
        g3 = ControllerGains.diag_gains(4.0, 4.0, 3)
        for _ in range(12):
            q = rng.uniform(-1.2, 1.2, (R, n))
            qd = rng.uniform(-2, 2, (R, n))
            refq = rng.uniform(-1, 1, (R, n))
            refqd = rng.uniform(-1, 1, (R, n))
            refqdd = rng.uniform(-2, 2, (R, n))
            ah = rng.uniform(-1, 2, (R, 4))
            wff = np.zeros((R, P))
            wff[:, 1] = 1.0
            wff[:, 2:6] = ah
            rc = team_eval(lengths, offsets, 0.0, -9.81, A, wff, q, qd, refq, refqd, refqdd,
                           np.full(n, 4.0), np.full(n, 4.0), True, True,
                           bufs["qdd"], bufs["s"], bufs["cols"], bufs["tau"], bufs["h0"],
                           bufs["mom"], bufs["ctqd"], bufs["g"], bufs["ke"], bufs["pe"])
            assert rc == 0
            for r, m in enumerate(robots):
                st = dyn.JointState(q[r], qd[r])
                ss = sliding_state(st, ReferenceSignal(refq[r], refqd[r], refqdd[r]), g3)
                tau = control_torque(m, ah[r], ss, st, g3)
                qdd = dyn.forward_dynamics(m, q[r], qd[r], tau)
                Y = dyn.payload_regressor(m, q[r], qd[r], ss.qr_dot, ss.qr_ddot)
                H, C, gv = dyn.rigid_body_terms(m, q[r], qd[r])
                np.testing.assert_allclose(bufs["s"][r], ss.s, atol=1e-12)
                np.testing.assert_allclose(bufs["tau"][r], tau, atol=1e-10)
                np.testing.assert_allclose(bufs["qdd"][r], qdd, atol=1e-9)
                np.testing.assert_allclose(bufs["cols"][r, 2:6].T, Y, atol=1e-11)
                np.testing.assert_allclose(bufs["h0"][r], H, atol=1e-12)
                np.testing.assert_allclose(bufs["mom"][r, 0], H @ qd[r], atol=1e-11)
                np.testing.assert_allclose(bufs["ctqd"][r, 0], C.T @ qd[r], atol=1e-11)
                np.testing.assert_allclose(bufs["ke"][r, 0], 0.5 * qd[r] @ H @ qd[r], atol=1e-11)
                np.testing.assert_allclose(bufs["pe"][r], dyn.potential_energy(m, q[r]), atol=1e-10)


class TestEngine:
    def test_determinism_bit_identical(self, coupled):
        sc = coupled.with_overrides(duration_s=2.0, regime="delayed",
                                    edges=((0, 1),), delay_s=0.05)
        a = run(sc).timeseries.stacked()
        b = run(sc).timeseries.stacked()
        assert np.array_equal(a, b)

    def test_true_estimate_keeps_sliding_zero(self):
        # gentler reference pair: truncation error stays below the bound
        sc = load_scenario(packaged("composite_comparison.yaml")).with_overrides(
            duration_s=1.0, a_hat0=(1.0, 0.1, 0.0, 0.05), k_gain=0.0, log_decimation=1,
            step_s=2e-4)
        res = run(sc)
        assert np.abs(res.timeseries.s).max() <= 1e-9

    def test_energy_conservation_free_pendulum(self, pendulum):
        res = run(pendulum)
        E = res.timeseries.energy
        assert (E.max() - E.min()) / abs(E[0]) <= 1e-6

    def test_step_halving_richardson(self, pendulum):
        def final(h):
            r = run(pendulum.with_overrides(step_s=h, duration_s=2.0, log_decimation=1))
            return np.concatenate([r.timeseries.q[-1].ravel(), r.timeseries.qd[-1].ravel()])

        x1, x2, x3 = final(2e-3), final(1e-3), final(5e-4)
        ratio = np.linalg.norm(x1 - x2) / np.linalg.norm(x2 - x3)
        assert 8.0 <= ratio <= 32.0

    def test_zero_delay_matches_static_switching(self, coupled):
        sched = SwitchSchedule(times=(), edge_sets=(((0, 1),),))
        sw = run(coupled.with_overrides(duration_s=3.0, regime="switching", schedule=sched))
        dl = run(coupled.with_overrides(duration_s=3.0, regime="delayed",
                                        edges=((0, 1),), delay_s=0.0))
        for name in ("q", "qd", "s", "a_hat"):
            d = np.abs(getattr(sw.timeseries, name) - getattr(dl.timeseries, name)).max()
            assert d <= 1e-8, name

    def test_closed_loop_residual_along_run(self, coupled):
        # H sdot + (C + K_D) s = Y a_tilde checked from decimation-1 logs
        from coopadapt.sim.trajectories import resolve_trajectory

        sc = coupled.with_overrides(duration_s=2.0, k_gain=0.0, log_decimation=1)
        res = run(sc)
        ts = res.timeseries
        h = sc.step_s
        a_true = sc.robots[0].model.payload.as_array()
        for r, rob in enumerate(sc.robots):
            model = rob.model
            traj = resolve_trajectory(rob.trajectory, model)
            refq, refqd, refqdd = traj.sample(ts.t)
            lam = sc.lambda_per_s
            worst = 0.0
            for k in range(300, 1500, 150):
                q, qd, s = ts.q[k, r], ts.qd[k, r], ts.s[k, r]
                qt, qtd = q - refq[k], qd - refqd[k]
                qr_dot = refqd[k] - lam * qt
                qr_ddot = refqdd[k] - lam * qtd
                sdot = (ts.s[k + 1, r] - ts.s[k - 1, r]) / (2 * h)
                H, C, _ = dyn.rigid_body_terms(model, q, qd)
                Y = dyn.payload_regressor(model, q, qd, qr_dot, qr_ddot)
                a_tilde = ts.a_hat[k, r] - a_true
                resid = H @ sdot + (C + np.eye(3) * sc.kd_nms_per_rad) @ s - Y @ a_tilde
                worst = max(worst, np.abs(resid).max())
            assert worst <= 1e-3, worst

    def test_vdot_formula_matches_differenced_v(self, coupled):
        # after the startup layer the differenced V tracks the regime formula;
        # the delayed regime carries the O(h) zero-order-hold coupling error
        for overrides, tol in (
            (dict(duration_s=4.0, k_gain=0.0), 1e-4),
            (dict(duration_s=4.0), 1e-4),
            (dict(duration_s=4.0, regime="delayed", edges=((0, 1),), delay_s=0.1), 1e-2),
        ):
            res = run(coupled.with_overrides(**overrides))
            h = res.scenario.step_s
            vd_fd = np.gradient(res.v_full, h)
            t = np.arange(res.v_full.shape[0]) * h
            m = (t >= 0.25) & (t <= t[-1] - 2 * h)
            err = np.abs(vd_fd[m] - res.vdot_formula_full[m]).max()
            scale = max(1.0, np.abs(res.vdot_formula_full).max())
            assert err <= tol * scale, (overrides, err)

    def test_lyapunov_nonincreasing_all_regimes(self, coupled):
        sched = SwitchSchedule.cyclic((((0, 1),), ((0, 1),)), dwell=0.5)
        for overrides in (
            dict(duration_s=5.0, k_gain=0.0),
            dict(duration_s=5.0),
            dict(duration_s=5.0, regime="centralized"),
            dict(duration_s=5.0, regime="switching", schedule=sched),
            dict(duration_s=5.0, regime="delayed", edges=((0, 1),), delay_s=0.25),
        ):
            res = run(coupled.with_overrides(**overrides))
            tol = res.summary["lyapunov"]["step_increase_tolerance"]
            assert res.summary["lyapunov"]["max_step_increase"] <= tol, overrides

    def test_channel_energy_matches_direct_trapezoid(self, rng):
        from coopadapt.sim.engine import _Channel

        h = 1e-3
        d = 12
        ch = _Channel(d, np.zeros(4), 0.0, h)
        hist = [np.zeros(4)] * d  # matches the constant-history prefill
        errs = rng.uniform(-1, 1, (40, 4))
        for k in range(40):
            ch.exchange(errs[k] * 0.3, float(errs[k] @ errs[k]))
            hist.append(errs[k])
            window = [float(v @ v) for v in hist[-(d + 1):]]
            direct = h * (0.5 * window[0] + sum(window[1:-1]) + 0.5 * window[-1])
            assert abs(ch.energy() - direct) <= 1e-12

    def test_arm_parameter_adaptation(self, coupled):
        # known payload and exact start: estimates of the arm parameters hold
        sc = coupled.with_overrides(duration_s=1.0, robot_adaptation_gain=5.0,
                                    a_hat0=(1.0, 0.1, 0.0, 0.05))
        res = run(sc)
        assert np.abs(res.timeseries.b_hat[-1] - res.timeseries.b_hat[0]).max() <= 1e-6
        # unknown payload: combined V including the arm-error term stays monotone
        sc2 = coupled.with_overrides(duration_s=5.0, robot_adaptation_gain=5.0)
        res2 = run(sc2)
        assert np.diff(res2.v_full).max() <= res2.summary["lyapunov"]["step_increase_tolerance"]
        assert np.abs(res2.timeseries.b_hat[-1] - res2.timeseries.b_hat[0]).max() > 1e-4


    def test_engine_update_law_matches_adaptation_module(self, coupled):
        # the stepper's inlined consensus drive against the module-level law
        from coopadapt.adaptation import AdaptationGains, consensus_update
        from coopadapt.control import ControllerGains, ReferenceSignal, sliding_state

        sc = coupled.with_overrides(duration_s=1.0)
        sim = Simulation(sc)
        rng = np.random.default_rng(5)
        # perturb the state off the trajectory so every term is non-trivial
        sim.x[:] += rng.uniform(-0.05, 0.05, sim.D)
        q, qd, ah, _ = sim._eval(sim.x, 0, sim._sb, True)
        ah2 = sim._ah2d(ah)
        coup, _, _ = sim._coupling(ah2, 0.0)
        dx = np.empty(sim.D)
        sim._assemble_dx(sim.x, sim._sb, coup, None, dx)
        R, n = sim.R, sim.n
        ahd_engine = dx[2 * R * n : 2 * R * n + 4 * R].reshape(R, 4)

        gains = AdaptationGains(p=np.diag(sim.pdiag), k_consensus=sc.k_gain * np.eye(4))
        g3 = ControllerGains.diag_gains(sc.lambda_per_s, sc.kd_nms_per_rad, n)
        for r, rob in enumerate(sc.robots):
            st = dyn.JointState(q[r], qd[r])
            ref = ReferenceSignal(sim.refq[0, r], sim.refqd[0, r], sim.refqdd[0, r])
            ss = sliding_state(st, ref, g3)
            Y = dyn.payload_regressor(rob.model, q[r], qd[r], ss.qr_dot, ss.qr_ddot)
            want = consensus_update(gains, r, Y, ss.s, ah2)
            np.testing.assert_allclose(ahd_engine[r], want, atol=1e-10)

    def test_power_balance_along_closed_loop_run(self, coupled):
        # d/dt(total mechanical energy) equals the actuator power
        sc = coupled.with_overrides(duration_s=3.0, log_decimation=1)
        res = run(sc)
        ts = res.timeseries
        h = sc.step_s
        dE = np.gradient(ts.energy, h)
        power = np.einsum("lri,lri->l", ts.qd, ts.tau)
        err = np.abs(dE[5:-5] - power[5:-5]).max()
        assert err <= 1e-2 * max(1.0, np.abs(power).max()), err

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_divergence_detected_and_truncated(self, coupled):
        sc = coupled.with_overrides(duration_s=10.0, adaptation_gain=5e5)
        res = run(sc)
        assert res.diverged
        assert res.summary["diverged"]
        assert res.timeseries.t.shape[0] < 10.0 / sc.step_s / sc.log_decimation + 1
        assert np.all(np.isfinite(res.timeseries.stacked()))

    def test_invalid_scenario_raises_before_integration(self, coupled):
        with pytest.raises(ScenarioError):
            Simulation(coupled.with_overrides(step_s=-1.0))

    def test_state_views(self, coupled):
        sim = Simulation(coupled.with_overrides(duration_s=1.0))
        st = sim.state
        assert st["q"].shape == (2, 3)
        assert st["a_hat"].shape == (2, 4)
        assert st["t"] == 0.0


class TestTimeSeriesCSV:
    def test_round_trip(self, tmp_path, coupled):
        res = run(coupled.with_overrides(duration_s=1.0, log_decimation=100))
        path = tmp_path / "ts.csv"
        res.timeseries.to_csv(path)
        cols = type(res.timeseries).read_csv_columns(path)
        names = res.timeseries.column_names()
        data = res.timeseries.stacked()
        assert list(cols.keys()) == names
        for k, name in enumerate(names):
            np.testing.assert_allclose(cols[name], data[:, k], rtol=0, atol=0)

    def test_pinned_column_prefix(self, coupled):
        res = run(coupled.with_overrides(duration_s=1.0, log_decimation=100))
        names = res.timeseries.column_names()
        assert names[0] == "t"
        # robot-major blocks: q, qd, s, a_hat, then the global triple
        assert names[1:4] == ["r0_q0", "r0_q1", "r0_q2"]
        assert names[4:7] == ["r0_qd0", "r0_qd1", "r0_qd2"]
        assert names[7:10] == ["r0_s0", "r0_s1", "r0_s2"]
        assert names[10:14] == ["r0_ahat_m", "r0_ahat_hx", "r0_ahat_hy", "r0_ahat_izz"]
        k = names.index("r1_ahat_izz")
        assert names[k + 1 : k + 4] == ["V", "pe_collective", "consensus_max"]
