import numpy as np
import pytest

from coopadapt import excitation as exc


def fill_window(window, samples):
    for Y in samples:
        window.push(Y)
    return window


def direct_trapezoid(samples, step):
    """Reference trapezoid of Y'Y over the windowed samples."""
    grams = np.array([Y.T @ Y for Y in samples])
    w = np.ones(len(samples))
    w[0] = w[-1] = 0.5
    raw = step * np.einsum("k,kij->ij", w, grams)
    return raw / ((len(samples) - 1) * step)


class TestGramianWindow:
    def test_matches_direct_trapezoid(self, rng):
        win = exc.GramianWindow(window_s=0.01, step_s=1e-3, dim=4)
        samples = [rng.uniform(-1, 1, (3, 4)) for _ in range(25)]
        fill_window(win, samples)
        np.testing.assert_allclose(win.integral(), direct_trapezoid(samples[-11:], 1e-3), atol=1e-12)

    def test_partial_window(self, rng):
        win = exc.GramianWindow(window_s=1.0, step_s=1e-3, dim=4)
        samples = [rng.uniform(-1, 1, (3, 4)) for _ in range(5)]
        fill_window(win, samples)
        np.testing.assert_allclose(win.integral(), direct_trapezoid(samples, 1e-3), atol=1e-13)

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            exc.GramianWindow(1.0, 1e-3).integral()

    def test_psd(self, rng):
        win = exc.GramianWindow(0.05, 1e-3)
        fill_window(win, [rng.uniform(-1, 1, (3, 4)) for _ in range(100)])
        assert np.linalg.eigvalsh(win.integral())[0] > -1e-12


class TestPeLevel:
    def test_zero_regressor(self):
        win = fill_window(exc.GramianWindow(0.01, 1e-3), [np.zeros((3, 4))] * 20)
        assert exc.pe_level(win) == 0.0

    def test_constant_full_rank(self, rng):
        Y = rng.uniform(-1, 1, (5, 4))
        win = fill_window(exc.GramianWindow(0.01, 1e-3), [Y] * 30)
        assert exc.pe_level(win) == pytest.approx(np.linalg.eigvalsh(Y.T @ Y)[0], rel=1e-10)

    def test_translation_only_deficient_in_izz(self, rng):
        # izz column identically zero -> that direction carries no excitation
        samples = []
        for _ in range(50):
            Y = rng.uniform(-1, 1, (3, 4))
            Y[:, 3] = 0.0
            samples.append(Y)
        win = fill_window(exc.GramianWindow(0.05, 1e-3), samples)
        M = win.integral()
        assert exc.pe_level(win) <= 1e-6 * np.trace(M)
        basis = exc.deficiency_directions(win)
        assert basis.shape[1] == 1
        np.testing.assert_allclose(np.abs(basis[:, 0]), [0, 0, 0, 1], atol=1e-10)


class TestCollective:
    def test_identical_windows_scale(self, rng):
        Y = rng.uniform(-1, 1, (3, 4))
        wins = [fill_window(exc.GramianWindow(0.01, 1e-3), [Y] * 20) for _ in range(3)]
        assert exc.collective_pe_level(wins) == pytest.approx(3 * exc.pe_level(wins[0]), rel=1e-10)

    def test_single_robot_equals_pe_level(self, rng):
        win = fill_window(exc.GramianWindow(0.01, 1e-3), [rng.uniform(-1, 1, (3, 4))] * 15)
        assert exc.collective_pe_level([win]) == pytest.approx(exc.pe_level(win), rel=1e-12)

    def test_complementary_deficiencies_cover_each_other(self, rng):
        # robot 1 never excites izz, robot 2 never excites m, yet the team
        # Gramian is positive definite
        s1, s2 = [], []
        for _ in range(60):
            Y1 = rng.uniform(-1, 1, (3, 4))
            Y1[:, 3] = 0.0
            Y2 = rng.uniform(-1, 1, (3, 4))
            Y2[:, 0] = 0.0
            s1.append(Y1)
            s2.append(Y2)
        w1 = fill_window(exc.GramianWindow(0.05, 1e-3), s1)
        w2 = fill_window(exc.GramianWindow(0.05, 1e-3), s2)
        assert exc.pe_level(w1) <= 1e-12
        assert exc.pe_level(w2) <= 1e-12
        assert exc.collective_pe_level([w1, w2]) > 1e-3

    def test_additivity_exact(self, rng):
        wins = []
        for _ in range(3):
            wins.append(fill_window(exc.GramianWindow(0.02, 1e-3), [rng.uniform(-1, 1, (3, 4)) for _ in range(30)]))
        total = sum(w.integral() for w in wins)
        assert exc.collective_pe_level(wins) == pytest.approx(np.linalg.eigvalsh(total)[0], abs=1e-13)

    def test_weyl_lower_bound(self, rng):
        # lambda_min of a PSD sum dominates every summand's lambda_min
        wins = [fill_window(exc.GramianWindow(0.02, 1e-3), [rng.uniform(-1, 1, (3, 4)) for _ in range(30)]) for _ in range(4)]
        assert exc.collective_pe_level(wins) >= max(exc.pe_level(w) for w in wins) - 1e-12


class TestDeficiencyDirections:
    def test_full_rank_empty(self, rng):
        Y = rng.uniform(-1, 1, (5, 4))
        win = fill_window(exc.GramianWindow(0.01, 1e-3), [Y] * 20)
        assert exc.deficiency_directions(win).shape == (4, 0)

    def test_zero_regressor_full_basis(self):
        win = fill_window(exc.GramianWindow(0.01, 1e-3), [np.zeros((3, 4))] * 10)
        np.testing.assert_allclose(exc.deficiency_directions(win), np.eye(4), atol=0.0)


class TestConsensusError:
    def test_all_equal(self, rng):
        a = rng.uniform(-1, 1, 4)
        r = exc.consensus_error(np.tile(a, (4, 1)))
        assert r.max_pairwise == 0.0 and r.xi_norm == 0.0

    def test_single_component_delta(self):
        est = np.zeros((2, 4))
        est[1, 2] = 0.37
        r = exc.consensus_error(est)
        assert r.max_pairwise == pytest.approx(0.37)

    def test_matches_bruteforce_pairwise(self, rng):
        est = rng.uniform(-1, 1, (5, 4))
        r = exc.consensus_error(est)
        brute = max(
            np.linalg.norm(est[i] - est[j]) for i in range(5) for j in range(5) if i != j
        )
        assert r.max_pairwise == pytest.approx(brute, rel=1e-12)
        assert r.xi.shape == (4, 4)


class TestLyapunovValue:
    def test_zero_state(self):
        v = exc.lyapunov_value("direct", [np.zeros(3)], [np.eye(3)], [np.zeros(4)], [np.eye(4)])
        assert v == 0.0

    def test_single_robot_identity_gain(self, rng):
        s = rng.uniform(-1, 1, 3)
        H = np.eye(3) * 2.0
        at = rng.uniform(-1, 1, 4)
        v = exc.lyapunov_value("direct", [s], [H], [at], [np.eye(4)])
        assert v == pytest.approx(0.5 * (s @ H @ s + at @ at), rel=1e-12)

    def test_delayed_channel_term(self, rng):
        v0 = exc.lyapunov_value("delayed", [], [], [], [], channel_energy=0.8)
        assert v0 == pytest.approx(0.4)
        with pytest.raises(ValueError):
            exc.lyapunov_value("direct", [], [], [], [], channel_energy=1.0)

    def test_robot_param_terms(self, rng):
        bt = rng.uniform(-1, 1, 8)
        Q = np.eye(8) * 4.0
        v = exc.lyapunov_value("consensus", [], [], [], [], b_tilde_list=[bt], q_list=[Q])
        assert v == pytest.approx(0.5 * bt @ bt / 4.0, rel=1e-12)

    def test_unknown_regime(self):
        with pytest.raises(ValueError):
            exc.lyapunov_value("magic", [], [], [], [])


class TestLyapunovTrace:
    def test_vdot_linear_decay(self):
        tr = exc.LyapunovTrace(regime="direct")
        for k in range(50):
            tr.append(0.01 * k, 1.0 - 0.02 * 0.01 * k)
        np.testing.assert_allclose(tr.vdot(), -0.02, atol=1e-12)
        assert tr.step_increases().max() == 0.0

    def test_rejects_negative(self):
        tr = exc.LyapunovTrace(regime="direct")
        with pytest.raises(ValueError):
            tr.append(0.0, -1.0)
