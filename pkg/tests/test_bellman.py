import numpy as np
import pytest

from conftest import random_cases
from lagq.bellman import (DimensionMismatch, DiscountFn, QFormatError, apply_bellman,
                          bellman_residual, greedy_policy, load_q_csv, monotonicity_check,
                          on_policy_value, optimal_q, q_from_csv, q_to_csv, save_q_csv,
                          value_iteration)
from lagq.elp import EpisodicProcess, Policy, optimal_J_by_enumeration, random_elp
from lagq.fixtures import fig3_qstar, zero_reward_elp


def brute_bellman(process, gamma, q):
    """Loop-by-loop reference for the operator."""
    out = np.zeros_like(q)
    for s in range(process.n_states):
        for a in range(process.n_actions):
            out[s, a] = sum(process.transition[s, a, t] * (process.reward[t] + gamma[t] * q[t].max())
                            for t in range(process.n_states))
    return out


class TestOperator:
    def test_zero_q_on_fig3(self, fig3):
        bq = apply_bellman(fig3, DiscountFn.episodic(fig3), np.zeros((6, 3)))
        expected = np.zeros((6, 3))
        expected[1] = 1.0
        expected[2] = expected[3] = 2.0
        np.testing.assert_array_equal(bq, expected)

    def test_zero_discount_ignores_q(self, fig3, rng):
        g = DiscountFn.zero(6)
        a = apply_bellman(fig3, g, rng.normal(size=(6, 3)))
        b = apply_bellman(fig3, g, rng.normal(size=(6, 3)))
        np.testing.assert_array_equal(a, b)
        np.testing.assert_allclose(a, fig3.transition @ fig3.reward)

    def test_qstar_fixed_point(self, fig3):
        q = fig3_qstar()
        np.testing.assert_array_equal(apply_bellman(fig3, DiscountFn.episodic(fig3), q), q)

    def test_matches_loop_reference(self):
        for proc, _, rng in random_cases(11, 30):
            g = rng.uniform(0, 1, proc.n_states)
            q = rng.normal(size=(proc.n_states, proc.n_actions))
            np.testing.assert_allclose(apply_bellman(proc, DiscountFn(g), q), brute_bellman(proc, g, q),
                                       atol=1e-13)

    def test_dimension_mismatch(self, fig3):
        with pytest.raises(DimensionMismatch):
            apply_bellman(fig3, DiscountFn.episodic(fig3), np.zeros((5, 3)))

    def test_not_a_one_step_contraction(self, fig3, rng):
        q1 = rng.normal(size=(6, 3))
        delta = 0.75
        g = DiscountFn.episodic(fig3)
        d = np.max(np.abs(apply_bellman(fig3, g, q1 + delta) - apply_bellman(fig3, g, q1)))
        assert d == pytest.approx(delta, abs=1e-14)


class TestValueIteration:
    def test_fig3_table(self, fig3):
        res = value_iteration(fig3, tol=1e-10)
        assert res.converged and res.residual < 1e-10
        np.testing.assert_allclose(res.q, fig3_qstar(), atol=1e-9)

    def test_zero_rewards(self):
        res = value_iteration(zero_reward_elp())
        np.testing.assert_array_equal(res.q, 0.0)

    def test_from_offset_start(self, fig3):
        res = value_iteration(fig3, q0=fig3_qstar() + 7.0)
        assert res.converged
        np.testing.assert_allclose(res.q, fig3_qstar(), atol=1e-10)

    def test_max_iters_reported(self):
        rng = np.random.default_rng(0)
        proc = random_elp(rng)
        res = value_iteration(proc, q0=np.full((proc.n_states, proc.n_actions), 1e6), max_iters=1)
        assert not res.converged and res.iterations == 1 and res.residual >= 1e-10

    def test_rejects_terminal_discount_one(self, fig3):
        g = np.ones(6)
        with pytest.raises(ValueError):
            value_iteration(fig3, DiscountFn(g))

    def test_general_discount_converges(self, fig3):
        g = DiscountFn(np.array([1, 1, 1, 1, 0.5, 0.5]))
        res = value_iteration(fig3, g)
        assert res.converged
        assert bellman_residual(fig3, g, res.q) < 1e-9

    def test_random_fixed_point_and_uniqueness(self):
        rng = np.random.default_rng(12)
        for _ in range(100):
            proc = random_elp(rng)
            res = value_iteration(proc)
            assert res.converged
            assert bellman_residual(proc, DiscountFn.episodic(proc), res.q) < 1e-9
        proc = random_elp(rng)
        sols = [value_iteration(proc, q0=rng.normal(scale=10, size=(proc.n_states, proc.n_actions))).q
                for _ in range(10)]
        for s in sols[1:]:
            assert np.max(np.abs(s - sols[0])) < 1e-7

    def test_greedy_qstar_optimal_by_enumeration(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            proc = random_elp(rng)
            J = on_policy_value(proc, greedy_policy(value_iteration(proc).q))[proc.start_state, 0]
            assert abs(J - optimal_J_by_enumeration(proc)[0]) <= 1e-8


class TestGreedy:
    def test_fig3_first_index(self):
        pi = greedy_policy(fig3_qstar())
        assert pi.probs[0].tolist() == [0.0, 1.0, 0.0]

    def test_constant_uniform(self):
        np.testing.assert_allclose(greedy_policy(np.full((4, 3), 2.0), "uniform").probs, 1 / 3)

    def test_unique_argmax_modes_agree(self, rng):
        q = rng.normal(size=(10, 4))
        np.testing.assert_array_equal(greedy_policy(q).probs, greedy_policy(q, "uniform").probs)

    def test_tie_tolerance(self):
        q = np.array([[1.0, 1.0 - 1e-13, 0.0]])
        np.testing.assert_allclose(greedy_policy(q, "uniform").probs, [[0.5, 0.5, 0.0]])

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            greedy_policy(np.zeros((1, 2)), "random")


class TestOnPolicy:
    def test_action2_terminal_rows(self, fig3):
        q = on_policy_value(fig3, Policy.deterministic([1] * 6, 3))
        np.testing.assert_allclose(q[4:], 2.0, atol=1e-12)

    def test_greedy_qstar_recovers_qstar(self, fig3):
        np.testing.assert_allclose(on_policy_value(fig3, greedy_policy(fig3_qstar())), fig3_qstar(),
                                   atol=1e-12)

    def test_zero_rewards(self):
        proc = zero_reward_elp()
        np.testing.assert_allclose(on_policy_value(proc, Policy.uniform(3, 2)), 0.0, atol=1e-15)

    def test_random_properties(self):
        for proc, pi, _ in random_cases(14, 100):
            q = on_policy_value(proc, pi)
            J = q[proc.start_state, 0]
            np.testing.assert_allclose(q[proc.terminal], J, atol=1e-10)
            assert np.all(q <= apply_bellman(proc, DiscountFn.episodic(proc), q) + 1e-10)

    def test_satisfies_policy_equation(self):
        for proc, pi, _ in random_cases(15, 30):
            q = on_policy_value(proc, pi)
            g = (~proc.terminal).astype(float)
            rhs = proc.transition @ (proc.reward + g * np.sum(pi.probs * q, axis=1))
            np.testing.assert_allclose(q, rhs, atol=1e-10)


class TestMonotonicity:
    def test_fig3(self, fig3, rng):
        g = DiscountFn.episodic(fig3)
        q2 = rng.normal(size=(6, 3))
        assert monotonicity_check(fig3, g, q2 + np.abs(rng.normal(size=(6, 3))), q2)
        assert monotonicity_check(fig3, g, q2, q2)

    def test_random_sweep(self):
        for proc, _, rng in random_cases(16, 100):
            g = DiscountFn.episodic(proc)
            q2 = rng.normal(size=(proc.n_states, proc.n_actions))
            q1 = q2 + np.abs(rng.normal(size=q2.shape))
            assert monotonicity_check(proc, g, q1, q2)

    def test_precondition(self, fig3):
        with pytest.raises(ValueError):
            monotonicity_check(fig3, DiscountFn.episodic(fig3), np.zeros((6, 3)), np.ones((6, 3)))


class TestQCsv:
    def test_round_trip(self, fig3, tmp_path, rng):
        q = rng.normal(size=(6, 3))
        save_q_csv(fig3, q, tmp_path / "q.csv")
        np.testing.assert_array_equal(load_q_csv(fig3, tmp_path / "q.csv"), q)

    def test_missing_pair(self, fig3):
        text = "\n".join(q_to_csv(fig3, np.zeros((6, 3))).splitlines()[:-1])
        with pytest.raises(DimensionMismatch):
            q_from_csv(fig3, text)

    def test_duplicate_pair(self, fig3):
        text = q_to_csv(fig3, np.zeros((6, 3))) + "0,1,3.0\n"
        with pytest.raises(QFormatError):
            q_from_csv(fig3, text)

    def test_unknown_name(self, fig3):
        text = q_to_csv(fig3, np.zeros((6, 3))).replace("5,3,", "9,3,")
        with pytest.raises(DimensionMismatch):
            q_from_csv(fig3, text)

    @pytest.mark.parametrize("text", ["", "s,a,v\n", "state,action,value\n0,1\n",
                                      "state,action,value\n0,1,abc\n"])
    def test_malformed(self, fig3, text):
        with pytest.raises(QFormatError):
            q_from_csv(fig3, text)


def test_discount_validation_messages():
    P = np.zeros((2, 1, 2))
    P[0, 0, 1] = 1.0
    P[1, 0, 0] = 1.0
    proc = EpisodicProcess(P, np.zeros(2), np.eye(2)[0], np.array([False, True]), 1)
    assert DiscountFn.episodic(proc).problems(proc) == []
    assert DiscountFn(np.array([1.0, 1.0])).problems(proc)
    assert DiscountFn(np.array([1.5, 0.0])).problems(proc)
    assert DiscountFn(np.array([1.0])).problems(proc)


class TestOptimalQ:
    def test_fig3_exact(self, fig3):
        np.testing.assert_array_equal(optimal_q(fig3), fig3_qstar())

    def test_polish_tightens_residual(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            proc = random_elp(rng)
            q = optimal_q(proc)
            g = DiscountFn.episodic(proc)
            assert bellman_residual(proc, g, q) < 1e-12 * max(1.0, np.abs(q).max())
            assert np.max(np.abs(q - value_iteration(proc).q)) < 1e-6
