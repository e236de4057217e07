import numpy as np
import pytest
from scipy.optimize import linprog

from conftest import random_cases, random_maximin_q
from lagq.bellman import (DiscountFn, QFormatError, apply_bellman, greedy_policy, on_policy_value,
                          optimal_q, value_iteration)
from lagq.elp import Policy, optimal_J_by_enumeration, random_elp, random_policy, rollout
from lagq.fixtures import (fig3_constant_q, fig3_qmax, fig3_qstar, vform_counterexample, vform_mdp,
                           zero_reward_elp)
from lagq.lagrangian import (Multiplier, canonical_multiplier, check_saddle, dual_form_value,
                             greedy_J, is_maximin_q, is_minimax_q, lagrangian_value,
                             load_multiplier_csv, maximin_optimality_check, multiplier_from_csv,
                             multiplier_to_csv, save_multiplier_csv, terminal_expectation,
                             verify_strong_duality)

ACTION2 = Policy.deterministic([1] * 6, 3)
ACTION1 = Policy.deterministic([0] * 6, 3)


def terminal_expectation_oracle(process, pi, q):
    """E_pi[Q(S_T, A_T)] from first-passage probabilities into the terminals."""
    P_pi = np.einsum("sap,sa->sp", process.transition, pi.probs)
    nt = ~process.terminal
    # absorb[s, t]: probability that the first terminal reached from s is t
    A = np.eye(nt.sum()) - P_pi[np.ix_(nt, nt)]
    absorb = np.linalg.solve(A, P_pi[np.ix_(nt, process.terminal)])
    first_terminal = process.reset_dist[nt] @ absorb
    qbar = np.sum(pi.probs * q, axis=1)[process.terminal]
    return float(first_terminal @ qbar)


class TestLagrangianValue:
    def test_action2_qstar_zero_multiplier(self, fig3):
        val = lagrangian_value(fig3, ACTION2, fig3_qstar(), Multiplier.zeros(6, 3))
        assert val == pytest.approx(2.0, abs=1e-12)

    def test_zero_multiplier_is_terminal_expectation(self):
        for proc, pi, rng in random_cases(21, 50):
            q = rng.normal(size=(proc.n_states, proc.n_actions))
            val = lagrangian_value(proc, pi, q, Multiplier.zeros(proc.n_states, proc.n_actions))
            assert val == pytest.approx(terminal_expectation_oracle(proc, pi, q), abs=1e-9)

    def test_canonical_at_qstar(self, fig3):
        lam = canonical_multiplier(fig3, ACTION2)
        assert lagrangian_value(fig3, ACTION2, fig3_qstar(), lam) == pytest.approx(2.0, abs=1e-12)

    def test_monte_carlo_agrees(self, fig3, rng):
        pi = Policy.uniform(6, 3)
        q = rng.normal(size=(6, 3))
        lam = Multiplier(rng.uniform(0, 1, size=(6, 3)))
        exact = lagrangian_value(fig3, pi, q, lam)
        est = lagrangian_value(fig3, pi, q, lam, "monte_carlo", seed=3, n_episodes=4000)
        assert est.within(exact, 4.0)

    def test_monte_carlo_random_stochastic(self):
        for proc, pi, rng in random_cases(22, 5):
            q = rng.normal(size=(proc.n_states, proc.n_actions))
            exact = terminal_expectation(proc, pi, q)
            est = terminal_expectation(proc, pi, q, "monte_carlo", seed=5, n_episodes=3000)
            assert est.within(exact, 4.0)

    def test_monte_carlo_needs_seed(self, fig3):
        with pytest.raises(ValueError):
            terminal_expectation(fig3, ACTION2, fig3_qstar(), "monte_carlo")

    def test_terminal_expectation_matches_rollout_pairs(self, fig3):
        traj = rollout(fig3, Policy.uniform(6, 3), 0, 5)
        assert traj.n_episodes == 5


class TestCanonicalMultiplier:
    def test_fig3_action2(self, fig3):
        lam = canonical_multiplier(fig3, ACTION2).weights
        assert lam[0, 1] == pytest.approx(1.0, abs=1e-12)
        assert lam[0, 0] == 0.0
        assert lam[1].sum() == 0.0

    def test_single_nonterminal_concentrated(self):
        P = np.zeros((2, 2, 2))
        P[0, :, 1] = 1.0
        P[1, :, 0] = 1.0
        from lagq.elp import EpisodicProcess
        proc = EpisodicProcess(P, np.array([0.0, 1.0]), np.eye(2)[0], np.array([False, True]), 1)
        lam = canonical_multiplier(proc, Policy.deterministic([1, 0], 2)).weights
        np.testing.assert_allclose(lam, [[0, 1], [1, 0]], atol=1e-12)
        assert lam.sum() == pytest.approx(2.0)

    def test_total_mass_is_expected_T(self):
        from lagq.elp import stationary_distribution
        for proc, pi, _ in random_cases(23, 100):
            lam = canonical_multiplier(proc, pi)
            assert lam.total() == pytest.approx(stationary_distribution(proc, pi).expected_T, rel=1e-10)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            Multiplier(np.array([[-1.0]]))


class TestDualForm:
    def test_fig3_optimal_qstar(self, fig3):
        assert dual_form_value(fig3, ACTION2, fig3_qstar()) == pytest.approx(2.0, abs=1e-12)

    def test_constant_q_gives_J(self):
        for proc, pi, rng in random_cases(24, 20):
            q = np.full((proc.n_states, proc.n_actions), rng.normal())
            J = on_policy_value(proc, pi)[proc.start_state, 0]
            assert dual_form_value(proc, pi, q) == pytest.approx(J, abs=1e-10)

    def test_identity_with_lagrangian(self):
        worst = 0.0
        for proc, pi, rng in random_cases(25, 200):
            q = rng.normal(scale=3, size=(proc.n_states, proc.n_actions))
            lhs = lagrangian_value(proc, pi, q, canonical_multiplier(proc, pi))
            worst = max(worst, abs(lhs - dual_form_value(proc, pi, q)))
        assert worst < 1e-10


class TestWeakDuality:
    def test_feasible_q_bounds_lagrangian(self):
        for proc, pi, rng in random_cases(26, 100):
            qs = value_iteration(proc).q
            lam = Multiplier(rng.exponential(size=qs.shape))
            minimax = terminal_expectation(proc, pi, qs)
            assert lagrangian_value(proc, pi, qs, lam) <= minimax + 1e-8
            # any Q >= BQ: penalty term is nonpositive
            q = qs + np.abs(rng.normal(size=qs.shape))
            q = np.maximum(q, apply_bellman(proc, DiscountFn.episodic(proc), q))
            q = np.maximum(q, apply_bellman(proc, DiscountFn.episodic(proc), q))
            if np.all(q >= apply_bellman(proc, DiscountFn.episodic(proc), q) - 1e-12):
                assert lagrangian_value(proc, pi, q, lam) <= terminal_expectation(proc, pi, q) + 1e-9


class TestSaddle:
    def test_optimal_qstar(self, fig3):
        rep = check_saddle(fig3, ACTION2, fig3_qstar())
        assert rep.feasible_primal and rep.slack_pi_ok and rep.slack_q_ok and rep.is_saddle

    def test_optimal_constant(self, fig3):
        rep = check_saddle(fig3, ACTION2, fig3_constant_q())
        assert rep.is_saddle

    def test_uniform_constant(self, fig3):
        rep = check_saddle(fig3, Policy.uniform(6, 3), fig3_constant_q())
        assert rep.feasible_primal and rep.slack_q_ok
        assert not rep.slack_pi_ok and not rep.is_saddle
        bad = [d for d in rep.per_pair_detail if abs(d.weighted_bellman) > rep.tol]
        assert {d.state for d in bad} == {1}
        assert all(d.bellman_gap == pytest.approx(-1.0) for d in bad)

    def test_support_excludes_state1(self, fig3):
        lam = canonical_multiplier(fig3, ACTION2).weights
        np.testing.assert_array_equal(lam[1], 0.0)

    def test_report_consistent_with_detail(self):
        for proc, pi, rng in random_cases(27, 30):
            q = value_iteration(proc).q + rng.normal(scale=0.01, size=(proc.n_states, proc.n_actions))
            rep = check_saddle(proc, pi, q, tol=1e-3)
            gaps = np.array([d.bellman_gap for d in rep.per_pair_detail])
            wb = np.array([d.weighted_bellman for d in rep.per_pair_detail])
            wg = np.array([d.weighted_greedy for d in rep.per_pair_detail])
            assert rep.feasible_primal == bool(gaps.max() <= 1e-3)
            assert rep.slack_pi_ok == bool(np.abs(wb).max() <= 1e-3)
            assert rep.slack_q_ok == bool(np.abs(wg).max() <= 1e-3)

    def test_to_text(self, fig3):
        text = check_saddle(fig3, ACTION2, fig3_qstar()).to_text(fig3)
        assert "saddle=true" in text
        assert len(text.splitlines()) == 6 + 18

    def test_random_optimal_saddle(self):
        rng = np.random.default_rng(28)
        for _ in range(50):
            proc = random_elp(rng)
            qs = value_iteration(proc).q
            assert check_saddle(proc, greedy_policy(qs), qs).is_saddle


class TestClassification:
    def test_constant_minimax_any_policy(self, fig3, rng):
        for pi in (ACTION1, ACTION2, Policy.uniform(6, 3), random_policy(rng, 6, 3)):
            assert is_minimax_q(fig3, pi, fig3_constant_q())

    def test_qstar_both(self, fig3):
        assert is_minimax_q(fig3, ACTION2, fig3_qstar())
        assert is_maximin_q(fig3, ACTION2, fig3_qstar())

    def test_terminal_perturbation_not_minimax(self, fig3):
        q = fig3_qstar()
        q[4, 0] -= 0.5
        assert not is_minimax_q(fig3, Policy.uniform(6, 3), q)
        # brute-force: the perturbed table is infeasible somewhere
        assert np.any(q < apply_bellman(fig3, DiscountFn.episodic(fig3), q) - 1e-12)

    def test_qmax_table(self, fig3):
        assert is_maximin_q(fig3, ACTION2, fig3_qmax())
        assert not is_minimax_q(fig3, ACTION2, fig3_qmax())

    def test_constant_not_maximin(self, fig3):
        assert not is_maximin_q(fig3, ACTION2, fig3_constant_q())

    def test_symmetry_breaking(self, fig3):
        q = fig3_constant_q()
        assert greedy_J(fig3, q, "uniform") == pytest.approx(5 / 3, abs=1e-12)
        assert greedy_J(fig3, q, "first_index") == pytest.approx(1.0, abs=1e-12)
        assert not maximin_optimality_check(fig3, q)

    def test_qmax_greedy_optimal(self, fig3):
        assert maximin_optimality_check(fig3, fig3_qmax())
        assert maximin_optimality_check(fig3, fig3_qstar())
        assert greedy_policy(fig3_qmax()).probs[0].tolist() == [0.0, 1.0, 0.0]

    def test_random_maximin_sweep(self):
        rng = np.random.default_rng(29)
        checked = 0
        for _ in range(50):
            proc = random_elp(rng)
            qs = optimal_q(proc)
            q = random_maximin_q(proc, qs, rng)
            pi = random_policy(rng, proc.n_states, proc.n_actions)
            assert is_maximin_q(proc, pi, q, q_star=qs)
            assert maximin_optimality_check(proc, q)
            checked += 1
        assert checked == 50


class TestStrongDuality:
    def test_fig3_optimal(self, fig3):
        rep = verify_strong_duality(fig3, ACTION2)
        assert rep.equal and not rep.mu_suboptimal
        assert rep.minimax_value == pytest.approx(2.0, abs=1e-12)
        assert rep.maximin_lower == pytest.approx(2.0, abs=1e-12)
        assert rep.J_mu == pytest.approx(2.0, abs=1e-12)

    def test_fig3_suboptimal(self, fig3):
        rep = verify_strong_duality(fig3, ACTION1)
        assert not rep.equal and rep.mu_suboptimal
        assert rep.minimax_value == pytest.approx(2.0)
        assert rep.J_mu == pytest.approx(1.0)
        assert "warning" in rep.summary()

    def test_zero_reward(self):
        proc = zero_reward_elp()
        rep = verify_strong_duality(proc, Policy.uniform(3, 2))
        assert rep.equal
        assert rep.minimax_value == pytest.approx(0.0, abs=1e-15)
        assert rep.J_mu == pytest.approx(0.0, abs=1e-15)

    def test_random_against_enumeration(self):
        rng = np.random.default_rng(30)
        for _ in range(100):
            proc = random_elp(rng)
            rep = verify_strong_duality(proc, greedy_policy(value_iteration(proc).q), tol=1e-8)
            assert rep.equal
            assert abs(rep.minimax_value - optimal_J_by_enumeration(proc)[0]) < 1e-7


class TestVForm:
    def test_counterexample_report(self):
        rep = vform_counterexample()
        assert rep.feasible and rep.optimal
        assert rep.objective == pytest.approx(0.5)
        assert rep.state0_backups == (1.0, 1.0) and rep.tied_at_state0
        assert rep.v_star0 == pytest.approx(1.0)
        assert rep.n_constraints == 5

    def test_zero_infeasible(self):
        assert not vform_counterexample((0.0, 0.0, 0.0, 0.0)).feasible

    def test_lp_optimum_by_linprog(self):
        mdp = vform_mdp()
        A, b = mdp.lp_constraints()
        c = (1 - mdp.gamma) * mdp.init_dist
        res = linprog(c, A_ub=-A, b_ub=-b, bounds=[(None, None)] * 4, method="highs")
        assert res.status == 0
        assert res.fun == pytest.approx(0.5, abs=1e-9)

    def test_optimal_policy_prefers_state2(self):
        mdp = vform_mdp()
        b = mdp.backups(mdp.optimal_v())[0]
        assert b[1] > b[0]


class TestMultiplierCsv:
    def test_round_trip(self, fig3, tmp_path):
        lam = canonical_multiplier(fig3, Policy.uniform(6, 3))
        save_multiplier_csv(fig3, lam, tmp_path / "lam.csv")
        np.testing.assert_array_equal(load_multiplier_csv(fig3, tmp_path / "lam.csv").weights, lam.weights)

    def test_omitted_pairs_zero(self, fig3):
        lam = multiplier_from_csv(fig3, "state,action,weight\n0,2,1.5\n")
        assert lam.weights[0, 1] == 1.5 and lam.total() == 1.5

    def test_negative_rejected(self, fig3):
        with pytest.raises(QFormatError):
            multiplier_from_csv(fig3, "state,action,weight\n0,2,-1\n")

    def test_text_has_all_pairs(self, fig3):
        assert len(multiplier_to_csv(fig3, Multiplier.zeros(6, 3)).strip().splitlines()) == 19
