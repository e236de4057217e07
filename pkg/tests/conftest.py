import numpy as np
import pytest

from lagq.bellman import DiscountFn, apply_bellman, greedy_policy, on_policy_value
from lagq.elp import DiscountedMDP, Policy, random_elp, random_policy, stationary_distribution
from lagq.fixtures import fig3_elp

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE_RESULTS = {}


@pytest.fixture
def fig3():
    return fig3_elp()


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def random_cases(seed, n, **kw):
    """``n`` reproducible (process, policy, rng) triples."""
    rng = np.random.default_rng(seed)
    for _ in range(n):
        p = random_elp(rng, **kw)
        yield p, random_policy(rng, p.n_states, p.n_actions), rng


def random_discounted_mdp(rng, max_states=5, max_actions=3):
    n = int(rng.integers(1, max_states + 1))
    m = int(rng.integers(1, max_actions + 1))
    P = rng.dirichlet(np.ones(n), size=(n, m))
    return DiscountedMDP(P, rng.normal(size=n), rng.dirichlet(np.ones(n)))


def discounted_return_oracle(mdp, pi_probs, gamma_c):
    """sum_t gamma^(t-1) R(S_t) with S_1 ~ init, by the geometric-series solve."""
    P_pi = np.einsum("sap,sa->sp", mdp.transition, pi_probs)
    n = P_pi.shape[0]
    return float(mdp.init_dist @ np.linalg.solve(np.eye(n) - gamma_c * P_pi, mdp.reward))


def random_maximin_q(process, q_star, rng, max_repair=10_000):
    """A random Q with Q <= BQ whose terminal rows equal J*.

    Q* minus noise is pushed down by ``Q <- min(Q, BQ)`` until feasible, then
    joined with ``Q_pi`` for a policy that is greedy on the optimal path and
    random elsewhere.  The max of two sub-solutions is again one.
    """
    g = DiscountFn.episodic(process)
    q = q_star.copy()
    nt = ~process.terminal
    q[nt] -= np.abs(rng.normal(scale=rng.uniform(0.1, 2.0), size=q[nt].shape))
    for _ in range(max_repair):
        bq = apply_bellman(process, g, q)
        if np.all(q <= bq + 1e-12):
            break
        q = np.minimum(q, bq)
    opt = greedy_policy(q_star)
    on_path = stationary_distribution(process, opt).rho_pi > 1e-12
    probs = rng.dirichlet(np.ones(process.n_actions), size=process.n_states)
    probs[on_path] = opt.probs[on_path]
    q_pi = on_policy_value(process, Policy(probs))
    return np.maximum(q, q_pi)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
