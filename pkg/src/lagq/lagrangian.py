"""Lagrangian of the Bellman-constrained Q problem, its dual form and saddle checks.

For a conjugate policy ``pi`` the Lagrangian is

    L_pi(Q, lam) = E_pi[Q(S_T, A_T)] + sum_{s,a} lam(s,a) (BQ - Q)(s,a)

with ``B`` the episodic Bellman operator.  Minimax and maximin Q-functions
are classified by feasibility plus an objective match against ``Q*``,
which is the certified optimum of both constrained problems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bellman import (DimensionMismatch, DiscountFn, QFormatError, _read_pairs, _write_pairs,
                      apply_bellman, greedy_policy, on_policy_value, optimal_q)
from .elp import (EpisodicProcess, McEstimate, Policy, optimal_J_by_enumeration, rollout,
                  stationary_distribution)

DEFAULT_TOL = 1e-8
ENUMERATION_LIMIT = 1 << 14


@dataclass(frozen=True, eq=False)
class Multiplier:
    weights: np.ndarray

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 2 or not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("multiplier weights must be a finite nonnegative matrix")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def zeros(cls, n_states: int, n_actions: int) -> "Multiplier":
        return cls(np.zeros((n_states, n_actions)))

    def total(self) -> float:
        return float(self.weights.sum())


def _bq(process: EpisodicProcess, q) -> np.ndarray:
    return apply_bellman(process, DiscountFn.episodic(process), q)


def occupancy(process: EpisodicProcess, pi: Policy) -> np.ndarray:
    """Stationary state-action frequencies ``rho_pi(s) pi(a|s)``."""
    return stationary_distribution(process, pi).rho_pi[:, None] * pi.probs


def terminal_expectation(process: EpisodicProcess, pi: Policy, q, mode: str = "exact", *,
                         seed: int | None = None, n_episodes: int | None = None):
    """``E_pi[Q(S_T, A_T)]``, exactly or as a Monte-Carlo estimate."""
    q = np.asarray(q, dtype=float)
    if q.shape != (process.n_states, process.n_actions):
        raise DimensionMismatch("Q shape does not match the process")
    if mode == "exact":
        st = stationary_distribution(process, pi)
        occ = st.rho_pi[:, None] * pi.probs
        return float(st.expected_T * np.sum(occ[process.terminal] * q[process.terminal]))
    if mode == "monte_carlo":
        if seed is None or n_episodes is None:
            raise ValueError("monte_carlo mode needs seed and n_episodes")
        traj = rollout(process, pi, seed, n_episodes)
        ends = traj.episode_ends
        vals = q[traj.states[ends], traj.actions[ends]]
        se = float(vals.std(ddof=1) / math.sqrt(n_episodes)) if n_episodes > 1 else math.inf
        return McEstimate(float(vals.mean()), se, n_episodes)
    raise ValueError(f"unknown mode {mode!r}")


def lagrangian_value(process: EpisodicProcess, pi: Policy, q, lam: Multiplier,
                     mode: str = "exact", *, seed: int | None = None,
                     n_episodes: int | None = None):
    q = np.asarray(q, dtype=float)
    if lam.weights.shape != q.shape:
        raise DimensionMismatch("multiplier shape does not match Q")
    penalty = float(np.sum(lam.weights * (_bq(process, q) - q)))
    first = terminal_expectation(process, pi, q, mode, seed=seed, n_episodes=n_episodes)
    if isinstance(first, McEstimate):
        return McEstimate(first.mean + penalty, first.stderr, first.n)
    return first + penalty


def canonical_multiplier(process: EpisodicProcess, pi: Policy) -> Multiplier:
    """``lam_pi(s,a) = rho_pi(s) pi(a|s) E_pi[T]``."""
    st = stationary_distribution(process, pi)
    return Multiplier(st.rho_pi[:, None] * pi.probs * st.expected_T)


def dual_form_value(process: EpisodicProcess, pi: Policy, q) -> float:
    """``J(pi) + sum_{s non-terminal} lam_pi(s,a) (max Q(s,.) - Q(s,a))``."""
    q = np.asarray(q, dtype=float)
    lam = canonical_multiplier(process, pi).weights
    slack = q.max(axis=1, keepdims=True) - q
    nt = ~process.terminal
    J = float(on_policy_value(process, pi)[process.start_state, 0])
    return J + float(np.sum(lam[nt] * slack[nt]))


@dataclass(frozen=True)
class PairDetail:
    state: int
    action: int
    bellman_gap: float        # (BQ - Q)(s, a)
    weighted_bellman: float   # rho_pi(s,a) (BQ - Q)
    weighted_greedy: float    # rho_pi(s,a) (max Q - Q), zero on terminals


@dataclass(frozen=True)
class SaddleReport:
    feasible_primal: bool
    slack_pi_ok: bool
    slack_q_ok: bool
    max_violation: float
    tol: float
    per_pair_detail: list[PairDetail] = field(default_factory=list)

    @property
    def is_saddle(self) -> bool:
        return self.feasible_primal and self.slack_pi_ok and self.slack_q_ok

    def to_text(self, process: EpisodicProcess | None = None) -> str:
        sn = process.state_names if process else None
        an = process.action_names if process else None
        lines = [
            f"feasible_primal={str(self.feasible_primal).lower()}",
            f"slack_pi_ok={str(self.slack_pi_ok).lower()}",
            f"slack_q_ok={str(self.slack_q_ok).lower()}",
            f"saddle={str(self.is_saddle).lower()}",
            f"max_violation={self.max_violation:.3e}",
            "state,action,bellman_gap,weighted_bellman,weighted_greedy",
        ]
        for d in self.per_pair_detail:
            s = sn[d.state] if sn else d.state
            a = an[d.action] if an else d.action
            lines.append(f"{s},{a},{d.bellman_gap!r},{d.weighted_bellman!r},{d.weighted_greedy!r}")
        return "\n".join(lines)


def check_saddle(process: EpisodicProcess, pi: Policy, q, tol: float = DEFAULT_TOL) -> SaddleReport:
    """Complementary-slackness conditions for ``(Q, lam_pi)``.

    (1) ``BQ - Q <= tol``; (2) ``rho_pi (BQ - Q) = 0``; (3)
    ``rho_pi (max Q - Q) = 0`` on non-terminal states, all within ``tol``.
    """
    q = np.asarray(q, dtype=float)
    gap = _bq(process, q) - q
    occ = occupancy(process, pi)
    wb = occ * gap
    greedy_gap = q.max(axis=1, keepdims=True) - q
    wg = occ * greedy_gap
    wg[process.terminal] = 0.0
    v1 = max(float(gap.max()), 0.0)
    v2 = float(np.abs(wb).max())
    v3 = float(np.abs(wg).max())
    detail = [
        PairDetail(s, a, float(gap[s, a]), float(wb[s, a]), float(wg[s, a]))
        for s in range(process.n_states) for a in range(process.n_actions)
    ]
    return SaddleReport(v1 <= tol, v2 <= tol, v3 <= tol, max(v1, v2, v3), tol, detail)


def _qstar(process: EpisodicProcess, q_star=None) -> np.ndarray:
    if q_star is not None:
        return np.asarray(q_star, dtype=float)
    return optimal_q(process)


def is_minimax_q(process: EpisodicProcess, pi: Policy, q, tol: float = DEFAULT_TOL,
                 q_star=None) -> bool:
    """Feasible for ``Q >= BQ`` and matching the terminal objective of ``Q*``."""
    q = np.asarray(q, dtype=float)
    feasible = bool(np.all(q >= _bq(process, q) - tol))
    target = terminal_expectation(process, pi, _qstar(process, q_star))
    return feasible and abs(terminal_expectation(process, pi, q) - target) <= tol


def is_maximin_q(process: EpisodicProcess, pi: Policy, q, tol: float = DEFAULT_TOL,
                 q_star=None) -> bool:
    """Feasible for ``Q <= BQ`` and matching the terminal objective of ``Q*``."""
    q = np.asarray(q, dtype=float)
    feasible = bool(np.all(q <= _bq(process, q) + tol))
    target = terminal_expectation(process, pi, _qstar(process, q_star))
    return feasible and abs(terminal_expectation(process, pi, q) - target) <= tol


def optimal_J(process: EpisodicProcess) -> float:
    """Best achievable J: brute force when small, otherwise via ``greedy(Q*)``."""
    if process.n_actions ** len(process.nonterminal_states) <= ENUMERATION_LIMIT:
        return optimal_J_by_enumeration(process)[0]
    pi = greedy_policy(_qstar(process))
    return float(on_policy_value(process, pi)[process.start_state, 0])


@dataclass(frozen=True)
class DualityReport:
    minimax_value: float
    maximin_lower: float
    J_mu: float
    J_opt: float
    gap: float
    equal: bool
    mu_suboptimal: bool

    def summary(self) -> str:
        line = (f"minimax_value={self.minimax_value!r} J_mu={self.J_mu!r} "
                f"equal={str(self.equal).lower()} gap={self.gap:.3e}")
        if self.mu_suboptimal:
            line += f"\nwarning: mu is sub-optimal (J_mu={self.J_mu!r} < J*={self.J_opt!r})"
        return line


def verify_strong_duality(process: EpisodicProcess, mu: Policy, tol: float = DEFAULT_TOL,
                          q_star=None) -> DualityReport:
    """Compare the min-max value ``E_mu[Q*(S_T,A_T)]`` with ``J(mu)``.

    The max-min side is the dual-form minimum over Q, reached where every
    greedy slack vanishes, so it equals ``J(mu)``.  A sub-optimal ``mu`` is
    flagged rather than rejected.
    """
    qs = _qstar(process, q_star)
    minimax = terminal_expectation(process, mu, qs)
    J_mu = float(on_policy_value(process, mu)[process.start_state, 0])
    J_opt = float(on_policy_value(process, greedy_policy(qs))[process.start_state, 0])
    gap = abs(minimax - J_mu)
    return DualityReport(minimax, J_mu, J_mu, J_opt, gap, gap < tol, J_mu < J_opt - tol)


def maximin_optimality_check(process: EpisodicProcess, q, tol: float = DEFAULT_TOL) -> bool:
    """Whether greedy policies of ``q`` (both tie-breaks) reach the optimal J."""
    best = optimal_J(process)
    for tie in ("first_index", "uniform"):
        pi = greedy_policy(q, tie)
        if float(on_policy_value(process, pi)[process.start_state, 0]) < best - tol:
            return False
    return True


def greedy_J(process: EpisodicProcess, q, tie_break: str = "first_index") -> float:
    return float(on_policy_value(process, greedy_policy(q, tie_break))[process.start_state, 0])


# ---------------------------------------------------------------------------
# multiplier CSV


def multiplier_to_csv(process: EpisodicProcess, lam: Multiplier) -> str:
    return _write_pairs(process, lam.weights, "weight")


def multiplier_from_csv(process: EpisodicProcess, text: str) -> Multiplier:
    """Parse ``state,action,weight``; omitted pairs get weight 0."""
    w = _read_pairs(process, text, "weight", require_all=False)
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise QFormatError("multiplier weights must be finite and nonnegative")
    return Multiplier(w)


def save_multiplier_csv(process: EpisodicProcess, lam: Multiplier, path) -> None:
    Path(path).write_text(multiplier_to_csv(process, lam), encoding="utf-8")


def load_multiplier_csv(process: EpisodicProcess, path) -> Multiplier:
    return multiplier_from_csv(process, Path(path).read_text(encoding="utf-8"))
