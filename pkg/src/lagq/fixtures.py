"""Hand-built processes and Q-tables used as exact exhibits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elp import EpisodicProcess

FIG3_ACTIONS = ("1", "2", "3")


def fig3_elp() -> EpisodicProcess:
    """Six-state, three-action process where only terminals 4 and 5 pay reward.

    From 0, action k goes to state k.  State 1 leads to terminal 4 (reward 1),
    states 2 and 3 lead to terminal 5 (reward 2).  Terminals reset to 0 and
    the step-0 state is 4.
    """
    n, m = 6, 3
    P = np.zeros((n, m, n))
    for a in range(m):
        P[0, a, a + 1] = 1.0
    P[1, :, 4] = 1.0
    P[2, :, 5] = 1.0
    P[3, :, 5] = 1.0
    P[4, :, 0] = 1.0
    P[5, :, 0] = 1.0
    reward = np.array([0, 0, 0, 0, 1, 2], dtype=float)
    reset = np.eye(n)[0]
    terminal = np.array([False, False, False, False, True, True])
    return EpisodicProcess(P, reward, reset, terminal, start_state=4,
                           state_names=tuple(str(s) for s in range(n)),
                           action_names=FIG3_ACTIONS)


def fig3_qstar() -> np.ndarray:
    q = np.full((6, 3), 2.0)
    q[0, 0] = 1.0
    q[1, :] = 1.0
    return q


def fig3_qmax() -> np.ndarray:
    """A maximin Q-table that is strictly below Q* off the optimal path."""
    q = np.zeros((6, 3))
    q[4, :] = q[5, :] = 2.0
    q[0, 0] = 1.0
    q[1, :] = 1.0
    q[0, 1] = 2.0
    q[2, :] = 2.0
    q[0, 2] = 1.0
    q[3, :] = 1.5
    return q


def fig3_constant_q(value: float = 2.0) -> np.ndarray:
    return np.full((6, 3), float(value))


def zero_reward_elp() -> EpisodicProcess:
    """Two non-terminals and one terminal, every reward zero."""
    P = np.zeros((3, 2, 3))
    P[0, 0, 1] = 1.0
    P[0, 1, 2] = 1.0
    P[1, :, 2] = 1.0
    P[2, :, 0] = 1.0
    return EpisodicProcess(P, np.zeros(3), np.eye(3)[0], np.array([False, False, True]),
                           start_state=2, state_names=("a", "b", "end"), action_names=("x", "y"))


BUILTINS = {
    "fig3": fig3_elp,
    "zero": zero_reward_elp,
}


# ---------------------------------------------------------------------------
# discounted V-form exhibit


@dataclass(frozen=True, eq=False)
class VFormMdp:
    """Discounted MDP with state-action rewards ``reward[s, a]``."""

    transition: np.ndarray
    reward: np.ndarray
    init_dist: np.ndarray
    gamma: float

    def backups(self, v) -> np.ndarray:
        """One-step values ``R(s,a) + gamma * E[V(s')]`` for every pair."""
        return self.reward + self.gamma * (self.transition @ np.asarray(v, dtype=float))

    def lp_constraints(self) -> tuple[np.ndarray, np.ndarray]:
        """Distinct rows of ``V(s) - gamma P V >= R(s,a)`` as ``(A, b)`` with ``A V >= b``."""
        n, m = self.reward.shape
        rows = {}
        for s in range(n):
            for a in range(m):
                row = -self.gamma * self.transition[s, a]
                row[s] += 1.0
                rows.setdefault(tuple(row) + (self.reward[s, a],), None)
        arr = np.array(list(rows))
        return arr[:, :-1], arr[:, -1]

    def objective(self, v) -> float:
        return float((1.0 - self.gamma) * (self.init_dist @ np.asarray(v, dtype=float)))

    def optimal_v(self, tol: float = 1e-13, max_iters: int = 10_000) -> np.ndarray:
        v = np.zeros(self.reward.shape[0])
        for _ in range(max_iters):
            nv = self.backups(v).max(axis=1)
            if np.max(np.abs(nv - v)) < tol:
                return nv
            v = nv
        return v


@dataclass(frozen=True)
class VFormReport:
    v_min: tuple[float, ...]
    feasible: bool
    objective: float
    certified_lower_bound: float
    optimal: bool
    state0_backups: tuple[float, float]
    tied_at_state0: bool
    v_star0: float
    n_constraints: int


def vform_mdp() -> VFormMdp:
    n, m = 4, 2
    P = np.zeros((n, m, n))
    P[0, 0, 1] = 1.0
    P[0, 1, 2] = 1.0
    P[1:, :, 3] = 1.0
    R = np.zeros((n, m))
    R[1, :] = 1.0
    R[2, :] = 2.0
    return VFormMdp(P, R, np.eye(n)[0], 0.5)


def vform_counterexample(v_min=(1.0, 2.0, 2.0, 0.0), tol: float = 1e-12) -> VFormReport:
    """Check that ``v_min`` is LP-optimal yet ties the two actions at state 0.

    Optimality is certified by the chain ``V3 >= 0.5 V3 => V3 >= 0``,
    ``V2 >= 0.5 V3 + 2 >= 2``, ``V0 >= 0.5 V2 >= 1``, so the objective
    ``0.5 V0`` is at least 0.5.
    """
    mdp = vform_mdp()
    v = np.asarray(v_min, dtype=float)
    A, b = mdp.lp_constraints()
    feasible = bool(np.all(A @ v - b >= -tol))
    obj = mdp.objective(v)
    bound = (1.0 - mdp.gamma) * mdp.gamma * 2.0
    backups = mdp.backups(v)[0]
    return VFormReport(
        v_min=tuple(v.tolist()),
        feasible=feasible,
        objective=obj,
        certified_lower_bound=bound,
        optimal=feasible and abs(obj - bound) <= tol,
        state0_backups=(float(backups[0]), float(backups[1])),
        tied_at_state0=bool(abs(backups[0] - backups[1]) <= tol),
        v_star0=float(mdp.optimal_v()[0]),
        n_constraints=len(b),
    )
