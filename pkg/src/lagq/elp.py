"""Finite episodic learning processes.

An episodic learning process (ELP) is a finite MDP with state rewards whose
terminal states all reset into a common distribution, so that a single
infinite rollout is a sequence of finite episodes.  This module holds the
process/policy/trajectory types together with the exact (linear-algebra)
and sampled analyses used everywhere else in the package.
"""

from __future__ import annotations

import bisect
import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

PROB_TOL = 1e-12
LOAD_RENORM_TOL = 1e-9
MIN_RANDOM_MASS = 0.02


class ElpFormatError(ValueError):
    """Raised when an ELP file cannot be parsed into a process."""


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class EpisodicProcess:
    """A finite MDP ``(S, A, P, R, rho)`` with a terminal mask and a step-0 state.

    ``transition[s, a, s']`` is P(s'|s,a), ``reward[s]`` is R(s).  Only shapes
    are checked at construction; use :func:`validate_elp` for the semantic
    conditions (stochastic rows, homogeneous reset, finite time).
    """

    transition: np.ndarray
    reward: np.ndarray
    reset_dist: np.ndarray
    terminal: np.ndarray
    start_state: int
    state_names: tuple[str, ...] = ()
    action_names: tuple[str, ...] = ()

    def __post_init__(self):
        P = _frozen(self.transition)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"transition must have shape (S, A, S), got {P.shape}")
        n_s, n_a = P.shape[:2]
        R = _frozen(self.reward)
        rho = _frozen(self.reset_dist)
        term = _frozen(self.terminal, dtype=bool)
        for name, arr in (("reward", R), ("reset_dist", rho), ("terminal", term)):
            if arr.shape != (n_s,):
                raise ValueError(f"{name} must have shape ({n_s},), got {arr.shape}")
        if not 0 <= int(self.start_state) < n_s:
            raise ValueError(f"start_state {self.start_state} out of range")
        snames = tuple(self.state_names) or tuple(str(i) for i in range(n_s))
        anames = tuple(self.action_names) or tuple(str(i) for i in range(n_a))
        if len(snames) != n_s or len(anames) != n_a:
            raise ValueError("name lists do not match the transition shape")
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "reset_dist", rho)
        object.__setattr__(self, "terminal", term)
        object.__setattr__(self, "start_state", int(self.start_state))
        object.__setattr__(self, "state_names", snames)
        object.__setattr__(self, "action_names", anames)

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def terminal_states(self) -> np.ndarray:
        return np.flatnonzero(self.terminal)

    @property
    def nonterminal_states(self) -> np.ndarray:
        return np.flatnonzero(~self.terminal)

    def state_index(self, name: str) -> int:
        try:
            return self.state_names.index(name)
        except ValueError:
            raise KeyError(f"unknown state {name!r}") from None

    def action_index(self, name: str) -> int:
        try:
            return self.action_names.index(name)
        except ValueError:
            raise KeyError(f"unknown action {name!r}") from None

    def replace(self, **changes) -> "EpisodicProcess":
        fields = dict(
            transition=self.transition,
            reward=self.reward,
            reset_dist=self.reset_dist,
            terminal=self.terminal,
            start_state=self.start_state,
            state_names=self.state_names,
            action_names=self.action_names,
        )
        fields.update(changes)
        return EpisodicProcess(**fields)


@dataclass(frozen=True, eq=False)
class Policy:
    """Stationary stochastic policy, ``probs[s, a] = pi(a|s)``."""

    probs: np.ndarray

    def __post_init__(self):
        p = _frozen(self.probs)
        if p.ndim != 2:
            raise ValueError(f"policy matrix must be 2-D, got shape {p.shape}")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("policy probabilities must be finite and nonnegative")
        bad = np.flatnonzero(np.abs(p.sum(axis=1) - 1.0) > PROB_TOL)
        if bad.size:
            raise ValueError(f"policy rows {bad.tolist()} do not sum to 1")
        object.__setattr__(self, "probs", p)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    @classmethod
    def uniform(cls, n_states: int, n_actions: int) -> "Policy":
        return cls(np.full((n_states, n_actions), 1.0 / n_actions))

    @classmethod
    def deterministic(cls, actions: Sequence[int], n_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        p = np.zeros((len(actions), n_actions))
        p[np.arange(len(actions)), actions] = 1.0
        return cls(p)

    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs == 0.0) | (self.probs == 1.0)))


@dataclass(frozen=True)
class Violation:
    kind: str
    message: str
    states: tuple[int, ...] = ()
    action: int | None = None

    def __str__(self) -> str:
        return f"{self.kind}: {self.message}"


def _check_dims(process: EpisodicProcess, pi: Policy) -> None:
    if pi.probs.shape != (process.n_states, process.n_actions):
        raise ValueError(
            f"policy shape {pi.probs.shape} does not match process "
            f"({process.n_states}, {process.n_actions})"
        )


def trapped_set(process: EpisodicProcess) -> np.ndarray:
    """Greatest set of non-terminal states some action choice never leaves.

    Peels ``X <- {s in X : exists a, supp P(.|s,a) subset of X}`` starting from
    the non-terminal states.  Empty iff every policy terminates in finite
    expected time.
    """
    inside = ~process.terminal.copy()
    support = process.transition > 0
    while True:
        # stays[s, a]: all successor mass of (s, a) lands inside X
        stays = ~np.any(support & ~inside[None, None, :], axis=2)
        keep = inside & stays.any(axis=1)
        if np.array_equal(keep, inside):
            return np.flatnonzero(inside)
        inside = keep


def validate_elp(process: EpisodicProcess) -> list[Violation]:
    """Check the ELP conditions; an empty list means the process is valid."""
    out: list[Violation] = []
    P = process.transition
    names = process.state_names
    anames = process.action_names

    for s, a in zip(*np.nonzero(np.any(P < 0, axis=2))):
        out.append(Violation("negative_probability",
                             f"P(.|{names[s]},{anames[a]}) has negative entries", (int(s),), int(a)))
    row_sums = P.sum(axis=2)
    for s, a in zip(*np.nonzero(np.abs(row_sums - 1.0) > PROB_TOL)):
        out.append(Violation("non_stochastic_row",
                             f"P(.|{names[s]},{anames[a]}) sums to {row_sums[s, a]!r}", (int(s),), int(a)))

    rho = process.reset_dist
    if np.any(rho < 0) or abs(rho.sum() - 1.0) > PROB_TOL:
        out.append(Violation("reset_not_stochastic", f"reset distribution sums to {rho.sum()!r}"))

    for s in process.terminal_states:
        for a in range(process.n_actions):
            if not np.array_equal(P[s, a], rho):
                out.append(Violation("reset_inhomogeneous",
                                     f"P(.|{names[s]},{anames[a]}) differs from the reset distribution",
                                     (int(s),), a))

    trapped = trapped_set(process)
    if trapped.size:
        out.append(Violation("trapped_set",
                             "states {" + ", ".join(names[s] for s in trapped) + "} can avoid termination forever",
                             tuple(int(s) for s in trapped)))

    if not process.terminal[process.start_state]:
        out.append(Violation("start_not_terminal",
                             f"start state {names[process.start_state]} is not terminal",
                             (process.start_state,)))
    return out


def induced_chain(process: EpisodicProcess, pi: Policy) -> np.ndarray:
    """State transition matrix ``P_pi[s, s'] = sum_a P(s'|s,a) pi(a|s)``."""
    _check_dims(process, pi)
    return np.einsum("sap,sa->sp", process.transition, pi.probs)


@dataclass(frozen=True, eq=False)
class StationaryDistribution:
    rho_pi: np.ndarray
    expected_T: float


def _stationary_from_chain(P_pi: np.ndarray, terminal: np.ndarray) -> StationaryDistribution:
    n = P_pi.shape[0]
    A = P_pi.T - np.eye(n)
    # the balance equations are rank n-1; swap one for the normalisation row
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        rho = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise ValueError("stationary distribution is not unique; input is not a valid ELP") from exc
    # unreachable states come out as +-1e-17 round-off
    rho = np.maximum(rho, 0.0)
    rho /= rho.sum()
    mass = rho[terminal].sum()
    if not mass > 0:
        raise ValueError("stationary distribution puts no mass on terminal states")
    return StationaryDistribution(_frozen(rho), float(1.0 / mass))


def stationary_distribution(process: EpisodicProcess, pi: Policy) -> StationaryDistribution:
    """Unique stationary distribution of the induced chain and the mean episode length."""
    return _stationary_from_chain(induced_chain(process, pi), process.terminal)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Multi-episode rollout, recorded from t = 1 (the step-0 state is not stored).

    ``episode_ends`` holds the step indices at which a terminal state was
    visited; the last step of the trajectory is always one of them.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    episode_ends: np.ndarray
    rng_seed: int | None = None

    @property
    def steps(self) -> list[tuple[int, int, float]]:
        return list(zip(self.states.tolist(), self.actions.tolist(), self.rewards.tolist()))

    @property
    def n_episodes(self) -> int:
        return len(self.episode_ends)

    def __len__(self) -> int:
        return len(self.states)

    def episodes(self) -> Iterator[slice]:
        start = 0
        for end in self.episode_ends.tolist():
            yield slice(start, end + 1)
            start = end + 1

    def same_as(self, other: "Trajectory") -> bool:
        return (
            np.array_equal(self.states, other.states)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.rewards, other.rewards)
            and np.array_equal(self.episode_ends, other.episode_ends)
        )


def _cumulative_rows(probs: np.ndarray) -> list:
    cum = np.cumsum(probs, axis=-1)
    cum = cum / cum[..., -1:]
    return cum.tolist()


class EpisodeSampler:
    """Continuing rollout stream of a fixed policy, driven by one seeded generator.

    Successive calls to :meth:`sample` continue the same infinite trajectory,
    so a stream consumed in blocks is identical to one long rollout.
    """

    _CHUNK = 4096

    def __init__(self, process: EpisodicProcess, pi: Policy, seed: int):
        _check_dims(process, pi)
        self.process = process
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self._p_cum = _cumulative_rows(process.transition)
        self._pi_cum = _cumulative_rows(pi.probs)
        self._terminal = process.terminal.tolist()
        self._reward = process.reward.tolist()
        self._buf: list[float] = []
        self._pos = 0
        self._state = process.start_state
        self._action = self._draw(self._pi_cum[self._state])

    def _uniform(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self._rng.random(self._CHUNK).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def _draw(self, cum_row) -> int:
        return bisect.bisect_right(cum_row, self._uniform())

    def sample(self, n_episodes: int, max_steps: int | None = None) -> Trajectory:
        if n_episodes < 1:
            raise ValueError("n_episodes must be >= 1")
        states, actions, rewards, ends = [], [], [], []
        s, a = self._state, self._action
        p_cum, pi_cum, term, rew = self._p_cum, self._pi_cum, self._terminal, self._reward
        while len(ends) < n_episodes:
            s = self._draw(p_cum[s][a])
            a = self._draw(pi_cum[s])
            states.append(s)
            actions.append(a)
            rewards.append(rew[s])
            if term[s]:
                ends.append(len(states) - 1)
            if max_steps is not None and len(states) > max_steps:
                raise RuntimeError(f"rollout exceeded {max_steps} steps; process is not finite-time")
        self._state, self._action = s, a
        return Trajectory(
            np.array(states, dtype=int),
            np.array(actions, dtype=int),
            np.array(rewards, dtype=float),
            np.array(ends, dtype=int),
            self.seed,
        )


def rollout(process: EpisodicProcess, pi: Policy, rng_seed: int, n_episodes: int) -> Trajectory:
    """Simulate ``n_episodes`` complete episodes from the step-0 start state."""
    return EpisodeSampler(process, pi, rng_seed).sample(n_episodes)


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n: int

    def within(self, value: float, n_se: float = 4.0, atol: float = 1e-12) -> bool:
        # atol covers zero-variance samples compared against a solved value
        return abs(self.mean - value) <= n_se * self.stderr + atol


def _episode_sums(traj: Trajectory, values: np.ndarray) -> np.ndarray:
    csum = np.concatenate([[0.0], np.cumsum(values)])
    ends = traj.episode_ends + 1
    starts = np.concatenate([[0], ends[:-1]])
    return csum[ends] - csum[starts]


def performance_J(process: EpisodicProcess, pi: Policy, mode: str = "exact", *,
                  seed: int | None = None, n_episodes: int | None = None):
    """Expected total reward per episode.

    ``mode="exact"`` returns a float read off the on-policy value at a terminal
    state; ``mode="monte_carlo"`` returns an :class:`McEstimate` over
    ``n_episodes`` simulated episodes.
    """
    if mode == "exact":
        from .bellman import on_policy_value

        q_pi = on_policy_value(process, pi)
        return float(q_pi[process.start_state, 0])
    if mode == "monte_carlo":
        if seed is None or n_episodes is None:
            raise ValueError("monte_carlo mode needs seed and n_episodes")
        traj = rollout(process, pi, seed, n_episodes)
        sums = _episode_sums(traj, traj.rewards)
        se = float(sums.std(ddof=1) / math.sqrt(n_episodes)) if n_episodes > 1 else math.inf
        return McEstimate(float(sums.mean()), se, n_episodes)
    raise ValueError(f"unknown mode {mode!r}")


def episode_expectation(process: EpisodicProcess, pi: Policy, f: np.ndarray) -> float:
    """E_pi[sum_{t=1}^T f(S_t)] by a first-passage linear solve."""
    P_pi = induced_chain(process, pi)
    cont = (~process.terminal).astype(float)
    h = np.linalg.solve(np.eye(process.n_states) - cont[:, None] * P_pi, np.asarray(f, dtype=float))
    return float(process.reset_dist @ h)


def ergodic_transform(process: EpisodicProcess, pi: Policy, f, mode: str = "exact", *,
                      seed: int | None = None, n_episodes: int | None = None):
    """Both sides of ``E_{rho_pi}[f] = E[sum_t f(S_t)] / E[T]``.

    The left side always comes from the stationary distribution.  The right
    side is exact (first-passage solves) or, in ``monte_carlo`` mode, a ratio
    estimate with a delta-method standard error.
    """
    f = np.asarray(f, dtype=float)
    lhs = float(stationary_distribution(process, pi).rho_pi @ f)
    if mode == "exact":
        ones = np.ones(process.n_states)
        rhs = episode_expectation(process, pi, f) / episode_expectation(process, pi, ones)
        return lhs, rhs
    if mode == "monte_carlo":
        if seed is None or n_episodes is None:
            raise ValueError("monte_carlo mode needs seed and n_episodes")
        traj = rollout(process, pi, seed, n_episodes)
        sums = _episode_sums(traj, f[traj.states])
        lengths = np.diff(np.concatenate([[-1], traj.episode_ends])).astype(float)
        ratio = sums.mean() / lengths.mean()
        resid = sums - ratio * lengths
        se = float(resid.std(ddof=1) / (lengths.mean() * math.sqrt(n_episodes)))
        return lhs, McEstimate(float(ratio), se, n_episodes)
    raise ValueError(f"unknown mode {mode!r}")


@dataclass(frozen=True, eq=False)
class DiscountedMDP:
    """Non-terminating MDP with state rewards and an initial distribution."""

    transition: np.ndarray
    reward: np.ndarray
    init_dist: np.ndarray
    state_names: tuple[str, ...] = ()
    action_names: tuple[str, ...] = ()


def discounted_to_elp(mdp: DiscountedMDP, gamma_c: float) -> EpisodicProcess:
    """Recast a discounted MDP as an ELP by adding a zero-reward terminal state.

    Every original transition is scaled by ``gamma_c`` and the missing
    ``1 - gamma_c`` goes to the new terminal state, which resets into the
    original initial distribution.  The new state is the last index.
    """
    if not 0.0 < gamma_c < 1.0:
        raise ValueError(f"gamma_c must lie in (0, 1), got {gamma_c}")
    P = np.asarray(mdp.transition, dtype=float)
    n, m = P.shape[:2]
    init = np.concatenate([np.asarray(mdp.init_dist, dtype=float), [0.0]])
    Pt = np.zeros((n + 1, m, n + 1))
    Pt[:n, :, :n] = gamma_c * P
    Pt[:n, :, n] = 1.0 - gamma_c
    Pt[n, :, :] = init
    terminal = np.zeros(n + 1, dtype=bool)
    terminal[n] = True
    snames = tuple(mdp.state_names) or tuple(str(i) for i in range(n))
    return EpisodicProcess(
        transition=Pt,
        reward=np.concatenate([np.asarray(mdp.reward, dtype=float), [0.0]]),
        reset_dist=init,
        terminal=terminal,
        start_state=n,
        state_names=snames + ("_end",),
        action_names=tuple(mdp.action_names),
    )


# ---------------------------------------------------------------------------
# random instances and exhaustive policy search


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int,
                  sparsity: float = 0.3) -> Policy:
    p = rng.dirichlet(np.ones(n_actions), size=n_states)
    drop = rng.random(p.shape) < sparsity
    drop[np.arange(n_states), p.argmax(axis=1)] = False
    p[drop] = 0.0
    return Policy(p / p.sum(axis=1, keepdims=True))


def random_elp(rng: np.random.Generator, max_states: int = 8, max_actions: int = 4,
               max_policies: int = 4 ** 3, deterministic_frac: float = 0.4,
               integer_rewards: bool = False) -> EpisodicProcess:
    """Draw a valid random ELP, rejecting samples that fail :func:`validate_elp`.

    The number of non-terminal states is capped so that exhaustive search
    over deterministic policies visits at most ``max_policies`` candidates.
    """
    while True:
        n_a = int(rng.integers(1, max_actions + 1))
        max_nt = max_states - 1
        if n_a > 1:
            max_nt = min(max_nt, int(math.floor(math.log(max_policies) / math.log(n_a) + 1e-9)))
        n_nt = int(rng.integers(1, max_nt + 1))
        n_t = int(rng.integers(1, max_states - n_nt + 1))
        n = n_nt + n_t
        terminal = np.zeros(n, dtype=bool)
        terminal[n_nt:] = True

        reset = rng.dirichlet(np.ones(n_nt)) * (rng.random(n_nt) < 0.7)
        reset[reset < MIN_RANDOM_MASS] = 0.0
        if reset.sum() == 0:
            reset[rng.integers(n_nt)] = 1.0
        reset = np.concatenate([reset / reset.sum(), np.zeros(n_t)])

        P = np.zeros((n, n_a, n))
        for s in range(n_nt):
            for a in range(n_a):
                if rng.random() < deterministic_frac:
                    P[s, a, rng.integers(n)] = 1.0
                else:
                    w = rng.dirichlet(np.ones(n)) * (rng.random(n) < 0.5)
                    # tiny masses give near-trapped chains with huge E[T]
                    w[w < MIN_RANDOM_MASS] = 0.0
                    if w.sum() == 0:
                        w[rng.integers(n)] = 1.0
                    P[s, a] = w / w.sum()
        P[n_nt:, :, :] = reset
        if integer_rewards:
            R = rng.integers(-3, 4, size=n).astype(float)
        else:
            R = rng.normal(size=n)
        proc = EpisodicProcess(P, R, reset, terminal, start_state=n_nt)
        if not validate_elp(proc):
            return proc


def deterministic_policies(process: EpisodicProcess) -> np.ndarray:
    """All deterministic policies, varying actions on non-terminal states only."""
    nt = process.nonterminal_states
    combos = np.array(list(itertools.product(range(process.n_actions), repeat=len(nt))), dtype=int)
    out = np.zeros((len(combos), process.n_states), dtype=int)
    if len(nt):
        out[:, nt] = combos
    return out


def optimal_J_by_enumeration(process: EpisodicProcess) -> tuple[float, np.ndarray]:
    """Best episodic return over deterministic stationary policies, by brute force.

    Each candidate is scored through its stationary distribution
    (``J = E[T] * E_rho[R]``), independently of any Bellman machinery.
    """
    acts = deterministic_policies(process)
    n = process.n_states
    P_pi = process.transition[np.arange(n)[None, :], acts, :]  # (K, S, S)
    A = np.swapaxes(P_pi, 1, 2) - np.eye(n)[None]
    A[:, -1, :] = 1.0
    b = np.zeros((len(acts), n, 1))
    b[:, -1, 0] = 1.0
    rho = np.linalg.solve(A, b)[..., 0]
    J = (rho @ process.reward) / rho[:, process.terminal].sum(axis=1)
    best = int(np.argmax(J))
    return float(J[best]), acts[best]


# ---------------------------------------------------------------------------
# file format


def elp_to_dict(process: EpisodicProcess) -> dict:
    sn, an = process.state_names, process.action_names
    transitions = {}
    for s in range(process.n_states):
        if process.terminal[s] and all(np.array_equal(process.transition[s, a], process.reset_dist)
                                       for a in range(process.n_actions)):
            continue
        transitions[sn[s]] = {
            an[a]: {sn[t]: float(p) for t, p in enumerate(process.transition[s, a]) if p != 0.0}
            for a in range(process.n_actions)
        }
    return {
        "states": list(sn),
        "actions": list(an),
        "terminal": [sn[s] for s in process.terminal_states],
        "start_state": sn[process.start_state],
        "reset": {sn[s]: float(p) for s, p in enumerate(process.reset_dist) if p != 0.0},
        "rewards": {sn[s]: float(r) for s, r in enumerate(process.reward)},
        "transitions": transitions,
    }


def _prob_row(row: dict, index: dict, what: str, strict: bool) -> np.ndarray:
    out = np.zeros(len(index))
    if not isinstance(row, dict):
        raise ElpFormatError(f"{what}: expected a map of state -> probability")
    for name, p in row.items():
        if name not in index:
            raise ElpFormatError(f"{what}: unknown state {name!r}")
        if not isinstance(p, (int, float)) or isinstance(p, bool):
            raise ElpFormatError(f"{what}: probability for {name!r} is not a number")
        out[index[name]] = float(p)
    if strict:
        if np.any(out < 0):
            raise ElpFormatError(f"{what}: negative probability")
        dev = abs(out.sum() - 1.0)
        if dev > LOAD_RENORM_TOL:
            raise ElpFormatError(f"{what}: probabilities sum to {out.sum()!r}")
        if dev > PROB_TOL:
            out = out / out.sum()
    return out


def elp_from_dict(data: dict, strict: bool = True) -> EpisodicProcess:
    """Build a process from the JSON structure.

    With ``strict`` (the default) rows off by more than 1e-12 but at most
    1e-9 are renormalised and anything worse is an error; rows already
    within 1e-12 are kept verbatim so that save/load round-trips exactly.  ``strict=False`` keeps raw values so
    that :func:`validate_elp` can report the problems instead.
    """
    try:
        states = [str(s) for s in data["states"]]
        actions = [str(a) for a in data["actions"]]
        terminal_names = data["terminal"]
        start = data["start_state"]
        reset_map = data["reset"]
    except (KeyError, TypeError) as exc:
        raise ElpFormatError(f"missing key {exc}") from None
    if len(set(states)) != len(states) or len(set(actions)) != len(actions):
        raise ElpFormatError("duplicate state or action names")
    index = {s: i for i, s in enumerate(states)}
    n, m = len(states), len(actions)
    terminal = np.zeros(n, dtype=bool)
    for name in terminal_names:
        if name not in index:
            raise ElpFormatError(f"terminal: unknown state {name!r}")
        terminal[index[name]] = True
    if start not in index:
        raise ElpFormatError(f"start_state: unknown state {start!r}")
    reset = _prob_row(reset_map, index, "reset", strict)

    rewards = np.zeros(n)
    for name, r in data.get("rewards", {}).items():
        if name not in index:
            raise ElpFormatError(f"rewards: unknown state {name!r}")
        rewards[index[name]] = float(r)

    trans = data.get("transitions", {})
    P = np.zeros((n, m, n))
    for s, sname in enumerate(states):
        rows = trans.get(sname)
        if rows is None:
            if not terminal[s]:
                raise ElpFormatError(f"transitions: missing rows for non-terminal state {sname!r}")
            P[s, :, :] = reset
            continue
        for a, aname in enumerate(actions):
            if aname not in rows:
                if terminal[s]:
                    P[s, a] = reset
                    continue
                raise ElpFormatError(f"transitions: missing row ({sname!r}, {aname!r})")
            P[s, a] = _prob_row(rows[aname], index, f"transitions[{sname}][{aname}]", strict)
        extra = set(rows) - set(actions)
        if extra:
            raise ElpFormatError(f"transitions[{sname}]: unknown actions {sorted(extra)}")
    unknown = set(trans) - set(states)
    if unknown:
        raise ElpFormatError(f"transitions: unknown states {sorted(unknown)}")
    return EpisodicProcess(P, rewards, reset, terminal, index[start], tuple(states), tuple(actions))


def load_elp(path, strict: bool = True) -> EpisodicProcess:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ElpFormatError(f"{path}: invalid JSON ({exc})") from None
    return elp_from_dict(data, strict=strict)


def save_elp(process: EpisodicProcess, path) -> None:
    Path(path).write_text(json.dumps(elp_to_dict(process), indent=2) + "\n", encoding="utf-8")
