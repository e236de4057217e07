"""Generalized Bellman optimality operator and tabular solvers.

Q-functions are plain ``(n_states, n_actions)`` float arrays throughout.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .elp import EpisodicProcess, Policy

TIE_TOL = 1e-12


class DimensionMismatch(ValueError):
    """A Q-table, policy or file does not fit the owning process."""


class QFormatError(ValueError):
    """A Q-function CSV is malformed."""


@dataclass(frozen=True, eq=False)
class DiscountFn:
    """State-dependent discount ``gamma(s)`` applied to successor values."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float)
        if g.ndim != 1:
            raise ValueError("gamma must be a vector over states")
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)

    @classmethod
    def episodic(cls, process: EpisodicProcess) -> "DiscountFn":
        return cls((~process.terminal).astype(float))

    @classmethod
    def zero(cls, n_states: int) -> "DiscountFn":
        return cls(np.zeros(n_states))

    def problems(self, process: EpisodicProcess) -> list[str]:
        """Reasons this discount breaks the fixed-point hypothesis (empty if fine)."""
        g = self.gamma
        if g.shape != (process.n_states,):
            return [f"gamma has {g.size} entries, process has {process.n_states} states"]
        out = []
        if np.any(g < 0) or np.any(g > 1) or not np.all(np.isfinite(g)):
            out.append("gamma entries must lie in [0, 1]")
        bad = [process.state_names[s] for s in process.terminal_states if g[s] >= 1.0]
        if bad:
            out.append("gamma must be < 1 on terminal states: " + ", ".join(bad))
        return out


def _check_q(process: EpisodicProcess, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (process.n_states, process.n_actions):
        raise DimensionMismatch(
            f"Q has shape {q.shape}, expected ({process.n_states}, {process.n_actions})"
        )
    return q


def apply_bellman(process: EpisodicProcess, gamma: DiscountFn, q) -> np.ndarray:
    """One synchronous application of the operator to every (s, a)."""
    q = _check_q(process, q)
    if gamma.gamma.shape != (process.n_states,):
        raise DimensionMismatch("discount vector does not match the number of states")
    target = process.reward + gamma.gamma * q.max(axis=1)
    return process.transition @ target


def bellman_residual(process: EpisodicProcess, gamma: DiscountFn, q) -> float:
    return float(np.max(np.abs(apply_bellman(process, gamma, q) - q)))


@dataclass(frozen=True, eq=False)
class ValueIterationResult:
    q: np.ndarray
    iterations: int
    residual: float
    converged: bool


def value_iteration(process: EpisodicProcess, gamma: DiscountFn | None = None, q0=None,
                    tol: float = 1e-10, max_iters: int = 100_000) -> ValueIterationResult:
    """Iterate ``Q <- BQ`` until the sup-norm residual drops below ``tol``.

    The operator is not a one-step contraction on episodic processes, so the
    stopping rule is the residual itself.  On hitting ``max_iters`` the last
    iterate is returned with ``converged=False``.
    """
    if gamma is None:
        gamma = DiscountFn.episodic(process)
    issues = gamma.problems(process)
    if issues:
        raise ValueError("; ".join(issues))
    q = np.zeros((process.n_states, process.n_actions)) if q0 is None else _check_q(process, q0).copy()
    P, R, g = process.transition, process.reward, gamma.gamma
    residual = np.inf
    for it in range(max_iters + 1):
        bq = P @ (R + g * q.max(axis=1))
        residual = float(np.max(np.abs(bq - q)))
        if residual < tol:
            return ValueIterationResult(q, it, residual, True)
        if it == max_iters:
            break
        q = bq
    return ValueIterationResult(q, max_iters, residual, False)


def greedy_policy(q, tie_break: str = "first_index") -> Policy:
    """Greedy policy of ``q``; ties within 1e-12 are broken per ``tie_break``."""
    q = np.asarray(q, dtype=float)
    ties = q >= q.max(axis=1, keepdims=True) - TIE_TOL
    if tie_break == "first_index":
        return Policy.deterministic(ties.argmax(axis=1), q.shape[1])
    if tie_break == "uniform":
        return Policy(ties / ties.sum(axis=1, keepdims=True))
    raise ValueError(f"unknown tie_break {tie_break!r}")


def on_policy_value(process: EpisodicProcess, pi: Policy) -> np.ndarray:
    """Solve for ``Q_pi`` under episodic discounting as one dense linear system."""
    if pi.probs.shape != (process.n_states, process.n_actions):
        raise DimensionMismatch("policy shape does not match the process")
    n, m = process.n_states, process.n_actions
    g = (~process.terminal).astype(float)
    P = process.transition.reshape(n * m, n)
    # M[(s,a), (s',a')] = P(s'|s,a) gamma(s') pi(a'|s')
    M = (P * g[None, :])[:, :, None] * pi.probs[None, :, :]
    A = np.eye(n * m) - M.reshape(n * m, n * m)
    try:
        q = np.linalg.solve(A, P @ process.reward)
    except np.linalg.LinAlgError as exc:
        raise ValueError("on-policy system is singular; input is not a valid ELP") from exc
    return q.reshape(n, m)


def optimal_q(process: EpisodicProcess, tol: float = 1e-10, max_rounds: int = 100) -> np.ndarray:
    """``Q*`` to round-off: value iteration, then policy-iteration polishing.

    The residual rule alone leaves an error of order ``tol * E[T]``; solving
    exactly for the greedy policy's values removes it.  Actions are switched
    only on strict improvement so ties cannot cycle.
    """
    res = value_iteration(process, tol=tol)
    if not res.converged:
        raise RuntimeError(f"value iteration did not converge (residual {res.residual:.3e})")
    actions = res.q.argmax(axis=1)
    rows = np.arange(process.n_states)
    for _ in range(max_rounds):
        q = on_policy_value(process, Policy.deterministic(actions, process.n_actions))
        better = q.max(axis=1) > q[rows, actions] + TIE_TOL
        if not better.any():
            return q
        actions = np.where(better, q.argmax(axis=1), actions)
    return q


def monotonicity_check(process: EpisodicProcess, gamma: DiscountFn, q1, q2) -> bool:
    """Whether ``B q1 >= B q2`` given ``q1 >= q2`` (used by property tests)."""
    q1, q2 = _check_q(process, q1), _check_q(process, q2)
    if np.any(q1 < q2):
        raise ValueError("monotonicity_check requires q1 >= q2 entrywise")
    diff = apply_bellman(process, gamma, q1) - apply_bellman(process, gamma, q2)
    return bool(np.all(diff >= -1e-12))


# ---------------------------------------------------------------------------
# CSV io


def _write_pairs(process: EpisodicProcess, values, column: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["state", "action", column])
    for s, sname in enumerate(process.state_names):
        for a, aname in enumerate(process.action_names):
            w.writerow([sname, aname, repr(float(values[s, a]))])
    return buf.getvalue()


def _read_pairs(process: EpisodicProcess, text: str, column: str,
                require_all: bool = True, fill: float = 0.0) -> np.ndarray:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or [c.strip() for c in rows[0]] != ["state", "action", column]:
        raise QFormatError(f"expected header 'state,action,{column}'")
    out = np.full((process.n_states, process.n_actions), fill)
    seen = np.zeros(out.shape, dtype=bool)
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise QFormatError(f"line {lineno}: expected 3 fields, got {len(row)}")
        sname, aname, val = (c.strip() for c in row)
        try:
            value = float(val)
        except ValueError:
            raise QFormatError(f"line {lineno}: {val!r} is not a number") from None
        try:
            s, a = process.state_index(sname), process.action_index(aname)
        except KeyError as exc:
            raise DimensionMismatch(f"line {lineno}: {exc.args[0]}") from None
        if seen[s, a]:
            raise QFormatError(f"line {lineno}: duplicate pair ({sname}, {aname})")
        seen[s, a] = True
        out[s, a] = value
    if require_all and not seen.all():
        s, a = np.argwhere(~seen)[0]
        raise DimensionMismatch(
            f"missing pair ({process.state_names[s]}, {process.action_names[a]})"
        )
    return out


def q_to_csv(process: EpisodicProcess, q) -> str:
    return _write_pairs(process, _check_q(process, q), "value")


def q_from_csv(process: EpisodicProcess, text: str) -> np.ndarray:
    q = _read_pairs(process, text, "value")
    if not np.all(np.isfinite(q)):
        raise QFormatError("Q values must be finite")
    return q


def save_q_csv(process: EpisodicProcess, q, path) -> None:
    Path(path).write_text(q_to_csv(process, q), encoding="utf-8")


def load_q_csv(process: EpisodicProcess, path) -> np.ndarray:
    return q_from_csv(process, Path(path).read_text(encoding="utf-8"))
