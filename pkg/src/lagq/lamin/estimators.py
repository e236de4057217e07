"""Boltzmann smoothing and the LAMIN / behaviour-cloning gradient estimators."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import QModel


def boltzmann_policy(q_values, beta: float) -> np.ndarray:
    """Softmax of ``q_values / beta`` along the last axis.

    ``beta = 0`` is accepted as the greedy limit: a one-hot on the first
    maximiser.
    """
    q = np.asarray(q_values, dtype=float)
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if beta == 0:
        out = np.zeros_like(q)
        idx = np.argmax(q, axis=-1)
        np.put_along_axis(out, np.expand_dims(idx, -1), 1.0, axis=-1)
        return out
    z = (q - q.max(axis=-1, keepdims=True)) / beta
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def boltzmann_value(q_values, beta: float) -> np.ndarray:
    """``sum_a pi^beta(a) Q_a`` along the last axis."""
    q = np.asarray(q_values, dtype=float)
    return np.sum(boltzmann_policy(q, beta) * q, axis=-1)


def boltzmann_coefficients(q_values, beta: float) -> np.ndarray:
    """Weights ``c`` with ``grad sum_a pi^beta_a Q_a = sum_a c_a grad Q_a``.

    ``c_a = pi_a + pi_a (Q_a - V) / beta`` where ``V = sum_a pi_a Q_a``.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    q = np.asarray(q_values, dtype=float)
    pi = boltzmann_policy(q, beta)
    v = np.sum(pi * q, axis=-1, keepdims=True)
    return pi + pi * (q - v) / beta


def td_error(r_next: float, gamma_next: float, q_next: float, q_cur: float) -> float:
    return r_next + gamma_next * q_next - q_cur


def boltzmann_value_gradient(model: QModel, state, beta: float) -> np.ndarray:
    """Gradient of ``sum_a pi^beta_w(a|s) Q(s,a;w)`` including the softmax weights."""
    X = model._one(state)
    return model.backward(X, boltzmann_coefficients(model.batch_values(X), beta))


def lamin2_successor_gradient(model: QModel, state, beta: float) -> np.ndarray:
    """``sum_a pi^beta(a|s) grad Q(s,a)`` with the weights held fixed."""
    X = model._one(state)
    return model.backward(X, boltzmann_policy(model.batch_values(X), beta))


@dataclass(frozen=True, eq=False)
class DemoBlock:
    """``k`` complete demonstration episodes laid end to end.

    ``X`` holds model inputs for steps ``t = 1..n``; ``terminal[t]`` marks the
    last step of each episode.  Rewards are kept for loss reporting only.
    """

    X: np.ndarray
    actions: np.ndarray
    terminal: np.ndarray
    rewards: np.ndarray

    def __post_init__(self):
        n = len(self.actions)
        if len(self.X) != n or len(self.terminal) != n or len(self.rewards) != n:
            raise ValueError("demo arrays have inconsistent lengths")
        if n == 0 or not self.terminal[-1]:
            raise ValueError("demo block must end on a terminal step")

    @property
    def n_steps(self) -> int:
        return len(self.actions)

    @property
    def n_episodes(self) -> int:
        return int(np.count_nonzero(self.terminal))

    @classmethod
    def concat(cls, blocks) -> "DemoBlock":
        blocks = list(blocks)
        return cls(
            np.concatenate([b.X for b in blocks]),
            np.concatenate([b.actions for b in blocks]),
            np.concatenate([b.terminal for b in blocks]),
            np.concatenate([b.rewards for b in blocks]),
        )


@dataclass(frozen=True, eq=False)
class UpdateResult:
    delta: np.ndarray
    loss: float


def _lamin_update(model: QModel, demo: DemoBlock, succ_coeffs, beta: float,
                  expected_T: float | None) -> UpdateResult:
    k = demo.n_episodes
    if k < 1:
        raise ValueError("demo contains no complete episode")
    n = demo.n_steps
    Q = model.batch_values(demo.X)
    cont = (~demo.terminal).astype(float)
    onehot = np.zeros_like(Q)
    onehot[np.arange(n), demo.actions] = 1.0
    # successor term at every s_t with gamma(s_t) = 1; the V-term of a
    # terminal step is zero, so the pre-block transition needs no special case
    C = cont[:, None] * succ_coeffs(Q) - onehot
    term = demo.terminal
    C_term = np.zeros_like(Q)
    C_term[term] = onehot[term]
    if expected_T is None:
        # n/k prefactor: the terminal grad Q terms cancel exactly
        C = (C + C_term) / k
    else:
        C = C * (expected_T / n) + C_term / k
    delta = model.backward(demo.X, C)
    q_taken = Q[np.arange(n), demo.actions]
    loss = (q_taken[term].sum() + demo.rewards.sum()
            + (cont * boltzmann_value(Q, beta)).sum() - q_taken.sum()) / k
    return UpdateResult(delta, float(loss))


def lamin1_update(model: QModel, demo: DemoBlock, beta: float,
                  expected_T: float | None = None) -> UpdateResult:
    """One stochastic gradient of the smoothed Lagrangian (Boltzmann weights differentiated).

    With the default ``expected_T=None`` the ``n/k`` prefactor is used and the
    terminal ``grad Q`` terms cancel, giving
    ``(1/k) [sum_t gamma(s_t) grad V^beta(s_t) - sum_{t non-terminal} grad Q(s_t,a_t)]``.
    """
    if beta <= 0:
        raise ValueError("lamin1 needs beta > 0")
    return _lamin_update(model, demo, lambda Q: boltzmann_coefficients(Q, beta), beta, expected_T)


def lamin2_update(model: QModel, demo: DemoBlock, beta: float,
                  expected_T: float | None = None) -> UpdateResult:
    """As :func:`lamin1_update` but with successor weights ``pi^beta`` frozen.

    ``beta = 0`` uses the greedy one-hot (first maximiser).
    """
    return _lamin_update(model, demo, lambda Q: boltzmann_policy(Q, beta), beta, expected_T)


def bc_update(model: QModel, demo: DemoBlock, temperature: float = 1.0) -> UpdateResult:
    """Cross-entropy of ``softmax(Q / temperature)`` on non-terminal expert actions, per episode."""
    k = demo.n_episodes
    if k < 1:
        raise ValueError("demo contains no complete episode")
    keep = ~demo.terminal
    X, acts = demo.X[keep], demo.actions[keep]
    Q = model.batch_values(X)
    pi = boltzmann_policy(Q, temperature)
    onehot = np.zeros_like(Q)
    onehot[np.arange(len(acts)), acts] = 1.0
    delta = model.backward(X, (pi - onehot) / (temperature * k))
    loss = -np.log(np.maximum(pi[np.arange(len(acts)), acts], 1e-300)).sum() / k
    return UpdateResult(delta, float(loss))


def smoothed_lagrangian_1state(q1: float, q2: float, beta: float, j_mu: float) -> float:
    """Dual form for one non-terminal state whose expert action is action 1."""
    q = np.array([q1, q2], dtype=float)
    return float(j_mu + boltzmann_value(q, beta) - q1)


# ---------------------------------------------------------------------------
# finite-difference verification


def central_difference(f, w: np.ndarray, h: float = 1e-3, order: int = 4) -> np.ndarray:
    """Gradient of scalar ``f`` at ``w`` by a 2nd- or 4th-order central stencil."""
    w = np.array(w, dtype=float)
    g = np.empty_like(w)
    for i in range(w.size):
        wi = w[i]
        wp, wm = wi + h, wi - h
        hp, hm = wp - wi, wi - wm  # steps actually taken after rounding
        w[i] = wp
        fp = f(w)
        w[i] = wm
        fm = f(w)
        if order == 2:
            g[i] = (fp - fm) / (hp + hm)
        elif order == 4:
            w[i] = wi + 2 * h
            fpp = f(w)
            w[i] = wi - 2 * h
            fmm = f(w)
            g[i] = (8 * (fp - fm) - (fpp - fmm)) / (12 * h)
        else:
            raise ValueError("order must be 2 or 4")
        w[i] = wi
    return g


def relative_error(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


def _scalar_at(model: QModel, fn):
    base = model.params.copy()

    def f(w):
        model.set_params(w)
        return fn()

    return f, base


def gradient_check(model: QModel, n_probes: int, seed: int, beta: float = 1.0,
                   h: float = 1e-3, order: int = 4, param_scale: float = 1.0) -> float:
    """Worst relative error of analytic vs finite-difference gradients.

    Each probe draws fresh parameters and an input, then checks ``dQ(x,a)/dw``
    for a random action and ``d/dw sum_a pi^beta_a Q(x,a)``.  The model's
    original parameters are restored afterwards.
    """
    rng = np.random.default_rng(seed)
    saved = model.params.copy()
    worst = 0.0
    try:
        for _ in range(n_probes):
            w0 = param_scale * rng.standard_normal(model.n_params)
            model.set_params(w0)
            x = model.random_input(rng)
            a = int(rng.integers(model.n_actions))
            g_val = model.gradient(x, a)
            g_bz = boltzmann_value_gradient(model, x, beta)
            f_val, _ = _scalar_at(model, lambda: model.value(x, a))
            f_bz, _ = _scalar_at(model, lambda: float(boltzmann_value(model.values(x), beta)))
            fd_val = central_difference(f_val, w0, h, order)
            fd_bz = central_difference(f_bz, w0, h, order)
            model.set_params(w0)
            worst = max(worst, relative_error(g_val, fd_val), relative_error(g_bz, fd_bz))
    finally:
        model.set_params(saved)
    return worst
