"""Differentiable Q-models with a flat parameter vector.

Every model maps a batch of inputs ``X`` to ``(B, n_actions)`` Q-values and
exposes ``backward(X, C)``, the vector-Jacobian product
``sum_b sum_a C[b, a] * dQ(x_b, a)/dw``.  All gradient estimators in this
package reduce to a single ``backward`` call with a suitable ``C``.
"""

from __future__ import annotations

import numpy as np


class QModel:
    """Shared plumbing; subclasses implement ``batch_values`` and ``backward``."""

    n_actions: int
    params: np.ndarray

    @property
    def n_params(self) -> int:
        return self.params.size

    def batch_values(self, X) -> np.ndarray:
        raise NotImplementedError

    def backward(self, X, C) -> np.ndarray:
        raise NotImplementedError

    def random_input(self, rng: np.random.Generator, size: int | None = None):
        raise NotImplementedError

    def values(self, x) -> np.ndarray:
        return self.batch_values(self._one(x))[0]

    def value(self, x, a: int) -> float:
        return float(self.values(x)[a])

    def gradient(self, x, a: int) -> np.ndarray:
        C = np.zeros((1, self.n_actions))
        C[0, a] = 1.0
        return self.backward(self._one(x), C)

    def apply_update(self, delta, lr: float) -> None:
        self.params -= lr * np.asarray(delta, dtype=float)

    def set_params(self, w) -> None:
        self.params[...] = np.asarray(w, dtype=float)

    def copy(self):
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.params = self.params.copy()
        clone._bind()
        return clone

    def _bind(self) -> None:
        pass

    def _one(self, x):
        return np.asarray(x, dtype=float)[None, :]


class TabularQModel(QModel):
    """``Q(s, a; w) = w[s, a]``; inputs are integer state indices."""

    def __init__(self, n_states: int, n_actions: int, init=None):
        self.n_states = n_states
        self.n_actions = n_actions
        self.params = np.zeros(n_states * n_actions) if init is None else \
            np.array(init, dtype=float).reshape(-1).copy()
        if self.params.size != n_states * n_actions:
            raise ValueError("initial table has the wrong size")
        self._bind()

    def _bind(self) -> None:
        self.table = self.params.reshape(self.n_states, self.n_actions)

    def _one(self, x):
        return np.array([int(x)])

    def batch_values(self, X) -> np.ndarray:
        return self.table[np.asarray(X, dtype=int)]

    def backward(self, X, C) -> np.ndarray:
        g = np.zeros_like(self.table)
        np.add.at(g, np.asarray(X, dtype=int), C)
        return g.reshape(-1)

    def random_input(self, rng, size=None):
        return rng.integers(self.n_states, size=size)


class LinearQModel(QModel):
    """Per-action linear heads ``Q(x, a) = W[a] . x + b[a]``.

    Equivalently ``w . phi(x, a)`` with ``phi`` the action-blocked copy of
    ``[x, 1]``.
    """

    def __init__(self, n_features: int, n_actions: int, seed: int | None = None, scale: float = 0.0):
        self.n_features = n_features
        self.n_actions = n_actions
        rng = np.random.default_rng(seed)
        self.params = scale * rng.standard_normal(n_actions * (n_features + 1))
        self._bind()

    def _bind(self) -> None:
        d, m = self.n_features, self.n_actions
        self.W = self.params[: m * d].reshape(m, d)
        self.b = self.params[m * d:]

    def batch_values(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.W.T + self.b

    def backward(self, X, C) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        C = np.asarray(C, dtype=float)
        return np.concatenate([(C.T @ X).reshape(-1), C.sum(axis=0)])

    def random_input(self, rng, size=None):
        shape = (self.n_features,) if size is None else (size, self.n_features)
        return rng.standard_normal(shape)


class MlpQModel(QModel):
    """One tanh hidden layer followed by a linear head per action."""

    def __init__(self, n_features: int, n_actions: int, n_hidden: int = 16, seed: int = 0):
        self.n_features = n_features
        self.n_actions = n_actions
        self.n_hidden = n_hidden
        rng = np.random.default_rng(seed)
        d, h, m = n_features, n_hidden, n_actions
        self.params = np.empty(h * d + h + m * h + m)
        self._bind()
        self.W1[...] = rng.uniform(-1, 1, (h, d)) / np.sqrt(d)
        self.b1[...] = rng.uniform(-1, 1, h) / np.sqrt(d)
        self.W2[...] = rng.uniform(-1, 1, (m, h)) / np.sqrt(h)
        self.b2[...] = rng.uniform(-1, 1, m) / np.sqrt(h)

    def _bind(self) -> None:
        d, h, m = self.n_features, self.n_hidden, self.n_actions
        p = self.params
        i = 0
        self.W1 = p[i:i + h * d].reshape(h, d); i += h * d
        self.b1 = p[i:i + h]; i += h
        self.W2 = p[i:i + m * h].reshape(m, h); i += m * h
        self.b2 = p[i:i + m]

    def _hidden(self, X) -> np.ndarray:
        return np.tanh(np.asarray(X, dtype=float) @ self.W1.T + self.b1)

    def batch_values(self, X) -> np.ndarray:
        return self._hidden(X) @ self.W2.T + self.b2

    def backward(self, X, C) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        C = np.asarray(C, dtype=float)
        H = self._hidden(X)
        dz = (C @ self.W2) * (1.0 - H * H)
        return np.concatenate([
            (dz.T @ X).reshape(-1), dz.sum(axis=0),
            (C.T @ H).reshape(-1), C.sum(axis=0),
        ])

    def random_input(self, rng, size=None):
        shape = (self.n_features,) if size is None else (size, self.n_features)
        return rng.standard_normal(shape)
