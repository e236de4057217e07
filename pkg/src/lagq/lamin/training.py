"""Training loop, demonstration sources and run records."""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from ..elp import EpisodeSampler, EpisodicProcess, Policy, stationary_distribution
from .estimators import DemoBlock, bc_update, lamin1_update, lamin2_update
from .models import QModel

ALGORITHMS = ("lamin1", "lamin2", "behavior_cloning")


class TrainingDiverged(FloatingPointError):
    def __init__(self, update: int):
        super().__init__(f"non-finite parameters after update {update}")
        self.update = update


@dataclass
class TrainConfig:
    algorithm: str = "lamin1"
    beta: float = 0.01
    learning_rate: float = 0.05
    schedule: str = "constant"       # constant | inverse_sqrt
    warmup: int = 200
    n_updates: int = 5000
    batch: int = 1                   # episodes per update
    seed: int = 0
    eval_every: int = 100
    exact_T: bool = False
    stop_at: float | None = None     # stop once eval_J reaches this value

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.algorithm == "lamin1" and not self.beta > 0:
            raise ValueError("beta must be positive")
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.schedule not in ("constant", "inverse_sqrt"):
            raise ValueError("schedule must be constant or inverse_sqrt")
        if self.schedule == "inverse_sqrt" and self.warmup < 1:
            raise ValueError("warmup must be >= 1")
        if self.n_updates < 0 or self.batch < 1 or self.eval_every < 1:
            raise ValueError("n_updates >= 0, batch >= 1 and eval_every >= 1 are required")

    def lr_at(self, i: int) -> float:
        if self.schedule == "constant":
            return self.learning_rate
        step = i + 1
        return self.learning_rate * min(step / self.warmup, math.sqrt(self.warmup / step))

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        return cls(**data)


@dataclass
class RunRecord:
    header: dict = field(default_factory=dict)
    entries: list[dict] = field(default_factory=list)

    def log(self, update: int, loss: float, grad_norm: float, eval_J, wall_ms: float) -> None:
        self.entries.append({
            "update": update, "loss": loss, "grad_norm": grad_norm,
            "eval_J": eval_J, "wall_ms": wall_ms,
        })

    @property
    def losses(self) -> list[float]:
        return [e["loss"] for e in self.entries]

    def curve(self) -> list[tuple[int, float]]:
        return [(e["update"], e["eval_J"]) for e in self.entries if e["eval_J"] is not None]

    def final_eval(self):
        c = self.curve()
        return c[-1][1] if c else None

    def to_jsonl(self) -> str:
        lines = [json.dumps({"header": self.header})]
        lines += [json.dumps(e) for e in self.entries]
        return "\n".join(lines) + "\n"

    def curve_csv(self) -> str:
        return "update,eval_J\n" + "".join(f"{u},{j!r}\n" for u, j in self.curve())


class ElpDemoSource:
    """Expert demonstrations from one continuing rollout of an ELP.

    Consecutive blocks are contiguous runs of complete episodes from a single
    seeded stream.  ``featurize`` maps state indices to model inputs; without
    it the raw indices are passed (tabular models).
    """

    def __init__(self, process: EpisodicProcess, expert: Policy, seed: int,
                 featurize: Callable[[np.ndarray], np.ndarray] | None = None):
        self.process = process
        self.expert = expert
        self.featurize = featurize
        self._sampler = EpisodeSampler(process, expert, seed)
        self._expected_T = None

    @property
    def expected_T(self) -> float:
        if self._expected_T is None:
            self._expected_T = stationary_distribution(self.process, self.expert).expected_T
        return self._expected_T

    def next_block(self, k: int) -> DemoBlock:
        traj = self._sampler.sample(k)
        X = traj.states if self.featurize is None else self.featurize(traj.states)
        return DemoBlock(X, traj.actions, self.process.terminal[traj.states], traj.rewards)


def train(source, model: QModel, config: TrainConfig,
          eval_hook: Callable[[QModel], float] | None = None) -> tuple[QModel, RunRecord]:
    """Run ``config.n_updates`` gradient steps on demo blocks from ``source``.

    ``source`` provides ``next_block(k)`` (and ``expected_T`` when
    ``config.exact_T`` is set).  The model is updated in place and returned.
    Evaluation runs every ``eval_every`` updates and after the last one.
    """
    record = RunRecord(header={"config": asdict(config), "n_params": model.n_params,
                               "model": type(model).__name__})
    exp_T = source.expected_T if config.exact_T else None
    t0 = time.perf_counter()
    for i in range(config.n_updates):
        block = source.next_block(config.batch)
        if config.algorithm == "lamin1":
            res = lamin1_update(model, block, config.beta, exp_T)
        elif config.algorithm == "lamin2":
            res = lamin2_update(model, block, config.beta, exp_T)
        else:
            res = bc_update(model, block)
        model.apply_update(res.delta, config.lr_at(i))
        if not np.all(np.isfinite(model.params)):
            raise TrainingDiverged(i + 1)
        update = i + 1
        eval_J = None
        if eval_hook is not None and (update % config.eval_every == 0 or update == config.n_updates):
            eval_J = float(eval_hook(model))
        record.log(update, res.loss, float(np.linalg.norm(res.delta)), eval_J,
                   (time.perf_counter() - t0) * 1e3)
        if config.stop_at is not None and eval_J is not None and eval_J >= config.stop_at:
            break
    return model, record
