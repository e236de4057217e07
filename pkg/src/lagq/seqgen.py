"""Toy sequence generation cast as an episodic learning process.

A state is ``(source, partial)`` where ``partial`` starts with ``<bos>``.
Actions are target-vocabulary indices plus a final ``eos`` action.  Emitting
``eos``, or reaching ``H`` normal tokens (``eos`` is then appended), ends the
episode; the terminal state pays ``metric(transform(source), output)`` and
resets by drawing a fresh source.
"""

from __future__ import annotations

import csv
import io
import itertools
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .elp import EpisodicProcess
from .lamin.estimators import DemoBlock

BOS, EOS = "<bos>", "<eos>"
WINDOW = 4
MAX_MATERIALIZED_STATES = 10_000


class SeqSpecError(ValueError):
    pass


class DemoFormatError(ValueError):
    pass


@dataclass(frozen=True)
class SeqTaskSpec:
    source_vocab: tuple[str, ...]
    target_vocab: tuple[str, ...]
    max_len: int
    transform: str = "copy"            # copy | reverse | shift:<k>
    metric: str = "exact_match"        # exact_match | token_f1
    source_length_range: tuple[int, int] = (1, 4)
    terminal_action: int = 0           # recorded expert action at terminal states

    def __post_init__(self):
        object.__setattr__(self, "source_vocab", tuple(self.source_vocab))
        object.__setattr__(self, "target_vocab", tuple(self.target_vocab))
        object.__setattr__(self, "source_length_range", tuple(self.source_length_range))
        lo, hi = self.source_length_range
        if not 1 <= lo <= hi:
            raise SeqSpecError("source_length_range must satisfy 1 <= min <= max")
        for vocab in (self.source_vocab, self.target_vocab):
            if not vocab or len(set(vocab)) != len(vocab):
                raise SeqSpecError("vocabularies must be nonempty with distinct symbols")
            if BOS in vocab or EOS in vocab:
                raise SeqSpecError("vocabularies may not contain reserved symbols")
        if len(self.source_vocab) != len(self.target_vocab):
            raise SeqSpecError("source and target vocabularies must have equal size")
        kind = self.transform.split(":")[0]
        if kind not in ("copy", "reverse", "shift"):
            raise SeqSpecError(f"unknown transform {self.transform!r}")
        if kind == "shift":
            try:
                int(self.transform.split(":", 1)[1])
            except (IndexError, ValueError):
                raise SeqSpecError("shift transform must be written shift:<k>") from None
        if self.metric not in ("exact_match", "token_f1"):
            raise SeqSpecError(f"unknown metric {self.metric!r}")
        if self.max_len < hi:
            raise SeqSpecError(f"max_len {self.max_len} is below the longest target {hi}")
        if not 0 <= self.terminal_action < len(self.target_vocab):
            raise SeqSpecError("terminal_action must index the target vocabulary")

    @classmethod
    def simple(cls, n_vocab: int = 5, lengths=(3, 6), max_len: int = 8,
               transform: str = "copy", metric: str = "exact_match") -> "SeqTaskSpec":
        vocab = tuple(chr(ord("a") + i) for i in range(n_vocab))
        return cls(vocab, vocab, max_len, transform, metric, tuple(lengths))

    @property
    def n_actions(self) -> int:
        return len(self.target_vocab) + 1

    @property
    def eos_action(self) -> int:
        return len(self.target_vocab)

    @property
    def n_features(self) -> int:
        return WINDOW * len(self.source_vocab) + 2 * (len(self.target_vocab) + 2) + 2

    def apply_transform(self, source) -> tuple[int, ...]:
        """Expert output for source indices, as target indices."""
        src = tuple(int(x) for x in source)
        kind = self.transform.split(":")[0]
        if kind == "copy":
            return src
        if kind == "reverse":
            return src[::-1]
        k = int(self.transform.split(":", 1)[1])
        return tuple((x + k) % len(self.target_vocab) for x in src)

    def read_position(self, source_len: int, t: int) -> int:
        """Source index aligned with output position ``t``."""
        if self.transform.startswith("reverse"):
            return source_len - 1 - t
        return t


@dataclass(frozen=True)
class SeqState:
    """``partial`` holds target indices after ``<bos>``; ``done`` means eos was appended."""

    source: tuple[int, ...]
    partial: tuple[int, ...] = ()
    done: bool = False

    def symbols(self, spec: SeqTaskSpec) -> list[str]:
        out = [BOS] + [spec.target_vocab[i] for i in self.partial]
        return out + [EOS] if self.done else out


def score(spec: SeqTaskSpec, reference, hypothesis) -> float:
    """Similarity in [0, 100] between target index sequences (eos excluded)."""
    ref, hyp = tuple(reference), tuple(hypothesis)
    if spec.metric == "exact_match":
        return 100.0 if ref == hyp else 0.0
    if not ref and not hyp:
        return 100.0
    overlap = sum((Counter(ref) & Counter(hyp)).values())
    if overlap == 0:
        return 0.0
    p, r = overlap / len(hyp), overlap / len(ref)
    return 100.0 * 2 * p * r / (p + r)


class SeqElp:
    """Lazy ELP view: states are built on demand, never enumerated."""

    def __init__(self, spec: SeqTaskSpec, source_dist_seed: int = 0):
        self.spec = spec
        self.rng = np.random.default_rng(source_dist_seed)

    def sample_source(self, rng: np.random.Generator | None = None) -> tuple[int, ...]:
        rng = self.rng if rng is None else rng
        lo, hi = self.spec.source_length_range
        n = int(rng.integers(lo, hi + 1))
        return tuple(int(x) for x in rng.integers(len(self.spec.source_vocab), size=n))

    def reset(self, rng: np.random.Generator | None = None) -> SeqState:
        return SeqState(self.sample_source(rng))

    def initial_state(self, source) -> SeqState:
        return SeqState(tuple(int(x) for x in source))

    def step(self, state: SeqState, action: int) -> SeqState:
        if state.done:
            raise ValueError("terminal states reset; use reset()")
        if action == self.spec.eos_action:
            return SeqState(state.source, state.partial, True)
        if not 0 <= action < self.spec.eos_action:
            raise ValueError(f"action {action} out of range")
        partial = state.partial + (int(action),)
        return SeqState(state.source, partial, len(partial) >= self.spec.max_len)

    def reward(self, state: SeqState) -> float:
        if not state.done:
            return 0.0
        return score(self.spec, self.spec.apply_transform(state.source), state.partial)

    def is_terminal(self, state: SeqState) -> bool:
        return state.done

    def rollout(self, act, source=None, rng: np.random.Generator | None = None) -> list[SeqState]:
        """States of one episode from ``initial_state`` to its terminal state.

        ``act`` maps a state to an action index.
        """
        state = self.reset(rng) if source is None else self.initial_state(source)
        visited = [state]
        while not state.done:
            state = self.step(state, int(act(state)))
            visited.append(state)
            # H normal tokens plus the appended eos
            assert len(visited) <= self.spec.max_len + 2, "episode exceeded H + 2 steps"
        return visited

    def all_sources(self):
        lo, hi = self.spec.source_length_range
        V = len(self.spec.source_vocab)
        for n in range(lo, hi + 1):
            yield from itertools.product(range(V), repeat=n)

    def source_prob(self, source) -> float:
        lo, hi = self.spec.source_length_range
        return 1.0 / (hi - lo + 1) / len(self.spec.source_vocab) ** len(source)

    def enumerate_states(self) -> list[SeqState]:
        V, H = len(self.spec.target_vocab), self.spec.max_len
        n_partials = sum(V ** j for j in range(H + 1))
        n_sources = sum(1 for _ in self.all_sources())
        total = n_sources * (2 * n_partials - V ** H)
        if total > MAX_MATERIALIZED_STATES:
            raise SeqSpecError(f"state space of {total} states exceeds {MAX_MATERIALIZED_STATES}")
        out = []
        for src in self.all_sources():
            for j in range(H + 1):
                for p in itertools.product(range(V), repeat=j):
                    if j < H:
                        out.append(SeqState(src, p, False))
                    out.append(SeqState(src, p, True))
        return out

    def materialize(self) -> tuple[EpisodicProcess, list[SeqState]]:
        """Explicit process over every reachable state (small tasks only)."""
        states = self.enumerate_states()
        index = {s: i for i, s in enumerate(states)}
        n, m = len(states), self.spec.n_actions
        reset = np.zeros(n)
        for src in self.all_sources():
            reset[index[SeqState(src)]] = self.source_prob(src)
        P = np.zeros((n, m, n))
        R = np.zeros(n)
        terminal = np.zeros(n, dtype=bool)
        for i, s in enumerate(states):
            if s.done:
                terminal[i] = True
                R[i] = self.reward(s)
                P[i, :, :] = reset
            else:
                for a in range(m):
                    P[i, a, index[self.step(s, a)]] = 1.0
        names = tuple(_state_name(self.spec, s) for s in states)
        actions = tuple(self.spec.target_vocab) + (EOS,)
        start = int(np.flatnonzero(terminal)[0])
        return EpisodicProcess(P, R, reset, terminal, start, names, actions), states


def _state_name(spec: SeqTaskSpec, s: SeqState) -> str:
    src = "".join(spec.source_vocab[i] for i in s.source)
    return src + "|" + " ".join(s.symbols(spec))


class ExpertPolicy:
    """Emits the next token of ``transform(source)``, then eos.

    Off the expert path (partial not a prefix of the target) it emits eos.
    At terminal states it records ``spec.terminal_action``.
    """

    def __init__(self, spec: SeqTaskSpec):
        self.spec = spec

    def action(self, state: SeqState) -> int:
        if state.done:
            return self.spec.terminal_action
        target = self.spec.apply_transform(state.source)
        t = len(state.partial)
        if state.partial == target[:t] and t < len(target):
            return target[t]
        return self.spec.eos_action


def expert_policy(spec: SeqTaskSpec) -> ExpertPolicy:
    return ExpertPolicy(spec)


# ---------------------------------------------------------------------------
# features


def state_features(state: SeqState, spec: SeqTaskSpec) -> np.ndarray:
    """Fixed-length encoding of a state.

    Layout: ``WINDOW`` one-hot blocks over the source vocabulary for
    ``X[p], X[p-1], .., X[p-3]`` where ``p`` is the source position aligned
    with the next output slot (zero block when out of range); two one-hot
    blocks over ``target_vocab + [bos, eos]`` for the last and second-last
    emitted symbols; then ``t / H`` and the done flag.
    """
    Vs, Vt = len(spec.source_vocab), len(spec.target_vocab)
    f = np.zeros(spec.n_features)
    t = len(state.partial)
    p = spec.read_position(len(state.source), t)
    for j in range(WINDOW):
        i = p - j
        if 0 <= i < len(state.source):
            f[j * Vs + state.source[i]] = 1.0
    emitted = [Vt] + list(state.partial) + ([Vt + 1] if state.done else [])
    base = WINDOW * Vs
    for j in range(2):
        if len(emitted) > j:
            f[base + j * (Vt + 2) + emitted[-1 - j]] = 1.0
    f[-2] = t / spec.max_len
    f[-1] = 1.0 if state.done else 0.0
    return f


# ---------------------------------------------------------------------------
# demonstrations


@dataclass(frozen=True)
class DemoSet:
    pairs: tuple[tuple[tuple[int, ...], tuple[int, ...]], ...]
    provenance: str = ""

    def __len__(self) -> int:
        return len(self.pairs)

    def sources(self) -> set:
        return {s for s, _ in self.pairs}


def generate_demos(spec: SeqTaskSpec, n: int, seed: int, exclude=()) -> DemoSet:
    """``n`` pairs ``(X, transform(X))`` with ``X`` from the source distribution."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    env = SeqElp(spec)
    exclude = set(exclude)
    pairs = []
    while len(pairs) < n:
        src = env.sample_source(rng)
        if src in exclude:
            continue
        pairs.append((src, spec.apply_transform(src)))
    return DemoSet(tuple(pairs), f"generated(seed={seed})")


def format_demos(spec: SeqTaskSpec, demos: DemoSet) -> str:
    lines = []
    for src, tgt in demos.pairs:
        lines.append(" ".join(spec.source_vocab[i] for i in src) + "\t"
                     + " ".join(spec.target_vocab[i] for i in tgt))
    return "\n".join(lines) + "\n"


def write_demos(spec: SeqTaskSpec, demos: DemoSet, path) -> None:
    Path(path).write_text(format_demos(spec, demos), encoding="utf-8")


def parse_demos(spec: SeqTaskSpec, text: str, provenance: str = "") -> DemoSet:
    sidx = {s: i for i, s in enumerate(spec.source_vocab)}
    tidx = {s: i for i, s in enumerate(spec.target_vocab)}
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DemoFormatError(f"line {lineno}: expected 'source<TAB>target'")
        try:
            src = tuple(sidx[x] for x in parts[0].split())
            tgt = tuple(tidx[x] for x in parts[1].split())
        except KeyError as exc:
            raise DemoFormatError(f"line {lineno}: symbol {exc.args[0]!r} not in vocabulary") from None
        if not src:
            raise DemoFormatError(f"line {lineno}: empty source")
        if len(tgt) > spec.max_len:
            raise DemoFormatError(f"line {lineno}: target longer than max_len {spec.max_len}")
        pairs.append((src, tgt))
    return DemoSet(tuple(pairs), provenance)


def ingest_demos(spec: SeqTaskSpec, path) -> DemoSet:
    path = Path(path)
    return parse_demos(spec, path.read_text(encoding="utf-8"), f"ingested({path})")


def demo_episode(spec: SeqTaskSpec, source, target) -> DemoBlock:
    """Teacher-forced episode emitting ``target`` then eos, as a one-episode block."""
    env = SeqElp(spec)
    state = env.initial_state(source)
    X, acts, term, rew = [], [], [], []
    for tok in list(target) + [spec.eos_action]:
        X.append(state_features(state, spec))
        acts.append(int(tok))
        term.append(False)
        rew.append(0.0)
        state = env.step(state, int(tok))
        if state.done:
            break
    X.append(state_features(state, spec))
    acts.append(spec.terminal_action)
    term.append(True)
    rew.append(score(spec, spec.apply_transform(source), state.partial))
    return DemoBlock(np.array(X), np.array(acts, dtype=int), np.array(term), np.array(rew))


class SeqDemoSource:
    """Blocks of ``k`` demo episodes drawn (with replacement) from a DemoSet."""

    def __init__(self, spec: SeqTaskSpec, demos: DemoSet, seed: int):
        self.spec = spec
        self.rng = np.random.default_rng(seed)
        self.episodes = [demo_episode(spec, s, t) for s, t in demos.pairs]
        self.expected_T = float(np.mean([e.n_steps for e in self.episodes]))

    def next_block(self, k: int) -> DemoBlock:
        idx = self.rng.integers(len(self.episodes), size=k)
        return DemoBlock.concat(self.episodes[i] for i in idx)


# ---------------------------------------------------------------------------
# decoding and evaluation


@dataclass(frozen=True)
class Decoded:
    tokens: tuple[int, ...]
    score: float


def decode(model, source, spec: SeqTaskSpec, mode: str = "greedy", width: int = 4) -> Decoded:
    """Greedy or beam decoding by summed Q-values (no length penalty).

    ``model`` is a Q-model over :func:`state_features`, or an
    :class:`ExpertPolicy` (greedy only, score 0).
    """
    env = SeqElp(spec)
    state = env.initial_state(source)
    if isinstance(model, ExpertPolicy):
        while not state.done:
            state = env.step(state, model.action(state))
        return Decoded(state.partial, 0.0)
    if mode == "greedy":
        width = 1
    elif mode != "beam":
        raise ValueError(f"unknown decode mode {mode!r}")
    if width < 1:
        raise ValueError("beam width must be >= 1")
    alive = [(0.0, state)]
    finished: list[tuple[float, SeqState]] = []
    while alive:
        X = np.array([state_features(s, spec) for _, s in alive])
        Q = model.batch_values(X)
        cands = [(sc + float(Q[i, a]), i, a) for i, (sc, _) in enumerate(alive)
                 for a in range(spec.n_actions)]
        # stable sort keeps the lower (hypothesis, action) index first on ties
        cands.sort(key=lambda c: -c[0])
        nxt = []
        for sc, i, a in cands[:width]:
            s = env.step(alive[i][1], a)
            (finished if s.done else nxt).append((sc, s))
        alive = nxt
    best = max(finished, key=lambda f: f[0])
    return Decoded(best[1].partial, best[0])


@dataclass
class EvalResult:
    mean_reward: float
    exact_match_rate: float
    rows: list[tuple[str, str, str, float]] = field(default_factory=list)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["source", "reference", "hypothesis", "reward"])
        for row in self.rows:
            w.writerow(row)
        return buf.getvalue()


def evaluate_model(model, spec: SeqTaskSpec, heldout: DemoSet, mode: str = "greedy",
                   width: int = 4) -> EvalResult:
    """Decode every held-out source and score it against its reference."""
    if len(heldout) == 0:
        raise ValueError("held-out set is empty")
    rewards, exact, rows = [], [], []
    for src, ref in heldout.pairs:
        hyp = decode(model, src, spec, mode, width).tokens
        r = score(spec, ref, hyp)
        rewards.append(r)
        exact.append(tuple(hyp) == tuple(ref))
        rows.append((" ".join(spec.source_vocab[i] for i in src),
                     " ".join(spec.target_vocab[i] for i in ref),
                     " ".join(spec.target_vocab[i] for i in hyp), r))
    return EvalResult(float(np.mean(rewards)), float(np.mean(exact)), rows)
