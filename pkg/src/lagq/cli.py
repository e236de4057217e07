"""Command-line interface.

Exit codes: 0 ok, 1 domain failure, 2 I/O or parse error, 3 non-convergence.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import bellman, fixtures, lagrangian, seqgen
from .bellman import DimensionMismatch, DiscountFn, QFormatError
from .elp import ElpFormatError, EpisodicProcess, Policy, load_elp, validate_elp
from .lamin import (ElpDemoSource, LinearQModel, MlpQModel, TabularQModel, TrainConfig,
                    TrainingDiverged, train)

EXIT_OK, EXIT_DOMAIN, EXIT_IO, EXIT_NONCONV = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def atomic_write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _out_path(args, name: str) -> Path:
    return Path(args.out_dir) / name


def read_elp(ref: str, strict: bool = True) -> EpisodicProcess:
    """Load a process from a JSON path or ``builtin:<name>``."""
    if ref.startswith("builtin:"):
        name = ref.split(":", 1)[1]
        if name not in fixtures.BUILTINS:
            raise CliError(f"unknown builtin {name!r} (have {sorted(fixtures.BUILTINS)})", EXIT_IO)
        return fixtures.BUILTINS[name]()
    return load_elp(ref, strict=strict)


def read_valid_elp(ref: str) -> EpisodicProcess:
    process = read_elp(ref)
    problems = validate_elp(process)
    if problems:
        raise CliError("invalid ELP:\n" + "\n".join(str(p) for p in problems), EXIT_DOMAIN)
    return process


def read_policy(process: EpisodicProcess, ref: str, q_star=None) -> Policy:
    """``greedy-qstar``, ``uniform`` or a CSV ``state,action,prob`` (omitted states uniform)."""
    if ref == "greedy-qstar":
        return bellman.greedy_policy(_solve(process, q_star))
    if ref == "uniform":
        return Policy.uniform(process.n_states, process.n_actions)
    text = Path(ref).read_text(encoding="utf-8")
    probs = bellman._read_pairs(process, text, "prob", require_all=False, fill=np.nan)
    for s in range(process.n_states):
        row = probs[s]
        if np.all(np.isnan(row)):
            probs[s] = 1.0 / process.n_actions
        else:
            row[np.isnan(row)] = 0.0
    return Policy(probs)


def _solve(process: EpisodicProcess, q_star=None) -> np.ndarray:
    if q_star is not None:
        return q_star
    try:
        return bellman.optimal_q(process)
    except RuntimeError as exc:
        raise CliError(str(exc), EXIT_NONCONV) from None


def read_gamma(process: EpisodicProcess, ref: str) -> DiscountFn:
    """``episodic`` or a CSV ``state,gamma`` (omitted states get the episodic value)."""
    if ref == "episodic":
        return DiscountFn.episodic(process)
    import csv

    g = DiscountFn.episodic(process).gamma.copy()
    rows = list(csv.reader(Path(ref).read_text(encoding="utf-8").splitlines()))
    if not rows or [c.strip() for c in rows[0]] != ["state", "gamma"]:
        raise QFormatError("gamma file needs header 'state,gamma'")
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != 2:
            raise QFormatError(f"gamma line {lineno}: expected 2 fields")
        try:
            g[process.state_index(row[0].strip())] = float(row[1])
        except KeyError as exc:
            raise DimensionMismatch(f"gamma line {lineno}: {exc.args[0]}") from None
        except ValueError:
            raise QFormatError(f"gamma line {lineno}: {row[1]!r} is not a number") from None
    return DiscountFn(g)


# ---------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    process = read_elp(args.elp, strict=False)
    problems = validate_elp(process)
    for p in problems:
        print(p)
    if not problems:
        print(f"valid: {process.n_states} states, {process.n_actions} actions, "
              f"{len(process.terminal_states)} terminal")
    return EXIT_DOMAIN if problems else EXIT_OK


def cmd_solve(args) -> int:
    process = read_valid_elp(args.elp)
    gamma = read_gamma(process, args.gamma)
    issues = gamma.problems(process)
    if issues:
        raise CliError("; ".join(issues), EXIT_DOMAIN)
    res = bellman.value_iteration(process, gamma, tol=args.tol, max_iters=args.max_iters)
    if not res.converged:
        print(f"residual={res.residual:.3e} iterations={res.iterations}")
        raise CliError("value iteration did not converge", EXIT_NONCONV)
    out = Path(args.out) if args.out else _out_path(args, "qstar.csv")
    atomic_write(out, bellman.q_to_csv(process, res.q))
    J = lagrangian.greedy_J(process, res.q)
    print(f"iterations={res.iterations} residual={res.residual:.3e}")
    print(f"J={J!r}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_duality(args) -> int:
    process = read_valid_elp(args.elp)
    q_star = _solve(process)
    mu = read_policy(process, args.policy, q_star)
    rep = lagrangian.verify_strong_duality(process, mu, args.tol, q_star)
    print(rep.summary())
    return EXIT_OK if rep.equal else EXIT_DOMAIN


def cmd_saddle(args) -> int:
    process = read_valid_elp(args.elp)
    q = bellman.load_q_csv(process, args.q_csv)
    q_star = _solve(process)
    pi = read_policy(process, args.policy, q_star)
    minimax = lagrangian.is_minimax_q(process, pi, q, args.tol, q_star)
    maximin = lagrangian.is_maximin_q(process, pi, q, args.tol, q_star)
    rep = lagrangian.check_saddle(process, pi, q, args.tol)
    print(f"is_minimax_q={str(minimax).lower()}")
    print(f"is_maximin_q={str(maximin).lower()}")
    print(f"cond_feasible={str(rep.feasible_primal).lower()} "
          f"cond_slack_pi={str(rep.slack_pi_ok).lower()} cond_slack_q={str(rep.slack_q_ok).lower()}")
    for tie in ("first_index", "uniform"):
        print(f"J_greedy_{tie}={lagrangian.greedy_J(process, q, tie)!r}")
    if args.report:
        atomic_write(args.report, rep.to_text(process) + "\n")
    verdict = minimax if args.kind == "minimax" else maximin
    print(f"verdict={args.kind}:{str(verdict).lower()}")
    return EXIT_OK if verdict else EXIT_DOMAIN


def counterexample_checks(inject_fault: bool = False) -> list[tuple[str, bool, str]]:
    tol = 1e-9
    p = fixtures.fig3_elp()
    qs = _solve(p)
    uniform = Policy.uniform(p.n_states, p.n_actions)
    mu = bellman.greedy_policy(qs)
    qc = fixtures.fig3_constant_q()
    qmax = fixtures.fig3_qmax()
    if inject_fault:
        qmax[0, 0] += 1.0
    lam = lagrangian.canonical_multiplier(p, mu).weights
    J_c_uni = lagrangian.greedy_J(p, qc, "uniform")
    J_c_first = lagrangian.greedy_J(p, qc, "first_index")
    J_qmax = [lagrangian.greedy_J(p, qmax, t) for t in ("first_index", "uniform")]
    v = fixtures.vform_counterexample()
    return [
        ("fig3 Q* table", bool(np.max(np.abs(qs - fixtures.fig3_qstar())) <= tol),
         f"max dev {np.max(np.abs(qs - fixtures.fig3_qstar())):.1e}"),
        ("Q=2 is minimax", lagrangian.is_minimax_q(p, uniform, qc, tol, qs), ""),
        ("Q=2 is not maximin", not lagrangian.is_maximin_q(p, uniform, qc, tol, qs), ""),
        ("J(greedy(Q=2), uniform) = 5/3", abs(J_c_uni - 5 / 3) <= tol, f"{J_c_uni:.12g}"),
        ("J(greedy(Q=2), first_index) = 1", abs(J_c_first - 1.0) <= tol, f"{J_c_first:.12g}"),
        ("Q=2 saddle with optimal lam_pi", lagrangian.check_saddle(p, mu, qc, tol).is_saddle, ""),
        ("lam_pi(1, .) = 0", bool(np.all(lam[1] == 0.0)), ""),
        ("Q_max is maximin", lagrangian.is_maximin_q(p, uniform, qmax, tol, qs), ""),
        ("J(greedy(Q_max)) = 2", all(abs(j - 2.0) <= tol for j in J_qmax),
         ", ".join(f"{j:.12g}" for j in J_qmax)),
        ("V_min feasible", v.feasible, f"V_min={v.v_min}"),
        ("V_min LP-optimal", v.optimal, f"objective={v.objective:g} bound={v.certified_lower_bound:g}"),
        ("V_min ties at state 0", v.tied_at_state0, f"backups={v.state0_backups}"),
        ("V*(0) = 1", abs(v.v_star0 - 1.0) <= tol, f"{v.v_star0:.12g}"),
    ]


def cmd_counterexamples(args) -> int:
    rows = counterexample_checks(args.inject_fault)
    width = max(len(name) for name, _, _ in rows)
    for name, ok, note in rows:
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {note}".rstrip())
    return EXIT_OK if all(ok for _, ok, _ in rows) else EXIT_DOMAIN


def _build_model(spec: dict, n_inputs: int, n_actions: int, seed: int, n_states: int | None):
    kind = spec.get("kind", "tabular")
    if kind == "tabular":
        if n_states is None:
            raise CliError("tabular models need an explicit ELP task", EXIT_DOMAIN)
        return TabularQModel(n_states, n_actions)
    if kind == "linear":
        return LinearQModel(n_inputs, n_actions, seed=seed)
    if kind == "mlp":
        return MlpQModel(n_inputs, n_actions, n_hidden=int(spec.get("hidden", 16)), seed=seed)
    raise CliError(f"unknown model kind {kind!r}", EXIT_DOMAIN)


def cmd_train(args) -> int:
    try:
        cfg_data = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CliError(f"{args.config}: invalid JSON ({exc})", EXIT_IO) from None
    train_fields = dict(cfg_data.get("train", {}))
    train_fields.setdefault("seed", args.seed)
    try:
        config = TrainConfig.from_dict(train_fields)
    except (TypeError, ValueError) as exc:
        raise CliError(f"{args.config}: {exc}", EXIT_IO) from None
    model_spec = cfg_data.get("model", {"kind": "tabular"})
    task = cfg_data.get("task", "builtin:fig3")
    out_dir = Path(args.out_dir)

    if isinstance(task, dict) and "seqgen" in task:
        spec = seqgen.SeqTaskSpec.simple(**task["seqgen"])
        if "demos" in task:
            demos = seqgen.ingest_demos(spec, task["demos"])
        else:
            demos = seqgen.generate_demos(spec, int(task.get("n_train", 1000)), int(task.get("demo_seed", 1)))
        heldout = seqgen.generate_demos(spec, int(task.get("n_heldout", 200)),
                                        int(task.get("heldout_seed", 2)), exclude=demos.sources())
        model = _build_model(model_spec, spec.n_features, spec.n_actions, config.seed, None)
        source = seqgen.SeqDemoSource(spec, demos, config.seed)

        def hook(m):
            return seqgen.evaluate_model(m, spec, heldout).mean_reward
    else:
        process = read_valid_elp(str(task))
        q_star = _solve(process)
        expert = bellman.greedy_policy(q_star)
        model = _build_model(model_spec, process.n_states, process.n_actions, config.seed, process.n_states)
        onehot = None if isinstance(model, TabularQModel) else (lambda s: np.eye(process.n_states)[s])
        source = ElpDemoSource(process, expert, config.seed, onehot)
        feats = np.arange(process.n_states) if onehot is None else np.eye(process.n_states)

        def hook(m):
            return lagrangian.greedy_J(process, m.batch_values(feats))

    init_params = model.params.copy()
    try:
        model, record = train(source, model, config, hook)
    except TrainingDiverged as exc:
        raise CliError(str(exc), EXIT_NONCONV) from None
    record.header.update({"task": task, "model_spec": model_spec, "initial_params_equal":
                          bool(np.array_equal(init_params, model.params))})
    atomic_write(out_dir / "run.jsonl", record.to_jsonl())
    atomic_write(out_dir / "curve.csv", record.curve_csv())
    np.save(out_dir / "model.npy", model.params)
    final = record.final_eval()
    print(f"updates={len(record.entries)} final_eval_J={final!r}")
    print(f"wrote {out_dir / 'run.jsonl'}, {out_dir / 'curve.csv'}, {out_dir / 'model.npy'}")
    return EXIT_OK


def cmd_seqgen(args) -> int:
    spec = seqgen.SeqTaskSpec.simple(args.vocab_size, (args.min_len, args.max_len), args.horizon,
                                     args.transform, args.metric)
    demos = seqgen.generate_demos(spec, args.n, args.seed)
    out = Path(args.emit_demos) if args.emit_demos else _out_path(args, "demos.tsv")
    atomic_write(out, seqgen.format_demos(spec, demos))
    print(f"wrote {len(demos)} pairs to {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out-dir", default=argparse.SUPPRESS)
    common.add_argument("--tol", type=float, default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="lagq", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    parser.add_argument("--out-dir", default=".", help="directory for output files")
    parser.add_argument("--tol", type=float, default=None,
                        help="numerical tolerance (solve: 1e-10, checks: 1e-8)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check the ELP conditions")
    p.add_argument("elp", help="ELP JSON file or builtin:<name>")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve", parents=[common], help="value iteration to Q*")
    p.add_argument("elp")
    p.add_argument("--gamma", default="episodic", help="'episodic' or CSV state,gamma")
    p.add_argument("--out", help="Q CSV path (default <out-dir>/qstar.csv)")
    p.add_argument("--max-iters", type=int, default=100_000)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("duality", parents=[common], help="strong duality check for a conjugate policy")
    p.add_argument("elp")
    p.add_argument("--policy", default="greedy-qstar", help="greedy-qstar, uniform or CSV state,action,prob")
    p.set_defaults(func=cmd_duality)

    p = sub.add_parser("saddle", parents=[common], help="classify a Q-function")
    p.add_argument("elp")
    p.add_argument("q_csv")
    p.add_argument("--policy", default="greedy-qstar")
    p.add_argument("--kind", choices=("minimax", "maximin"), default="minimax")
    p.add_argument("--report", help="write the per-pair saddle report here")
    p.set_defaults(func=cmd_saddle)

    p = sub.add_parser("counterexamples", parents=[common], help="run the built-in exhibits")
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_counterexamples)

    p = sub.add_parser("train", parents=[common], help="train a Q-model from demonstrations")
    p.add_argument("config", help="JSON experiment config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("seqgen", parents=[common], help="emit demonstration pairs")
    p.add_argument("--transform", default="copy", help="copy, reverse or shift:<k>")
    p.add_argument("--vocab-size", type=int, default=5)
    p.add_argument("--min-len", type=int, default=3)
    p.add_argument("--max-len", type=int, default=6)
    p.add_argument("--horizon", type=int, default=8, help="maximum output length H")
    p.add_argument("--metric", default="exact_match")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--emit-demos", help="TSV path (default <out-dir>/demos.tsv)")
    p.set_defaults(func=cmd_seqgen)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.tol is None:
        args.tol = 1e-10 if args.command == "solve" else 1e-8
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (ElpFormatError, QFormatError, seqgen.DemoFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DimensionMismatch, seqgen.SeqSpecError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
