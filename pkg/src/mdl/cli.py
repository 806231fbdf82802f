"""Command-line interface.

Subcommands: ``run`` (one schedule), ``typecheck`` (MiniDet verdict),
``explore`` (exhaustive interleaving exploration plus outcome-determinism),
``sisafe`` (schedule-independent safety), ``corpus`` (replay the shipped
manifest expectations), and ``replay`` (re-execute a recorded trace).

Exit codes: 0 success/verdict-good, 1 verdict-bad (Stuck outcome, Fails,
Rejected, nondeterministic outcomes, corpus mismatch), 2 inconclusive
(limits hit / truncated) and usage errors, 3 parse errors, malformed trace
files, and internal errors.

Trace files are JSON lines, one step per line:
``{"step_index": i, "label": {"task_path": [...], "kind": "..."},
"redex_printed": "...", "store_delta": {...}}``.  ``replay`` consumes the
``label`` fields and ignores the rest.

The ``MDL_COLOR`` environment variable (any value other than empty, ``0``,
``false``, or ``no``) colorizes human-format diagnostics.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Optional, Sequence

from .detlib import corpus_source, load_manifest
from .explorer import (
    Fails,
    Holds,
    HoldsVacuously,
    Inconclusive,
    Limits,
    ReplayError,
    Stuck,
    Terminated,
    Truncated,
    check_outcome_determinism,
    check_sisafety,
    replay,
    run_schedule,
)
from .lang import App, Expr, split_redex, vint
from .minidet import Rejected, WellTyped, check_program
from .semantics import Config, RunPar, StepLabel, store_delta
from .surface import ParseError, parse_with_positions, to_source, value_to_source


class TraceFileError(Exception):
    """A trace file that cannot be decoded into step labels."""


# ---------------------------------------------------------------------------
# Small helpers
# ---------------------------------------------------------------------------


def _want_color() -> bool:
    return os.environ.get("MDL_COLOR", "").lower() not in ("", "0", "false", "no")


def _paint(text: str, code: str) -> str:
    if _want_color():
        return f"\x1b[{code}m{text}\x1b[0m"
    return text


def _good(text: str) -> str:
    return _paint(text, "32")


def _bad(text: str) -> str:
    return _paint(text, "31")


def _warn(text: str) -> str:
    return _paint(text, "33")


def _load_program(path: str, arg: Optional[int]):
    """Parse a source file; ``arg`` splices an integer application on."""
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    program, positions = parse_with_positions(text)
    if arg is not None:
        program = App(program, vint(arg))
    return program, positions


def _limits(args: argparse.Namespace) -> Limits:
    return Limits(max_states=args.limits_states, max_steps=args.limits_steps)


def _label_dict(label: StepLabel) -> dict:
    return {"task_path": list(label.task), "kind": label.kind}


def _trace_dicts(labels: Sequence[StepLabel]) -> list[dict]:
    return [_label_dict(label) for label in labels]


def _task_redex(e: Expr, path: Sequence[int]) -> Expr:
    """The head redex of the task at ``path`` (Par sides, outermost first)."""
    for side in path:
        _, redex = split_redex(e)
        if not isinstance(redex, RunPar):
            return redex
        e = redex.left if side == 0 else redex.right
    _, redex = split_redex(e)
    return redex


def _outcome_dict(outcome) -> dict:
    if isinstance(outcome, Terminated):
        return {
            "kind": "terminated",
            "value": value_to_source(outcome.value),
            "arrays": [[value_to_source(c) for c in row] for row in outcome.store],
            "steps": len(outcome.trace),
        }
    if isinstance(outcome, Stuck):
        return {
            "kind": "stuck",
            "redex": to_source(_task_redex(outcome.config.expr, ())),
            "steps": len(outcome.trace),
        }
    return {"kind": "truncated", "steps": len(outcome.trace)}


def _outcome_human(outcome) -> str:
    if isinstance(outcome, Terminated):
        text = f"terminated: {value_to_source(outcome.value)}"
        if outcome.store:
            arrays = [[value_to_source(c) for c in row] for row in outcome.store]
            text += f"  arrays: {arrays}"
        return _good(text)
    if isinstance(outcome, Stuck):
        redex = to_source(_task_redex(outcome.config.expr, ()))
        return _bad(f"stuck after {len(outcome.trace)} steps at: {redex}")
    return _warn(f"truncated after {len(outcome.trace)} steps")


def _outcome_exit(outcome) -> int:
    if isinstance(outcome, Terminated):
        return 0
    if isinstance(outcome, Stuck):
        return 1
    return 2


def _emit_json(payload: dict, seconds: float) -> None:
    payload = dict(payload)
    payload["timing"] = {"seconds": round(seconds, 6)}
    print(json.dumps(payload, indent=2, sort_keys=True))


def _trace_line(index: int, label: StepLabel, before: Config, after: Config) -> dict:
    return {
        "step_index": index,
        "label": _label_dict(label),
        "redex_printed": to_source(_task_redex(before.expr, label.task)),
        "store_delta": store_delta(before.store, after.store),
    }


class _TraceWriter:
    def __init__(self, path: Optional[str]):
        self.handle = open(path, "w", encoding="utf-8") if path else None

    def on_step(self, index: int, label: StepLabel, before: Config, after: Config):
        if self.handle is not None:
            self.handle.write(json.dumps(_trace_line(index, label, before, after)))
            self.handle.write("\n")

    def close(self):
        if self.handle is not None:
            self.handle.close()


def _read_trace(path: str) -> list[StepLabel]:
    labels = []
    try:
        with open(path, "r", encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, 1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                    label = record["label"]
                    task = tuple(label["task_path"])
                    kind = label["kind"]
                except (json.JSONDecodeError, KeyError, TypeError) as exc:
                    raise TraceFileError(f"{path}:{lineno}: {exc}") from exc
                if not all(side in (0, 1) for side in task) or not isinstance(
                    kind, str
                ):
                    raise TraceFileError(f"{path}:{lineno}: bad label {label!r}")
                labels.append(StepLabel(task, kind))
    except OSError as exc:
        raise TraceFileError(str(exc)) from exc
    return labels


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    if args.policy == "trace":
        print("policy 'trace' needs a trace file; use the replay subcommand",
              file=sys.stderr)
        return 2
    if args.policy == "random" and args.seed is None:
        print("--policy random requires --seed", file=sys.stderr)
        return 2
    program, _ = _load_program(args.file, args.arg)
    writer = _TraceWriter(args.trace_out)
    start = time.perf_counter()
    try:
        outcome = run_schedule(
            program,
            args.policy,
            _limits(args),
            seed=args.seed,
            on_step=writer.on_step,
        )
    finally:
        writer.close()
    seconds = time.perf_counter() - start
    if args.format == "json":
        _emit_json(
            {
                "program": args.file,
                "policy": args.policy,
                "seed": args.seed,
                "outcome": _outcome_dict(outcome),
            },
            seconds,
        )
    else:
        print(_outcome_human(outcome))
    return _outcome_exit(outcome)


def cmd_typecheck(args: argparse.Namespace) -> int:
    program, positions = _load_program(args.file, args.arg)
    start = time.perf_counter()
    verdict = check_program(program, positions)
    seconds = time.perf_counter() - start
    if isinstance(verdict, WellTyped):
        if args.format == "json":
            _emit_json(
                {
                    "program": args.file,
                    "verdict": "well_typed",
                    "type": str(verdict.type),
                    "error": None,
                },
                seconds,
            )
        else:
            print(_good(f"WellTyped: {verdict.type}"))
        return 0
    error = verdict.error
    if args.format == "json":
        _emit_json(
            {
                "program": args.file,
                "verdict": "rejected",
                "type": None,
                "error": error.as_json(),
            },
            seconds,
        )
    else:
        print(_bad(f"Rejected: {error}"))
    return 1


def cmd_explore(args: argparse.Namespace) -> int:
    program, _ = _load_program(args.file, args.arg)
    start = time.perf_counter()
    deterministic, witnesses, report = check_outcome_determinism(
        program, _limits(args), jobs=args.jobs
    )
    seconds = time.perf_counter() - start
    if args.format == "json":
        _emit_json(
            {
                "program": args.file,
                "deterministic": deterministic,
                "states_explored": report.states_explored,
                "outcomes": [_outcome_dict(o) for o in report.outcomes],
                "witness_traces": [_trace_dicts(w.trace) for w in witnesses],
                "limits_hit": list(report.limits_hit),
            },
            seconds,
        )
    else:
        print(f"states explored: {report.states_explored}")
        for outcome in report.outcomes:
            print(f"  {_outcome_human(outcome)}")
        if report.limits_hit:
            print(_warn(f"limits hit: {', '.join(report.limits_hit)}"))
        word = "deterministic" if deterministic else "nondeterministic"
        print((_good if deterministic else _bad)(f"outcomes: {word}"))
    if not report.complete:
        return 2
    return 0 if deterministic else 1


def _sisafe_name(verdict) -> str:
    return {
        Holds: "holds",
        HoldsVacuously: "holds_vacuously",
        Fails: "fails",
        Inconclusive: "inconclusive",
    }[type(verdict)]


def cmd_sisafe(args: argparse.Namespace) -> int:
    program, _ = _load_program(args.file, args.arg)
    start = time.perf_counter()
    verdict, report = check_sisafety(program, _limits(args), jobs=args.jobs)
    seconds = time.perf_counter() - start
    if isinstance(verdict, Holds):
        witness_traces = [list(verdict.witness)]
    elif isinstance(verdict, Fails):
        witness_traces = [list(verdict.terminating), list(verdict.stuck)]
    else:
        witness_traces = []
    if args.format == "json":
        _emit_json(
            {
                "program": args.file,
                "verdict": _sisafe_name(verdict),
                "states_explored": report.states_explored,
                "outcomes": [_outcome_dict(o) for o in report.outcomes],
                "witness_traces": [_trace_dicts(w) for w in witness_traces],
                "limits_hit": list(report.limits_hit),
            },
            seconds,
        )
    else:
        name = {
            "holds": "Holds",
            "holds_vacuously": "HoldsVacuously",
            "fails": "Fails",
            "inconclusive": "Inconclusive",
        }[_sisafe_name(verdict)]
        color = _good if name.startswith("Holds") else (
            _warn if name == "Inconclusive" else _bad
        )
        print(color(f"verdict: {name}") + f"  ({report.states_explored} states)")
        if isinstance(verdict, Fails):
            for title, trace in (
                ("terminating trace", verdict.terminating),
                ("stuck trace", verdict.stuck),
            ):
                rendered = " ".join(
                    f"{'.'.join(map(str, l.task)) or 'root'}:{l.kind}" for l in trace
                )
                print(f"{title} ({len(trace)} steps): {rendered}")
        elif isinstance(verdict, Inconclusive):
            print(_warn(f"limits hit: {', '.join(verdict.limits_hit)}"))
    if isinstance(verdict, (Holds, HoldsVacuously)):
        return 0
    if isinstance(verdict, Fails):
        return 1
    return 2


def _check_corpus_entry(entry, limits: Limits, jobs: int) -> list[str]:
    """Every way this manifest row's expectations fail to reproduce."""
    mismatches = []
    program, positions = parse_with_positions(corpus_source(entry.name))
    if entry.arg is not None:
        program = App(program, vint(entry.arg))
    verdict = check_program(program, positions)
    got_typecheck = "well_typed" if isinstance(verdict, WellTyped) else "rejected"
    if got_typecheck != entry.typecheck:
        mismatches.append(f"typecheck: expected {entry.typecheck}, got {got_typecheck}")
    if entry.typecheck_error is not None and isinstance(verdict, Rejected):
        if verdict.error.kind != entry.typecheck_error:
            mismatches.append(
                f"typecheck error: expected {entry.typecheck_error}, "
                f"got {verdict.error.kind}"
            )
    safety, report = check_sisafety(program, limits, jobs=jobs)
    got_safety = _sisafe_name(safety)
    if got_safety != entry.sisafe:
        mismatches.append(f"sisafe: expected {entry.sisafe}, got {got_safety}")
    terminated = report.terminated
    if entry.deterministic is True and len(terminated) != 1:
        mismatches.append(f"expected one outcome, got {len(terminated)}")
    if entry.deterministic is False and len(terminated) < 2:
        mismatches.append("expected nondeterministic outcomes, got fewer than 2")
    if entry.outcome is not None and terminated:
        got = _outcome_dict(terminated[0])
        got = {"value": got["value"], "arrays": got["arrays"]}
        if got != entry.outcome:
            mismatches.append(f"outcome: expected {entry.outcome}, got {got}")
    return mismatches


def cmd_corpus(args: argparse.Namespace) -> int:
    limits = _limits(args)
    start = time.perf_counter()
    rows = []
    for entry in load_manifest():
        mismatches = _check_corpus_entry(entry, limits, args.jobs)
        rows.append({"name": entry.name, "ok": not mismatches,
                     "mismatches": mismatches})
    seconds = time.perf_counter() - start
    all_ok = all(row["ok"] for row in rows)
    if args.format == "json":
        _emit_json({"rows": rows, "ok": all_ok}, seconds)
    else:
        for row in rows:
            if row["ok"]:
                print(f"{row['name']:20s} {_good('ok')}")
            else:
                print(f"{row['name']:20s} {_bad('MISMATCH')}")
                for reason in row["mismatches"]:
                    print(f"    {reason}")
        summary = "all expectations match" if all_ok else "expectation mismatches"
        print((_good if all_ok else _bad)(summary))
    return 0 if all_ok else 1


def cmd_replay(args: argparse.Namespace) -> int:
    program, _ = _load_program(args.file, args.arg)
    labels = _read_trace(args.trace)
    writer = _TraceWriter(args.trace_out)
    start = time.perf_counter()
    try:
        outcome = replay(program, labels, on_step=writer.on_step)
    finally:
        writer.close()
    seconds = time.perf_counter() - start
    if args.format == "json":
        _emit_json(
            {
                "program": args.file,
                "trace": args.trace,
                "replayed_steps": len(labels),
                "outcome": _outcome_dict(outcome),
            },
            seconds,
        )
    else:
        print(_outcome_human(outcome))
    return _outcome_exit(outcome)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_limit_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--limits-states", type=int, default=10**6, metavar="N",
                     help="state budget for exploration (default 10^6)")
    sub.add_argument("--limits-steps", type=int, default=10**5, metavar="N",
                     help="step budget per schedule (default 10^5)")


def _add_format_flag(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--format", choices=("human", "json"), default="human")


def _add_file_arg(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("file", help="program source file (.mdl)")
    sub.add_argument("--arg", type=int, default=None, metavar="N",
                     help="apply the program to the integer literal N")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mdl",
        description="Parallel lambda-language toolchain: execution, "
        "exhaustive interleaving exploration, and MiniDet type checking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute one schedule")
    _add_file_arg(run)
    run.add_argument("--policy",
                     choices=("leftmost", "rightmost", "random", "trace"),
                     default="leftmost")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--trace-out", metavar="FILE", default=None)
    _add_limit_flags(run)
    _add_format_flag(run)
    run.set_defaults(fn=cmd_run)

    typecheck = sub.add_parser("typecheck", help="MiniDet verdict for a file")
    _add_file_arg(typecheck)
    _add_format_flag(typecheck)
    typecheck.set_defaults(fn=cmd_typecheck)

    explore = sub.add_parser(
        "explore", help="exhaustive exploration + outcome determinism"
    )
    _add_file_arg(explore)
    explore.add_argument("--jobs", type=int, default=1)
    _add_limit_flags(explore)
    _add_format_flag(explore)
    explore.set_defaults(fn=cmd_explore)

    sisafe = sub.add_parser("sisafe", help="schedule-independent safety verdict")
    _add_file_arg(sisafe)
    sisafe.add_argument("--jobs", type=int, default=1)
    _add_limit_flags(sisafe)
    _add_format_flag(sisafe)
    sisafe.set_defaults(fn=cmd_sisafe)

    corpus = sub.add_parser("corpus", help="replay the shipped manifest")
    corpus.add_argument("--jobs", type=int, default=1)
    _add_limit_flags(corpus)
    _add_format_flag(corpus)
    corpus.set_defaults(fn=cmd_corpus)

    replay_cmd = sub.add_parser("replay", help="re-execute a recorded trace")
    _add_file_arg(replay_cmd)
    replay_cmd.add_argument("trace", help="trace file (JSON lines)")
    replay_cmd.add_argument("--trace-out", metavar="FILE", default=None)
    _add_format_flag(replay_cmd)
    replay_cmd.set_defaults(fn=cmd_replay)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ParseError as exc:
        print(_bad(f"parse error: {exc}"), file=sys.stderr)
        return 3
    except TraceFileError as exc:
        print(_bad(f"malformed trace file: {exc}"), file=sys.stderr)
        return 3
    except ReplayError as exc:
        print(_bad(f"trace does not replay: {exc}"), file=sys.stderr)
        return 3
    except OSError as exc:
        print(_bad(str(exc)), file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - defensive
        print(_bad(f"internal error: {type(exc).__name__}: {exc}"), file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
