"""Tour of the bundled corpus.

Walks the corpus manifest, prints each program's pinned verdicts, and
replays two entries end to end: the concession-counter program (a large
schedule-independent computation) and the deliberately racy ``unsafe``
program (whose safety depends on the schedule).

Run with:  python demos/01_corpus_tour.py
"""

from mdl.detlib import corpus_source, load_manifest
from mdl.explorer import Fails, check_sisafety, replay
from mdl.lang import App, vint
from mdl.surface import parse, value_to_source


def banner(title: str) -> None:
    print(f"\n=== {title} " + "=" * max(0, 66 - len(title)))


def main() -> None:
    banner("The manifest")
    entries = load_manifest()
    print(f"{len(entries)} programs ship with the package:\n")
    width = max(len(e.name) for e in entries)
    for entry in entries:
        verdict = entry.typecheck
        if entry.typecheck_error:
            verdict += f" ({entry.typecheck_error})"
        print(f"  {entry.name:<{width}}  {verdict:<32} sisafe={entry.sisafe}")

    banner("A schedule-independent program")
    entry = next(e for e in entries if e.name == "dumas")
    print(entry.description, "\n")
    program = App(parse(corpus_source("dumas")), vint(entry.arg))
    verdict, report = check_sisafety(program)
    print(f"verdict:  {type(verdict).__name__}")
    print(f"explored: {report.states_explored} states, "
          f"{len(report.outcomes)} distinct outcome(s)")
    outcome = report.terminated[0]
    counters = [arr for arr in outcome.final_store.cells if len(arr) == 1]
    print(f"counter cell after every schedule: "
          f"{value_to_source(counters[0][0])}")

    banner("A racy program")
    print(corpus_source("unsafe").rstrip(), "\n")
    unsafe = parse(corpus_source("unsafe"))
    verdict, _report = check_sisafety(unsafe)
    assert isinstance(verdict, Fails)
    print("verdict:  Fails — safety depends on the schedule.")
    print(f"one schedule terminates:     {type(replay(unsafe, verdict.terminating)).__name__}")
    print(f"another gets stuck:          {type(replay(unsafe, verdict.stuck)).__name__}")
    print("\nThe witness schedules are replayable label sequences; the `mdl`")
    print("CLI can save them as trace files (`mdl sisafe --json`).")


if __name__ == "__main__":
    main()
