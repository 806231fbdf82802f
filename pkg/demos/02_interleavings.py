"""Exploring interleavings of a parallel program.

Shows the three levels of the execution stack: single scheduled runs
(``run_schedule``), exhaustive exploration of every interleaving
(``explore_all`` / ``check_outcome_determinism``), and replay of a
recorded schedule (``replay``).

Run with:  python demos/02_interleavings.py
"""

from mdl.explorer import (
    Limits,
    Terminated,
    check_outcome_determinism,
    explore_all,
    replay,
    run_schedule,
)
from mdl.gen import wrap_with_prelude
from mdl.surface import parse, value_to_source


def banner(title: str) -> None:
    print(f"\n=== {title} " + "=" * max(0, 66 - len(title)))


RACY = "let r = alloc 1 in (par (store r 0 1) (store r 0 2)); load r 0"


def main() -> None:
    banner("One program, many schedules")
    print(RACY, "\n")
    racy = parse(RACY)
    for policy in ("leftmost", "rightmost"):
        outcome = run_schedule(racy, policy, Limits())
        print(f"  {policy:<9} schedule → {value_to_source(outcome.value)}")
    for seed in (1, 2, 3):
        outcome = run_schedule(racy, "random", Limits(), seed=seed)
        print(f"  random(seed={seed})     → {value_to_source(outcome.value)}")

    banner("Exhaustive exploration")
    report = explore_all(racy)
    values = sorted(value_to_source(t.value) for t in report.terminated)
    print(f"states explored: {report.states_explored}  "
          f"(dedup hits: {report.dedup_hits})")
    print(f"distinct final values: {values}")
    deterministic, _, _ = check_outcome_determinism(racy, Limits())
    print(f"outcome-deterministic: {deterministic}")

    banner("Priority writes close the race")
    source = "let r = palloc 0 in ((par (pwrite r 1) (pwrite r 2)); pread r)"
    print(source, "\n")
    program = wrap_with_prelude(parse(source))
    report = explore_all(program)
    values = sorted(value_to_source(t.value) for t in report.terminated)
    print(f"distinct final values: {values}")
    deterministic, _, _ = check_outcome_determinism(program, Limits())
    print(f"outcome-deterministic: {deterministic}")
    print("A priority cell keeps the max of all writes, so the two-write")
    print("race collapses to a single outcome under every schedule.")

    banner("Record and replay")
    outcome = run_schedule(racy, "leftmost", Limits())
    assert isinstance(outcome, Terminated)
    labels = list(outcome.trace)
    print(f"the leftmost run took {len(labels)} labelled steps, e.g.:")
    for label in labels[:4]:
        path = ":".join(str(i) for i in label.task) or "root"
        print(f"  task {path:<6} {label.kind}")
    replayed = run_schedule(racy, "trace", Limits(), labels=labels)
    print(f"replaying those labels: {value_to_source(replayed.value)} "
          f"(same as the original run)")
    again = replay(racy, tuple(labels))
    print(f"replay() agrees: {value_to_source(again.value)}")


if __name__ == "__main__":
    main()
