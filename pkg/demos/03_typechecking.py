"""The affine type checker, accepted and rejected programs.

Walks through fractional-permission types, the combine operation that
merges the two sides of a ``par``, phase switching between write- and
read-permissions, and each of the checker's error kinds.

Run with:  python demos/03_typechecking.py
"""

from fractions import Fraction

from mdl.detlib import corpus, corpus_source, hash_ast
from mdl.lang import App
from mdl.minidet import (
    BOT,
    ERROR_KINDS,
    INT_T,
    PRead,
    PWrite,
    Ref,
    Rejected,
    WellTyped,
    check,
    check_program,
    phase_update,
    type_combine,
)
from mdl.surface import parse, parse_with_positions


def banner(title: str) -> None:
    print(f"\n=== {title} " + "=" * max(0, 66 - len(title)))


def show(source: str) -> None:
    result = check_program(parse(source))
    if isinstance(result, WellTyped):
        print(f"  accepted : {result.type}\n      {source}")
    else:
        err = result.error
        print(f"  rejected : {err.kind} on {err.subject!r}\n      {source}")


def main() -> None:
    banner("Fractions and combine")
    half, one = PWrite(Fraction(1, 2)), PWrite(1)
    print(f"  pwrite 1/2 ⊕ pwrite 1/2 = {type_combine(half, half)}")
    print(f"  pwrite 1   ⊕ pwrite 1/2 = {type_combine(one, half)}   (over-committed)")
    print(f"  ref int    ⊕ ref int    = {type_combine(Ref(INT_T), Ref(INT_T))}")
    print(f"  ⊥ is absorbing: ⊥ ⊕ pwrite 1 = {type_combine(BOT, one)}")

    banner("Phase switching")

    def phases(t):
        return "{" + ", ".join(sorted(str(u) for u in phase_update(t))) + "}"

    print(f"  phase_update(pwrite 1)   = {phases(PWrite(1))}")
    print(f"  phase_update(pread 1)    = {phases(PRead(1))}")
    print(f"  phase_update(pwrite 1/2) = {phases(PWrite(Fraction(1, 2)))}"
          "   (partial fractions cannot switch)")

    banner("Accepted programs")
    show("let r = palloc 0 in par (pwrite r 3) (pwrite r 5)")
    show("let r = palloc 0 in (pwrite r 3; pread r; par (pread r) (pread r))")
    show("let n = 4 in let z = 0 in let a = palloc z in "
         "parfor z n (fun i -> pwrite a i)")

    banner("Rejected programs")
    show("let r = ref 0 in par (set r 1) (set r 2)")
    show("let r = palloc 0 in par (pwrite r 1) (pread r)")
    show("let r = palloc 0 in (pwrite r 3; par (pread r) (pread r))")
    show("let r = ref 0 in par ((fun x -> set r x) 1) 2")
    show("assert 3")
    show("pread q")

    banner("Library functions get precise types")
    arrow, residual = check({}, App(corpus("dedup"), hash_ast("h1")))
    print(f"  dedup (fun x -> x) : {arrow}   (residual env: {residual})")
    print("\nThe checker distinguishes", len(ERROR_KINDS), "error kinds:")
    for kind in ERROR_KINDS:
        print(f"  - {kind}")

    banner("Structured errors")
    program, positions = parse_with_positions(corpus_source("unsafe"))
    result = check_program(program, positions)
    assert isinstance(result, Rejected)
    print(f"  {result.error}")
    print(f"  as_json(): {result.error.as_json()}")


if __name__ == "__main__":
    main()
