"""Program corpus and meta-level oracles.

The corpus collects the library combinators — references, priority writes,
integer arrays, the concurrent hash set, ``parfor`` and ``dedup`` — as
canonical source snippets.  :func:`corpus` returns their ASTs; the shipped
``.mdl`` files under ``corpus/`` are self-contained programs, each embedding
the combinator definitions it needs as a textual ``let`` prelude followed by
a small driver.  ``corpus/manifest.json`` records per-entry expectations
(typecheck verdict, safety verdict, canonical outcome) consumed by the test
suite and the ``corpus`` CLI subcommand.

The oracles at the bottom are deliberately independent of the interpreter:
they recompute expected results (set of distinct elements, sequential
hash-set layout, running maximum) directly in Python, so explorer outcomes
can be cross-checked against a second implementation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import cache
from importlib import resources
from typing import Callable, Iterable, Optional, Sequence

from .lang import Expr, Pair
from .surface import parse

# ---------------------------------------------------------------------------
# Canonical combinator sources
#
# Files bind these under the names used here (hash-set operations are bound
# as hinit/hadd/helems); cross-references between combinators use exactly
# these binding names, which is what the type checker's structural
# recognition keys on.
# ---------------------------------------------------------------------------

BINDING_SOURCES: dict[str, str] = {
    "ref": "fun x -> let r = alloc 1 in store r 0 x; r",
    "get": "fun r -> load r 0",
    "set": "fun r v -> store r 0 v",
    "palloc": "fun n -> ref n",
    "pwrite": (
        "mu f. fun r x -> "
        "let y = get r in "
        "if x < y then () else if cas r 0 y x then () else f r x"
    ),
    "pread": "fun r -> get r",
    "aadd": (
        "fun r k -> "
        "(mu f. fun _ -> let y = get r in "
        "if cas r 0 y (y + k) then () else f ()) ()"
    ),
    "fill": (
        "fun a v -> "
        "(mu f. fun i -> if i == length a then a else (store a i v; f (i + 1))) 0"
    ),
    "alloc_fill": "fun n v -> fill (alloc n) v",
    "hinit": (
        "fun h n -> "
        "assert (n >= 0); "
        "let d = ref () in "
        "let a = alloc_fill n d in "
        "(a, d, h)"
    ),
    "hadd": (
        "fun s x -> "
        "let a = fst s in "
        "let d = fst (snd s) in "
        "let h = snd (snd s) in "
        "let put = mu f. fun x i -> "
        "let y = load a i in "
        "if x == y then () "
        "else if y == d then (if cas a i d x then () else f x i) "
        "else let j = (i + 1) mod (length a) in "
        "if x < y then f x j "
        "else (if cas a i y x then f y j else f x i) "
        "in put x ((h x) mod (length a))"
    ),
    "filter_compact": (
        "fun a d -> "
        "let n = length a in "
        "let count = (mu f. fun i c -> "
        "if i == n then c "
        "else if (load a i) == d then f (i + 1) c "
        "else f (i + 1) (c + 1)) 0 0 in "
        "let out = alloc count in "
        "(mu g. fun i j -> "
        "if i == n then out "
        "else let y = load a i in "
        "if y == d then g (i + 1) j "
        "else (store out j y; g (i + 1) (j + 1))) 0 0"
    ),
    "helems": "fun s -> filter_compact (fst s) (fst (snd s))",
    "parfor": (
        "mu f. fun i j k -> "
        "if (j - i) == 0 then () "
        "else if (j - i) == 1 then k i "
        "else let mid = i + (j - i) / 2 in par (f i mid k) (f mid j k)"
    ),
    "dedup": (
        "fun h a -> "
        "let start = 0 in "
        "let len = length a in "
        "let s = hinit h (len + 1) in "
        "parfor start len (fun i -> hadd s (load a i)); "
        "(a, helems s)"
    ),
    "dumas": (
        "fun n -> "
        "let r = ref 0 in "
        "(par (fun _ -> aadd r 1802) (fun _ -> aadd r 42)); "
        "assert (get r == n)"
    ),
}

UNSAFE_SOURCE = "let r = ref true in (par (set r true) (set r false)); assert (get r)"

# Test hash functions: worst-case clustering and the identity.
HASH_SOURCES: dict[str, str] = {
    "h0": "fun x -> 0",
    "h1": "fun x -> x",
}

# Corpus names exposed by corpus(); hash-set operations use long names.
_NAME_TO_BINDING: dict[str, str] = {
    "aadd": "aadd",
    "palloc": "palloc",
    "pwrite": "pwrite",
    "pread": "pread",
    "fill": "fill",
    "alloc_fill": "alloc_fill",
    "hashset_init": "hinit",
    "hashset_add": "hadd",
    "hashset_elems": "helems",
    "filter_compact": "filter_compact",
    "parfor": "parfor",
    "dedup": "dedup",
    "dumas": "dumas",
}

CORPUS_NAMES: tuple[str, ...] = (
    "ref_ops",
    "aadd",
    "dumas",
    "unsafe",
    "palloc",
    "pwrite",
    "pread",
    "fill",
    "alloc_fill",
    "hashset_init",
    "hashset_add",
    "hashset_elems",
    "filter_compact",
    "parfor",
    "dedup",
)


@cache
def corpus(name: str) -> Expr:
    """The canonical AST for a corpus name.

    ``ref_ops`` is the triple (ref, get, set) as one tuple expression;
    ``unsafe`` is a complete program; every other name is a combinator.
    """
    if name == "ref_ops":
        return Pair(
            parse(BINDING_SOURCES["ref"]),
            Pair(parse(BINDING_SOURCES["get"]), parse(BINDING_SOURCES["set"])),
        )
    if name == "unsafe":
        return parse(UNSAFE_SOURCE)
    binding = _NAME_TO_BINDING.get(name)
    if binding is None:
        raise KeyError(f"unknown corpus name {name!r}")
    return parse(BINDING_SOURCES[binding])


@cache
def hash_ast(name: str) -> Expr:
    return parse(HASH_SOURCES[name])


# ---------------------------------------------------------------------------
# Corpus files
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusEntry:
    """One manifest row: the file plus its expected behaviors.

    ``provenance`` tags each expectation as transcribed (stated by the
    source material), derived (recomputed independently for this artifact),
    or trivial.
    """

    name: str
    file: str
    description: str
    arg: Optional[int]
    typecheck: str  # "well_typed" | "rejected"
    typecheck_error: Optional[str]
    sisafe: str  # "holds" | "holds_vacuously" | "fails"
    deterministic: Optional[bool]
    outcome: Optional[dict]
    provenance: dict[str, str]


# deps: binding names in prelude order; main: the driver expression.
_FILE_SPECS: dict[str, dict] = {
    "ref_ops": dict(
        deps=["ref", "get", "set"],
        main="let r = ref 7 in set r (get r + 1); get r",
        description="references as one-cell arrays: allocate, update, read",
        arg=None,
        typecheck="well_typed",
        typecheck_error=None,
        sisafe="holds",
        deterministic=True,
        outcome={"value": "8", "arrays": []},
        provenance={"typecheck": "transcribed", "sisafe": "trivial", "outcome": "trivial"},
    ),
    "aadd": dict(
        deps=["ref", "get", "aadd"],
        main="let r = ref 0 in aadd r 5; aadd r 37; get r",
        description="atomic add encoded as a compare-and-swap retry loop",
        arg=None,
        typecheck="rejected",
        typecheck_error=None,
        sisafe="holds",
        deterministic=True,
        outcome={"value": "42", "arrays": []},
        provenance={"typecheck": "derived", "sisafe": "trivial", "outcome": "trivial"},
    ),
    "dumas": dict(
        deps=["ref", "get", "aadd", "dumas"],
        main="dumas",
        description="two parallel atomic adds followed by a sum assertion",
        arg=1844,
        typecheck="rejected",
        typecheck_error=None,
        sisafe="holds",
        deterministic=True,
        outcome={"value": "()", "arrays": []},
        provenance={"typecheck": "derived", "sisafe": "transcribed", "outcome": "transcribed"},
    ),
    "unsafe": dict(
        deps=["ref", "get", "set"],
        main=UNSAFE_SOURCE,
        description="racy boolean flag whose assertion fails on some schedules",
        arg=None,
        typecheck="rejected",
        typecheck_error="UnsplittableSharing",
        sisafe="fails",
        deterministic=None,
        outcome=None,
        provenance={"typecheck": "transcribed", "sisafe": "transcribed"},
    ),
    "palloc": dict(
        deps=["ref", "get", "palloc", "pwrite", "pread"],
        main="let r = palloc 3 in pwrite r 5; pread r",
        description="priority-write cell: allocate, prioritized write, read",
        arg=None,
        typecheck="well_typed",
        typecheck_error=None,
        sisafe="holds",
        deterministic=True,
        outcome={"value": "5", "arrays": []},
        provenance={"typecheck": "transcribed", "sisafe": "trivial", "outcome": "trivial"},
    ),
    "pwrite": dict(
        deps=["ref", "get", "palloc", "pwrite", "pread"],
        main="let r = palloc 0 in (par (pwrite r 3) (pwrite r 5)); pread r",
        description="parallel prioritized writes keep the maximum",
        arg=None,
        typecheck="well_typed",
        typecheck_error=None,
        sisafe="holds",
        deterministic=True,
        outcome={"value": "5", "arrays": []},
        provenance={"typecheck": "transcribed", "sisafe": "derived", "outcome": "derived"},
    ),
    "pread": dict(
        deps=["ref", "get", "palloc", "pwrite", "pread"],
        main=(
            "let r = palloc 9 in "
            "let v = pread r in "
            "let p = par (pread r) (pread r) in "
            "v + (fst p) + (snd p)"
        ),
        description="full-fraction phase switch, then parallel shared reads",
        arg=None,
        typecheck="well_typed",
        typecheck_error=None,
        sisafe="holds",
        deterministic=True,
        outcome={"value": "27", "arrays": []},
        provenance={"typecheck": "derived", "sisafe": "trivial", "outcome": "trivial"},
    ),
    "pwrite_pread_mixed": dict(
        deps=["ref", "get", "palloc", "pwrite", "pread"],
        main="let r = palloc 0 in let p = par (pwrite r 5) (pread r) in snd p",
        description="a prioritized write racing a read: safe but nondeterministic",
        arg=None,
        typecheck="rejected",
        typecheck_error="PhaseViolation",
        sisafe="holds",
        deterministic=False,
        outcome=None,
        provenance={"typecheck": "derived", "sisafe": "derived"},
    ),
    "fill": dict(
        deps=["fill"],
        main="let a = alloc 2 in fill a 5; (load a 0) + (load a 1)",
        description="filling a raw array index by index",
        arg=None,
        typecheck="rejected",
        typecheck_error=None,
        sisafe="holds",
        deterministic=True,
        outcome={"value": "10", "arrays": []},
        provenance={"typecheck": "derived", "sisafe": "trivial", "outcome": "trivial"},
    ),
    "alloc_fill": dict(
        deps=["fill", "alloc_fill"],
        main="let a = alloc_fill 3 7 in (load a 0) + (load a 2)",
        description="allocate-and-fill, the typed array constructor",
        arg=None,
        typecheck="well_typed",
        typecheck_error=None,
        sisafe="holds",
        deterministic=True,
        outcome={"value": "14", "arrays": []},
        provenance={"typecheck": "transcribed", "sisafe": "trivial", "outcome": "trivial"},
    ),
    "hashset_init": dict(
        deps=["ref", "fill", "alloc_fill", "hinit", "filter_compact", "helems"],
        main="let s = hinit (fun x -> 0) 3 in helems s",
        description="hash-set construction; elems of the empty set is empty",
        arg=None,
        typecheck="well_typed",
        typecheck_error=None,
        sisafe="holds",
        deterministic=True,
        outcome={"value": "#0", "arrays": [[]]},
        provenance={"typecheck": "transcribed", "sisafe": "trivial", "outcome": "trivial"},
    ),
    "hashset_add": dict(
        deps=["ref", "fill", "alloc_fill", "hinit", "hadd", "filter_compact", "helems"],
        main="let s = hinit (fun x -> x) 4 in hadd s 2; hadd s 7; helems s",
        description="sequential inserts under the identity hash",
        arg=None,
        typecheck="well_typed",
        typecheck_error=None,
        sisafe="holds",
        deterministic=True,
        outcome={"value": "#0", "arrays": [["2", "7"]]},
        provenance={"typecheck": "transcribed", "sisafe": "trivial", "outcome": "derived"},
    ),
    "hashset_elems": dict(
        deps=["ref", "fill", "alloc_fill", "hinit", "hadd", "filter_compact", "helems"],
        main=(
            "let s = hinit (fun x -> 0) 3 in "
            "(par (hadd s 1) (hadd s 2)); "
            "helems s"
        ),
        description="parallel colliding inserts still yield one element array",
        arg=None,
        typecheck="well_typed",
        typecheck_error=None,
        sisafe="holds",
        deterministic=True,
        outcome={"value": "#0", "arrays": [["2", "1"]]},
        provenance={"typecheck": "transcribed", "sisafe": "derived", "outcome": "derived"},
    ),
    "filter_compact": dict(
        deps=["ref", "filter_compact"],
        main=(
            "let d = ref () in "
            "let a = alloc 3 in "
            "store a 0 5; store a 1 d; store a 2 9; "
            "filter_compact a d"
        ),
        description="drop dummy slots, compacting in ascending index order",
        arg=None,
        typecheck="rejected",
        typecheck_error=None,
        sisafe="holds",
        deterministic=True,
        outcome={"value": "#0", "arrays": [["5", "9"]]},
        provenance={"typecheck": "derived", "sisafe": "trivial", "outcome": "trivial"},
    ),
    "parfor": dict(
        deps=["ref", "get", "palloc", "pwrite", "pread", "fill", "alloc_fill", "parfor"],
        main=(
            "let a = alloc_fill 3 5 in "
            "let r = palloc 0 in "
            "let lo = 0 in "
            "let hi = 3 in "
            "parfor lo hi (fun i -> pwrite r (load a i)); "
            "pread r"
        ),
        description="fork-join parallel loop writing a running maximum",
        arg=None,
        typecheck="well_typed",
        typecheck_error=None,
        sisafe="holds",
        deterministic=True,
        outcome={"value": "5", "arrays": []},
        provenance={"typecheck": "transcribed", "sisafe": "derived", "outcome": "derived"},
    ),
    "dedup": dict(
        deps=[
            "ref",
            "fill",
            "alloc_fill",
            "hinit",
            "hadd",
            "filter_compact",
            "helems",
            "parfor",
            "dedup",
        ],
        main=(
            "let a = alloc_fill 3 0 in "
            "store a 0 3; store a 1 1; store a 2 3; "
            "dedup (fun x -> x) a"
        ),
        description="parallel deduplication of an integer array via the hash set",
        arg=None,
        typecheck="well_typed",
        typecheck_error=None,
        sisafe="holds",
        deterministic=True,
        outcome={"value": "(#0, #1)", "arrays": [["3", "1", "3"], ["1", "3"]]},
        provenance={"typecheck": "transcribed", "sisafe": "derived", "outcome": "derived"},
    ),
}


def render_program(name: str) -> str:
    """The full source text of a corpus file: header, prelude, driver."""
    spec = _FILE_SPECS[name]
    lines = [f"-- {name}: {spec['description']}"]
    for dep in spec["deps"]:
        lines.append(f"let {dep} = {BINDING_SOURCES[dep]} in")
    lines.append(spec["main"])
    return "\n".join(lines) + "\n"


def render_manifest() -> list[dict]:
    rows = []
    for name, spec in _FILE_SPECS.items():
        rows.append(
            {
                "name": name,
                "file": f"{name}.mdl",
                "description": spec["description"],
                "arg": spec["arg"],
                "typecheck": spec["typecheck"],
                "typecheck_error": spec["typecheck_error"],
                "sisafe": spec["sisafe"],
                "deterministic": spec["deterministic"],
                "outcome": spec["outcome"],
                "provenance": spec["provenance"],
            }
        )
    return rows


def _corpus_dir():
    return resources.files("mdl") / "corpus"


def corpus_source(name: str) -> str:
    """The shipped .mdl text for a corpus file name."""
    if name not in _FILE_SPECS:
        raise KeyError(f"unknown corpus name {name!r}")
    return (_corpus_dir() / f"{name}.mdl").read_text()


def corpus_program(name: str) -> Expr:
    return parse(corpus_source(name))


def load_manifest() -> tuple[CorpusEntry, ...]:
    raw = json.loads((_corpus_dir() / "manifest.json").read_text())
    return tuple(CorpusEntry(**row) for row in raw)


def write_corpus_files(root) -> None:
    """Regenerate the shipped corpus files and manifest under ``root``."""
    from pathlib import Path

    out = Path(root)
    out.mkdir(parents=True, exist_ok=True)
    for name in _FILE_SPECS:
        (out / f"{name}.mdl").write_text(render_program(name))
    (out / "manifest.json").write_text(json.dumps(render_manifest(), indent=2) + "\n")


# ---------------------------------------------------------------------------
# Oracles (independent of the interpreter)
# ---------------------------------------------------------------------------


def oracle_dedup(values: Iterable[int]) -> frozenset[int]:
    """The mathematical set of elements of the input."""
    return frozenset(values)


def oracle_sequential_hashset(
    capacity: int,
    hash_fn: Callable[[int], int],
    inserts: Sequence[int],
) -> tuple[Optional[int], ...]:
    """Final slot layout of the ordered-probe hash set, simulated
    sequentially at the meta level.  ``None`` marks the dummy.

    Probing keeps the larger element in the earlier slot: an incoming
    element smaller than the occupant moves right; otherwise it displaces
    the occupant, which is reinserted to the right.
    """
    if len(set(inserts)) >= capacity:
        raise ValueError("hash set requires strictly more slots than elements")
    slots: list[Optional[int]] = [None] * capacity
    for item in inserts:
        x = item
        i = hash_fn(x) % capacity
        while True:
            y = slots[i]
            if y == x:
                break
            if y is None:
                slots[i] = x
                break
            j = (i + 1) % capacity
            if x < y:
                i = j
            else:
                slots[i] = x
                x = y
                i = j
    return tuple(slots)


def oracle_hashset_elems(slots: Sequence[Optional[int]]) -> tuple[int, ...]:
    """Non-dummy slot contents in ascending index order."""
    return tuple(v for v in slots if v is not None)


def oracle_max(values: Sequence[int]) -> int:
    """Maximum of a nonempty sequence."""
    if not values:
        raise ValueError("oracle_max requires a nonempty input")
    return max(values)
