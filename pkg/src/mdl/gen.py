"""Random program generation.

Two generators live here, serving different purposes:

- :func:`gen_ast` / :func:`gen_asts` draw arbitrary RunPar-free ASTs from
  the full expression grammar.  They exist to fuzz the surface syntax: for
  every generated tree ``e``, ``parse(to_source(e)) == e`` must hold.  The
  only deliberate restriction beyond RunPar-freedom is that a ``par``
  branch is never a literal lambda, because the parser canonicalizes
  ``par (fun _ -> e) _`` into a thunk call and the printed form would not
  round-trip to the identical tree.

- :func:`gen_program` / :func:`generate` draw *closed, well-typed*
  programs.  Candidate bodies come from a weighted template grammar
  (scalar arithmetic, reference shuffles, parallel priority writes,
  hash-set pipelines, parfor loops, dedup calls, plus deliberately racy
  shapes); each candidate is vetted with :func:`mdl.minidet.check_program`
  and rejected candidates are discarded, so every emitted program carries
  a type.  Bodies stay within 25 AST nodes and 2 ``par`` nodes and are
  CAS-free; the executable form prepends the library bindings the body
  uses (those bindings are the one sanctioned source of CAS).  The racy
  templates are the point of the vetting step: they exercise the checker
  and never survive into the output, which is what the empirical
  soundness property then leans on.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from functools import cache

from .detlib import BINDING_SOURCES
from .lang import (
    Alloc,
    App,
    Assert,
    Cas,
    Expr,
    Fun,
    If,
    Length,
    Let,
    Load,
    Pair,
    Par,
    Prim,
    Proj,
    Store,
    Val,
    Var,
    ast_size,
    free_vars,
    vbool,
    vint,
    vunit,
    walk,
)
from .minidet import LIBRARY_NAMES, Rejected, check_program
from .surface import parse, to_source

MAX_BODY_SIZE = 25
MAX_BODY_PARS = 2

# ---------------------------------------------------------------------------
# Arbitrary ASTs (surface-syntax fuzzing)
# ---------------------------------------------------------------------------

_NAME_POOL = ("x", "y", "z", "w", "f", "g", "acc", "tmp", "lo", "hi")
_INT_POOL = (-9, -2, -1, 0, 1, 2, 3, 5, 7, 42)
_ARITH_OPS = ("+", "-", "*", "/", "mod")
_CMP_OPS = ("<", "<=", ">", ">=", "==")
_BOOL_OPS = ("&&", "||")


def _leaf(rng: random.Random) -> Expr:
    roll = rng.random()
    if roll < 0.35:
        return vint(rng.choice(_INT_POOL))
    if roll < 0.45:
        return vbool(rng.random() < 0.5)
    if roll < 0.55:
        return vunit()
    return Var(rng.choice(_NAME_POOL))


def gen_ast(rng: random.Random, size: int = 12) -> Expr:
    """One random RunPar-free AST with roughly ``size`` interior nodes."""
    if size <= 1:
        return _leaf(rng)
    a = max(1, size // 2)
    b = max(1, size - a - 1)
    kind = rng.choice(
        (
            "app", "let", "seq", "fun", "mu", "if", "prim", "pair",
            "proj", "assert", "par", "alloc", "load", "store", "length",
            "cas",
        )
    )
    if kind == "app":
        return App(gen_ast(rng, a), gen_ast(rng, b))
    if kind == "let":
        return Let(rng.choice(_NAME_POOL), gen_ast(rng, a), gen_ast(rng, b))
    if kind == "seq":
        return Let("_", gen_ast(rng, a), gen_ast(rng, b))
    if kind == "fun":
        return Fun("_", rng.choice(_NAME_POOL), gen_ast(rng, size - 1))
    if kind == "mu":
        self_name, param = rng.sample(_NAME_POOL, 2)
        return Fun(self_name, param, gen_ast(rng, size - 1))
    if kind == "if":
        third = max(1, size // 3)
        return If(gen_ast(rng, third), gen_ast(rng, third), gen_ast(rng, third))
    if kind == "prim":
        op = rng.choice(_ARITH_OPS + _CMP_OPS + _BOOL_OPS)
        return Prim(op, gen_ast(rng, a), gen_ast(rng, b))
    if kind == "pair":
        return Pair(gen_ast(rng, a), gen_ast(rng, b))
    if kind == "proj":
        return Proj(rng.choice((1, 2)), gen_ast(rng, size - 1))
    if kind == "assert":
        return Assert(gen_ast(rng, size - 1))
    if kind == "par":
        return Par(_non_lambda(rng, a), _non_lambda(rng, b))
    if kind == "alloc":
        return Alloc(gen_ast(rng, size - 1))
    if kind == "load":
        return Load(gen_ast(rng, a), gen_ast(rng, b))
    if kind == "store":
        third = max(1, size // 3)
        return Store(gen_ast(rng, third), gen_ast(rng, third), gen_ast(rng, third))
    if kind == "length":
        return Length(gen_ast(rng, size - 1))
    quarter = max(1, size // 4)
    return Cas(*(gen_ast(rng, quarter) for _ in range(4)))


def _non_lambda(rng: random.Random, size: int) -> Expr:
    """A subtree that is not a literal lambda (for ``par`` branches)."""
    while True:
        e = gen_ast(rng, size)
        if not isinstance(e, Fun):
            return e


def gen_asts(seed: int, count: int) -> list[Expr]:
    """``count`` random ASTs from a deterministic stream."""
    rng = random.Random(seed)
    return [gen_ast(rng, rng.randint(1, 24)) for _ in range(count)]


# ---------------------------------------------------------------------------
# Well-typed closed programs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GeneratedProgram:
    """A generator-produced program accepted by the MiniDet checker.

    ``body`` is the generated structure (within the size/par bounds and
    CAS-free); ``program`` prepends the library bindings the body uses,
    making it closed and executable; ``source`` prints ``program``;
    ``type`` is the checker's result type for the body.
    """

    body: Expr
    program: Expr
    source: str
    type: object


def _lit(n: int) -> str:
    """Render an int literal; negatives need parens in argument position."""
    return str(n) if n >= 0 else f"(-{-n})"


def _pick(rng: random.Random, pool=_INT_POOL) -> str:
    return _lit(rng.choice(pool))


def _hash_source(rng: random.Random) -> str:
    return rng.choice(("fun x -> 0", "fun x -> x"))


def _t_arith(rng):
    a, b, c, d = (_pick(rng) for _ in range(4))
    return f"let x = {a} in if x < {b} then x + {c} else x * {d}"


def _t_pair(rng):
    a, b = _pick(rng), _pick(rng)
    return f"let p = ({a}, {b}) in fst p + snd p"


def _t_assert_eq(rng):
    a = _pick(rng)
    return f"let x = {a} in (assert (x == {a}); x)"


def _t_assert_free(rng):
    # Sometimes false: a well-typed program may stick on every schedule.
    a, b = _pick(rng), _pick(rng)
    return f"assert ({a} <= {b})"


def _t_beta(rng):
    a, b = _pick(rng), _pick(rng)
    return f"(fun t -> t + {a}) {b}"


def _t_ref_seq(rng):
    a, b = _pick(rng), _pick(rng)
    return f"let r = ref {a} in let v = get r in (set r (v + {b}); get r)"


def _t_seq_store(rng):
    n = rng.choice((2, 3))
    v, w = _pick(rng), _pick(rng)
    i = rng.randrange(n)
    return f"let a = alloc_fill {n} {v} in (store a {i} {w}; load a {i})"


def _t_pwrite_assert(rng):
    a = rng.choice((0, 1, 2))
    b = rng.choice((3, 5, 7))
    return f"let r = palloc {a} in (pwrite r {b}; assert (pread r == {b}))"


def _t_par_pwrite(rng):
    a, b, c = _pick(rng), _pick(rng), _pick(rng)
    return f"let r = palloc {c} in let p = par (pwrite r {a}) (pwrite r {b}) in pread r"


def _t_par_indep_cells(rng):
    a, b, c, d = (_pick(rng) for _ in range(4))
    return (
        f"let r = palloc {a} in let q = palloc {b} in "
        f"(par (pwrite r {c}) (pwrite q {d}))"
    )


def _t_par_indep_refs(rng):
    a, b = _pick(rng), _pick(rng)
    return (
        f"let r = ref {a} in let q = ref {b} in "
        f"let p = par (get r) (get q) in fst p + snd p"
    )


def _t_par_loads(rng):
    v = _pick(rng)
    return (
        f"let a = alloc_fill 2 {v} in "
        f"let p = par (load a 0) (load a 1) in fst p + snd p"
    )


def _t_phase_cycle(rng):
    a, b = _pick(rng), _pick(rng)
    return (
        f"let r = palloc {a} in "
        f"(pwrite r {b}; pread r; par (pread r) (pread r))"
    )


def _t_hashset_par(rng):
    # With the seq template carrying h0 coverage, the identity hash keeps
    # this one inside the size budget.
    cap = rng.choice((3, 4))
    a, b = rng.sample((1, 2, 3, 7), 2)
    return (
        f"let s = hinit (fun x -> x) {cap} in "
        f"let p = par (hadd s {a}) (hadd s {b}) in helems s"
    )


def _t_hashset_seq(rng):
    cap = rng.choice((3, 4))
    a = rng.choice((1, 2, 3, 7))
    return f"let s = hinit ({_hash_source(rng)}) {cap} in (hadd s {a}; helems s)"


def _t_parfor(rng):
    # The cell location is the result, keeping the written store reachable
    # from the outcome while staying inside the size budget.
    n = rng.choice((2, 3))
    return (
        f"let z = 0 in let n = {n} in let r = palloc z in "
        f"(parfor z n (fun i -> pwrite r i); r)"
    )


def _t_dedup(rng):
    v, w = rng.sample((1, 2, 7), 2)
    if rng.random() < 0.5:
        return f"let a = alloc_fill 2 {v} in let p = dedup (fun x -> x) a in snd p"
    return (
        f"let a = alloc_fill 3 {v} in "
        f"(store a 1 {w}; let p = dedup (fun x -> x) a in snd p)"
    )


def _t_race_refs(rng):
    a = _pick(rng)
    return f"let r = ref {a} in let p = par (get r) (get r) in 0"


def _t_race_rw(rng):
    a = _pick(rng)
    return f"let r = palloc 0 in let p = par (pwrite r {a}) (pread r) in 0"


def _t_race_store(rng):
    v = _pick(rng)
    return f"let a = alloc_fill 2 0 in let p = par (store a 0 {v}) (load a 1) in 0"


def _t_race_set(rng):
    a, b = _pick(rng), _pick(rng)
    return f"let r = ref {a} in let p = par (set r {b}) (get r) in 0"


_TEMPLATES: tuple[tuple[int, object], ...] = (
    (10, _t_arith),
    (6, _t_pair),
    (6, _t_assert_eq),
    (4, _t_assert_free),
    (5, _t_beta),
    (9, _t_ref_seq),
    (7, _t_seq_store),
    (6, _t_pwrite_assert),
    (12, _t_par_pwrite),
    (7, _t_par_indep_cells),
    (6, _t_par_indep_refs),
    (6, _t_par_loads),
    (6, _t_phase_cycle),
    (6, _t_hashset_par),
    (5, _t_hashset_seq),
    (6, _t_parfor),
    (5, _t_dedup),
    (3, _t_race_refs),
    (3, _t_race_rw),
    (3, _t_race_store),
    (3, _t_race_set),
)
_WEIGHTS = tuple(w for w, _ in _TEMPLATES)
_MAKERS = tuple(fn for _, fn in _TEMPLATES)


def gen_body(rng: random.Random) -> Expr:
    """One candidate body (not yet vetted by the type checker)."""
    source = rng.choices(_MAKERS, weights=_WEIGHTS, k=1)[0](rng)
    body = parse(source)
    assert ast_size(body) <= MAX_BODY_SIZE, source
    assert sum(isinstance(n, Par) for n in walk(body)) <= MAX_BODY_PARS, source
    assert not any(isinstance(n, Cas) for n in walk(body)), source
    return body


@cache
def _library_order() -> tuple[str, ...]:
    """Library names topologically sorted by binding dependencies."""
    deps = {
        name: free_vars(parse(BINDING_SOURCES[name])) & set(LIBRARY_NAMES)
        for name in LIBRARY_NAMES
    }
    order: list[str] = []
    seen: set[str] = set()

    def visit(name: str) -> None:
        if name in seen:
            return
        seen.add(name)
        for dep in sorted(deps[name]):
            visit(dep)
        order.append(name)

    for name in sorted(deps):
        visit(name)
    return tuple(order)


def wrap_with_prelude(body: Expr) -> Expr:
    """Close ``body`` by let-binding the library combinators it uses."""
    needed: set[str] = set()
    frontier = [name for name in free_vars(body) if name in LIBRARY_NAMES]
    while frontier:
        name = frontier.pop()
        if name in needed:
            continue
        needed.add(name)
        frontier.extend(
            dep
            for dep in free_vars(parse(BINDING_SOURCES[name]))
            if dep in LIBRARY_NAMES
        )
    program = body
    for name in reversed(_library_order()):
        if name in needed:
            program = Let(name, parse(BINDING_SOURCES[name]), program)
    return program


def gen_program(rng: random.Random) -> GeneratedProgram | None:
    """One vetted program, or None when the candidate was ill-typed."""
    body = gen_body(rng)
    verdict = check_program(body)
    if isinstance(verdict, Rejected):
        return None
    program = wrap_with_prelude(body)
    return GeneratedProgram(body, program, to_source(program), verdict.type)


def generate(seed: int, count: int = 300) -> list[GeneratedProgram]:
    """``count`` distinct well-typed programs from a deterministic stream."""
    rng = random.Random(seed)
    out: list[GeneratedProgram] = []
    seen: set[str] = set()
    attempts = 0
    budget = count * 200
    while len(out) < count:
        attempts += 1
        if attempts > budget:
            raise RuntimeError(
                f"generator produced only {len(out)}/{count} programs "
                f"in {budget} attempts"
            )
        produced = gen_program(rng)
        if produced is None or produced.source in seen:
            continue
        seen.add(produced.source)
        out.append(produced)
    return out
