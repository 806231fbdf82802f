"""Exhaustive interleaving exploration and schedule-independent safety.

The explorer enumerates every reachable configuration of a program over all
task interleavings, deduplicating states up to location renaming:

* :func:`canonical_key` flattens a configuration into a hashable form with
  locations renamed in first-occurrence order (expression traversal first,
  then a FIFO scan of reachable arrays).  Unreachable store entries are
  dropped, so allocation garbage and allocation-order differences do not
  split states.  Keys live in an ordinary dict, so equal hashes are always
  confirmed by full key comparison.
* :func:`explore_all` runs a layered breadth-first search.  BFS (rather than
  DFS) keeps witness traces shortest and makes the report independent of the
  worker count: each layer is partitioned into ``jobs`` chunks whose
  successor batches are merged in deterministic chunk order.
* Exploration stops at *stuck* configurations even when a sibling task could
  still run: a frozen task can never join, so no termination is reachable
  past that point, and one stuck witness suffices to refute safety.
* States are *branch points* only.  Steps that cannot interact with other
  tasks — beta reduction, let/if/projection/pair/assert steps, primitive
  arithmetic, fork and join, plus any step that is a configuration's only
  enabled step — are drained eagerly into the incoming edge
  (:func:`_drain`).  Such steps touch nothing outside their own task's
  subterm and leave every array cell unchanged, so they commute with every
  step of every other task: any schedule can be reordered into a drained
  schedule with the same terminal configurations, and a stuck task stays
  stuck under other tasks' steps (array sizes are fixed at allocation, so
  no step can unfreeze an out-of-bounds access, a failed assert, or an
  ill-typed redex).  Terminated and stuck outcome sets are therefore exactly
  those of single-step exploration; only the state count shrinks.  Edge
  labels keep the full fine-grained schedule, so witnesses stay replayable.

Verdicts follow the schedule-independent-safety definition: if some
interleaving terminates, every reachable configuration must be not-stuck.
Programs with no terminating interleaving satisfy the property vacuously.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

from .lang import (
    Expr,
    Val,
    Value,
    VBool,
    VClosure,
    VInt,
    VLoc,
    VPair,
    VUnit,
    Var,
    Fun,
    App,
    Let,
    If,
    Prim,
    Pair,
    Proj,
    Assert,
    Alloc,
    Load,
    Store,
    Length,
    Cas,
    Par,
    RunPar,
    is_value,
)
from .semantics import (
    Config,
    StepLabel,
    StoreModel,
    empty_store,
    reducible,
    steps_and_stuckness,
)


@dataclass(frozen=True, slots=True)
class Limits:
    """Exploration budgets; exceeding any marks the result incomplete.

    ``max_steps`` bounds the schedule length (number of small steps,
    drained steps included) along any explored path; ``max_states`` bounds
    the number of distinct branch-point states visited.
    """

    max_states: int = 10**6
    max_steps: int = 10**5
    max_outcomes: int = 10**4


# ---------------------------------------------------------------------------
# Canonicalization
# ---------------------------------------------------------------------------


def _ser_value(v: Value, out: list, ren: dict[int, int], order: list[int]) -> None:
    match v:
        case VUnit():
            out.append("u")
        case VBool(b):
            out.append("b")
            out.append(b)
        case VInt(n):
            out.append("i")
            out.append(n)
        case VLoc(loc):
            new = ren.get(loc)
            if new is None:
                new = len(ren)
                ren[loc] = new
                order.append(loc)
            out.append("L")
            out.append(new)
        case VPair(left, right):
            out.append("p")
            _ser_value(left, out, ren, order)
            _ser_value(right, out, ren, order)
        case VClosure(self_name, param, body):
            out.append("c")
            out.append(self_name)
            out.append(param)
            _ser_expr(body, out, ren, order)
        case _:
            raise TypeError(f"not a value: {v!r}")


def _ser_expr(e: Expr, out: list, ren: dict[int, int], order: list[int]) -> None:
    match e:
        case Val(v):
            out.append("V")
            _ser_value(v, out, ren, order)
        case Var(name):
            out.append("v")
            out.append(name)
        case Fun(self_name, param, body):
            out.append("f")
            out.append(self_name)
            out.append(param)
            _ser_expr(body, out, ren, order)
        case App(fn, arg):
            out.append("a")
            _ser_expr(fn, out, ren, order)
            _ser_expr(arg, out, ren, order)
        case Let(name, bound, body):
            out.append("l")
            out.append(name)
            _ser_expr(bound, out, ren, order)
            _ser_expr(body, out, ren, order)
        case If(cond, then, els):
            out.append("?")
            _ser_expr(cond, out, ren, order)
            _ser_expr(then, out, ren, order)
            _ser_expr(els, out, ren, order)
        case Prim(op, left, right):
            out.append("o")
            out.append(op)
            _ser_expr(left, out, ren, order)
            _ser_expr(right, out, ren, order)
        case Pair(left, right):
            out.append("P")
            _ser_expr(left, out, ren, order)
            _ser_expr(right, out, ren, order)
        case Proj(side, arg):
            out.append("j")
            out.append(side)
            _ser_expr(arg, out, ren, order)
        case Assert(arg):
            out.append("A")
            _ser_expr(arg, out, ren, order)
        case Alloc(arg):
            out.append("N")
            _ser_expr(arg, out, ren, order)
        case Load(loc, idx):
            out.append("G")
            _ser_expr(loc, out, ren, order)
            _ser_expr(idx, out, ren, order)
        case Store(loc, idx, val):
            out.append("S")
            _ser_expr(loc, out, ren, order)
            _ser_expr(idx, out, ren, order)
            _ser_expr(val, out, ren, order)
        case Length(loc):
            out.append("n")
            _ser_expr(loc, out, ren, order)
        case Cas(loc, idx, old, new):
            out.append("C")
            _ser_expr(loc, out, ren, order)
            _ser_expr(idx, out, ren, order)
            _ser_expr(old, out, ren, order)
            _ser_expr(new, out, ren, order)
        case Par(left, right):
            out.append("¶")
            _ser_expr(left, out, ren, order)
            _ser_expr(right, out, ren, order)
        case RunPar(left, right):
            out.append("R")
            _ser_expr(left, out, ren, order)
            _ser_expr(right, out, ren, order)
        case _:
            raise TypeError(f"not an expression: {e!r}")


def canonical_key(e: Expr, store: StoreModel) -> tuple:
    """A hashable canonical form of a configuration.

    Locations are numbered in first-occurrence order; only store entries
    reachable from the expression (through arrays) are included.  Two
    configurations have equal keys iff they are equal up to a location
    permutation and garbage.
    """
    out: list = []
    ren: dict[int, int] = {}
    order: list[int] = []
    _ser_expr(e, out, ren, order)
    out.append("§")
    i = 0
    while i < len(order):
        loc = order[i]
        i += 1
        arr = store.array(loc)
        out.append("@")
        out.append(len(arr))
        for cell in arr:
            _ser_value(cell, out, ren, order)
    return tuple(out)


class Canonicalizer:
    """Computes :func:`canonical_key` with an identity-keyed subtree cache.

    Steps rebuild only the spine of an expression, so sibling configurations
    share almost all subtrees and store arrays.  A subtree seen more than
    once is flattened once into a template whose location slots hold indices
    local to the subtree; later occurrences splice the template (a C-speed
    ``extend``) and patch only the location slots into the caller's global
    numbering.  Entries pin their subject objects, so an ``id`` can never be
    recycled while its entry is live.  With ``compress=False`` the produced
    keys are identical to plain :func:`canonical_key`.

    With ``compress=True``, closure values and literal functions — the bulk
    of an expression once library bindings have been substituted through —
    are replaced by interned symbols: a content-addressed table maps each
    distinct (location-abstracted) function body to a small integer, and the
    key carries only the symbol plus the canonical indices of the locations
    the function captures.  Compressed keys are equal exactly when the plain
    keys are; only their representation is smaller.  Interning is guarded by
    a lock so concurrent workers agree on one symbol per body.
    """

    __slots__ = (
        "_exprs",
        "_arrays",
        "_once",
        "_atoms",
        "max_atoms",
        "compress",
        "_symbols",
        "_sym_cache",
        "_sym_lock",
    )

    def __init__(self, compress: bool = False, max_atoms: int = 16_000_000):
        # id -> (subject ref, atoms, patches, locs); patches are
        # (offset, local index) pairs, locs the subtree's locations in
        # first-occurrence order.
        self._exprs: dict[int, tuple] = {}
        self._arrays: dict[int, tuple] = {}
        self._once: set[int] = set()
        self._atoms = 0
        self.max_atoms = max_atoms
        self.compress = compress
        self._symbols: dict[tuple, int] = {}
        self._sym_cache: dict[int, tuple] = {}
        import threading

        self._sym_lock = threading.Lock()

    def key(self, e: Expr, store: StoreModel) -> tuple:
        out: list = []
        ren: dict[int, int] = {}
        order: list[int] = []
        patches: list[tuple[int, int]] = []
        self._expr(e, out, ren, order, patches)
        out.append("§")
        i = 0
        while i < len(order):
            loc = order[i]
            i += 1
            arr = store.array(loc)
            out.append("@")
            out.append(len(arr))
            self._array(arr, out, ren, order, patches)
        return tuple(out)

    def _splice(self, entry, out, ren, order, patches) -> None:
        _subject, atoms, entry_patches, locs = entry
        base = len(out)
        out.extend(atoms)
        for off, local in entry_patches:
            old = locs[local]
            new = ren.get(old)
            if new is None:
                new = len(ren)
                ren[old] = new
                order.append(old)
            out[base + off] = new
            patches.append((base + off, old))

    def _build(self, node, serialize) -> tuple:
        tmp: list = []
        tren: dict[int, int] = {}
        torder: list[int] = []
        tpatches: list[tuple[int, int]] = []
        serialize(node, tmp, tren, torder, tpatches)
        entry = (
            node,
            tuple(tmp),
            tuple((off, tren[old]) for off, old in tpatches),
            tuple(torder),
        )
        self._atoms += len(tmp)
        return entry

    def _emit_sym(self, tag, node, self_name, param, body, out, ren, order, patches):
        nid = id(node)
        cached = self._sym_cache.get(nid)
        if cached is not None:
            _subject, sym, locs = cached
        else:
            tmp: list = []
            tren: dict[int, int] = {}
            torder: list[int] = []
            tpatches: list[tuple[int, int]] = []
            tmp.append(tag)
            tmp.append(self_name)
            tmp.append(param)
            self._expr(body, tmp, tren, torder, tpatches)
            template = tuple(tmp)
            with self._sym_lock:
                sym = self._symbols.setdefault(template, len(self._symbols))
            locs = tuple(torder)
            self._sym_cache[nid] = (node, sym, locs)
        out.append(tag)
        out.append(sym)
        for old in locs:
            new = ren.get(old)
            if new is None:
                new = len(ren)
                ren[old] = new
                order.append(old)
            patches.append((len(out), old))
            out.append(new)

    def _expr(self, e, out, ren, order, patches) -> None:
        if self.compress and type(e) is Fun:
            self._emit_sym("F", e, e.self_name, e.param, e.body, out, ren, order, patches)
            return
        eid = id(e)
        entry = self._exprs.get(eid)
        if entry is not None:
            self._splice(entry, out, ren, order, patches)
            return
        if eid in self._once and self._atoms < self.max_atoms:
            entry = self._build(e, self._raw_expr)
            self._exprs[eid] = entry
            self._splice(entry, out, ren, order, patches)
            return
        self._once.add(eid)
        self._raw_expr(e, out, ren, order, patches)

    def _array(self, arr, out, ren, order, patches) -> None:
        aid = id(arr)
        entry = self._arrays.get(aid)
        if entry is not None:
            self._splice(entry, out, ren, order, patches)
            return
        if aid in self._once and self._atoms < self.max_atoms:
            entry = self._build(arr, self._raw_array)
            self._arrays[aid] = entry
            self._splice(entry, out, ren, order, patches)
            return
        self._once.add(aid)
        self._raw_array(arr, out, ren, order, patches)

    def _raw_array(self, arr, out, ren, order, patches) -> None:
        for cell in arr:
            self._value(cell, out, ren, order, patches)

    # The serializers below dispatch on type() with if-chains ordered by
    # observed frequency; this is the hottest loop in exhaustive exploration.

    def _value(self, v, out, ren, order, patches) -> None:
        t = type(v)
        if t is VInt:
            out.append("i")
            out.append(v.n)
        elif t is VLoc:
            loc = v.index
            new = ren.get(loc)
            if new is None:
                new = len(ren)
                ren[loc] = new
                order.append(loc)
            out.append("L")
            patches.append((len(out), loc))
            out.append(new)
        elif t is VClosure:
            if self.compress:
                self._emit_sym(
                    "K", v, v.self_name, v.param, v.body, out, ren, order, patches
                )
            else:
                out.append("c")
                out.append(v.self_name)
                out.append(v.param)
                self._expr(v.body, out, ren, order, patches)
        elif t is VUnit:
            out.append("u")
        elif t is VBool:
            out.append("b")
            out.append(v.flag)
        elif t is VPair:
            out.append("p")
            self._value(v.left, out, ren, order, patches)
            self._value(v.right, out, ren, order, patches)
        else:
            raise TypeError(f"not a value: {v!r}")

    def _raw_expr(self, e, out, ren, order, patches) -> None:
        t = type(e)
        if t is Val:
            out.append("V")
            self._value(e.value, out, ren, order, patches)
        elif t is App:
            out.append("a")
            self._expr(e.fn, out, ren, order, patches)
            self._expr(e.arg, out, ren, order, patches)
        elif t is Var:
            out.append("v")
            out.append(e.name)
        elif t is If:
            out.append("?")
            self._expr(e.cond, out, ren, order, patches)
            self._expr(e.then, out, ren, order, patches)
            self._expr(e.els, out, ren, order, patches)
        elif t is Let:
            out.append("l")
            out.append(e.name)
            self._expr(e.bound, out, ren, order, patches)
            self._expr(e.body, out, ren, order, patches)
        elif t is Prim:
            out.append("o")
            out.append(e.op)
            self._expr(e.left, out, ren, order, patches)
            self._expr(e.right, out, ren, order, patches)
        elif t is Load:
            out.append("G")
            self._expr(e.loc, out, ren, order, patches)
            self._expr(e.idx, out, ren, order, patches)
        elif t is Cas:
            out.append("C")
            self._expr(e.loc, out, ren, order, patches)
            self._expr(e.idx, out, ren, order, patches)
            self._expr(e.old, out, ren, order, patches)
            self._expr(e.new, out, ren, order, patches)
        elif t is Store:
            out.append("S")
            self._expr(e.loc, out, ren, order, patches)
            self._expr(e.idx, out, ren, order, patches)
            self._expr(e.val, out, ren, order, patches)
        elif t is RunPar:
            out.append("R")
            self._expr(e.left, out, ren, order, patches)
            self._expr(e.right, out, ren, order, patches)
        elif t is Par:
            out.append("¶")
            self._expr(e.left, out, ren, order, patches)
            self._expr(e.right, out, ren, order, patches)
        elif t is Fun:
            out.append("f")
            out.append(e.self_name)
            out.append(e.param)
            self._expr(e.body, out, ren, order, patches)
        elif t is Pair:
            out.append("P")
            self._expr(e.left, out, ren, order, patches)
            self._expr(e.right, out, ren, order, patches)
        elif t is Proj:
            out.append("j")
            out.append(e.side)
            self._expr(e.arg, out, ren, order, patches)
        elif t is Assert:
            out.append("A")
            self._expr(e.arg, out, ren, order, patches)
        elif t is Alloc:
            out.append("N")
            self._expr(e.size, out, ren, order, patches)
        elif t is Length:
            out.append("n")
            self._expr(e.loc, out, ren, order, patches)
        else:
            raise TypeError(f"not an expression: {e!r}")


def _rename_value(v: Value, ren: dict[int, int]) -> Value:
    match v:
        case VLoc(loc):
            return VLoc(ren[loc])
        case VPair(left, right):
            return VPair(_rename_value(left, ren), _rename_value(right, ren))
        case _:
            return v


def canonical_value_and_store(
    value: Value, store: StoreModel
) -> tuple[Value, tuple[tuple[Value, ...], ...]]:
    """The value with locations renamed, plus the renamed arrays it reaches."""
    ren: dict[int, int] = {}
    order: list[int] = []
    out: list = []
    _ser_value(value, out, ren, order)
    i = 0
    while i < len(order):
        loc = order[i]
        i += 1
        for cell in store.array(loc):
            _ser_value(cell, out, ren, order)
    arrays = tuple(
        tuple(_rename_value(cell, ren) for cell in store.array(loc)) for loc in order
    )
    return _rename_value(value, ren), arrays


# ---------------------------------------------------------------------------
# Outcomes and reports
# ---------------------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class Terminated:
    """A terminating execution: canonical value and value-reachable store.

    ``final_store`` keeps the raw final store (all arrays, original
    numbering) for reporting; it does not participate in outcome identity.
    """

    value: Value
    store: tuple[tuple[Value, ...], ...]
    trace: tuple[StepLabel, ...] = field(compare=False)
    final_store: StoreModel = field(compare=False)


@dataclass(frozen=True, slots=True)
class Stuck:
    config: Config = field(compare=False)
    trace: tuple[StepLabel, ...] = field(compare=False)
    key: tuple = ()


@dataclass(frozen=True, slots=True)
class Truncated:
    trace: tuple[StepLabel, ...] = field(compare=False)


Outcome = Terminated | Stuck | Truncated


@dataclass(frozen=True, slots=True)
class ExplorationReport:
    outcomes: tuple[Outcome, ...]
    states_explored: int
    dedup_hits: int
    limits_hit: tuple[str, ...]
    cross_check_failures: tuple[Config, ...] = ()

    @property
    def complete(self) -> bool:
        return not self.limits_hit

    @property
    def terminated(self) -> tuple[Terminated, ...]:
        return tuple(o for o in self.outcomes if isinstance(o, Terminated))

    @property
    def stuck(self) -> tuple[Stuck, ...]:
        return tuple(o for o in self.outcomes if isinstance(o, Stuck))


@dataclass(frozen=True, slots=True)
class Holds:
    witness: tuple[StepLabel, ...]


@dataclass(frozen=True, slots=True)
class HoldsVacuously:
    pass


@dataclass(frozen=True, slots=True)
class Fails:
    terminating: tuple[StepLabel, ...]
    stuck: tuple[StepLabel, ...]


@dataclass(frozen=True, slots=True)
class Inconclusive:
    limits_hit: tuple[str, ...]


Verdict = Holds | HoldsVacuously | Fails | Inconclusive


# ---------------------------------------------------------------------------
# Exhaustive exploration
# ---------------------------------------------------------------------------

# Head rules that neither read nor write any array cell and rewrite only the
# stepping task's own subterm.  They commute with every step of every other
# task, so interleaving them is never observable (Length is included because
# an array's size is fixed at allocation).  Fork and Join rewrite the task
# tree but exchange no data with siblings.
_LOCAL_KINDS = frozenset(
    {
        "IfTrue",
        "IfFalse",
        "CallPrim",
        "Abs",
        "LetVal",
        "Assert",
        "Product",
        "Proj",
        "Call",
        "Fork",
        "Join",
        "Length",
    }
)

# A drain chunk never exceeds this many steps, so a task looping without
# touching the store yields periodic states that memoization can close off
# instead of an unbounded drain.
_DRAIN_CAP = 48


def _drain(
    cfg: Config, budget: int
) -> tuple[Config, list[StepLabel], str]:
    """Run steps that admit no observable interleaving, up to a branch point.

    Repeatedly applies the configuration's only enabled step, or its first
    enabled step from :data:`_LOCAL_KINDS`, both of which commute with every
    alternative.  Stops at a value ("value"), a stuck configuration
    ("stuck"), a configuration whose next steps all observably race
    ("branch"), the chunk cap ("chunk"), or the caller's step budget
    ("steps" — the only truncating stop).  Returns the reached
    configuration and the labels of the steps taken.
    """
    labels: list[StepLabel] = []
    while True:
        if is_value(cfg.expr):
            return cfg, labels, "value"
        steps, live = steps_and_stuckness(cfg)
        if not live:
            return cfg, labels, "stuck"
        if len(steps) == 1:
            cand = steps[0]
        else:
            cand = None
            for pair in steps:
                if pair[0].kind in _LOCAL_KINDS:
                    cand = pair
                    break
            if cand is None:
                return cfg, labels, "branch"
        n = len(labels)
        if n >= budget:
            return cfg, labels, "steps"
        if n >= _DRAIN_CAP:
            return cfg, labels, "chunk"
        labels.append(cand[0])
        cfg = cand[1]


def _terminated_outcome(
    cfg: Config, trace: tuple[StepLabel, ...]
) -> tuple[tuple, Terminated]:
    value = cfg.expr.value
    ident = canonical_key(cfg.expr, cfg.store)
    cvalue, cstore = canonical_value_and_store(value, cfg.store)
    return ("T", ident), Terminated(cvalue, cstore, trace, cfg.store)


def explore_all(
    e: Expr,
    limits: Limits = Limits(),
    *,
    jobs: int = 1,
    memoize: bool = True,
    alloc_policy: str = "compact",
    cross_check: bool = False,
) -> ExplorationReport:
    """Breadth-first exploration of all interleavings from the empty store.

    With ``memoize`` off (diagnostic mode), exploration degenerates to a
    depth-first walk that prunes only cycles occurring along the current
    path; outcome *sets* match the memoized mode on finite-state programs.
    ``cross_check`` records configurations where the literal reducibility
    predicate disagrees with step enumeration (none are expected on
    programs whose tasks cannot strand a stuck sibling).
    """
    if not memoize:
        return _explore_nomemo(e, limits, alloc_policy, cross_check)

    canon = Canonicalizer(compress=True)
    cfg0, labels0, _status0 = _drain(Config(e, empty_store(alloc_policy)), limits.max_steps)
    start_key = canon.key(cfg0.expr, cfg0.store)

    # Parent-pointer trace storage: state id -> (parent id, edge labels).
    parents: list[tuple[int, tuple[StepLabel, ...]]] = [(-1, tuple(labels0))]
    seen: dict[tuple, int] = {start_key: 0}
    # Layer entries carry the schedule length consumed to reach the state.
    layer: list[tuple[int, Config, int]] = [(0, cfg0, len(labels0))]

    outcomes: dict[tuple, Outcome] = {}
    limits_hit: list[str] = []
    failures: list[Config] = []
    states = 0
    dedup = 0

    def trace_of(state_id: int) -> tuple[StepLabel, ...]:
        chunks: list[tuple[StepLabel, ...]] = []
        while state_id != -1:
            parent, labels = parents[state_id]
            chunks.append(labels)
            state_id = parent
        return tuple(label for chunk in reversed(chunks) for label in chunk)

    def expand(batch: Sequence[tuple[int, Config, int]]):
        results = []
        for state_id, cfg, used in batch:
            steps, live = steps_and_stuckness(cfg)
            if cross_check and reducible(cfg.expr, cfg.store) != bool(steps):
                failures.append(cfg)
            if is_value(cfg.expr):
                results.append((state_id, "value", cfg, None))
                continue
            if not live:
                results.append((state_id, "stuck", cfg, None))
                continue
            if used >= limits.max_steps:
                results.append((state_id, "cut", cfg, None))
                continue
            remaining = limits.max_steps - used - 1
            succ = []
            for label, c2 in steps:
                c3, dlabels, status = _drain(c2, remaining)
                if status == "steps":
                    succ.append(None)
                    continue
                key = canon.key(c3.expr, c3.store)
                edge = (label, *dlabels)
                succ.append((edge, c3, key, used + len(edge)))
            results.append((state_id, "steps", cfg, succ))
        return results

    while layer:
        if jobs > 1 and len(layer) > 1:
            from concurrent.futures import ThreadPoolExecutor

            chunk = (len(layer) + jobs - 1) // jobs
            batches = [layer[i : i + chunk] for i in range(0, len(layer), chunk)]
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                all_results = list(pool.map(expand, batches))
            results = [r for batch in all_results for r in batch]
        else:
            results = expand(layer)

        next_layer: list[tuple[int, Config, int]] = []
        stop = False
        for state_id, kind, cfg, succ in results:
            states += 1
            if kind == "value":
                ident, outcome = _terminated_outcome(cfg, trace_of(state_id))
                outcomes.setdefault(ident, outcome)
            elif kind == "stuck":
                key = canonical_key(cfg.expr, cfg.store)
                outcomes.setdefault(("S", key), Stuck(cfg, trace_of(state_id), key))
            elif kind == "cut":
                if "steps" not in limits_hit:
                    limits_hit.append("steps")
            else:
                for item in succ:
                    if item is None:
                        if "steps" not in limits_hit:
                            limits_hit.append("steps")
                        continue
                    edge, c3, key, used3 = item
                    known = seen.get(key)
                    if known is not None:
                        dedup += 1
                        continue
                    new_id = len(parents)
                    parents.append((state_id, edge))
                    seen[key] = new_id
                    next_layer.append((new_id, c3, used3))
            if len(outcomes) > limits.max_outcomes:
                limits_hit.append("outcomes")
                stop = True
                break
            if states >= limits.max_states and next_layer:
                limits_hit.append("states")
                stop = True
                break
        if stop:
            break
        layer = next_layer

    return ExplorationReport(
        outcomes=tuple(outcomes.values()),
        states_explored=states,
        dedup_hits=dedup,
        limits_hit=tuple(dict.fromkeys(limits_hit)),
        cross_check_failures=tuple(failures),
    )


def _explore_nomemo(
    e: Expr, limits: Limits, alloc_policy: str, cross_check: bool
) -> ExplorationReport:
    canon = Canonicalizer(compress=True)
    outcomes: dict[tuple, Outcome] = {}
    limits_hit: list[str] = []
    failures: list[Config] = []
    states = 0
    dedup = 0
    cfg0, labels0, _status0 = _drain(Config(e, empty_store(alloc_policy)), limits.max_steps)
    start_key = canon.key(cfg0.expr, cfg0.store)
    # Stack entries: (config, trace, frozenset of keys along this path).
    stack = [(cfg0, tuple(labels0), frozenset({start_key}))]
    while stack:
        cfg, trace, path_keys = stack.pop()
        states += 1
        if states > limits.max_states:
            limits_hit.append("states")
            break
        steps, live = steps_and_stuckness(cfg)
        if cross_check and reducible(cfg.expr, cfg.store) != bool(steps):
            failures.append(cfg)
        if is_value(cfg.expr):
            ident, outcome = _terminated_outcome(cfg, trace)
            outcomes.setdefault(ident, outcome)
            continue
        if not live:
            key = canonical_key(cfg.expr, cfg.store)
            outcomes.setdefault(("S", key), Stuck(cfg, trace, key))
            continue
        if len(trace) >= limits.max_steps:
            if "steps" not in limits_hit:
                limits_hit.append("steps")
            continue
        if len(outcomes) > limits.max_outcomes:
            limits_hit.append("outcomes")
            break
        remaining = limits.max_steps - len(trace) - 1
        for label, c2 in reversed(steps):
            c3, dlabels, status = _drain(c2, remaining)
            if status == "steps":
                if "steps" not in limits_hit:
                    limits_hit.append("steps")
                continue
            key2 = canon.key(c3.expr, c3.store)
            if key2 in path_keys:
                dedup += 1  # a cycle along this path; nothing new below it
                continue
            stack.append((c3, trace + (label, *dlabels), path_keys | {key2}))
    return ExplorationReport(
        outcomes=tuple(outcomes.values()),
        states_explored=states,
        dedup_hits=dedup,
        limits_hit=tuple(dict.fromkeys(limits_hit)),
        cross_check_failures=tuple(failures),
    )


# ---------------------------------------------------------------------------
# Verdicts
# ---------------------------------------------------------------------------


def check_sisafety(
    e: Expr,
    limits: Limits = Limits(),
    *,
    jobs: int = 1,
    memoize: bool = True,
    alloc_policy: str = "compact",
    cross_check: bool = False,
) -> tuple[Verdict, ExplorationReport]:
    """Decide schedule-independent safety by exhaustive exploration."""
    report = explore_all(
        e,
        limits,
        jobs=jobs,
        memoize=memoize,
        alloc_policy=alloc_policy,
        cross_check=cross_check,
    )
    terminated = report.terminated
    stuck = report.stuck
    if terminated and stuck:
        # Certain even if limits were hit: both witnesses are in hand.
        return Fails(terminated[0].trace, stuck[0].trace), report
    if not report.complete:
        return Inconclusive(report.limits_hit), report
    if not terminated:
        return HoldsVacuously(), report
    return Holds(terminated[0].trace), report


def check_outcome_determinism(
    e: Expr,
    limits: Limits = Limits(),
    *,
    jobs: int = 1,
    alloc_policy: str = "compact",
) -> tuple[bool, tuple[Terminated, ...], ExplorationReport]:
    """True iff all terminating interleavings agree on the canonical
    (value, value-reachable store) pair; otherwise the distinct outcomes."""
    report = explore_all(e, limits, jobs=jobs, alloc_policy=alloc_policy)
    terminated = report.terminated
    deterministic = len(terminated) <= 1
    return deterministic, (() if deterministic else terminated), report


# ---------------------------------------------------------------------------
# Single-schedule execution and replay
# ---------------------------------------------------------------------------


class ReplayError(Exception):
    def __init__(self, index: int, message: str):
        self.index = index
        super().__init__(f"step {index}: {message}")


def run_schedule(
    e: Expr,
    policy: str = "leftmost",
    limits: Limits = Limits(),
    *,
    seed: Optional[int] = None,
    labels: Optional[Sequence[StepLabel]] = None,
    alloc_policy: str = "compact",
    on_step: Optional[Callable[[int, StepLabel, Config, Config], None]] = None,
) -> Outcome:
    """Execute one schedule: leftmost, rightmost, seeded random, or a replay
    of an explicit label sequence (``policy="trace"``)."""
    if policy == "random" and seed is None:
        raise ValueError("random policy requires a seed")
    if policy == "trace" and labels is None:
        raise ValueError("trace policy requires labels")
    rng = random.Random(seed)
    cfg = Config(e, empty_store(alloc_policy))
    trace: list[StepLabel] = []
    while True:
        steps, live = steps_and_stuckness(cfg)
        if is_value(cfg.expr):
            return _terminated_outcome(cfg, tuple(trace))[1]
        if not live:
            return Stuck(cfg, tuple(trace), canonical_key(cfg.expr, cfg.store))
        index = len(trace)
        if index >= limits.max_steps:
            return Truncated(tuple(trace))
        if policy == "trace":
            if index >= len(labels):
                return Truncated(tuple(trace))
            wanted = labels[index]
            matching = [(l, c) for l, c in steps if l == wanted]
            if not matching:
                enabled = ", ".join(f"{l.task}:{l.kind}" for l, _ in steps)
                raise ReplayError(
                    index,
                    f"label {wanted.task}:{wanted.kind} not enabled (enabled: {enabled})",
                )
            label, nxt = matching[0]
        elif policy == "leftmost":
            label, nxt = steps[0]
        elif policy == "rightmost":
            label, nxt = steps[-1]
        elif policy == "random":
            label, nxt = steps[rng.randrange(len(steps))]
        else:
            raise ValueError(f"unknown policy {policy!r}")
        if on_step is not None:
            on_step(index, label, cfg, nxt)
        trace.append(label)
        cfg = nxt


def replay(
    e: Expr,
    labels: Sequence[StepLabel],
    *,
    alloc_policy: str = "compact",
    on_step: Optional[Callable[[int, StepLabel, Config, Config], None]] = None,
) -> Outcome:
    """Deterministically re-execute a recorded trace."""
    generous = Limits(max_steps=max(len(labels) + 1, 1))
    return run_schedule(
        e,
        "trace",
        generous,
        labels=labels,
        alloc_policy=alloc_policy,
        on_step=on_step,
    )
