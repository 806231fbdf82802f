"""Store model and small-step semantics.

Two views of the same step relation are provided:

* :func:`head_step` — the head-reduction rules, one redex at a time.
* :func:`enabled_steps` — the main (scheduler-facing) relation: every
  successor of a configuration, one per schedulable task, labelled with the
  task path and the head rule that fired.

Stuckness has a subtlety worth spelling out.  A configuration is *not stuck*
when it is a value or *reducible*; an active parallel tuple is reducible only
when **every** non-value side can step.  So a configuration can have enabled
steps yet already be stuck (one task frozen at a failed assert while a
sibling still runs).  :func:`reducible` implements the definition literally
and independently of :func:`enabled_steps`; the explorer cross-checks the
two.  :func:`enabled_steps` also reports whether some live task is frozen,
computed in the same traversal, so exploration can classify states without a
second pass.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

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
    RunPar,
    Store,
    TaskPath,
    UNIT,
    Val,
    Value,
    VBool,
    VClosure,
    VInt,
    VLoc,
    VPair,
    VUnit,
    _frame_step,
    fill,
    is_value,
    split_redex,
    subst,
    subst_many,
)

#: Allocation policies.  "compact" picks the lowest unused location.
#: "padded" burns a length-0 location before each allocation, permuting the
#: location numbering; observable behavior must not change (the explorer's
#: canonicalization tests rely on this).
ALLOC_POLICIES = ("compact", "padded")


@dataclass(frozen=True, slots=True)
class StoreModel:
    """A store: locations 0..n-1 mapped to fixed-length arrays of values."""

    cells: tuple[tuple[Value, ...], ...] = ()
    alloc_policy: str = "compact"

    def alloc(self, size: int) -> tuple["StoreModel", VLoc]:
        new = self.cells
        if self.alloc_policy == "padded":
            new = new + ((),)
        loc = VLoc(len(new))
        new = new + (((UNIT,) * size),)
        return StoreModel(new, self.alloc_policy), loc

    def has(self, loc: int) -> bool:
        return 0 <= loc < len(self.cells)

    def array(self, loc: int) -> tuple[Value, ...]:
        return self.cells[loc]

    def set_cell(self, loc: int, index: int, v: Value) -> "StoreModel":
        arr = self.cells[loc]
        arr = arr[:index] + (v,) + arr[index + 1 :]
        new = self.cells[:loc] + (arr,) + self.cells[loc + 1 :]
        return StoreModel(new, self.alloc_policy)


@dataclass(frozen=True, slots=True)
class Config:
    expr: Expr
    store: StoreModel


@dataclass(frozen=True, slots=True)
class StepLabel:
    """Which task stepped (path of Par sides) and which head rule fired."""

    task: TaskPath
    kind: str


def empty_store(alloc_policy: str = "compact") -> StoreModel:
    return StoreModel((), alloc_policy)


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------


def _euclid_divmod(a: int, d: int) -> tuple[int, int]:
    """Quotient/remainder with 0 <= r < |d| and a == d*q + r."""
    if d > 0:
        return a // d, a % d
    q = -(a // -d)
    return q, a - d * q


def prim_eval(op: str, v1: Value, v2: Value) -> Optional[Value]:
    """Evaluate ``v1 op v2``; None means the primitive is stuck.

    Arithmetic and comparisons are integer-only; division and mod by zero
    are stuck; mod is Euclidean (0 <= r < |d|) and division pairs with it.
    ``==`` is defined on int/int, bool/bool, and loc/loc (location identity);
    an int compared with a location is *defined and false* — the hash set
    stores its dummy location alongside integers and compares slots against
    both — while every other mixed comparison is stuck.
    """
    t1, t2 = type(v1), type(v2)
    if t1 is VInt and t2 is VInt:
        a, b = v1.n, v2.n
        if op == "+":
            return VInt(a + b)
        if op == "==":
            return VBool(a == b)
        if op == "<":
            return VBool(a < b)
        if op == "-":
            return VInt(a - b)
        if op == "*":
            return VInt(a * b)
        if op == "mod":
            return None if b == 0 else VInt(_euclid_divmod(a, b)[1])
        if op == "/":
            return None if b == 0 else VInt(_euclid_divmod(a, b)[0])
        if op == "<=":
            return VBool(a <= b)
        if op == ">":
            return VBool(a > b)
        if op == ">=":
            return VBool(a >= b)
        return None
    if op == "==":
        if t1 is VBool and t2 is VBool:
            return VBool(v1.flag == v2.flag)
        if t1 is VLoc and t2 is VLoc:
            return VBool(v1.index == v2.index)
        if (t1 is VInt and t2 is VLoc) or (t1 is VLoc and t2 is VInt):
            return VBool(False)
        return None
    if t1 is VBool and t2 is VBool:
        if op == "||":
            return VBool(v1.flag or v2.flag)
        if op == "&&":
            return VBool(v1.flag and v2.flag)
    return None


def _is_scalar(v: Value) -> bool:
    return isinstance(v, (VUnit, VBool, VInt, VLoc))


def _scalar_equal(content: Value, old: Value) -> bool:
    """CAS comparison: equal scalars of the same kind; anything else differs."""
    if type(content) is type(old):
        return content == old
    return False


# ---------------------------------------------------------------------------
# Head reduction
# ---------------------------------------------------------------------------


def head_step(e: Expr, store: StoreModel) -> Optional[tuple[Expr, StoreModel, str]]:
    """One head-reduction step, or None if no rule applies (stuck redex).

    The caller is expected to pass a redex candidate (see
    :func:`mdl.lang.split_redex`); rule names are returned for step labels.
    """
    # Dispatch on type() ordered by observed frequency; each branch checks
    # its operands are values and of the right kind, returning None otherwise.
    t = type(e)
    if t is App:
        fn, arg = e.fn, e.arg
        if type(fn) is Val and type(arg) is Val:
            clo = fn.value
            if type(clo) is VClosure:
                # Simultaneous substitution; the parameter shadows the
                # recursive name when the two coincide.
                return (
                    subst_many({clo.self_name: clo, clo.param: arg.value}, clo.body),
                    store,
                    "Call",
                )
        return None
    if t is If:
        cond = e.cond
        if type(cond) is Val and type(cond.value) is VBool:
            if cond.value.flag:
                return e.then, store, "IfTrue"
            return e.els, store, "IfFalse"
        return None
    if t is Prim:
        left, right = e.left, e.right
        if type(left) is Val and type(right) is Val:
            v = prim_eval(e.op, left.value, right.value)
            return None if v is None else (Val(v), store, "CallPrim")
        return None
    if t is Let:
        bound = e.bound
        if type(bound) is Val:
            return subst(e.name, bound.value, e.body), store, "LetVal"
        return None
    if t is Fun:
        return Val(VClosure(e.self_name, e.param, e.body)), store, "Abs"
    if t is Load:
        l, i = e.loc, e.idx
        if type(l) is Val and type(i) is Val:
            lv, iv = l.value, i.value
            if type(lv) is VLoc and type(iv) is VInt:
                loc, idx = lv.index, iv.n
                if store.has(loc) and 0 <= idx < len(store.array(loc)):
                    return Val(store.array(loc)[idx]), store, "Load"
        return None
    if t is Cas:
        l, i, o, n = e.loc, e.idx, e.old, e.new
        if not (
            type(l) is Val and type(i) is Val and type(o) is Val and type(n) is Val
        ):
            return None
        lv, iv = l.value, i.value
        if not (type(lv) is VLoc and type(iv) is VInt):
            return None
        loc, idx = lv.index, iv.n
        if not (store.has(loc) and 0 <= idx < len(store.array(loc))):
            return None
        old, new = o.value, n.value
        if not (_is_scalar(old) and _is_scalar(new)):
            return None
        content = store.array(loc)[idx]
        if _scalar_equal(content, old):
            return Val(VBool(True)), store.set_cell(loc, idx, new), "CASSucc"
        return Val(VBool(False)), store, "CASFail"
    if t is Store:
        l, i, v = e.loc, e.idx, e.val
        if type(l) is Val and type(i) is Val and type(v) is Val:
            lv, iv = l.value, i.value
            if type(lv) is VLoc and type(iv) is VInt:
                loc, idx = lv.index, iv.n
                if store.has(loc) and 0 <= idx < len(store.array(loc)):
                    return Val(UNIT), store.set_cell(loc, idx, v.value), "Store"
        return None
    if t is RunPar:
        left, right = e.left, e.right
        if type(left) is Val and type(right) is Val:
            return Val(VPair(left.value, right.value)), store, "Join"
        return None
    if t is Par:
        return RunPar(e.left, e.right), store, "Fork"
    if t is Proj:
        arg = e.arg
        if type(arg) is Val and type(arg.value) is VPair:
            pair = arg.value
            return Val(pair.left if e.side == 1 else pair.right), store, "Proj"
        return None
    if t is Pair:
        left, right = e.left, e.right
        if type(left) is Val and type(right) is Val:
            return Val(VPair(left.value, right.value)), store, "Product"
        return None
    if t is Assert:
        arg = e.arg
        if type(arg) is Val and type(arg.value) is VBool and arg.value.flag:
            return Val(UNIT), store, "Assert"
        return None
    if t is Alloc:
        arg = e.size
        if type(arg) is Val and type(arg.value) is VInt and arg.value.n >= 0:
            store2, loc = store.alloc(arg.value.n)
            return Val(loc), store2, "Alloc"
        return None
    if t is Length:
        arg = e.loc
        if type(arg) is Val and type(arg.value) is VLoc:
            loc = arg.value.index
            if store.has(loc):
                return Val(VInt(len(store.array(loc)))), store, "Length"
        return None
    return None


# ---------------------------------------------------------------------------
# Main relation
# ---------------------------------------------------------------------------


def _task_steps(
    e: Expr, store: StoreModel
) -> tuple[list[tuple[tuple[int, ...], str, Expr, StoreModel]], bool]:
    """All successors of ``e``, plus "every non-value task can head-step".

    The boolean is equivalent to reducibility for non-values (and trivially
    true for values): a task either is a value, steps, or freezes the whole
    configuration as stuck.
    """
    if is_value(e):
        return [], True
    ctx, redex = split_redex(e)
    if type(redex) is RunPar and not (is_value(redex.left) and is_value(redex.right)):
        left, right = redex.left, redex.right
        lsteps, lok = _task_steps(left, store)
        rsteps, rok = _task_steps(right, store)
        out = [
            ((0,) + p, kind, fill(ctx, RunPar(e2, right)), s2)
            for (p, kind, e2, s2) in lsteps
        ]
        out += [
            ((1,) + p, kind, fill(ctx, RunPar(left, e2)), s2)
            for (p, kind, e2, s2) in rsteps
        ]
        return out, lok and rok
    stepped = head_step(redex, store)
    if stepped is None:
        return [], False
    e2, store2, kind = stepped
    return [((), kind, fill(ctx, e2), store2)], True


def enabled_steps(config: Config) -> list[tuple[StepLabel, Config]]:
    """Every successor configuration, labelled; deterministic order
    (a task's successors precede its right siblings')."""
    steps, _ = _task_steps(config.expr, config.store)
    return [
        (StepLabel(path, kind), Config(e2, s2)) for (path, kind, e2, s2) in steps
    ]


def steps_and_stuckness(config: Config) -> tuple[list[tuple[StepLabel, Config]], bool]:
    """Successors plus the *notstuck* classification, in one traversal."""
    steps, all_live = _task_steps(config.expr, config.store)
    labelled = [
        (StepLabel(path, kind), Config(e2, s2)) for (path, kind, e2, s2) in steps
    ]
    notstuck_now = is_value(config.expr) or all_live
    return labelled, notstuck_now


# ---------------------------------------------------------------------------
# Literal safety predicates
# ---------------------------------------------------------------------------


def reducible(e: Expr, store: StoreModel) -> bool:
    """The Red predicate, implemented rule-by-rule.

    RedHead: a head step applies.  RedPar: at least one side of an active
    parallel tuple is a non-value and every non-value side is reducible.
    RedCtx: reducibility under one evaluation frame.  This is deliberately
    a second implementation, independent of :func:`enabled_steps`, used for
    cross-checking.
    """
    if head_step(e, store) is not None:  # RedHead
        return True
    if type(e) is RunPar:  # RedPar
        left_v, right_v = is_value(e.left), is_value(e.right)
        if left_v and right_v:
            return False  # join-ready is RedHead's case, already handled
        ok = True
        if not left_v:
            ok = ok and reducible(e.left, store)
        if not right_v:
            ok = ok and reducible(e.right, store)
        return ok
    step = _frame_step(e)  # RedCtx
    if step is not None:
        return reducible(step[1], store)
    return False


def notstuck(e: Expr, store: StoreModel) -> bool:
    """Notstuck: a value, or reducible."""
    return is_value(e) or reducible(e, store)


# ---------------------------------------------------------------------------
# Trace support
# ---------------------------------------------------------------------------


def store_delta(before: StoreModel, after: StoreModel) -> dict:
    """A small JSON-ready description of how one step changed the store."""
    delta: dict = {}
    b, a = before.cells, after.cells
    if len(a) > len(b):
        allocs = []
        for loc in range(len(b), len(a)):
            allocs.append({"loc": loc, "size": len(a[loc])})
        delta["alloc"] = allocs
    from .surface import value_to_source

    writes = []
    for loc in range(min(len(a), len(b))):
        if a[loc] is b[loc] or a[loc] == b[loc]:
            continue
        for i, (x, y) in enumerate(zip(b[loc], a[loc])):
            if x != y:
                writes.append({"loc": loc, "index": i, "value": value_to_source(y)})
    if writes:
        delta["write"] = writes
    return delta
