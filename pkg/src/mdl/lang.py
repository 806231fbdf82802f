"""Core syntax for the parallel lambda language.

The language is a call-by-value lambda calculus with mutable integer arrays,
compare-and-swap, and structured fork/join parallelism:

* ``Par(e1, e2)`` is the *inert* parallel composition written by programs.
  It forks (without evaluating its operands) into the *active* parallel
  tuple ``RunPar(e1, e2)``, whose sides step independently; once both sides
  are values the tuple joins into an ordinary pair.
* Evaluation is right-to-left: in an application the argument is evaluated
  before the function, in a primitive the right operand before the left, and
  so on.  The evaluation-context grammar in :func:`split_redex` is the single
  source of truth for this order.

This module defines the AST (expressions and values), substitution,
evaluation contexts, and the task decomposition used by the scheduler.  It is
purely syntactic; stores and reduction live in :mod:`mdl.semantics`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Optional, Union

# ---------------------------------------------------------------------------
# Values
# ---------------------------------------------------------------------------


class Value:
    """Base class for runtime values."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class VUnit(Value):
    pass


@dataclass(frozen=True, slots=True)
class VBool(Value):
    flag: bool


@dataclass(frozen=True, slots=True)
class VInt(Value):
    n: int


@dataclass(frozen=True, slots=True)
class VLoc(Value):
    """A store location (index into the store's cell list)."""

    index: int


@dataclass(frozen=True, slots=True)
class VPair(Value):
    left: Value
    right: Value


@dataclass(frozen=True, slots=True)
class VClosure(Value):
    """A recursive function value ``mu self_name. fun param -> body``.

    Non-recursive functions use the wildcard ``"_"`` as ``self_name``.
    """

    self_name: str
    param: str
    body: "Expr"


UNIT = VUnit()
TRUE = VBool(True)
FALSE = VBool(False)


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


class Expr:
    """Base class for expressions."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Val(Expr):
    """A value embedded in expression position."""

    value: Value


@dataclass(frozen=True, slots=True)
class Fun(Expr):
    """A function literal; steps to a :class:`VClosure` by the Abs rule."""

    self_name: str
    param: str
    body: Expr


@dataclass(frozen=True, slots=True)
class App(Expr):
    fn: Expr
    arg: Expr


@dataclass(frozen=True, slots=True)
class Let(Expr):
    name: str
    bound: Expr
    body: Expr


@dataclass(frozen=True, slots=True)
class If(Expr):
    cond: Expr
    then: Expr
    els: Expr


@dataclass(frozen=True, slots=True)
class Prim(Expr):
    """Binary primitive application ``left op right``."""

    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Pair(Expr):
    """Pair construction; both components evaluate, then Product yields a VPair."""

    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Proj(Expr):
    """Projection; ``side`` is 1 for ``fst`` and 2 for ``snd``."""

    side: int
    arg: Expr


@dataclass(frozen=True, slots=True)
class Assert(Expr):
    arg: Expr


@dataclass(frozen=True, slots=True)
class Alloc(Expr):
    size: Expr


@dataclass(frozen=True, slots=True)
class Load(Expr):
    loc: Expr
    idx: Expr


@dataclass(frozen=True, slots=True)
class Store(Expr):
    loc: Expr
    idx: Expr
    val: Expr


@dataclass(frozen=True, slots=True)
class Length(Expr):
    loc: Expr


@dataclass(frozen=True, slots=True)
class Cas(Expr):
    """Compare-and-swap: ``cas loc idx old new`` atomically replaces the cell
    content with ``new`` and yields true iff the content equals ``old``."""

    loc: Expr
    idx: Expr
    old: Expr
    new: Expr


@dataclass(frozen=True, slots=True)
class Par(Expr):
    """Inert parallel composition, as written by programs."""

    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class RunPar(Expr):
    """Active parallel tuple; produced by Fork, never written by programs."""

    left: Expr
    right: Expr


#: Binary primitive operators, grouped by signature.
ARITH_OPS = ("+", "-", "*", "/", "mod")
CMP_OPS = ("<", "<=", ">", ">=")
BOOL_OPS = ("||", "&&")
EQ_OP = "=="
PRIM_OPS = ARITH_OPS + CMP_OPS + BOOL_OPS + (EQ_OP,)

#: Task-path components (which side of a RunPar a task lives on).
PAR_LEFT = 0
PAR_RIGHT = 1

TaskPath = tuple  # tuple[int, ...] over {PAR_LEFT, PAR_RIGHT}


# Convenience constructors -------------------------------------------------


def vint(n: int) -> Val:
    return Val(VInt(n))


def vbool(flag: bool) -> Val:
    return Val(TRUE if flag else FALSE)


def vunit() -> Val:
    return Val(UNIT)


def is_value(e: Expr) -> bool:
    """A value in expression position is exactly a :class:`Val` node.

    Function literals, inert pairs of values, and active parallel tuples are
    *not* values: they still step (Abs, Product, Join respectively).
    """
    return type(e) is Val


# ---------------------------------------------------------------------------
# Traversal helpers
# ---------------------------------------------------------------------------


def children(e: Expr) -> tuple[Expr, ...]:
    """Sub-expressions of ``e`` in left-to-right syntactic order."""
    match e:
        case Var(_) | Val(_):
            return ()
        case Fun(_, _, body):
            return (body,)
        case App(fn, arg):
            return (fn, arg)
        case Let(_, bound, body):
            return (bound, body)
        case If(cond, then, els):
            return (cond, then, els)
        case Prim(_, left, right):
            return (left, right)
        case Pair(left, right) | Par(left, right) | RunPar(left, right):
            return (left, right)
        case Proj(_, arg) | Assert(arg) | Alloc(arg) | Length(arg):
            return (arg,)
        case Load(loc, idx):
            return (loc, idx)
        case Store(loc, idx, val):
            return (loc, idx, val)
        case Cas(loc, idx, old, new):
            return (loc, idx, old, new)
    raise TypeError(f"not an expression: {e!r}")


def walk(e: Expr) -> Iterator[Union[Expr, Value]]:
    """Yield every Expr and Value node of ``e`` (pre-order)."""
    stack: list[Union[Expr, Value]] = [e]
    while stack:
        node = stack.pop()
        yield node
        if isinstance(node, Val):
            stack.append(node.value)
        elif isinstance(node, Expr):
            stack.extend(reversed(children(node)))
        elif isinstance(node, VPair):
            stack.append(node.right)
            stack.append(node.left)
        elif isinstance(node, VClosure):
            stack.append(node.body)


def ast_size(e: Expr) -> int:
    """Number of Expr and Value nodes in ``e``."""
    return sum(1 for _ in walk(e))


def free_vars(e: Expr) -> frozenset[str]:
    """Free variables of ``e`` (descending into closure values)."""

    out: set[str] = set()

    def go(node: Union[Expr, Value], bound: frozenset[str]) -> None:
        match node:
            case Var(name):
                if name not in bound:
                    out.add(name)
            case Val(value):
                go(value, bound)
            case VClosure(self_name, param, body) | Fun(self_name, param, body):
                go(body, bound | {self_name, param})
            case Let(name, b, body):
                go(b, bound)
                go(body, bound | {name})
            case VPair(left, right):
                go(left, bound)
                go(right, bound)
            case _ if isinstance(node, Expr):
                for c in children(node):
                    go(c, bound)
            case _:
                pass

    go(e, frozenset())
    return frozenset(out)


# ---------------------------------------------------------------------------
# Substitution
# ---------------------------------------------------------------------------


def subst_many(binding: Mapping[str, Value], e: Expr) -> Expr:
    """Simultaneously substitute values for free variables in ``e``.

    Substituted values must be closed (they are runtime values), so the
    substitution is trivially capture-avoiding; binders only shadow.
    Unchanged subtrees are returned as-is so results share structure with the
    input.
    """
    if not binding:
        return e

    # Dispatch on type() with if-chains ordered by observed frequency; this
    # runs on every Call step and is performance-sensitive.
    def go(node: Expr, live: Mapping[str, Value]) -> Expr:
        t = type(node)
        if t is Var:
            v = live.get(node.name)
            return node if v is None else Val(v)
        if t is App:
            fn, arg = node.fn, node.arg
            fn2, arg2 = go(fn, live), go(arg, live)
            return node if fn2 is fn and arg2 is arg else App(fn2, arg2)
        if t is Val:
            value = node.value
            v2 = go_value(value, live)
            return node if v2 is value else Val(v2)
        if t is If:
            cond, then, els = node.cond, node.then, node.els
            c2, t2, e2 = go(cond, live), go(then, live), go(els, live)
            if c2 is cond and t2 is then and e2 is els:
                return node
            return If(c2, t2, e2)
        if t is Let:
            bound, body = node.bound, node.body
            bound2 = go(bound, live)
            inner = _drop(live, (node.name,))
            body2 = body if inner is None else go(body, inner)
            if bound2 is bound and body2 is body:
                return node
            return Let(node.name, bound2, body2)
        if t is Prim:
            left, right = node.left, node.right
            l2, r2 = go(left, live), go(right, live)
            return node if l2 is left and r2 is right else Prim(node.op, l2, r2)
        if t is Fun:
            body = node.body
            inner = _drop(live, (node.self_name, node.param))
            if inner is None:
                return node
            body2 = go(body, inner)
            return node if body2 is body else Fun(node.self_name, node.param, body2)
        if t is Load:
            loc, idx = node.loc, node.idx
            l2, i2 = go(loc, live), go(idx, live)
            return node if l2 is loc and i2 is idx else Load(l2, i2)
        if t is Cas:
            loc, idx, old, new = node.loc, node.idx, node.old, node.new
            l2, i2, o2, n2 = go(loc, live), go(idx, live), go(old, live), go(new, live)
            if l2 is loc and i2 is idx and o2 is old and n2 is new:
                return node
            return Cas(l2, i2, o2, n2)
        if t is Store:
            loc, idx, val = node.loc, node.idx, node.val
            l2, i2, v2 = go(loc, live), go(idx, live), go(val, live)
            if l2 is loc and i2 is idx and v2 is val:
                return node
            return Store(l2, i2, v2)
        if t is Pair:
            left, right = node.left, node.right
            l2, r2 = go(left, live), go(right, live)
            return node if l2 is left and r2 is right else Pair(l2, r2)
        if t is Par:
            left, right = node.left, node.right
            l2, r2 = go(left, live), go(right, live)
            return node if l2 is left and r2 is right else Par(l2, r2)
        if t is RunPar:
            left, right = node.left, node.right
            l2, r2 = go(left, live), go(right, live)
            return node if l2 is left and r2 is right else RunPar(l2, r2)
        if t is Proj:
            arg = node.arg
            a2 = go(arg, live)
            return node if a2 is arg else Proj(node.side, a2)
        if t is Assert:
            arg = node.arg
            a2 = go(arg, live)
            return node if a2 is arg else Assert(a2)
        if t is Alloc:
            arg = node.size
            a2 = go(arg, live)
            return node if a2 is arg else Alloc(a2)
        if t is Length:
            arg = node.loc
            a2 = go(arg, live)
            return node if a2 is arg else Length(a2)
        raise TypeError(f"not an expression: {node!r}")

    def go_value(v: Value, live: Mapping[str, Value]) -> Value:
        # Runtime values are closed, so this is normally a cheap no-op; it
        # matters only when substituting inside hand-built open terms.
        t = type(v)
        if t is VClosure:
            body = v.body
            inner = _drop(live, (v.self_name, v.param))
            if inner is None:
                return v
            body2 = go(body, inner)
            return v if body2 is body else VClosure(v.self_name, v.param, body2)
        if t is VPair:
            left, right = v.left, v.right
            l2, r2 = go_value(left, live), go_value(right, live)
            return v if l2 is left and r2 is right else VPair(l2, r2)
        return v

    def _drop(live: Mapping[str, Value], names: tuple[str, ...]):
        """Remove shadowed names; None means nothing left to substitute."""
        if all(n not in live for n in names):
            return live
        kept = {k: v for k, v in live.items() if k not in names}
        return kept or None

    return go(e, dict(binding))


def subst(name: str, value: Value, e: Expr) -> Expr:
    """Capture-avoiding substitution ``e[name := value]`` for a closed value."""
    return subst_many({name: value}, e)


# ---------------------------------------------------------------------------
# Evaluation contexts
# ---------------------------------------------------------------------------


class Frame:
    """One evaluation-context frame; the hole is the child being evaluated."""

    __slots__ = ()


@dataclass(frozen=True, slots=True)
class LetBound(Frame):
    name: str
    body: Expr


@dataclass(frozen=True, slots=True)
class IfCond(Frame):
    then: Expr
    els: Expr


@dataclass(frozen=True, slots=True)
class AppArg(Frame):
    """``fn <hole>`` — the argument evaluates before the function."""

    fn: Expr


@dataclass(frozen=True, slots=True)
class AppFn(Frame):
    """``<hole> v`` — the function evaluates once the argument is a value."""

    arg: Expr


@dataclass(frozen=True, slots=True)
class PrimRight(Frame):
    op: str
    left: Expr


@dataclass(frozen=True, slots=True)
class PrimLeft(Frame):
    op: str
    right: Expr


@dataclass(frozen=True, slots=True)
class PairRight(Frame):
    left: Expr


@dataclass(frozen=True, slots=True)
class PairLeft(Frame):
    right: Expr


@dataclass(frozen=True, slots=True)
class ProjArg(Frame):
    side: int


@dataclass(frozen=True, slots=True)
class AssertArg(Frame):
    pass


@dataclass(frozen=True, slots=True)
class AllocSize(Frame):
    pass


@dataclass(frozen=True, slots=True)
class LengthArg(Frame):
    pass


@dataclass(frozen=True, slots=True)
class LoadIdx(Frame):
    loc: Expr


@dataclass(frozen=True, slots=True)
class LoadLoc(Frame):
    idx: Expr


@dataclass(frozen=True, slots=True)
class StoreVal(Frame):
    loc: Expr
    idx: Expr


@dataclass(frozen=True, slots=True)
class StoreIdx(Frame):
    loc: Expr
    val: Expr


@dataclass(frozen=True, slots=True)
class StoreLoc(Frame):
    idx: Expr
    val: Expr


@dataclass(frozen=True, slots=True)
class CasNew(Frame):
    loc: Expr
    idx: Expr
    old: Expr


@dataclass(frozen=True, slots=True)
class CasOld(Frame):
    loc: Expr
    idx: Expr
    new: Expr


@dataclass(frozen=True, slots=True)
class CasIdx(Frame):
    loc: Expr
    old: Expr
    new: Expr


@dataclass(frozen=True, slots=True)
class CasLoc(Frame):
    idx: Expr
    old: Expr
    new: Expr


EvalCtx = tuple  # tuple[Frame, ...], outermost frame first


def fill_frame(frame: Frame, e: Expr) -> Expr:
    """Plug ``e`` into the hole of a single frame."""
    match frame:
        case LetBound(name, body):
            return Let(name, e, body)
        case IfCond(then, els):
            return If(e, then, els)
        case AppArg(fn):
            return App(fn, e)
        case AppFn(arg):
            return App(e, arg)
        case PrimRight(op, left):
            return Prim(op, left, e)
        case PrimLeft(op, right):
            return Prim(op, e, right)
        case PairRight(left):
            return Pair(left, e)
        case PairLeft(right):
            return Pair(e, right)
        case ProjArg(side):
            return Proj(side, e)
        case AssertArg():
            return Assert(e)
        case AllocSize():
            return Alloc(e)
        case LengthArg():
            return Length(e)
        case LoadIdx(loc):
            return Load(loc, e)
        case LoadLoc(idx):
            return Load(e, idx)
        case StoreVal(loc, idx):
            return Store(loc, idx, e)
        case StoreIdx(loc, val):
            return Store(loc, e, val)
        case StoreLoc(idx, val):
            return Store(e, idx, val)
        case CasNew(loc, idx, old):
            return Cas(loc, idx, old, e)
        case CasOld(loc, idx, new):
            return Cas(loc, idx, e, new)
        case CasIdx(loc, old, new):
            return Cas(loc, e, old, new)
        case CasLoc(idx, old, new):
            return Cas(e, idx, old, new)
    raise TypeError(f"not a frame: {frame!r}")


def fill(ctx: EvalCtx, e: Expr) -> Expr:
    """Plug ``e`` into an evaluation context (outermost frame first)."""
    for frame in reversed(ctx):
        e = fill_frame(frame, e)
    return e


def _frame_step(e: Expr) -> Optional[tuple[Frame, Expr]]:
    """The unique frame/child decomposition of ``e``, if any.

    Returns None when ``e`` has no non-value child in hole position — i.e.
    ``e`` is itself the redex candidate (or a Par/RunPar/stuck form).
    """
    match e:
        case Let(name, bound, body):
            if not is_value(bound):
                return LetBound(name, body), bound
        case If(cond, then, els):
            if not is_value(cond):
                return IfCond(then, els), cond
        case App(fn, arg):
            if not is_value(arg):
                return AppArg(fn), arg
            if not is_value(fn):
                return AppFn(arg), fn
        case Prim(op, left, right):
            if not is_value(right):
                return PrimRight(op, left), right
            if not is_value(left):
                return PrimLeft(op, right), left
        case Pair(left, right):
            if not is_value(right):
                return PairRight(left), right
            if not is_value(left):
                return PairLeft(right), left
        case Proj(side, arg):
            if not is_value(arg):
                return ProjArg(side), arg
        case Assert(arg):
            if not is_value(arg):
                return AssertArg(), arg
        case Alloc(arg):
            if not is_value(arg):
                return AllocSize(), arg
        case Length(arg):
            if not is_value(arg):
                return LengthArg(), arg
        case Load(loc, idx):
            if not is_value(idx):
                return LoadIdx(loc), idx
            if not is_value(loc):
                return LoadLoc(idx), loc
        case Store(loc, idx, val):
            if not is_value(val):
                return StoreVal(loc, idx), val
            if not is_value(idx):
                return StoreIdx(loc, val), idx
            if not is_value(loc):
                return StoreLoc(idx, val), loc
        case Cas(loc, idx, old, new):
            if not is_value(new):
                return CasNew(loc, idx, old), new
            if not is_value(old):
                return CasOld(loc, idx, new), old
            if not is_value(idx):
                return CasIdx(loc, old, new), idx
            if not is_value(loc):
                return CasLoc(idx, old, new), loc
    return None


def split_redex(e: Expr) -> Optional[tuple[EvalCtx, Expr]]:
    """Decompose a non-value as ``ctx[redex]``.

    The redex position is unique because contexts evaluate right-to-left.
    The returned redex is either a head-redex candidate (which
    :func:`mdl.semantics.head_step` may still refuse — then the task is
    stuck) or a ``Par``/``RunPar`` node; Par is itself a head redex (Fork),
    while a RunPar that is not join-ready is handled by the scheduler, which
    recurses into its sides.
    """
    if is_value(e):
        return None
    frames: list[Frame] = []
    cur = e
    while True:
        step = _frame_step(cur)
        if step is None:
            return tuple(frames), cur
        frames.append(step[0])
        cur = step[1]


def decompose_tasks(e: Expr) -> list[tuple[TaskPath, Expr]]:
    """All task positions of ``e``.

    A task is a maximal subterm not governed by a further RunPar: the
    scheduler peels evaluation contexts, and whenever the redex position
    holds an active RunPar it descends into both sides (recording ParLeft /
    ParRight in the task path).  A join-ready RunPar (both sides values) is
    returned whole, as the Join candidate at its path.  Inert sides of an
    unjoined RunPar (already values) are reported as value tasks; they
    contribute no steps.
    """
    out: list[tuple[TaskPath, Expr]] = []

    def go(path: tuple[int, ...], t: Expr) -> None:
        if is_value(t):
            out.append((path, t))
            return
        ctx_redex = split_redex(t)
        assert ctx_redex is not None
        _, redex = ctx_redex
        if type(redex) is RunPar and not (
            is_value(redex.left) and is_value(redex.right)
        ):
            go(path + (PAR_LEFT,), redex.left)
            go(path + (PAR_RIGHT,), redex.right)
        else:
            out.append((path, t))

    go((), e)
    return out
