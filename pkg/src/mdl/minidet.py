"""Algorithmic checker for the MiniDet affine type system.

MiniDet is an ownership-tracking type system for the parallel lambda
language: a well-typed program is schedule-independently safe, because
the types prevent two parallel tasks from racing on the same mutable
state.  The judgement is flow-sensitive — ``Γ ⊢ e : τ ⊣ Γ′`` types ``e``
while *transforming* the environment, so reading a reference cell moves
the ownership of its contents out of the cell's binding, and a parallel
composition splits the environment between its branches.

The type grammar is::

    τ ::= ⊥ | empty | unit | bool | int | τ → τ | τ × τ | ref τ
        | pwrite q | pread q | intarray q | intset q      (q ∈ (0, 1])

``⊥`` (:data:`BOT`) is used only internally: it is the absorbing element
of the combination monoid and never appears in a reported success.
``empty`` describes a value without any ownership.  The four
fraction-indexed constructors support sharing by splitting: ``pwrite q``
and ``pread q`` are the two phases of a priority-write cell (parallel
prioritized writes commute, parallel reads commute, and switching phase
requires the full fraction 1); ``intarray q`` is an integer array
(loads need any fraction, stores need 1); ``intset q`` is the
deterministic concurrent hash set (inserts need any fraction, ``helems``
needs 1).

The checker is *algorithmic*: every acceptance is justified by a
derivation in the declarative rules (variable, let, abstraction,
application, reference get/set, parallel split, frame, weakening, the
phase-update relation, and the array/hash-set/parfor extensions), but
completeness is not claimed — the algorithm commits to one derivation
strategy.  The strategy's key choices:

* **Duplicable bindings are retained.**  A use of a variable whose type
  is idempotent under combination (``τ·τ = τ``) keeps the binding in the
  environment (justified by framing one copy); non-duplicable bindings
  are consumed.  ``check`` therefore returns the *largest* residual
  environment; the declarative rules can always weaken it away.
* **Library combinators are recognized structurally.**  The corpus
  combinators (``ref``/``get``/``set``, ``palloc``/``pwrite``/``pread``,
  ``alloc_fill``, ``hinit``/``hadd``/``helems``, ``parfor``, ``dedup``)
  carry verified specifications that a syntactic type system cannot
  re-derive (their bodies use raw compare-and-swap).  A ``let`` whose
  payload is structurally equal to the canonical combinator AST — with
  its library dependencies bound to the right combinators in scope —
  *blesses* the bound name: uses of the name are typed by the
  combinator's derived rule, and the payload's internals are never
  traversed.  Recognized names are ambient library, not environment
  entries.  Hash functions are recognized the same way (the literal
  worst-case and identity hashes), because the hash-set allocation rule
  has a semantic purity premise no type system can check.
* **β-redexes are typed as lets.**  ``(fun x -> e) v`` checks like
  ``let x = v in e``: the immediately-applied literal never escapes, so
  the closure-duplicability premise of the abstraction rule is not
  needed.  This is what lets a parallel branch be written as an applied
  thunk capturing non-duplicable state.  Escaping lambdas (let-bound,
  passed, or returned) do get the full closure check.
* **Phase updates are lazy.**  The read↔write phase switch (allowed only
  at fraction 1) is applied exactly when a rule demands the other phase,
  never speculatively.
* **Unannotated λ domains are inferred** from the argument at an
  application, or by a syntactic usage scan of the body otherwise
  (store-like uses force fraction 1; other fraction-indexed uses default
  to 1/2; the scan does not account for shadowing of the parameter).
* **General recursion is not inferred**: a recursive function that
  actually calls itself is rejected unless it is a recognized library
  combinator.

Errors carry one of six kinds (:data:`ERROR_KINDS`), the offending
variable or subterm, and a source position when the AST came from
:func:`mdl.surface.parse_with_positions`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import cache
from typing import Mapping, Optional, Union

from . import detlib
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
    Val,
    Var,
    VBool,
    VInt,
    VUnit,
    free_vars,
    walk,
)
from .surface import to_source

__all__ = [
    "Type",
    "Bot",
    "Empty",
    "UnitT",
    "BoolT",
    "IntT",
    "Arrow",
    "Prod",
    "Ref",
    "PWrite",
    "PRead",
    "IntArray",
    "IntSet",
    "BOT",
    "EMPTY",
    "UNIT_T",
    "BOOL_T",
    "INT_T",
    "TypeEnv",
    "type_combine",
    "env_combine",
    "duplicable",
    "phase_update",
    "TypeCheckError",
    "ERROR_KINDS",
    "UNSPLITTABLE_SHARING",
    "PHASE_VIOLATION",
    "NOT_DUPLICABLE_CLOSURE",
    "MISMATCH",
    "UNBOUND_VARIABLE",
    "BOT_COMBINATION",
    "WellTyped",
    "Rejected",
    "ClosedVerdict",
    "check",
    "check_program",
    "LIBRARY_NAMES",
]


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


class Type:
    """Base class of MiniDet types.  All types are immutable and hashable."""

    __slots__ = ()


@dataclass(frozen=True)
class Bot(Type):
    def __str__(self) -> str:
        return "⊥"


@dataclass(frozen=True)
class Empty(Type):
    def __str__(self) -> str:
        return "empty"


@dataclass(frozen=True)
class UnitT(Type):
    def __str__(self) -> str:
        return "unit"


@dataclass(frozen=True)
class BoolT(Type):
    def __str__(self) -> str:
        return "bool"


@dataclass(frozen=True)
class IntT(Type):
    def __str__(self) -> str:
        return "int"


@dataclass(frozen=True)
class Arrow(Type):
    dom: Type
    cod: Type

    def __str__(self) -> str:
        return f"({self.dom} → {self.cod})"


@dataclass(frozen=True)
class Prod(Type):
    left: Type
    right: Type

    def __str__(self) -> str:
        return f"({self.left} × {self.right})"


@dataclass(frozen=True)
class Ref(Type):
    content: Type

    def __str__(self) -> str:
        return f"ref {self.content}"


class _Fractional(Type):
    """Common behavior of the fraction-indexed constructors."""

    __slots__ = ()
    tag = ""

    def __str__(self) -> str:
        return f"{self.tag} {self.q}"  # type: ignore[attr-defined]


def _check_fraction(q: Fraction) -> Fraction:
    q = Fraction(q)
    if not 0 < q <= 1:
        raise ValueError(f"fraction must lie in (0, 1], got {q}")
    return q


@dataclass(frozen=True)
class PWrite(_Fractional):
    q: Fraction
    tag = "pwrite"

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", _check_fraction(self.q))


@dataclass(frozen=True)
class PRead(_Fractional):
    q: Fraction
    tag = "pread"

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", _check_fraction(self.q))


@dataclass(frozen=True)
class IntArray(_Fractional):
    q: Fraction
    tag = "intarray"

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", _check_fraction(self.q))


@dataclass(frozen=True)
class IntSet(_Fractional):
    q: Fraction
    tag = "intset"

    def __post_init__(self) -> None:
        object.__setattr__(self, "q", _check_fraction(self.q))


BOT = Bot()
EMPTY = Empty()
UNIT_T = UnitT()
BOOL_T = BoolT()
INT_T = IntT()

HALF = Fraction(1, 2)
ONE = Fraction(1)

TypeEnv = Mapping[str, Type]

_UNBOXED = (Empty, UnitT, BoolT, IntT)


# ---------------------------------------------------------------------------
# The combination monoid, duplicability, splitting, phase updates
# ---------------------------------------------------------------------------


def type_combine(t1: Type, t2: Type) -> Type:
    """The partial-commutative-monoid operation on types.

    Unboxed types are idempotent; arrows combine only with themselves;
    products combine pointwise; the fraction-indexed constructors sum
    their fractions (⊥ past 1); every missing case — in particular
    ``ref`` with anything — is ⊥.  ⊥ is absorbing.
    """
    c1, c2 = type(t1), type(t2)
    if c1 is Bot or c2 is Bot:
        return BOT
    if c1 is not c2:
        return BOT
    if c1 in _UNBOXED:
        return t1
    if c1 is Arrow:
        return t1 if t1 == t2 else BOT
    if c1 is Prod:
        left = type_combine(t1.left, t2.left)
        right = type_combine(t1.right, t2.right)
        if left == BOT or right == BOT:
            return BOT
        return Prod(left, right)
    if issubclass(c1, _Fractional):
        total = t1.q + t2.q
        return c1(total) if total <= 1 else BOT
    return BOT


def env_combine(g1: TypeEnv, g2: TypeEnv) -> dict[str, Type]:
    """Pointwise combination of environments.

    Bindings present on one side only are kept as-is; shared bindings
    are combined with :func:`type_combine`.  A ⊥ result is *kept* in the
    environment and reported as ``BotCombination`` only if the binding
    is ever used.
    """
    out = dict(g1)
    for name, t2 in g2.items():
        t1 = out.get(name)
        out[name] = t2 if t1 is None else type_combine(t1, t2)
    return out


def _dup(t: Type) -> bool:
    return t != BOT and type_combine(t, t) == t


def duplicable(gamma: TypeEnv) -> bool:
    """True iff ``env_combine(Γ, Γ) = Γ`` with no ⊥ binding."""
    return all(_dup(t) for t in gamma.values())


def _half(t: Type) -> Optional[Type]:
    """A type whose combination with itself restores ``t``, or None.

    Duplicable types split into themselves; fraction-indexed types
    halve; products split pointwise.  ``None`` means the type cannot be
    shared between two parallel tasks.
    """
    if _dup(t):
        return t
    if isinstance(t, _Fractional):
        return type(t)(t.q / 2)
    if isinstance(t, Prod):
        left = _half(t.left)
        right = _half(t.right)
        if left is None or right is None:
            return None
        return Prod(left, right)
    return None


def phase_update(t: Type) -> frozenset[Type]:
    """The reflexive-transitive phase-update closure of a single type.

    Identity always holds; ``pread 1`` and ``pwrite 1`` convert into
    each other (the full fraction certifies that no parallel task holds
    a share); products update pointwise.
    """
    if t == PRead(ONE):
        return frozenset({t, PWrite(ONE)})
    if t == PWrite(ONE):
        return frozenset({t, PRead(ONE)})
    if isinstance(t, Prod):
        return frozenset(
            Prod(left, right)
            for left in phase_update(t.left)
            for right in phase_update(t.right)
        )
    return frozenset({t})


# ---------------------------------------------------------------------------
# Errors and verdicts
# ---------------------------------------------------------------------------


UNSPLITTABLE_SHARING = "UnsplittableSharing"
PHASE_VIOLATION = "PhaseViolation"
NOT_DUPLICABLE_CLOSURE = "NotDuplicableClosure"
MISMATCH = "Mismatch"
UNBOUND_VARIABLE = "UnboundVariable"
BOT_COMBINATION = "BotCombination"

ERROR_KINDS = (
    UNSPLITTABLE_SHARING,
    PHASE_VIOLATION,
    NOT_DUPLICABLE_CLOSURE,
    MISMATCH,
    UNBOUND_VARIABLE,
    BOT_COMBINATION,
)


class TypeCheckError(Exception):
    """A typing failure: a kind, the offending variable or subterm, and
    a source position when one is known."""

    def __init__(
        self,
        kind: str,
        subject: str,
        message: str,
        position: Optional[tuple[int, int]] = None,
    ) -> None:
        super().__init__(message)
        self.kind = kind
        self.subject = subject
        self.message = message
        self.position = position

    def __str__(self) -> str:
        where = f" at {self.position[0]}:{self.position[1]}" if self.position else ""
        return f"{self.kind}({self.subject}){where}: {self.message}"

    def as_json(self) -> dict:
        return {
            "kind": self.kind,
            "variable": self.subject,
            "position": list(self.position) if self.position else None,
            "message": self.message,
        }


@dataclass(frozen=True)
class WellTyped:
    type: Type


@dataclass(frozen=True)
class Rejected:
    error: TypeCheckError


ClosedVerdict = Union[WellTyped, Rejected]


# ---------------------------------------------------------------------------
# Library recognition
# ---------------------------------------------------------------------------

# Combinators with derived typing rules (or, for fill/filter_compact,
# recognized as library plumbing that only other combinators may use).
LIBRARY_NAMES = (
    "ref",
    "get",
    "set",
    "palloc",
    "pwrite",
    "pread",
    "fill",
    "alloc_fill",
    "hinit",
    "hadd",
    "helems",
    "filter_compact",
    "parfor",
    "dedup",
)

_HASH_MARK = "#hash"


@cache
def _canonical() -> dict[str, Expr]:
    from .surface import parse

    return {name: parse(detlib.BINDING_SOURCES[name]) for name in LIBRARY_NAMES}


@cache
def _hash_literals() -> tuple[Expr, ...]:
    return tuple(detlib.hash_ast(name) for name in detlib.HASH_SOURCES)


def ambient_blessing() -> dict[str, str]:
    """The standard library scope: every combinator name bound to itself."""
    return {name: name for name in LIBRARY_NAMES}


def _recognize(e: Expr, blessed: Mapping[str, str]) -> Optional[str]:
    """The library combinator ``e`` is structurally identical to, if any.

    Recognition also requires every free name of the payload to be
    blessed as the combinator it refers to — a payload whose ``fill``
    has been shadowed is no longer the library ``alloc_fill``.
    """
    for name, canon in _canonical().items():
        if e == canon:
            if all(blessed.get(v) == v for v in free_vars(e)):
                return name
            return None
    return None


def _is_hash(e: Expr, blessed: Mapping[str, str]) -> bool:
    if isinstance(e, Var):
        return blessed.get(e.name) == _HASH_MARK
    return any(e == lit for lit in _hash_literals())


def _describe(e: Expr) -> str:
    text = to_source(e)
    return text if len(text) <= 40 else text[:37] + "..."


# ---------------------------------------------------------------------------
# The checker
# ---------------------------------------------------------------------------


_ARITH_OPS = frozenset({"+", "-", "*", "/", "mod"})
_CMP_OPS = frozenset({"<", "<=", ">", ">="})
_BOOL_OPS = frozenset({"&&", "||"})

_COMBINATOR_ARITY = {
    "ref": 1,
    "get": 1,
    "set": 2,
    "palloc": 1,
    "pwrite": 2,
    "pread": 1,
    "alloc_fill": 2,
    "hinit": 2,
    "hadd": 2,
    "helems": 1,
    "parfor": 3,
}


class _Checker:
    def __init__(self, positions: Optional[Mapping[int, tuple[int, int]]]) -> None:
        self.positions = positions or {}

    def _fail(self, kind: str, subject: str, message: str, node: Expr) -> None:
        raise TypeCheckError(kind, subject, message, self.positions.get(id(node)))

    # -- entry point --------------------------------------------------------

    def infer(
        self, env: dict[str, Type], blessed: dict[str, str], e: Expr
    ) -> tuple[Type, dict[str, Type]]:
        cls = type(e)
        if cls is Val:
            return self._value(env, e)
        if cls is Var:
            return self._var(env, blessed, e)
        if cls is Fun:
            return self._abs(env, blessed, e, domain=None)
        if cls is App:
            return self._app(env, blessed, e)
        if cls is Let:
            return self._let(env, blessed, e)
        if cls is If:
            return self._if(env, blessed, e)
        if cls is Prim:
            return self._prim(env, blessed, e)
        if cls is Pair:
            t_right, env2 = self.infer(env, blessed, e.right)
            t_left, env3 = self.infer(env2, blessed, e.left)
            return Prod(t_left, t_right), env3
        if cls is Proj:
            t, env2 = self.infer(env, blessed, e.arg)
            if not isinstance(t, Prod):
                self._fail(MISMATCH, _describe(e.arg), f"projection needs a product, found {t}", e)
            return (t.left if e.side == 1 else t.right), env2
        if cls is Assert:
            t, env2 = self.infer(env, blessed, e.arg)
            if t != BOOL_T:
                self._fail(MISMATCH, _describe(e.arg), f"assert needs bool, found {t}", e)
            return UNIT_T, env2
        if cls is Par:
            return self._par(env, blessed, e)
        if cls is Load:
            return self._load(env, blessed, e)
        if cls is Store:
            return self._store(env, blessed, e)
        if cls is Length:
            return self._length(env, blessed, e)
        if cls is Alloc:
            self._fail(
                MISMATCH,
                _describe(e),
                "raw allocation has no typing rule; use alloc_fill",
                e,
            )
        if cls is Cas:
            self._fail(
                MISMATCH,
                _describe(e),
                "compare-and-swap has no typing rule; it occurs only inside "
                "recognized library combinators",
                e,
            )
        if cls is RunPar:
            raise ValueError("check requires a RunPar-free expression")
        raise AssertionError(f"unhandled node {cls.__name__}")

    # -- leaves -------------------------------------------------------------

    def _value(self, env: dict[str, Type], e: Val) -> tuple[Type, dict[str, Type]]:
        v = e.value
        if isinstance(v, VUnit):
            return UNIT_T, env
        if isinstance(v, VBool):
            return BOOL_T, env
        if isinstance(v, VInt):
            return INT_T, env
        self._fail(MISMATCH, _describe(e), "runtime-only value in source position", e)

    def _var(
        self, env: dict[str, Type], blessed: dict[str, str], e: Var
    ) -> tuple[Type, dict[str, Type]]:
        name = e.name
        if name in blessed:
            self._fail(
                MISMATCH,
                name,
                f"library combinator '{name}' may only appear fully applied "
                "in its call pattern",
                e,
            )
        if name not in env:
            self._fail(UNBOUND_VARIABLE, name, f"unbound variable '{name}'", e)
        t = env[name]
        if t == BOT:
            self._fail(
                BOT_COMBINATION, name, f"'{name}' holds an invalid combination", e
            )
        if _dup(t):
            return t, env
        env2 = dict(env)
        del env2[name]
        return t, env2

    # -- functions ----------------------------------------------------------

    def _abs(
        self,
        env: dict[str, Type],
        blessed: dict[str, str],
        e: Fun,
        domain: Optional[Type],
    ) -> tuple[Type, dict[str, Type]]:
        """An escaping lambda: closure restriction + duplicability check."""
        self._reject_recursion(e)
        if domain is None:
            domain = self._scan_domain(e, blessed)
        fv = free_vars(e.body) - {e.param, e.self_name}
        closure = {x: t for x, t in env.items() if x in fv}
        bad = sorted(x for x, t in closure.items() if not _dup(t))
        if bad:
            self._fail(
                NOT_DUPLICABLE_CLOSURE,
                ", ".join(bad),
                "the function closes over non-duplicable bindings: " + ", ".join(bad),
                e,
            )
        body_env = dict(closure)
        if e.param != "_":
            body_env[e.param] = domain
        body_blessed = {
            k: v for k, v in blessed.items() if k not in (e.param, e.self_name)
        }
        t_body, _residual = self.infer(body_env, body_blessed, e.body)
        return Arrow(domain, t_body), env

    def _reject_recursion(self, e: Fun) -> None:
        if e.self_name != "_" and e.self_name in free_vars(e.body):
            self._fail(
                MISMATCH,
                e.self_name,
                "general recursion is not inferred; recursive functions are "
                "supported only as recognized library combinators",
                e,
            )

    def _scan_domain(self, fun: Fun, blessed: dict[str, str]) -> Type:
        """Infer an unapplied lambda's parameter type from body usage."""
        param = fun.param
        if param == "_" or param not in free_vars(fun.body):
            return EMPTY
        target = Var(param)
        ints = bools = 0
        array_read = array_store = 0
        set_add = set_elems = 0
        p_write = p_read = ref_use = 0
        for node in walk(fun.body):
            cls = type(node)
            if cls is Store and node.loc == target:
                array_store += 1
            elif cls is Load and node.loc == target:
                array_read += 1
            elif cls is Length and node.loc == target:
                array_read += 1
            elif cls is Prim and target in (node.left, node.right):
                if node.op in _BOOL_OPS:
                    bools += 1
                else:
                    ints += 1
            elif cls is If and node.cond == target:
                bools += 1
            elif cls is Assert and node.arg == target:
                bools += 1
            elif cls is App:
                head, args = _spine(node)
                if not (isinstance(head, Var) and head.name in blessed):
                    if head == target:
                        self._fail(
                            MISMATCH,
                            param,
                            f"cannot infer a type for '{param}' used as a function",
                            fun,
                        )
                    continue
                cname = blessed[head.name]
                if cname in ("get", "set") and args and args[0] == target:
                    ref_use += 1
                elif cname == "pwrite" and args and args[0] == target:
                    p_write += 1
                elif cname == "pread" and args and args[0] == target:
                    p_read += 1
                elif cname == "hadd" and args and args[0] == target:
                    set_add += 1
                elif cname == "helems" and args and args[0] == target:
                    set_elems += 1
        families = [
            array_read + array_store,
            set_add + set_elems,
            p_write + p_read,
            ref_use,
            ints,
            bools,
        ]
        if sum(1 for n in families if n) > 1:
            self._fail(
                MISMATCH,
                param,
                f"conflicting uses of '{param}'; cannot infer its type",
                fun,
            )
        if array_store:
            return IntArray(ONE)
        if array_read:
            return IntArray(HALF)
        if set_elems:
            return IntSet(ONE)
        if set_add:
            return IntSet(HALF)
        if p_write and p_read:
            return PWrite(ONE)
        if p_write:
            return PWrite(HALF)
        if p_read:
            return PRead(HALF)
        if ref_use:
            return Ref(EMPTY)
        if ints:
            return INT_T
        if bools:
            return BOOL_T
        return EMPTY

    # -- application --------------------------------------------------------

    def _app(
        self, env: dict[str, Type], blessed: dict[str, str], e: App
    ) -> tuple[Type, dict[str, Type]]:
        head, args = _spine(e)
        if isinstance(head, Var) and head.name in blessed:
            cname = blessed[head.name]
            if cname == _HASH_MARK:
                self._fail(
                    MISMATCH,
                    head.name,
                    f"the hash function '{head.name}' may only be passed to "
                    "hinit or dedup",
                    e,
                )
            return self._combinator(env, blessed, e, cname, args)
        literal = _recognize(head, blessed)
        if literal is not None:
            return self._combinator(env, blessed, e, literal, args)
        return self._generic_app(env, blessed, e)

    def _generic_app(
        self, env: dict[str, Type], blessed: dict[str, str], e: App
    ) -> tuple[Type, dict[str, Type]]:
        fn, arg = e.fn, e.arg
        demanded = None
        if not isinstance(fn, Fun):
            peeked = self._peek_type(env, blessed, fn)
            if isinstance(peeked, Arrow):
                demanded = peeked.dom
        t_arg, env2 = self._typed_arg(env, blessed, arg, demanded)
        if isinstance(fn, Fun):
            # β-redex: typed as a let; the literal never escapes.
            self._reject_recursion(fn)
            body_env = dict(env2)
            if fn.param != "_":
                body_env[fn.param] = t_arg
            body_blessed = {
                k: v for k, v in blessed.items() if k not in (fn.param, fn.self_name)
            }
            t_body, env3 = self.infer(body_env, body_blessed, fn.body)
            env3 = dict(env3)
            env3.pop(fn.param, None)
            return t_body, env3
        t_fn, env3 = self.infer(env2, blessed, fn)
        if not isinstance(t_fn, Arrow):
            self._fail(
                MISMATCH, _describe(fn), f"expected a function, found {t_fn}", e
            )
        if t_fn.dom != t_arg:
            self._fail(
                MISMATCH,
                _describe(arg),
                f"argument has type {t_arg}, function expects {t_fn.dom}",
                e,
            )
        return t_fn.cod, env3

    def _peek_type(
        self, env: dict[str, Type], blessed: dict[str, str], e: Expr
    ) -> Optional[Type]:
        """The type ``e`` would get, without environment effects (for
        learning an application's demanded domain ahead of the argument)."""
        if isinstance(e, Var):
            return env.get(e.name)
        if isinstance(e, App):
            t = self._peek_type(env, blessed, e.fn)
            return t.cod if isinstance(t, Arrow) else None
        return None

    def _typed_arg(
        self,
        env: dict[str, Type],
        blessed: dict[str, str],
        arg: Expr,
        demanded: Optional[Type],
    ) -> tuple[Type, dict[str, Type]]:
        """Type an argument; when the demanded domain is a smaller share
        of a fraction-indexed binding, consume only that share."""
        if (
            demanded is not None
            and isinstance(demanded, _Fractional)
            and isinstance(arg, Var)
            and arg.name not in blessed
        ):
            name = arg.name
            t = env.get(name)
            if t is not None and type(t) is type(demanded):
                if t.q < demanded.q:
                    self._fail(
                        PHASE_VIOLATION,
                        name,
                        f"'{name}' holds {t} but {demanded} is required",
                        arg,
                    )
                env2 = dict(env)
                if t.q == demanded.q:
                    del env2[name]
                else:
                    env2[name] = type(t)(t.q - demanded.q)
                return demanded, env2
        return self.infer(env, blessed, arg)

    # -- library combinator rules ------------------------------------------

    def _combinator(
        self,
        env: dict[str, Type],
        blessed: dict[str, str],
        e: App,
        cname: str,
        args: list[Expr],
    ) -> tuple[Type, dict[str, Type]]:
        if cname in ("fill", "filter_compact"):
            self._fail(
                MISMATCH,
                cname,
                f"'{cname}' is library plumbing with no direct typing rule; "
                "use alloc_fill or helems",
                e,
            )
        if cname == "dedup":
            return self._dedup(env, blessed, e, args)
        want = _COMBINATOR_ARITY[cname]
        if len(args) != want:
            self._fail(
                MISMATCH,
                cname,
                f"'{cname}' expects {want} argument(s), got {len(args)}",
                e,
            )
        if cname == "ref":
            t, env2 = self.infer(env, blessed, args[0])
            return Ref(t), env2
        if cname == "get":
            x = self._var_arg(env, blessed, cname, args[0])
            t = env[x]
            if not isinstance(t, Ref):
                self._hint_ref(cname, x, t, args[0], want=Ref)
            env2 = dict(env)
            env2[x] = Ref(EMPTY)
            return t.content, env2
        if cname == "set":
            x = self._var_arg(env, blessed, cname, args[0])
            t_val, env2 = self.infer(env, blessed, args[1])
            cur = env2.get(x)
            if cur is None:
                self._fail(UNBOUND_VARIABLE, x, f"unbound variable '{x}'", args[0])
            if cur == BOT:
                self._fail(BOT_COMBINATION, x, f"'{x}' holds an invalid combination", args[0])
            if not isinstance(cur, Ref):
                self._hint_ref(cname, x, cur, args[0], want=Ref)
            if cur.content != EMPTY:
                self._fail(
                    MISMATCH,
                    x,
                    f"set needs '{x}' : ref empty; its contents ({cur.content}) "
                    "must be read out with get first",
                    e,
                )
            env3 = dict(env2)
            env3[x] = Ref(t_val)
            return UNIT_T, env3
        if cname == "palloc":
            t, env2 = self.infer(env, blessed, args[0])
            self._want(INT_T, t, args[0], "palloc takes an int")
            return PWrite(ONE), env2
        if cname == "pwrite":
            x = self._var_arg(env, blessed, cname, args[0])
            t_val, env2 = self.infer(env, blessed, args[1])
            self._want(INT_T, t_val, args[1], "pwrite writes an int")
            cur = env2.get(x)
            if cur is None:
                self._fail(UNBOUND_VARIABLE, x, f"unbound variable '{x}'", args[0])
            if isinstance(cur, PWrite):
                return UNIT_T, env2
            if isinstance(cur, PRead):
                if cur.q == ONE:
                    env3 = dict(env2)
                    env3[x] = PWrite(ONE)
                    return UNIT_T, env3
                self._fail(
                    PHASE_VIOLATION,
                    x,
                    f"switching '{x}' from read to write phase needs the full "
                    f"fraction 1, but it holds {cur}",
                    e,
                )
            self._hint_ref(cname, x, cur, args[0], want=PWrite)
        if cname == "pread":
            x = self._var_arg(env, blessed, cname, args[0])
            cur = env[x]
            if isinstance(cur, PRead):
                return INT_T, env
            if isinstance(cur, PWrite):
                if cur.q == ONE:
                    env2 = dict(env)
                    env2[x] = PRead(ONE)
                    return INT_T, env2
                self._fail(
                    PHASE_VIOLATION,
                    x,
                    f"switching '{x}' from write to read phase needs the full "
                    f"fraction 1, but it holds {cur}",
                    e,
                )
            self._hint_ref(cname, x, cur, args[0], want=PRead)
        if cname == "alloc_fill":
            t_val, env2 = self.infer(env, blessed, args[1])
            self._want(INT_T, t_val, args[1], "alloc_fill fills with an int")
            t_size, env3 = self.infer(env2, blessed, args[0])
            self._want(INT_T, t_size, args[0], "alloc_fill takes an int size")
            return IntArray(ONE), env3
        if cname == "hinit":
            if not _is_hash(args[0], blessed):
                self._fail(
                    MISMATCH,
                    _describe(args[0]),
                    "hinit's hash argument must be a recognized pure hash "
                    "function",
                    args[0],
                )
            t_size, env2 = self.infer(env, blessed, args[1])
            self._want(INT_T, t_size, args[1], "hinit takes an int capacity")
            return IntSet(ONE), env2
        if cname == "hadd":
            x = self._var_arg(env, blessed, cname, args[0])
            t_val, env2 = self.infer(env, blessed, args[1])
            self._want(INT_T, t_val, args[1], "hadd inserts an int")
            cur = env2.get(x)
            if cur is None:
                self._fail(UNBOUND_VARIABLE, x, f"unbound variable '{x}'", args[0])
            if not isinstance(cur, IntSet):
                self._hint_ref(cname, x, cur, args[0], want=IntSet)
            return UNIT_T, env2
        if cname == "helems":
            t, env2 = self._typed_arg(env, blessed, args[0], IntSet(ONE))
            if isinstance(t, IntSet) and t.q != ONE:
                self._fail(
                    PHASE_VIOLATION,
                    _describe(args[0]),
                    f"helems needs the full hash set (intset 1), found {t}",
                    args[0],
                )
            self._want(IntSet(ONE), t, args[0], "helems consumes a full hash set")
            return IntArray(ONE), env2
        if cname == "parfor":
            return self._parfor(env, blessed, e, args)
        raise AssertionError(cname)

    def _dedup(
        self,
        env: dict[str, Type],
        blessed: dict[str, str],
        e: App,
        args: list[Expr],
    ) -> tuple[Type, dict[str, Type]]:
        if len(args) not in (1, 2):
            self._fail(MISMATCH, "dedup", f"dedup expects 1 or 2 arguments, got {len(args)}", e)
        if not _is_hash(args[0], blessed):
            self._fail(
                MISMATCH,
                _describe(args[0]),
                "dedup's hash argument must be a recognized pure hash function",
                args[0],
            )
        arrow = _dedup_arrow()
        if len(args) == 1:
            return arrow, env
        t_arr, env2 = self._typed_arg(env, blessed, args[1], arrow.dom)
        self._want(arrow.dom, t_arr, args[1], "dedup takes a shared int array")
        return arrow.cod, env2

    def _parfor(
        self,
        env: dict[str, Type],
        blessed: dict[str, str],
        e: App,
        args: list[Expr],
    ) -> tuple[Type, dict[str, Type]]:
        low, high, lam = args
        for bound in (low, high):
            if not isinstance(bound, Var) or env.get(bound.name) != INT_T:
                self._fail(
                    MISMATCH,
                    _describe(bound),
                    "parfor bounds must be variables bound to int",
                    bound,
                )
        if not isinstance(lam, Fun):
            self._fail(
                MISMATCH,
                _describe(lam),
                "parfor's body must be a literal function of the index",
                lam,
            )
        self._reject_recursion(lam)
        fv = free_vars(lam.body) - {lam.param, lam.self_name} - set(blessed)
        borrowed = {x: t for x, t in env.items() if x in fv}
        halved: dict[str, Type] = {}
        for x, t in sorted(borrowed.items()):
            h = _half(t)
            if h is None:
                self._fail(
                    UNSPLITTABLE_SHARING,
                    x,
                    f"parfor borrows '{x}' : {t}, which cannot be split "
                    "between iterations",
                    e,
                )
            halved[x] = h
        body_env = dict(halved)
        if lam.param != "_":
            body_env[lam.param] = INT_T
        body_blessed = {
            k: v for k, v in blessed.items() if k not in (lam.param, lam.self_name)
        }
        t_body, env_out = self.infer(body_env, body_blessed, lam.body)
        if t_body != UNIT_T:
            self._fail(
                MISMATCH,
                _describe(lam),
                f"parfor's body must return unit, found {t_body}",
                lam,
            )
        if env_out != body_env:
            changed = sorted(
                x
                for x in set(body_env) | set(env_out)
                if body_env.get(x) != env_out.get(x)
            )
            self._fail(
                MISMATCH,
                ", ".join(changed),
                "parfor's body must preserve its borrowed environment "
                f"(changed: {', '.join(changed)})",
                e,
            )
        return UNIT_T, env

    # -- primitive forms ----------------------------------------------------

    def _let(
        self, env: dict[str, Type], blessed: dict[str, str], e: Let
    ) -> tuple[Type, dict[str, Type]]:
        combinator = _recognize(e.bound, blessed)
        if combinator is not None and e.name != "_":
            blessed2 = dict(blessed)
            blessed2[e.name] = combinator
            env2 = {k: v for k, v in env.items() if k != e.name}
            return self.infer(env2, blessed2, e.body)
        t1, env1 = self.infer(env, blessed, e.bound)
        blessed2 = {k: v for k, v in blessed.items() if k != e.name}
        env2 = dict(env1)
        if e.name != "_":
            env2[e.name] = t1
        t2, env3 = self.infer(env2, blessed2, e.body)
        env4 = dict(env3)
        env4.pop(e.name, None)
        return t2, env4

    def _if(
        self, env: dict[str, Type], blessed: dict[str, str], e: If
    ) -> tuple[Type, dict[str, Type]]:
        t_cond, env1 = self.infer(env, blessed, e.cond)
        self._want(BOOL_T, t_cond, e.cond, "the condition must be bool")
        t_then, env_then = self.infer(dict(env1), blessed, e.then)
        t_else, env_else = self.infer(dict(env1), blessed, e.els)
        if t_then != t_else:
            self._fail(
                MISMATCH,
                _describe(e),
                f"branches disagree: {t_then} versus {t_else}",
                e,
            )
        if env_then != env_else:
            changed = sorted(
                x
                for x in set(env_then) | set(env_else)
                if env_then.get(x) != env_else.get(x)
            )
            self._fail(
                MISMATCH,
                ", ".join(changed),
                "branches must consume the environment identically "
                f"(differ on: {', '.join(changed)})",
                e,
            )
        return t_then, env_then

    def _prim(
        self, env: dict[str, Type], blessed: dict[str, str], e: Prim
    ) -> tuple[Type, dict[str, Type]]:
        t_right, env2 = self.infer(env, blessed, e.right)
        t_left, env3 = self.infer(env2, blessed, e.left)
        op = e.op
        if op in _ARITH_OPS:
            self._want(INT_T, t_left, e.left, f"'{op}' needs int operands")
            self._want(INT_T, t_right, e.right, f"'{op}' needs int operands")
            return INT_T, env3
        if op in _CMP_OPS:
            self._want(INT_T, t_left, e.left, f"'{op}' compares ints")
            self._want(INT_T, t_right, e.right, f"'{op}' compares ints")
            return BOOL_T, env3
        if op == "==":
            if t_left == t_right and t_left in (INT_T, BOOL_T):
                return BOOL_T, env3
            self._fail(
                MISMATCH,
                _describe(e),
                f"'==' needs two ints or two bools, found {t_left} and {t_right}",
                e,
            )
        if op in _BOOL_OPS:
            self._want(BOOL_T, t_left, e.left, f"'{op}' needs bool operands")
            self._want(BOOL_T, t_right, e.right, f"'{op}' needs bool operands")
            return BOOL_T, env3
        self._fail(MISMATCH, op, f"operator '{op}' has no typing rule", e)

    def _par(
        self, env: dict[str, Type], blessed: dict[str, str], e: Par
    ) -> tuple[Type, dict[str, Type]]:
        live = set(blessed)
        fv_left = free_vars(e.left) - live
        fv_right = free_vars(e.right) - live
        env_left: dict[str, Type] = {}
        env_right: dict[str, Type] = {}
        frame: dict[str, Type] = {}
        for x, t in env.items():
            in_left = x in fv_left
            in_right = x in fv_right
            if in_left and in_right:
                h = _half(t)
                if h is None:
                    self._fail(
                        UNSPLITTABLE_SHARING,
                        x,
                        f"both branches need '{x}' : {t}, which cannot be split",
                        e,
                    )
                env_left[x] = h
                env_right[x] = h
            elif in_left:
                env_left[x] = t
            elif in_right:
                env_right[x] = t
            else:
                frame[x] = t
        t_left, out_left = self.infer(env_left, blessed, e.left)
        t_right, out_right = self.infer(env_right, blessed, e.right)
        out = env_combine(env_combine(frame, out_left), out_right)
        return Prod(t_left, t_right), out

    # -- arrays -------------------------------------------------------------

    def _load(
        self, env: dict[str, Type], blessed: dict[str, str], e: Load
    ) -> tuple[Type, dict[str, Type]]:
        t_idx, env2 = self.infer(env, blessed, e.idx)
        self._want(INT_T, t_idx, e.idx, "load's index must be int")
        x = self._var_arg(env2, blessed, "load", e.loc)
        t = env2[x]
        if not isinstance(t, IntArray):
            self._hint_ref("load", x, t, e.loc, want=IntArray)
        return INT_T, env2

    def _store(
        self, env: dict[str, Type], blessed: dict[str, str], e: Store
    ) -> tuple[Type, dict[str, Type]]:
        t_val, env2 = self.infer(env, blessed, e.val)
        self._want(INT_T, t_val, e.val, "store writes an int")
        t_idx, env3 = self.infer(env2, blessed, e.idx)
        self._want(INT_T, t_idx, e.idx, "store's index must be int")
        x = self._var_arg(env3, blessed, "store", e.loc)
        t = env3[x]
        if isinstance(t, IntArray):
            if t.q != ONE:
                self._fail(
                    PHASE_VIOLATION,
                    x,
                    f"store needs the full array (intarray 1), but '{x}' "
                    f"holds {t}",
                    e,
                )
            return UNIT_T, env3
        self._hint_ref("store", x, t, e.loc, want=IntArray)

    def _length(
        self, env: dict[str, Type], blessed: dict[str, str], e: Length
    ) -> tuple[Type, dict[str, Type]]:
        # Derived rule: a length is fixed at allocation, so any fraction
        # (even a parallel share) reads it deterministically.
        x = self._var_arg(env, blessed, "length", e.loc)
        t = env[x]
        if not isinstance(t, IntArray):
            self._hint_ref("length", x, t, e.loc, want=IntArray)
        return INT_T, env

    # -- small helpers ------------------------------------------------------

    def _var_arg(
        self, env: dict[str, Type], blessed: dict[str, str], rule: str, arg: Expr
    ) -> str:
        if not isinstance(arg, Var) or arg.name in blessed:
            self._fail(
                MISMATCH,
                _describe(arg),
                f"{rule} targets a variable, not an arbitrary expression",
                arg,
            )
        name = arg.name
        if name not in env:
            self._fail(UNBOUND_VARIABLE, name, f"unbound variable '{name}'", arg)
        if env[name] == BOT:
            self._fail(
                BOT_COMBINATION, name, f"'{name}' holds an invalid combination", arg
            )
        return name

    def _want(self, expected: Type, found: Type, node: Expr, what: str) -> None:
        if found != expected:
            self._fail(
                MISMATCH,
                _describe(node),
                f"{what} (expected {expected}, found {found})",
                node,
            )

    def _hint_ref(
        self, rule: str, name: str, found: Type, node: Expr, want: type
    ) -> None:
        hints = {
            Ref: "a plain reference (allocate with ref)",
            PWrite: "a priority cell in its write phase (allocate with palloc)",
            PRead: "a priority cell in its read phase",
            IntArray: "an integer array (allocate with alloc_fill)",
            IntSet: "a hash set (allocate with hinit)",
        }
        self._fail(
            MISMATCH,
            name,
            f"{rule} needs {hints[want]}, but '{name}' : {found}",
            node,
        )


def _spine(e: App) -> tuple[Expr, list[Expr]]:
    args: list[Expr] = []
    head: Expr = e
    while isinstance(head, App):
        args.append(head.arg)
        head = head.fn
    args.reverse()
    return head, args


@cache
def _dedup_arrow() -> Arrow:
    """The derived arrow for dedup, computed by type-checking the
    canonical payload's inner lambda with the hash parameter recognized."""
    payload = _canonical()["dedup"]
    assert isinstance(payload, Fun) and isinstance(payload.body, Fun)
    blessed = ambient_blessing()
    blessed[payload.param] = _HASH_MARK
    arrow, _ = _Checker(None).infer({}, blessed, payload.body)
    assert isinstance(arrow, Arrow)
    return arrow


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------


def check(
    gamma: TypeEnv,
    e: Expr,
    positions: Optional[Mapping[int, tuple[int, int]]] = None,
) -> tuple[Type, dict[str, Type]]:
    """Type ``e`` under ``gamma``: returns ``(τ, Γ′)`` or raises
    :class:`TypeCheckError`.

    Library combinator names are ambient (they may appear free in ``e``
    and are typed by their derived rules); bindings in ``gamma`` shadow
    them.  The returned environment is the checker's maximal residual —
    unused and duplicable bindings are retained; weakening can always
    drop them.  ``e`` must be RunPar-free.
    """
    blessed = {k: v for k, v in ambient_blessing().items() if k not in gamma}
    return _Checker(positions).infer(dict(gamma), blessed, e)


def check_program(
    e: Expr,
    positions: Optional[Mapping[int, tuple[int, int]]] = None,
) -> ClosedVerdict:
    """The closed-program verdict: WellTyped(τ) or Rejected(error).

    ``e`` must be closed up to the ambient library names; the residual
    environment of a successful check is weakened away.
    """
    stray = sorted(free_vars(e) - set(LIBRARY_NAMES))
    if stray:
        return Rejected(
            TypeCheckError(
                UNBOUND_VARIABLE, stray[0], f"unbound variable '{stray[0]}'"
            )
        )
    try:
        t, _residual = check({}, e, positions)
    except TypeCheckError as err:
        return Rejected(err)
    return WellTyped(t)
