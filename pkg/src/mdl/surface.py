"""Text syntax for the parallel lambda language (``.mdl`` files).

The concrete grammar is ML-flavored:

* ``let x = e in e``, ``if e then e else e``, ``fun x y -> e`` (multi-argument
  functions nest), ``mu f. fun x -> e`` for recursive functions.
* ``e1; e2`` sequences (sugar for ``let _ = e1 in e2``).
* Infix primitives with conventional precedence:
  ``||`` < ``&&`` < ``== < <= > >=`` < ``+ -`` < ``* / mod`` < application.
  Application is left-associative and binds tighter than any infix operator.
* Keyword-prefixed operations take atomic (parenthesize-if-complex) operands:
  ``assert e``, ``alloc e``, ``length e``, ``fst e``, ``snd e``,
  ``load a i``, ``store a i v``, ``cas a i old new``, ``par e1 e2``.
* ``par`` implements the closure-calling convention: an operand written as a
  literal function is forked as a *call* of that function on ``()``, so
  ``par (fun _ -> a) (fun _ -> b)`` runs the two bodies in parallel.  Operands
  that are not literal functions fork as-is.
* Tuples ``(a, b, c)`` nest to the right; ``()`` is the unit literal.
* Comments run from ``--`` to end of line.
* Integer literals must fit in 64 bits (the runtime itself is unbounded).

``runpar`` is reserved: the active parallel tuple is a run-time form, printed
for diagnostics but rejected by :func:`parse` unless ``allow_runpar`` is set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

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
    UNIT,
    Val,
    Value,
    Var,
    VBool,
    VClosure,
    VInt,
    VLoc,
    VPair,
    VUnit,
)

INT_MIN = -(2**63)
INT_MAX = 2**63 - 1

KEYWORDS = frozenset(
    """let in if then else fun mu par runpar alloc load store length assert
       cas fst snd true false mod""".split()
)

#: Multi-character punctuation, longest first so the lexer is greedy.
_PUNCT2 = ("->", "==", "<=", ">=", "||", "&&")
_PUNCT1 = "()=<>+-*/,;."


class ParseError(Exception):
    """A syntax error with a 1-based source position."""

    def __init__(self, message: str, line: int, col: int, expected: frozenset[str] = frozenset()):
        self.message = message
        self.line = line
        self.col = col
        self.expected = expected
        where = f"{line}:{col}"
        if expected:
            message = f"{message} (expected {', '.join(sorted(expected))})"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # "int" | "ident" | "kw" | "punct" | "eof"
    text: str
    line: int
    col: int


def _lex(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if c in " \t\r":
            i, col = i + 1, col + 1
            continue
        if text.startswith("--", i):
            while i < n and text[i] != "\n":
                i += 1
            continue
        if c.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            tokens.append(Token("int", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_'"):
                j += 1
            word = text[i:j]
            tokens.append(Token("kw" if word in KEYWORDS else "ident", word, line, col))
            col += j - i
            i = j
            continue
        two = text[i : i + 2]
        if two in _PUNCT2:
            tokens.append(Token("punct", two, line, col))
            i, col = i + 2, col + 2
            continue
        if c in _PUNCT1:
            tokens.append(Token("punct", c, line, col))
            i, col = i + 1, col + 1
            continue
        raise ParseError(f"unexpected character {c!r}", line, col)
    tokens.append(Token("eof", "", line, col))
    return tokens


#: Tokens that can begin an atom, used to extend applications greedily.
_ATOM_START_PUNCT = frozenset("(")
_ATOM_START_KW = frozenset({"true", "false"})

_CMP_OPS = frozenset({"==", "<", "<=", ">", ">="})
_ADD_OPS = frozenset({"+", "-"})
_MUL_OPS = frozenset({"*", "/", "mod"})


class _Parser:
    def __init__(self, tokens: list[Token], allow_runpar: bool):
        self.tokens = tokens
        self.pos = 0
        self.allow_runpar = allow_runpar
        self.positions: dict[int, tuple[int, int]] = {}

    # -- token plumbing ----------------------------------------------------

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, message: str, tok: Token | None = None, expected: frozenset[str] = frozenset()):
        tok = tok or self.peek()
        raise ParseError(message, tok.line, tok.col, expected)

    def expect(self, kind: str, text: str) -> Token:
        tok = self.peek()
        if tok.kind != kind or tok.text != text:
            shown = tok.text or "end of input"
            self.fail(f"unexpected {shown!r}", tok, expected=frozenset({text}))
        return self.next()

    def at(self, kind: str, text: str) -> bool:
        tok = self.peek()
        return tok.kind == kind and tok.text == text

    def _pos(self, e: Expr, tok: Token) -> Expr:
        self.positions[id(e)] = (tok.line, tok.col)
        return e

    # -- grammar -----------------------------------------------------------

    def parse_program(self) -> Expr:
        e = self.parse_expr()
        tok = self.peek()
        if tok.kind != "eof":
            self.fail(f"unexpected {tok.text!r} after expression", tok)
        return e

    def parse_expr(self) -> Expr:
        tok = self.peek()
        if tok.kind == "kw":
            if tok.text == "let":
                return self.parse_let()
            if tok.text == "if":
                return self.parse_if()
            if tok.text in ("fun", "mu"):
                return self.parse_fun()
        e = self.parse_infix(0)
        if self.at("punct", ";"):
            semi = self.next()
            rest = self.parse_expr()
            return self._pos(Let("_", e, rest), semi)
        return e

    def parse_let(self) -> Expr:
        kw = self.expect("kw", "let")
        name = self.parse_name()
        self.expect("punct", "=")
        bound = self.parse_expr()
        self.expect("kw", "in")
        body = self.parse_expr()
        return self._pos(Let(name, bound, body), kw)

    def parse_if(self) -> Expr:
        kw = self.expect("kw", "if")
        cond = self.parse_expr()
        self.expect("kw", "then")
        then = self.parse_expr()
        self.expect("kw", "else")
        els = self.parse_expr()
        return self._pos(If(cond, then, els), kw)

    def parse_fun(self) -> Expr:
        kw = self.next()  # fun | mu
        self_name = "_"
        if kw.text == "mu":
            self_name = self.parse_name()
            self.expect("punct", ".")
            self.expect("kw", "fun")
        params = [self.parse_name()]
        while self.peek().kind == "ident":
            params.append(self.parse_name())
        self.expect("punct", "->")
        body = self.parse_expr()
        for p in reversed(params[1:]):
            body = self._pos(Fun("_", p, body), kw)
        return self._pos(Fun(self_name, params[0], body), kw)

    def parse_name(self) -> str:
        tok = self.peek()
        if tok.kind != "ident":
            self.fail("expected a name", tok, expected=frozenset({"identifier"}))
        return self.next().text

    def parse_infix(self, level: int) -> Expr:
        # levels: 0 ||, 1 &&, 2 comparisons, 3 + -, 4 * / mod
        if level == 5:
            return self.parse_app()
        ops = (frozenset({"||"}), frozenset({"&&"}), _CMP_OPS, _ADD_OPS, _MUL_OPS)[level]
        e = self.parse_infix(level + 1)
        while True:
            tok = self.peek()
            text = tok.text
            is_op = (tok.kind == "punct" and text in ops) or (
                tok.kind == "kw" and text == "mod" and "mod" in ops
            )
            if not is_op:
                return e
            self.next()
            rhs = self.parse_infix(level + 1)
            e = self._pos(Prim(text, e, rhs), tok)

    def _starts_atom(self) -> bool:
        tok = self.peek()
        return (
            tok.kind in ("int", "ident")
            or (tok.kind == "kw" and tok.text in _ATOM_START_KW)
            or (tok.kind == "punct" and tok.text in _ATOM_START_PUNCT)
        )

    def parse_app(self) -> Expr:
        e = self.parse_head()
        while self._starts_atom():
            arg_tok = self.peek()
            e = self._pos(App(e, self.parse_atom()), arg_tok)
        return e

    def parse_head(self) -> Expr:
        tok = self.peek()
        if tok.kind == "kw":
            text = tok.text
            if text == "assert":
                self.next()
                return self._pos(Assert(self.parse_atom()), tok)
            if text == "alloc":
                self.next()
                return self._pos(Alloc(self.parse_atom()), tok)
            if text == "length":
                self.next()
                return self._pos(Length(self.parse_atom()), tok)
            if text == "fst":
                self.next()
                return self._pos(Proj(1, self.parse_atom()), tok)
            if text == "snd":
                self.next()
                return self._pos(Proj(2, self.parse_atom()), tok)
            if text == "load":
                self.next()
                return self._pos(Load(self.parse_atom(), self.parse_atom()), tok)
            if text == "store":
                self.next()
                return self._pos(
                    Store(self.parse_atom(), self.parse_atom(), self.parse_atom()), tok
                )
            if text == "cas":
                self.next()
                return self._pos(
                    Cas(
                        self.parse_atom(),
                        self.parse_atom(),
                        self.parse_atom(),
                        self.parse_atom(),
                    ),
                    tok,
                )
            if text == "par":
                self.next()
                left = self.parse_par_operand()
                right = self.parse_par_operand()
                return self._pos(Par(left, right), tok)
            if text == "runpar":
                if not self.allow_runpar:
                    self.fail("'runpar' is a reserved run-time form", tok)
                self.next()
                return self._pos(RunPar(self.parse_atom(), self.parse_atom()), tok)
        return self.parse_atom()

    def parse_par_operand(self) -> Expr:
        """An operand of ``par``: literal functions fork as thunk calls."""
        tok = self.peek()
        e = self.parse_atom()
        if isinstance(e, Fun):
            return self._pos(App(e, Val(UNIT)), tok)
        return e

    def parse_atom(self) -> Expr:
        tok = self.peek()
        if tok.kind == "int":
            return self._int_literal(False)
        if tok.kind == "punct" and tok.text == "-":
            nxt = self.tokens[self.pos + 1]
            if nxt.kind == "int":
                return self._int_literal(True)
            self.fail("unexpected '-' (negative literals only; write 0 - e)", tok)
        if tok.kind == "ident":
            self.next()
            return self._pos(Var(tok.text), tok)
        if tok.kind == "kw" and tok.text in ("true", "false"):
            self.next()
            return self._pos(Val(VBool(tok.text == "true")), tok)
        if tok.kind == "punct" and tok.text == "(":
            self.next()
            if self.at("punct", ")"):
                self.next()
                return self._pos(Val(UNIT), tok)
            items = [self.parse_expr()]
            while self.at("punct", ","):
                self.next()
                items.append(self.parse_expr())
            self.expect("punct", ")")
            e = items[-1]
            for item in reversed(items[:-1]):
                e = self._pos(Pair(item, e), tok)
            return e
        shown = tok.text or "end of input"
        self.fail(f"unexpected {shown!r}", tok, expected=frozenset({"expression"}))

    def _int_literal(self, negative: bool) -> Expr:
        tok = self.next()
        if negative:
            tok = self.next()  # the int token after '-'
        n = -int(tok.text) if negative else int(tok.text)
        if not (INT_MIN <= n <= INT_MAX):
            self.fail("integer literal does not fit in 64 bits", tok)
        return self._pos(Val(VInt(n)), tok)


def parse(text: str, *, allow_runpar: bool = False) -> Expr:
    """Parse a whole program (one expression). Raises :class:`ParseError`."""
    return _Parser(_lex(text), allow_runpar).parse_program()


def parse_with_positions(
    text: str, *, allow_runpar: bool = False
) -> tuple[Expr, dict[int, tuple[int, int]]]:
    """Like :func:`parse`, also returning ``id(node) -> (line, col)``.

    The position table is keyed by object identity; it stays valid for as
    long as the returned AST is alive.
    """
    p = _Parser(_lex(text), allow_runpar)
    e = p.parse_program()
    return e, p.positions


# ---------------------------------------------------------------------------
# Pretty-printer
# ---------------------------------------------------------------------------

# Precedence levels used by the printer, loosest to tightest.
_TOP, _OR, _AND, _CMP, _ADD, _MUL, _APP, _ATOM = range(8)

_OP_LEVEL = {"||": _OR, "&&": _AND}
_OP_LEVEL.update({op: _CMP for op in _CMP_OPS})
_OP_LEVEL.update({op: _ADD for op in _ADD_OPS})
_OP_LEVEL.update({op: _MUL for op in _MUL_OPS})


def to_source(e: Expr) -> str:
    """Render an expression as parseable source.

    Output reparses to an identical AST for any expression a program (or the
    generator) can produce.  Run-time-only forms print with non-default
    syntax: ``runpar`` (reserved keyword) and locations (``#n``).
    """
    return _print(e, _TOP)


def value_to_source(v: Value) -> str:
    """Render a value; locations print as ``#n`` (not parseable)."""
    match v:
        case VUnit():
            return "()"
        case VBool(b):
            return "true" if b else "false"
        case VInt(n):
            return str(n)
        case VLoc(ix):
            return f"#{ix}"
        case VPair(a, b):
            return f"({value_to_source(a)}, {_print_pair_tail(b)})"
        case VClosure(self_name, param, body):
            head = f"fun {param}" if self_name == "_" else f"mu {self_name}. fun {param}"
            return f"({head} -> {_print(body, _TOP)})"
    raise TypeError(f"not a value: {v!r}")


def _print_pair_tail(v: Value) -> str:
    if isinstance(v, VPair):
        return f"{value_to_source(v.left)}, {_print_pair_tail(v.right)}"
    return value_to_source(v)


def _paren(text: str, natural: int, required: int) -> str:
    return f"({text})" if natural < required else text


def _collapse_params(e: Expr) -> tuple[list[str], Expr]:
    params: list[str] = []
    while isinstance(e, Fun) and (not params or e.self_name == "_"):
        params.append(e.param)
        e = e.body
    return params, e


def _print(e: Expr, level: int) -> str:
    match e:
        case Var(name):
            return name
        case Val(v):
            text = value_to_source(v)
            if isinstance(v, VInt) and v.n < 0:
                return _paren(text, _APP, level)  # -3 is an atom only in operand spots
            return text
        case Fun(self_name, _, _):
            params, body = _collapse_params(e)
            head = " ".join(params)
            prefix = f"fun {head}" if self_name == "_" else f"mu {self_name}. fun {head}"
            return _paren(f"{prefix} -> {_print(body, _TOP)}", _TOP, level)
        case Let("_", bound, body):
            text = f"{_print(bound, _OR)}; {_print(body, _TOP)}"
            return _paren(text, _TOP, level)
        case Let(name, bound, body):
            text = f"let {name} = {_print(bound, _TOP)} in {_print(body, _TOP)}"
            return _paren(text, _TOP, level)
        case If(cond, then, els):
            text = (
                f"if {_print(cond, _TOP)} then {_print(then, _TOP)} "
                f"else {_print(els, _TOP)}"
            )
            return _paren(text, _TOP, level)
        case Prim(op, left, right):
            lv = _OP_LEVEL[op]
            text = f"{_print(left, lv)} {op} {_print(right, lv + 1)}"
            return _paren(text, lv, level)
        case App(fn, arg):
            text = f"{_print(fn, _APP)} {_print(arg, _ATOM)}"
            return _paren(text, _APP, level)
        case Pair(left, right):
            return f"({_print(left, _TOP)}, {_print_tuple_tail(right)})"
        case Proj(side, arg):
            kw = "fst" if side == 1 else "snd"
            return _paren(f"{kw} {_print(arg, _ATOM)}", _APP, level)
        case Assert(arg):
            return _paren(f"assert {_print(arg, _ATOM)}", _APP, level)
        case Alloc(arg):
            return _paren(f"alloc {_print(arg, _ATOM)}", _APP, level)
        case Length(arg):
            return _paren(f"length {_print(arg, _ATOM)}", _APP, level)
        case Load(loc, idx):
            return _paren(f"load {_print(loc, _ATOM)} {_print(idx, _ATOM)}", _APP, level)
        case Store(loc, idx, val):
            text = f"store {_print(loc, _ATOM)} {_print(idx, _ATOM)} {_print(val, _ATOM)}"
            return _paren(text, _APP, level)
        case Cas(loc, idx, old, new):
            text = (
                f"cas {_print(loc, _ATOM)} {_print(idx, _ATOM)} "
                f"{_print(old, _ATOM)} {_print(new, _ATOM)}"
            )
            return _paren(text, _APP, level)
        case Par(left, right):
            text = f"par {_print_par_operand(left)} {_print_par_operand(right)}"
            return _paren(text, _APP, level)
        case RunPar(left, right):
            text = f"runpar {_print(left, _ATOM)} {_print(right, _ATOM)}"
            return _paren(text, _APP, level)
    raise TypeError(f"not an expression: {e!r}")


def _print_tuple_tail(e: Expr) -> str:
    if isinstance(e, Pair):
        return f"{_print(e.left, _TOP)}, {_print_tuple_tail(e.right)}"
    return _print(e, _TOP)


def _print_par_operand(e: Expr) -> str:
    # Invert the closure-calling convention: a forked thunk call prints as
    # the bare literal function.
    if isinstance(e, App) and isinstance(e.fn, Fun) and e.arg == Val(UNIT):
        return _print(e.fn, _ATOM)
    return _print(e, _ATOM)
