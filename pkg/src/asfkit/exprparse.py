"""Small arithmetic-expression language for user-defined right-hand sides.

Grammar (lowest to highest precedence)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | power
    power := atom ('^' unary)?          # right associative
    atom  := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

so ``-x^2`` is ``-(x^2)`` and ``2^-1`` is ``0.5``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

from .errors import ConfigError

SYSTEM_VARIABLES = frozenset({"x", "s", "t", "g", "sigma", "eps", "mu", "A"})
RAMP_VARIABLES = frozenset({"z"})


def _sqrt(v):
    if v < 0:
        raise DomainError(f"sqrt of negative value {v!r}")
    return math.sqrt(v)


def _exp(v):
    try:
        return math.exp(v)
    except OverflowError:
        return math.inf


FUNCTIONS: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": _exp,
    "tanh": math.tanh,
    "sqrt": _sqrt,
    "abs": abs,
}


class ExpressionSyntaxError(ConfigError):
    """Parse failure at a byte offset, with the set of tokens that would fit."""

    def __init__(self, message: str, offset: int, expected=()):
        self.offset = offset
        self.expected = tuple(sorted(expected))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class UnknownIdentifier(ConfigError):
    def __init__(self, name: str, offset: int):
        self.name = name
        self.offset = offset
        super().__init__(f"unknown identifier {name!r} at offset {offset}")


class UnboundVariable(ConfigError):
    pass


class DomainError(ConfigError, ArithmeticError):
    pass


# --------------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expr"


Expr = Union[Num, Var, Neg, BinOp, Call]


# ----------------------------------------------------------------------- lexing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # "num" | "name" | "op" | "end"
    text: str
    offset: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ExpressionSyntaxError(f"unexpected character {source[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


_ATOM_START = ("number", "identifier", "(", "-")


class _Parser:
    def __init__(self, source: str, allowed: frozenset[str]):
        self.tokens = _tokenize(source)
        self.i = 0
        self.allowed = allowed

    @property
    def tok(self) -> _Token:
        return self.tokens[self.i]

    def _advance(self) -> _Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def _is(self, text: str) -> bool:
        return self.tok.kind == "op" and self.tok.text == text

    def _expect(self, text: str):
        if not self._is(text):
            raise ExpressionSyntaxError(f"unexpected {self._describe()}", self.tok.offset, {text})
        self._advance()

    def _describe(self) -> str:
        return "end of input" if self.tok.kind == "end" else f"token {self.tok.text!r}"

    def parse(self) -> Expr:
        node = self.expr()
        if self.tok.kind != "end":
            raise ExpressionSyntaxError(
                f"unexpected {self._describe()}", self.tok.offset, {"+", "-", "*", "/", "^", "end of input"}
            )
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self._is("+") or self._is("-"):
            op = self._advance().text
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.unary()
        while self._is("*") or self._is("/"):
            op = self._advance().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Expr:
        if self._is("-"):
            self._advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self._is("^"):
            self._advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "num":
            self._advance()
            return Num(float(tok.text))
        if tok.kind == "name":
            self._advance()
            if self._is("("):
                if tok.text not in FUNCTIONS:
                    raise UnknownIdentifier(tok.text, tok.offset)
                self._advance()
                arg = self.expr()
                self._expect(")")
                return Call(tok.text, arg)
            if tok.text in FUNCTIONS:
                self._expect("(")
            if tok.text not in self.allowed:
                raise UnknownIdentifier(tok.text, tok.offset)
            return Var(tok.text)
        if self._is("("):
            self._advance()
            node = self.expr()
            self._expect(")")
            return node
        raise ExpressionSyntaxError(f"unexpected {self._describe()}", tok.offset, set(_ATOM_START))


def parse(source: str, allowed=SYSTEM_VARIABLES) -> Expr:
    """Parse ``source`` into an expression tree.

    Raises
    ------
    ExpressionSyntaxError
        With the byte offset of the offending token and the expected-token set.
    UnknownIdentifier
        For variables outside ``allowed`` or unknown function names.
    """
    return _Parser(source, frozenset(allowed)).parse()


# ------------------------------------------------------------------- evaluation


def _binop(op: str, a: float, b: float) -> float:
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        if b == 0:
            raise DomainError("division by zero")
        return a / b
    try:
        r = a**b
    except ZeroDivisionError:
        raise DomainError("zero raised to a negative power") from None
    except OverflowError:
        return math.inf
    if isinstance(r, complex):
        raise DomainError(f"negative base {a!r} with fractional exponent {b!r}")
    return r


def evaluate(e: Expr, bindings: Mapping[str, float]) -> float:
    """Evaluate ``e`` in IEEE double precision."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        try:
            return float(bindings[e.name])
        except KeyError:
            raise UnboundVariable(f"variable {e.name!r} is not bound") from None
    if isinstance(e, Neg):
        return -evaluate(e.operand, bindings)
    if isinstance(e, BinOp):
        return _binop(e.op, evaluate(e.left, bindings), evaluate(e.right, bindings))
    if isinstance(e, Call):
        return float(FUNCTIONS[e.func](evaluate(e.arg, bindings)))
    raise TypeError(f"not an expression node: {e!r}")


def compile_expr(e: Expr) -> Callable[[Mapping[str, float]], float]:
    """Turn a tree into a nested closure; same semantics as :func:`evaluate`, fewer dispatches."""
    if isinstance(e, Num):
        v = e.value
        return lambda b: v
    if isinstance(e, Var):
        name = e.name

        def var(b):
            try:
                return float(b[name])
            except KeyError:
                raise UnboundVariable(f"variable {name!r} is not bound") from None

        return var
    if isinstance(e, Neg):
        inner = compile_expr(e.operand)
        return lambda b: -inner(b)
    if isinstance(e, BinOp):
        left, right, op = compile_expr(e.left), compile_expr(e.right), e.op
        return lambda b: _binop(op, left(b), right(b))
    if isinstance(e, Call):
        fn, arg = FUNCTIONS[e.func], compile_expr(e.arg)
        return lambda b: float(fn(arg(b)))
    raise TypeError(f"not an expression node: {e!r}")


def unparse(e: Expr) -> str:
    """Fully parenthesised source text that parses back to the same tree."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{unparse(e.operand)})"
    if isinstance(e, BinOp):
        return f"({unparse(e.left)} {e.op} {unparse(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({unparse(e.arg)})"
    raise TypeError(f"not an expression node: {e!r}")


def free_variables(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return free_variables(e.operand)
    if isinstance(e, BinOp):
        return free_variables(e.left) | free_variables(e.right)
    if isinstance(e, Call):
        return free_variables(e.arg)
    return set()
