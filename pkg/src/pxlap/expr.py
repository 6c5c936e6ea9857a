"""Small deterministic expression language for coefficient fields.

Grammar::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right associative
    atom   := number | name | func '(' args ')' | '(' expr ')'

Names are the variables supplied at compile time (``x``, ``y``, ``t``,
``u``, ``v`` ...) plus the constant ``pi``. Functions: ``sin cos exp log
abs`` (one argument) and ``min2 max2`` (two arguments).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

__all__ = ["Expression", "ExpressionError", "compile_expression"]


class ExpressionError(ValueError):
    """Parse or evaluation failure, carrying the 0-based column."""

    def __init__(self, message: str, position: int | None = None, text: str = ""):
        self.message = message
        self.position = position
        self.text = text
        where = f" at column {position + 1}" if position is not None else ""
        super().__init__(f"{message}{where}: {text!r}")


_TOKEN = re.compile(
    r"\s*(?:"
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
    r")"
)

_UNARY = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "abs": np.abs,
}
_BINARY = {"min2": np.minimum, "max2": np.maximum}

Node = Callable[[Mapping[str, np.ndarray]], np.ndarray]


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    stripped_end = len(text.rstrip())
    while pos < stripped_end:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            col = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExpressionError(f"unexpected character {text[col]!r}", col, text)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, variables: frozenset[str]):
        self.text = text
        self.variables = variables
        self.tokens = _tokenize(text)
        self.i = 0
        self.names_used: set[str] = set()

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value:
            found = "end of input" if kind == "end" else repr(val)
            raise ExpressionError(f"expected {value!r}, found {found}", pos, self.text)

    def error(self, message: str, pos: int):
        return ExpressionError(message, pos, self.text)

    def parse(self) -> Node:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise self.error(f"unexpected token {val!r}", pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = _binop(np.add if op == "+" else np.subtract, node, rhs)
        return node

    def term(self) -> Node:
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = _binop(np.multiply if op == "*" else np.divide, node, rhs)
        return node

    def unary(self) -> Node:
        if self.peek()[1] == "-":
            self.take()
            inner = self.unary()
            return lambda env: -inner(env)
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        if self.peek()[1] == "^":
            self.take()
            exponent = self.unary()
            return _binop(np.power, base, exponent)
        return base

    def atom(self) -> Node:
        kind, val, pos = self.take()
        if kind == "num":
            value = float(val)
            return lambda env: value
        if kind == "name":
            if val in _UNARY or val in _BINARY:
                return self.call(val, pos)
            if val == "pi":
                return lambda env: np.pi
            if val not in self.variables:
                allowed = ", ".join(sorted(self.variables)) or "none"
                raise self.error(f"unknown identifier {val!r} (allowed: {allowed}, pi)", pos)
            self.names_used.add(val)
            return lambda env: env[val]
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(val)
        raise self.error(f"unexpected {found}", pos)

    def call(self, name: str, pos: int) -> Node:
        self.expect("(")
        args = [self.expr()]
        while self.peek()[1] == ",":
            self.take()
            args.append(self.expr())
        self.expect(")")
        arity = 1 if name in _UNARY else 2
        if len(args) != arity:
            raise self.error(f"{name} takes {arity} argument(s), got {len(args)}", pos)
        if arity == 1:
            fn, (a,) = _UNARY[name], args
            return lambda env: fn(a(env))
        fn2, (a, b) = _BINARY[name], args
        return lambda env: fn2(a(env), b(env))


def _binop(fn, lhs: Node, rhs: Node) -> Node:
    return lambda env: fn(lhs(env), rhs(env))


@dataclass(frozen=True)
class Expression:
    """A compiled expression; evaluation is vectorized over numpy arrays."""

    text: str
    variables: frozenset[str]
    names_used: frozenset[str]
    _root: Node

    def __call__(self, **env) -> np.ndarray:
        return self.evaluate(env)

    def evaluate(self, env: Mapping[str, np.ndarray | float]) -> np.ndarray:
        missing = self.names_used - set(env)
        if missing:
            raise ExpressionError(f"no value bound for {sorted(missing)}", None, self.text)
        arrays = {k: np.asarray(v, dtype=float) for k, v in env.items()}
        shape = np.broadcast_shapes(*(a.shape for a in arrays.values())) if arrays else ()
        with np.errstate(all="ignore"):
            out = np.broadcast_to(np.asarray(self._root(arrays), dtype=float), shape).copy()
        if not np.all(np.isfinite(out)):
            bad = int(np.flatnonzero(~np.isfinite(out.ravel()))[0])
            raise ExpressionError(f"evaluation produced a non-finite value (flat index {bad})",
                                  None, self.text)
        return out

    @property
    def is_constant(self) -> bool:
        return not self.names_used


def compile_expression(text: str, variables=("x", "y")) -> Expression:
    """Parse ``text`` into an :class:`Expression` over ``variables``."""
    if not isinstance(text, str):
        text = repr(float(text))
    if not text.strip():
        raise ExpressionError("empty expression", 0, text)
    parser = _Parser(text, frozenset(variables))
    root = parser.parse()
    return Expression(text, frozenset(variables), frozenset(parser.names_used), root)
