"""Tiny expression language for catalog parameters.

Grammar (recursive descent, right-associative ``^``)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := ('+' | '-') unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | NAME | FUNC '(' expr ')' | '(' expr ')'

Identifiers are the coordinates ``u`` and ``v`` plus the constants ``pi``
and ``e``; functions are ``exp``, ``log``, ``sin``, ``cos`` and ``sqrt``.
Parsed expressions evaluate on numpy arrays and differentiate symbolically,
which is what lets catalog fields carry exact derivative evaluators.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

FUNCTIONS = ("exp", "log", "sin", "cos", "sqrt")
VARIABLES = ("u", "v")
CONSTANTS = {"pi": math.pi, "e": math.e}

_TOKEN = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(\*\*|[-+*/^()]))")


class ExpressionError(ValueError):
    """Raised for malformed expressions."""


# -- AST -------------------------------------------------------------------


class Node:
    def evaluate(self, env):
        raise NotImplementedError

    def diff(self, var: str) -> "Node":
        raise NotImplementedError

    def variables(self) -> set[str]:
        raise NotImplementedError


@dataclass(frozen=True)
class Num(Node):
    value: float

    def evaluate(self, env):
        return self.value

    def diff(self, var):
        return Num(0.0)

    def variables(self):
        return set()

    def __str__(self):
        return repr(self.value) if self.value >= 0 else f"({self.value!r})"


@dataclass(frozen=True)
class Var(Node):
    name: str

    def evaluate(self, env):
        return env[self.name]

    def diff(self, var):
        return Num(1.0 if var == self.name else 0.0)

    def variables(self):
        return {self.name}

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Neg(Node):
    arg: Node

    def evaluate(self, env):
        return -self.arg.evaluate(env)

    def diff(self, var):
        return neg(self.arg.diff(var))

    def variables(self):
        return self.arg.variables()

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True)
class Bin(Node):
    op: str
    left: Node
    right: Node

    def evaluate(self, env):
        a = self.left.evaluate(env)
        b = self.right.evaluate(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            return a / b
        return _power(a, b)

    def diff(self, var):
        a, b = self.left, self.right
        da, db = a.diff(var), b.diff(var)
        if self.op == "+":
            return add(da, db)
        if self.op == "-":
            return sub(da, db)
        if self.op == "*":
            return add(mul(da, b), mul(a, db))
        if self.op == "/":
            return div(sub(mul(da, b), mul(a, db)), power(b, Num(2.0)))
        # a^b
        if isinstance(b, Num):
            return mul(mul(b, power(a, Num(b.value - 1.0))), da)
        return mul(self, add(mul(db, call("log", a)), div(mul(b, da), a)))

    def variables(self):
        return self.left.variables() | self.right.variables()

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node

    def evaluate(self, env):
        x = self.arg.evaluate(env)
        return getattr(np, self.func)(x)

    def diff(self, var):
        a = self.arg
        da = a.diff(var)
        if self.func == "exp":
            outer = self
        elif self.func == "log":
            outer = div(Num(1.0), a)
        elif self.func == "sin":
            outer = call("cos", a)
        elif self.func == "cos":
            outer = neg(call("sin", a))
        else:  # sqrt
            outer = div(Num(0.5), self)
        return mul(outer, da)

    def variables(self):
        return self.arg.variables()

    def __str__(self):
        return f"{self.func}({self.arg})"


def _power(a, b):
    # integer exponents keep negative bases real
    if np.ndim(b) == 0 and float(b).is_integer():
        return np.power(a, int(b)) if int(b) >= 0 else 1.0 / np.power(a, -int(b))
    return np.power(a, b)


# -- simplifying constructors ----------------------------------------------


def _is(node: Node, value: float) -> bool:
    return isinstance(node, Num) and node.value == value


def neg(a: Node) -> Node:
    if isinstance(a, Num):
        return Num(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Node, b: Node) -> Node:
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return Bin("+", a, b)


def sub(a: Node, b: Node) -> Node:
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    return Bin("-", a, b)


def mul(a: Node, b: Node) -> Node:
    if _is(a, 0.0) or _is(b, 0.0):
        return Num(0.0)
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return Bin("*", a, b)


def div(a: Node, b: Node) -> Node:
    if _is(a, 0.0):
        return Num(0.0)
    if _is(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num) and b.value != 0.0:
        return Num(a.value / b.value)
    return Bin("/", a, b)


def power(a: Node, b: Node) -> Node:
    if _is(b, 0.0):
        return Num(1.0)
    if _is(b, 1.0):
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(float(_power(a.value, b.value)))
    return Bin("^", a, b)


def call(func: str, a: Node) -> Node:
    if isinstance(a, Num):
        return Num(float(getattr(np, func)(a.value)))
    return Call(func, a)


# -- parser ----------------------------------------------------------------


def _tokenize(text: str) -> list[tuple[str, str]]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExpressionError(f"unexpected character {text[pos]!r} at {pos}")
        number, name, op = m.groups()
        if number is not None:
            tokens.append(("num", number))
        elif name is not None:
            tokens.append(("name", name))
        else:
            tokens.append(("op", "^" if op == "**" else op))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else ("end", "")

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, op):
        kind, val = self.take()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r}, got {val or 'end of input'!r}")

    def parse(self) -> Node:
        if not self.tokens:
            raise ExpressionError("empty expression")
        node = self.expr()
        if self.peek()[0] != "end":
            raise ExpressionError(f"trailing input at token {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            node = add(node, rhs) if op == "+" else sub(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek() in (("op", "*"), ("op", "/")):
            op = self.take()[1]
            rhs = self.unary()
            node = mul(node, rhs) if op == "*" else div(node, rhs)
        return node

    def unary(self):
        if self.peek() == ("op", "-"):
            self.take()
            return neg(self.unary())
        if self.peek() == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return power(base, self.unary())
        return base

    def atom(self):
        kind, val = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val in VARIABLES:
                return Var(val)
            if val in CONSTANTS:
                return Num(CONSTANTS[val])
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return call(val, arg)
            raise ExpressionError(f"unknown identifier {val!r}")
        if (kind, val) == ("op", "("):
            node = self.expr()
            self.expect(")")
            return node
        raise ExpressionError(f"unexpected token {val or 'end of input'!r}")


class Expression:
    """A parsed expression in ``u`` and ``v``.

    >>> Expression("u^2 + v").diff("u")(2.0, 0.0)
    4.0
    """

    def __init__(self, source: "str | Node"):
        if isinstance(source, Node):
            self.node = source
            self.source = str(source)
        else:
            self.source = str(source)
            self.node = _Parser(self.source).parse()

    def __call__(self, u, v=0.0):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        out = np.asarray(self.node.evaluate({"u": u, "v": v}), dtype=float)
        shape = np.broadcast(u, v).shape
        if out.shape != shape:
            out = np.broadcast_to(out, shape).copy()
        return out

    def diff(self, var: str, order: int = 1) -> "Expression":
        if var not in VARIABLES:
            raise ExpressionError(f"cannot differentiate by {var!r}")
        node = self.node
        for _ in range(order):
            node = node.diff(var)
        return Expression(node)

    def variables(self) -> set[str]:
        return self.node.variables()

    def is_constant(self) -> bool:
        return not self.node.variables()

    def __repr__(self):
        return f"Expression({self.source!r})"


def parse(text: "str | Expression | float | int") -> Expression:
    """Parse ``text`` (numbers are accepted as constant expressions)."""
    if isinstance(text, Expression):
        return text
    if isinstance(text, (int, float)):
        return Expression(Num(float(text)))
    return Expression(text)
