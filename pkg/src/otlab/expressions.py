"""Tiny arithmetic expression grammar for coefficient fields.

Media can be configured with analytic expressions over the coordinates
``x1 .. xn`` (``x, y, z`` are accepted aliases for ``x1, x2, x3``).
The grammar is deliberately small and evaluated without ``eval``:

    expr    := term (('+'|'-') term)*
    term    := factor (('*'|'/') factor)*
    factor  := ('+'|'-') factor | power
    power   := atom ('**' factor)?
    atom    := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Supported functions: sin, cos, tan, exp, sqrt, tanh, abs, log.
Supported constants: pi, e.
"""

from __future__ import annotations

import math
import re

import numpy as np

_FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "tanh": np.tanh,
    "abs": np.abs,
    "log": np.log,
}

_CONSTANTS = {"pi": math.pi, "e": math.e}

_ALIASES = {"x": "x1", "y": "x2", "z": "x3"}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/()]))"
)


class ExpressionError(ValueError):
    pass


def _tokenize(text):
    pos, tokens = 0, []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ExpressionError(f"cannot tokenize {text[pos:]!r} in expression {text!r}")
        if m.group("num") is not None:
            tokens.append(("num", float(m.group("num"))))
        elif m.group("name") is not None:
            tokens.append(("name", m.group("name")))
        else:
            tokens.append(("op", m.group("op")))
        pos = m.end()
    tokens.append(("end", None))
    return tokens


class Expression:
    """Parsed coefficient expression, callable on point arrays."""

    def __init__(self, text: str, dimension: int = 3):
        self.text = text
        self.dimension = dimension
        self._tokens = _tokenize(text)
        self._pos = 0
        self._ast = self._parse_expr()
        if self._peek() != ("end", None):
            raise ExpressionError(f"trailing input in expression {text!r}")

    def _peek(self):
        return self._tokens[self._pos]

    def _next(self):
        tok = self._tokens[self._pos]
        self._pos += 1
        return tok

    def _expect_op(self, op):
        kind, val = self._next()
        if kind != "op" or val != op:
            raise ExpressionError(f"expected {op!r} in expression {self.text!r}")

    def _parse_expr(self):
        node = self._parse_term()
        while self._peek() == ("op", "+") or self._peek() == ("op", "-"):
            _, op = self._next()
            rhs = self._parse_term()
            node = ("binop", op, node, rhs)
        return node

    def _parse_term(self):
        node = self._parse_factor()
        while self._peek() == ("op", "*") or self._peek() == ("op", "/"):
            _, op = self._next()
            rhs = self._parse_factor()
            node = ("binop", op, node, rhs)
        return node

    def _parse_factor(self):
        if self._peek() == ("op", "+"):
            self._next()
            return self._parse_factor()
        if self._peek() == ("op", "-"):
            self._next()
            return ("neg", self._parse_factor())
        return self._parse_power()

    def _parse_power(self):
        base = self._parse_atom()
        if self._peek() == ("op", "**"):
            self._next()
            exponent = self._parse_factor()
            return ("binop", "**", base, exponent)
        return base

    def _parse_atom(self):
        kind, val = self._next()
        if kind == "num":
            return ("const", val)
        if kind == "name":
            name = _ALIASES.get(val, val)
            if name in _CONSTANTS:
                return ("const", _CONSTANTS[name])
            if name in _FUNCTIONS:
                self._expect_op("(")
                arg = self._parse_expr()
                self._expect_op(")")
                return ("call", name, arg)
            m = re.fullmatch(r"x(\d+)", name)
            if m:
                axis = int(m.group(1))
                if not 1 <= axis <= self.dimension:
                    raise ExpressionError(
                        f"coordinate {val!r} out of range for dimension {self.dimension}"
                    )
                return ("coord", axis - 1)
            raise ExpressionError(f"unknown name {val!r} in expression {self.text!r}")
        if (kind, val) == ("op", "("):
            node = self._parse_expr()
            self._expect_op(")")
            return node
        raise ExpressionError(f"unexpected token {val!r} in expression {self.text!r}")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at ``points`` of shape (npts, dimension); returns (npts,)."""
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[None, :]
        out = self._eval(self._ast, points)
        return np.broadcast_to(out, (points.shape[0],)).astype(float)

    def _eval(self, node, points):
        tag = node[0]
        if tag == "const":
            return np.full(points.shape[0], node[1])
        if tag == "coord":
            return points[:, node[1]]
        if tag == "neg":
            return -self._eval(node[1], points)
        if tag == "call":
            return _FUNCTIONS[node[1]](self._eval(node[2], points))
        if tag == "binop":
            _, op, lhs, rhs = node
            a, b = self._eval(lhs, points), self._eval(rhs, points)
            if op == "+":
                return a + b
            if op == "-":
                return a - b
            if op == "*":
                return a * b
            if op == "/":
                return a / b
            if op == "**":
                return a**b
        raise ExpressionError(f"bad AST node {node!r}")
