"""Tiny infix expression language for region predicates and boundary formulas.

Grammar (recursive descent, no external engine)::

    bool    := or
    or      := and ('||' and)*
    and     := not ('&&' not)*
    not     := '!' not | batom
    batom   := 'true' | 'false' | '(' bool ')' | arith CMP arith
    arith   := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?
    atom    := NUMBER | VAR | FUNC '(' arith (',' arith)* ')' | '(' arith ')'

Variables are ``x1..xn`` (``y1..yn`` are accepted as aliases) and index the
coordinates of the evaluated points. Everything evaluates vectorised over an
``(k, n)`` array of points.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InputError


class ParseError(InputError):
    pass


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?|\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>&&|\|\||<=|>=|==|!=|[-+*/^()<>!,]))"
)

_CMP = {
    "<": np.less,
    "<=": np.less_equal,
    ">": np.greater,
    ">=": np.greater_equal,
    "==": np.equal,
    "!=": np.not_equal,
}

_FUNCS: dict[str, Callable] = {
    "abs": np.abs,
    "sqrt": np.sqrt,
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "min": np.minimum,
    "max": np.maximum,
}

_CONSTS = {"pi": np.pi}


def _tokenize(text: str) -> list[str]:
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        if mt is None or mt.end() == pos:
            raise ParseError(f"unexpected character at {pos} in {text!r}")
        out.append(mt.group(mt.lastgroup))
        pos = mt.end()
    return out


# AST nodes are plain tuples: ("num", v) ("var", i) ("neg", a) ("bin", op, a, b)
# ("call", name, args) ("cmp", op, a, b) ("and", a, b) ("or", a, b) ("not", a)
# ("bool", v)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def take(self, expected=None):
        tok = self.peek()
        if tok is None or (expected is not None and tok != expected):
            raise ParseError(f"expected {expected or 'token'} but got {tok!r} in {self.text!r}")
        self.i += 1
        return tok

    def done(self):
        if self.peek() is not None:
            raise ParseError(f"trailing input {self.peek()!r} in {self.text!r}")

    # boolean layer
    def parse_or(self):
        node = self.parse_and()
        while self.peek() == "||":
            self.take()
            node = ("or", node, self.parse_and())
        return node

    def parse_and(self):
        node = self.parse_not()
        while self.peek() == "&&":
            self.take()
            node = ("and", node, self.parse_not())
        return node

    def parse_not(self):
        if self.peek() == "!":
            self.take()
            return ("not", self.parse_not())
        return self.parse_batom()

    def parse_batom(self):
        tok = self.peek()
        if tok in ("true", "false"):
            self.take()
            return ("bool", tok == "true")
        if tok == "(":
            save = self.i
            try:
                self.take("(")
                node = self.parse_or()
                self.take(")")
                if self.peek() not in _CMP and self.peek() not in ("+", "-", "*", "/", "^"):
                    return node
            except ParseError:
                pass
            self.i = save
        lhs = self.parse_arith()
        op = self.peek()
        if op not in _CMP:
            raise ParseError(f"expected comparison after arithmetic term in {self.text!r}")
        self.take()
        return ("cmp", op, lhs, self.parse_arith())

    # arithmetic layer
    def parse_arith(self):
        node = self.parse_term()
        while self.peek() in ("+", "-"):
            op = self.take()
            node = ("bin", op, node, self.parse_term())
        return node

    def parse_term(self):
        node = self.parse_unary()
        while self.peek() in ("*", "/"):
            op = self.take()
            node = ("bin", op, node, self.parse_unary())
        return node

    def parse_unary(self):
        if self.peek() == "-":
            self.take()
            return ("neg", self.parse_unary())
        if self.peek() == "+":
            self.take()
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self):
        node = self.parse_atom()
        if self.peek() == "^":
            self.take()
            node = ("bin", "^", node, self.parse_unary())
        return node

    def parse_atom(self):
        tok = self.take()
        if tok == "(":
            node = self.parse_arith()
            self.take(")")
            return node
        if re.fullmatch(r"[\d.].*", tok):
            return ("num", float(tok))
        mt = re.fullmatch(r"[xy](\d+)", tok)
        if mt:
            idx = int(mt.group(1))
            if idx < 1:
                raise ParseError(f"coordinate index must start at 1: {tok}")
            return ("var", idx - 1)
        if tok in _CONSTS:
            return ("num", _CONSTS[tok])
        if tok in _FUNCS:
            self.take("(")
            args = [self.parse_arith()]
            while self.peek() == ",":
                self.take()
                args.append(self.parse_arith())
            self.take(")")
            return ("call", tok, args)
        raise ParseError(f"unknown name {tok!r} in {self.text!r}")


def _max_var(node) -> int:
    kind = node[0]
    if kind == "var":
        return node[1]
    if kind in ("num", "bool"):
        return -1
    if kind == "call":
        return max(_max_var(a) for a in node[2])
    return max(_max_var(c) for c in node[1:] if isinstance(c, tuple))


def _eval(node, pts: np.ndarray):
    kind = node[0]
    if kind == "num":
        return np.full(pts.shape[0], node[1])
    if kind == "bool":
        return np.full(pts.shape[0], node[1])
    if kind == "var":
        return pts[:, node[1]]
    if kind == "neg":
        return -_eval(node[1], pts)
    if kind == "bin":
        a, b = _eval(node[2], pts), _eval(node[3], pts)
        op = node[1]
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            return a / b
        return np.power(a, b)
    if kind == "call":
        fn = _FUNCS[node[1]]
        args = [_eval(a, pts) for a in node[2]]
        if node[1] in ("min", "max"):
            out = args[0]
            for a in args[1:]:
                out = fn(out, a)
            return out
        if len(args) != 1:
            raise InputError(f"{node[1]} takes one argument")
        return fn(args[0])
    if kind == "cmp":
        return _CMP[node[1]](_eval(node[2], pts), _eval(node[3], pts))
    if kind == "and":
        return np.logical_and(_eval(node[1], pts), _eval(node[2], pts))
    if kind == "or":
        return np.logical_or(_eval(node[1], pts), _eval(node[2], pts))
    if kind == "not":
        return np.logical_not(_eval(node[1], pts))
    raise AssertionError(kind)


@dataclass(frozen=True)
class Expression:
    """Compiled expression; call it on points of shape ``(k, n)`` or ``(n,)``."""

    text: str
    boolean: bool
    _ast: tuple

    def __call__(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        need = _max_var(self._ast) + 1
        if need > pts.shape[1]:
            raise InputError(f"expression {self.text!r} uses x{need} but points have {pts.shape[1]} coords")
        out = _eval(self._ast, pts)
        return out.astype(bool) if self.boolean else out.astype(float)

    def __str__(self) -> str:
        return self.text


def parse_predicate(text: str) -> Expression:
    p = _Parser(text)
    ast = p.parse_or()
    p.done()
    return Expression(text, True, ast)


def parse_formula(text: str) -> Expression:
    p = _Parser(text)
    ast = p.parse_arith()
    p.done()
    return Expression(text, False, ast)
