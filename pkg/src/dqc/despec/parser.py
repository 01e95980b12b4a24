"""Recursive-descent parser for residual expressions.

Grammar (whitespace insignificant)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := ("-" | "+") unary | power
    power  := atom ("^" unary)?          # right-associative, binds tighter than unary minus
    atom   := number | "x" | "pi" | name | "d" name "/dx" | "d2" name "/dx2"
            | func "(" expr ")" | "(" expr ")"

``name`` is a declared function or a named auxiliary expression of x. ``func``
is one of sin, cos, tan, exp, ln, sqrt. The exponent of ``^`` must reduce to a
constant.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

from ..errors import ConfigurationError
from .ast import (
    Binary,
    Constant,
    Derivative,
    Function,
    ResidualAst,
    Unary,
    VariableX,
    depends_on_functions,
)

FUNCS = ("sin", "cos", "tan", "exp", "ln", "sqrt")
RESERVED = set(FUNCS) | {"x", "pi"}


class ParseError(ConfigurationError):
    def __init__(self, message: str, offset: int, text: str = ""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.text = text


class UnknownIdentifierError(ParseError):
    pass


class DerivativeOrderError(ParseError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str  # num, name, deriv, op, lparen, rparen, end
    value: object
    offset: int


_NUM = re.compile(r"(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?")
_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_DERIV = re.compile(r"d(\d*)([A-Za-z_][A-Za-z0-9_]*?)/")


def tokenize(text: str, function_names: Sequence[str]) -> list[Token]:
    fnames = set(function_names)
    tokens: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            m = _NUM.match(text, i)
            tokens.append(Token("num", float(m.group(0)), i))
            i = m.end()
            continue
        if c.isalpha() or c == "_":
            tok, i = _name_or_derivative(text, i, fnames)
            tokens.append(tok)
            continue
        if c in "+-*/^":
            tokens.append(Token("op", c, i))
        elif c == "(":
            tokens.append(Token("lparen", c, i))
        elif c == ")":
            tokens.append(Token("rparen", c, i))
        else:
            raise ParseError(f"unexpected character {c!r}", i, text)
        i += 1
    tokens.append(Token("end", None, n))
    return tokens


def _name_or_derivative(text: str, i: int, fnames: set) -> tuple[Token, int]:
    m = _NAME.match(text, i)
    word = m.group(0)
    end = m.end()
    dm = re.fullmatch(r"d(\d*)(.+)", word)
    if dm and dm.group(2) in fnames and word not in fnames and end < len(text) and text[end] == "/":
        order = int(dm.group(1)) if dm.group(1) else 1
        suffix = "dx" if order == 1 else f"dx{order}"
        j = end + 1
        if not text.startswith("dx", j):
            raise ParseError("expected 'dx' after derivative '/'", j, text)
        tail = re.match(r"dx(\d*)", text[j:])
        if tail.group(0) != suffix:
            raise ParseError(f"derivative denominator {tail.group(0)!r} does not match order {order}", j, text)
        if order < 1:
            raise ParseError("derivative order must be at least 1", i, text)
        if order > 2:
            raise DerivativeOrderError(f"derivative order {order} exceeds the maximum of 2", i, text)
        return Token("deriv", (dm.group(2), order), i), j + len(suffix)
    return Token("name", word, i), end


def _fold(node: ResidualAst) -> Optional[float]:
    """Value of a function- and x-free subtree, else None."""
    if isinstance(node, Constant):
        return node.value
    if isinstance(node, Unary):
        v = _fold(node.operand)
        if v is None:
            return None
        if node.op == "neg":
            return -v
        fn = {"sin": math.sin, "cos": math.cos, "tan": math.tan, "exp": math.exp,
              "ln": math.log, "sqrt": math.sqrt}[node.op]
        try:
            return fn(v)
        except (ValueError, OverflowError):
            return None
    if isinstance(node, Binary):
        a, b = _fold(node.left), _fold(node.right)
        if a is None or b is None:
            return None
        try:
            return {"+": a + b, "-": a - b, "*": a * b}[node.op] if node.op in "+-*" else \
                (a / b if node.op == "/" else a ** b)
        except (ZeroDivisionError, OverflowError):
            return None
    return None


class _Parser:
    def __init__(self, text, names, aux):
        self.text = text
        self.names = list(names)
        self.aux = aux
        self.tokens = tokenize(text, names)
        self.pos = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def take(self) -> Token:
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def expect(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            raise ParseError(f"expected {what}", self.tok.offset, self.text)
        return self.take()

    def parse(self) -> ResidualAst:
        if self.tok.kind == "end":
            raise ParseError("empty expression", 0, self.text)
        node = self.expr()
        if self.tok.kind != "end":
            raise ParseError(f"unexpected {self.tok.value!r}", self.tok.offset, self.text)
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.value in "+-":
            op = self.take().value
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.value in "*/":
            op = self.take().value
            node = Binary(op, node, self.unary())
        return node

    def unary(self):
        if self.tok.kind == "op" and self.tok.value == "-":
            self.take()
            return Unary("neg", self.unary())
        if self.tok.kind == "op" and self.tok.value == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.tok.kind == "op" and self.tok.value == "^":
            at = self.take().offset
            exponent = self.unary()
            value = _fold(exponent)
            if value is None:
                raise ParseError("exponent of '^' must be a constant", at + 1, self.text)
            return Binary("^", base, Constant(value))
        return base

    def atom(self):
        t = self.tok
        if t.kind == "num":
            self.take()
            return Constant(t.value)
        if t.kind == "deriv":
            self.take()
            name, order = t.value
            return Derivative(self.names.index(name), order)
        if t.kind == "lparen":
            self.take()
            node = self.expr()
            self.expect("rparen", "')'")
            return node
        if t.kind == "name":
            self.take()
            word = t.value
            if word in FUNCS:
                self.expect("lparen", f"'(' after {word}")
                arg = self.expr()
                self.expect("rparen", "')'")
                return Unary(word, arg)
            if word == "x":
                return VariableX()
            if word == "pi":
                return Constant(math.pi)
            if word in self.names:
                return Function(self.names.index(word))
            if word in self.aux:
                return self.aux[word]
            raise UnknownIdentifierError(f"unknown identifier {word!r}", t.offset, self.text)
        if t.kind == "end":
            raise ParseError("unexpected end of expression", t.offset, self.text)
        raise ParseError(f"unexpected {t.value!r}", t.offset, self.text)


def _check_names(names: Sequence[str], aux: Mapping) -> None:
    for nm in list(names) + list(aux):
        if not _NAME.fullmatch(nm) or nm in RESERVED:
            raise ConfigurationError(f"invalid identifier {nm!r}")
    if len(set(names)) != len(names):
        raise ConfigurationError("function names must be distinct")
    clash = set(names) & set(aux)
    if clash:
        raise ConfigurationError(f"auxiliary names clash with functions: {sorted(clash)}")


def parse_auxiliaries(auxiliaries: Optional[Mapping[str, Union[str, ResidualAst]]],
                      function_names: Sequence[str]) -> dict[str, ResidualAst]:
    """Parse named x-only expressions in order (later ones may use earlier ones)."""
    out: dict[str, ResidualAst] = {}
    for name, expr in (auxiliaries or {}).items():
        node = expr if not isinstance(expr, str) else _Parser(expr, [], out).parse()
        if depends_on_functions(node):
            raise ConfigurationError(f"auxiliary {name!r} must depend on x only")
        out[name] = node
    _check_names(function_names, out)
    return out


def parse_residual(text: str, function_names: Sequence[str],
                   auxiliaries: Optional[Mapping[str, Union[str, ResidualAst]]] = None) -> ResidualAst:
    if not text or not text.strip():
        raise ParseError("empty expression", 0, text or "")
    aux = parse_auxiliaries(auxiliaries, function_names)
    return _Parser(text, function_names, aux).parse()
