"""Residual expression trees over x, f_k, df_k/dx and d2f_k/dx2."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence, Union

UNARY_OPS = ("neg", "sin", "cos", "tan", "exp", "ln", "sqrt")
BINARY_OPS = ("+", "-", "*", "/", "^")


@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True)
class VariableX:
    pass


@dataclass(frozen=True)
class Function:
    k: int


@dataclass(frozen=True)
class Derivative:
    k: int
    order: int


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "ResidualAst"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "ResidualAst"
    right: "ResidualAst"


ResidualAst = Union[Constant, VariableX, Function, Derivative, Unary, Binary]


def walk(node: ResidualAst) -> Iterator[ResidualAst]:
    yield node
    if isinstance(node, Unary):
        yield from walk(node.operand)
    elif isinstance(node, Binary):
        yield from walk(node.left)
        yield from walk(node.right)


def referenced(node: ResidualAst) -> set[tuple[int, int]]:
    """(function index, derivative order) pairs appearing in the tree."""
    out = set()
    for n in walk(node):
        if isinstance(n, Function):
            out.add((n.k, 0))
        elif isinstance(n, Derivative):
            out.add((n.k, n.order))
    return out


def depends_on_functions(node: ResidualAst) -> bool:
    return bool(referenced(node))


# -- pretty printing ------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}
_ATOM = 5


def _prec(node: ResidualAst) -> int:
    if isinstance(node, Binary):
        return _PREC[node.op]
    if isinstance(node, Unary) and node.op == "neg":
        return _PREC["neg"]
    if isinstance(node, Constant) and node.value < 0:
        return _PREC["neg"]
    return _ATOM


def _wrap(text: str, cond: bool) -> str:
    return f"({text})" if cond else text


def to_text(node: ResidualAst, names: Sequence[str]) -> str:
    """Render with the minimum parentheses that preserve the tree exactly."""
    if isinstance(node, Constant):
        return repr(float(node.value))
    if isinstance(node, VariableX):
        return "x"
    if isinstance(node, Function):
        return names[node.k]
    if isinstance(node, Derivative):
        return f"d{names[node.k]}/dx" if node.order == 1 else f"d2{names[node.k]}/dx2"
    if isinstance(node, Unary):
        inner = to_text(node.operand, names)
        if node.op == "neg":
            return "-" + _wrap(inner, _prec(node.operand) < _PREC["neg"])
        return f"{node.op}({inner})"
    if isinstance(node, Binary):
        p = _PREC[node.op]
        left = to_text(node.left, names)
        right = to_text(node.right, names)
        if node.op == "^":
            return _wrap(left, _prec(node.left) < _ATOM) + "^" + _wrap(right, _prec(node.right) < _ATOM)
        return f"{_wrap(left, _prec(node.left) < p)} {node.op} {_wrap(right, _prec(node.right) <= p)}"
    raise TypeError(f"not an AST node: {node!r}")
