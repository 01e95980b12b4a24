"""Vectorized residual evaluation with reverse-mode partial derivatives.

Values are bound as an array ``u`` of shape (K, 3, M): for function k,
``u[k, r]`` holds the r-th x-derivative on M points. Partials come back in the
same layout, so ``partials[k, r, i] = dF(x_i)/d u[k, r, i]``.
"""
from __future__ import annotations

from typing import Mapping, Optional, Sequence

import numpy as np

from ..errors import LogicError, NumericError
from .ast import Binary, Constant, Derivative, Function, ResidualAst, Unary, VariableX, referenced


def _fail(what: str, bad: np.ndarray, x: np.ndarray):
    i = int(np.flatnonzero(bad)[0])
    xi = float(x[i]) if x.size > 1 else float(x.reshape(-1)[0])
    raise NumericError(f"{what} at x={xi!r}", x=xi)


class _Tape:
    def __init__(self, x: np.ndarray, u: np.ndarray):
        self.x = x
        self.u = u
        self.entries: list[tuple] = []  # (node, value, child entry indices)

    def run(self, node: ResidualAst) -> int:
        x = self.x
        if isinstance(node, Constant):
            val = np.full(x.shape, float(node.value))
            kids = ()
        elif isinstance(node, VariableX):
            val = x.astype(float)
            kids = ()
        elif isinstance(node, (Function, Derivative)):
            order = 0 if isinstance(node, Function) else node.order
            val = self.u[node.k, order]
            kids = ()
        elif isinstance(node, Unary):
            c = self.run(node.operand)
            val = self._unary(node.op, self.entries[c][1])
            kids = (c,)
        elif isinstance(node, Binary):
            a = self.run(node.left)
            b = self.run(node.right)
            val = self._binary(node.op, self.entries[a][1], self.entries[b][1])
            kids = (a, b)
        else:
            raise LogicError(f"not an AST node: {node!r}")
        self.entries.append((node, val, kids))
        return len(self.entries) - 1

    def _unary(self, op, a):
        x = self.x
        with np.errstate(all="ignore"):
            if op == "neg":
                return -a
            if op == "ln":
                if np.any(a <= 0):
                    _fail("ln of non-positive value", a <= 0, x)
                return np.log(a)
            if op == "sqrt":
                if np.any(a < 0):
                    _fail("sqrt of negative value", a < 0, x)
                return np.sqrt(a)
            out = {"sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp}[op](a)
        if not np.all(np.isfinite(out)):
            _fail(f"{op} is not finite", ~np.isfinite(out), x)
        return out

    def _binary(self, op, a, b):
        x = self.x
        with np.errstate(all="ignore"):
            if op == "+":
                out = a + b
            elif op == "-":
                out = a - b
            elif op == "*":
                out = a * b
            elif op == "/":
                if np.any(b == 0):
                    _fail("division by zero", b == 0, x)
                out = a / b
            else:
                c = float(b.reshape(-1)[0])
                if c != int(c) and np.any(a < 0):
                    _fail("fractional power of negative value", a < 0, x)
                if c < 0 and np.any(a == 0):
                    _fail("negative power of zero", a == 0, x)
                out = a ** c
        if not np.all(np.isfinite(out)):
            _fail(f"'{op}' is not finite", ~np.isfinite(out), x)
        return out

    def backward(self, root: int) -> np.ndarray:
        grads = [None] * len(self.entries)
        grads[root] = np.ones(self.x.shape)
        partials = np.zeros(self.u.shape)
        for idx in range(root, -1, -1):
            g = grads[idx]
            if g is None:
                continue
            node, val, kids = self.entries[idx]
            if isinstance(node, Function):
                partials[node.k, 0] += g
            elif isinstance(node, Derivative):
                partials[node.k, node.order] += g
            elif isinstance(node, Unary):
                a = self.entries[kids[0]][1]
                local = {
                    "neg": lambda: -1.0,
                    "sin": lambda: np.cos(a),
                    "cos": lambda: -np.sin(a),
                    "tan": lambda: 1.0 + val * val,
                    "exp": lambda: val,
                    "ln": lambda: 1.0 / a,
                    "sqrt": lambda: 0.5 / np.where(val == 0, np.inf, val),
                }[node.op]()
                self._acc(grads, kids[0], g * local)
            elif isinstance(node, Binary):
                a = self.entries[kids[0]][1]
                b = self.entries[kids[1]][1]
                op = node.op
                if op == "+":
                    da, db = g, g
                elif op == "-":
                    da, db = g, -g
                elif op == "*":
                    da, db = g * b, g * a
                elif op == "/":
                    da, db = g / b, -g * a / (b * b)
                else:
                    c = float(b.reshape(-1)[0])
                    da, db = (g * c * a ** (c - 1) if c != 0 else 0.0 * g), None
                self._acc(grads, kids[0], da)
                if db is not None:
                    self._acc(grads, kids[1], db)
        return partials

    @staticmethod
    def _acc(grads, i, g):
        grads[i] = g if grads[i] is None else grads[i] + g


def _as_u(ast: ResidualAst, bindings, n_points: int) -> np.ndarray:
    refs = referenced(ast)
    n_funcs = max((k for k, _ in refs), default=-1) + 1
    if isinstance(bindings, np.ndarray):
        u = np.asarray(bindings, dtype=float)
        if u.ndim == 2:
            u = u[:, :, None]
        if u.shape[0] < n_funcs or u.shape[1] < 3:
            raise LogicError("bindings array does not cover every referenced function")
        return np.broadcast_to(u, u.shape[:2] + (n_points,)) if u.shape[2] == 1 else u
    u = np.full((n_funcs, 3, n_points), np.nan)
    for k, order in refs:
        try:
            entry = bindings[k]
            value = entry[order]
        except (KeyError, IndexError, TypeError):
            raise LogicError(f"no binding for function {k} derivative order {order}") from None
        if value is None:
            raise LogicError(f"no binding for function {k} derivative order {order}")
        u[k, order] = value
    return u


def eval_ast(ast: ResidualAst, bindings, x) -> np.ndarray | float:
    """Evaluate the residual.

    ``bindings`` maps function index -> (f, df/dx, d2f/dx2) (entries may be
    None when unused), or is an array (K, 3[, M]). ``x`` is a scalar or array.
    """
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    u = _as_u(ast, bindings, xa.size)
    tape = _Tape(xa, u)
    out = tape.entries[tape.run(ast)][1]
    out = np.broadcast_to(out, xa.shape)
    return float(out[0]) if scalar else np.array(out)


def eval_with_partials(ast: ResidualAst, x, u: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Residual values on the points and dF/du in the layout of ``u`` (K, 3, M)."""
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    u = np.asarray(u, dtype=float)
    tape = _Tape(xa, u)
    root = tape.run(ast)
    val = np.broadcast_to(tape.entries[root][1], xa.shape).copy()
    return val, tape.backward(root)


def eval_x_only(ast: ResidualAst, x) -> np.ndarray | float:
    """Evaluate an expression of x alone (auxiliaries, right-hand sides)."""
    return eval_ast(ast, np.zeros((0, 3)), x)
