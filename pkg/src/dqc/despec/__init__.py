"""Problem definitions: residual expressions, grids, anchors."""
from .ast import (
    Binary,
    Constant,
    Derivative,
    Function,
    ResidualAst,
    Unary,
    VariableX,
    referenced,
    to_text,
)
from .evaluate import eval_ast, eval_with_partials, eval_x_only
from .grid import ChebyshevNodes, Equidistant, GridSpec, RandomUniform, dense_grid, make_grid
from .parser import DerivativeOrderError, ParseError, UnknownIdentifierError, parse_residual
from .problem import Anchor, ProblemSpec, RegPoint

__all__ = [
    "Anchor", "Binary", "ChebyshevNodes", "Constant", "Derivative", "DerivativeOrderError",
    "Equidistant", "Function", "GridSpec", "ParseError", "ProblemSpec", "RandomUniform",
    "RegPoint", "ResidualAst", "Unary", "UnknownIdentifierError", "VariableX", "dense_grid",
    "eval_ast", "eval_with_partials", "eval_x_only", "make_grid", "parse_residual",
    "referenced", "to_text",
]
