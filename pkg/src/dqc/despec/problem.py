"""Differential-equation problems: residuals, anchors, regularization, grid."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from ..errors import ConfigurationError
from .ast import ResidualAst, referenced, to_text
from .grid import GridSpec, make_grid
from .parser import parse_auxiliaries, parse_residual


@dataclass(frozen=True)
class Anchor:
    """Boundary (or initial) value u_k(x0) = u0."""

    k: int
    x0: float
    u0: float


@dataclass(frozen=True)
class RegPoint:
    k: int
    x: float
    u: float


@dataclass(frozen=True)
class ProblemSpec:
    functions: tuple[str, ...]
    residuals: tuple[ResidualAst, ...]
    boundary: tuple[Anchor, ...]
    grid: GridSpec
    regularization: tuple[RegPoint, ...] = ()
    domain: tuple[float, float] = (0.0, 1.0)
    texts: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        if not self.residuals:
            raise ConfigurationError("problem needs at least one residual")
        k_funcs = len(self.functions)
        used = set()
        for r in self.residuals:
            for k, _ in referenced(r):
                if k >= k_funcs:
                    raise ConfigurationError(f"residual references function index {k} of {k_funcs}")
                used.add(k)
        missing = [self.functions[k] for k in range(k_funcs) if k not in used]
        if missing:
            raise ConfigurationError(f"functions {missing} appear in no residual")
        lo, hi = self.domain
        if not lo < hi:
            raise ConfigurationError(f"degenerate domain {self.domain}")
        pts = make_grid(self.grid)
        if pts.min() < lo or pts.max() > hi:
            raise ConfigurationError(f"grid points leave the domain [{lo}, {hi}]")
        for a in self.boundary:
            if not 0 <= a.k < k_funcs:
                raise ConfigurationError(f"boundary anchor for unknown function {a.k}")
        for r in self.regularization:
            if not 0 <= r.k < k_funcs:
                raise ConfigurationError(f"regularization point for unknown function {r.k}")

    @property
    def n_functions(self) -> int:
        return len(self.functions)

    def points(self) -> np.ndarray:
        return make_grid(self.grid)

    def max_order(self, k: Optional[int] = None) -> int:
        orders = [o for r in self.residuals for kk, o in referenced(r) if k is None or kk == k]
        return max(orders, default=0)

    def anchors_for(self, k: int) -> list[Anchor]:
        return [a for a in self.boundary if a.k == k]

    def reg_for(self, k: int) -> list[RegPoint]:
        return [r for r in self.regularization if r.k == k]

    def residual_texts(self) -> list[str]:
        return [to_text(r, self.functions) for r in self.residuals]

    @classmethod
    def from_text(cls, functions: Sequence[str], residuals: Sequence[str], *, boundary=(),
                  grid: GridSpec, regularization=(), domain=(0.0, 1.0),
                  auxiliaries: Optional[Mapping[str, str]] = None) -> "ProblemSpec":
        """Build from residual strings; ``boundary`` items are (k or name, x0, u0)."""
        names = tuple(functions)
        aux = parse_auxiliaries(auxiliaries, names)
        asts = tuple(parse_residual(t, names, aux) for t in residuals)

        def index(k):
            if isinstance(k, str):
                if k not in names:
                    raise ConfigurationError(f"unknown function {k!r}")
                return names.index(k)
            return int(k)

        anchors = tuple(Anchor(index(k), float(x0), float(u0)) for k, x0, u0 in boundary)
        regs = tuple(RegPoint(index(k), float(x), float(u)) for k, x, u in regularization)
        return cls(names, asts, anchors, grid, regs, tuple(float(v) for v in domain), tuple(residuals))
