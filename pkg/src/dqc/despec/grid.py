"""Training grids: equidistant, Chebyshev nodes, or seeded uniform draws.

Every spec takes one interval or a union of disjoint intervals; ``points`` is
the count per interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from ..errors import ConfigurationError

Interval = tuple[float, float]


def _intervals(raw) -> tuple[Interval, ...]:
    if len(raw) == 2 and all(isinstance(v, (int, float)) for v in raw):
        raw = (raw,)
    out = tuple((float(a), float(b)) for a, b in raw)
    if not out:
        raise ConfigurationError("grid needs at least one interval")
    for a, b in out:
        if not (math.isfinite(a) and math.isfinite(b)) or not a < b:
            raise ConfigurationError(f"degenerate grid interval [{a}, {b}]")
    ordered = sorted(out)
    for (a0, b0), (a1, b1) in zip(ordered, ordered[1:]):
        if a1 <= b0:
            raise ConfigurationError(f"grid intervals [{a0}, {b0}] and [{a1}, {b1}] overlap")
    return out


@dataclass(frozen=True)
class Equidistant:
    points: int
    intervals: tuple = ((0.0, 0.9),)
    # interior points only: a + i (b - a) / (points + 1), i = 1..points
    open: bool = False

    def __post_init__(self):
        object.__setattr__(self, "intervals", _intervals(self.intervals))


@dataclass(frozen=True)
class ChebyshevNodes:
    points: int
    intervals: tuple = ((-1.0, 1.0),)

    def __post_init__(self):
        object.__setattr__(self, "intervals", _intervals(self.intervals))


@dataclass(frozen=True)
class RandomUniform:
    points: int
    intervals: tuple = ((0.0, 0.9),)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "intervals", _intervals(self.intervals))


GridSpec = Union[Equidistant, ChebyshevNodes, RandomUniform]


def make_grid(spec: GridSpec) -> np.ndarray:
    m = spec.points
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise ConfigurationError(f"grid needs at least one point, got {m!r}")
    parts = []
    rng = np.random.default_rng(spec.seed) if isinstance(spec, RandomUniform) else None
    for a, b in spec.intervals:
        if isinstance(spec, Equidistant) and spec.open:
            pts = a + np.arange(1, m + 1) * (b - a) / (m + 1)
        elif isinstance(spec, Equidistant):
            pts = np.array([a]) if m == 1 else a + np.arange(m) * (b - a) / (m - 1)
            pts[-1] = b if m > 1 else pts[-1]
        elif isinstance(spec, ChebyshevNodes):
            k = np.arange(1, m + 1)
            c = np.cos((2 * k - 1) * math.pi / (2 * m))
            pts = a + (b - a) * (1 + c) / 2
        elif isinstance(spec, RandomUniform):
            pts = rng.uniform(a, b, size=m)
        else:
            raise ConfigurationError(f"unknown grid spec {spec!r}")
        parts.append(pts)
    return np.sort(np.concatenate(parts))


def dense_grid(spec: GridSpec, factor: int = 4) -> np.ndarray:
    """Validation grid with ``factor`` times the points, same kind and intervals."""
    if isinstance(spec, RandomUniform):
        return make_grid(RandomUniform(spec.points * factor, spec.intervals, spec.seed + 1))
    if isinstance(spec, Equidistant):
        return make_grid(Equidistant(spec.points * factor, spec.intervals, spec.open))
    return make_grid(type(spec)(spec.points * factor, spec.intervals))
