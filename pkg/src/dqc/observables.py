"""Weighted Pauli-string observables: cost operators and evolution Hamiltonians.

Qubit ``j`` addresses bit ``j`` of the basis-state index (little-endian).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

from .errors import ConfigurationError

_AXES = ("X", "Y", "Z")


def _popcount(a: np.ndarray) -> np.ndarray:
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(a).astype(np.int64)
    out = np.zeros_like(a)
    a = a.copy()
    while np.any(a):
        out += a & 1
        a >>= 1
    return out


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis; identity on unlisted qubits."""

    factors: tuple[tuple[int, str], ...] = ()

    def __post_init__(self):
        seen = set()
        norm = []
        for q, a in self.factors:
            a = a.upper()
            if a not in _AXES:
                raise ConfigurationError(f"unknown Pauli axis {a!r}")
            if q < 0:
                raise ConfigurationError(f"negative qubit index {q}")
            if q in seen:
                raise ConfigurationError(f"qubit {q} appears twice in Pauli string")
            seen.add(q)
            norm.append((int(q), a))
        object.__setattr__(self, "factors", tuple(sorted(norm)))

    @classmethod
    def from_dict(cls, mapping: Mapping[int, str]) -> "PauliString":
        return cls(tuple(mapping.items()))

    @property
    def is_identity(self) -> bool:
        return not self.factors

    @property
    def max_qubit(self) -> int:
        return max((q for q, _ in self.factors), default=-1)

    @property
    def is_diagonal(self) -> bool:
        return all(a == "Z" for _, a in self.factors)

    def masks(self) -> tuple[int, int, int]:
        """(x_mask, z_mask, n_y): P|k> = i^n_y (-1)^popcount(k & z_mask) |k ^ x_mask>."""
        x_mask = z_mask = n_y = 0
        for q, a in self.factors:
            if a in ("X", "Y"):
                x_mask |= 1 << q
            if a in ("Y", "Z"):
                z_mask |= 1 << q
            if a == "Y":
                n_y += 1
        return x_mask, z_mask, n_y

    def action(self, n_qubits: int) -> tuple[np.ndarray, np.ndarray]:
        """Permutation and phases such that (P psi)[perm] = phase * psi."""
        if self.max_qubit >= n_qubits:
            raise ConfigurationError(
                f"Pauli string acts on qubit {self.max_qubit} but register has {n_qubits}"
            )
        x_mask, z_mask, n_y = self.masks()
        k = np.arange(1 << n_qubits, dtype=np.int64)
        sign = 1 - 2 * (_popcount(k & z_mask) & 1)
        phase = (1j) ** n_y * sign
        return k ^ x_mask, phase.astype(complex)

    def __str__(self) -> str:
        if not self.factors:
            return "I"
        return " ".join(f"{a}{q}" for q, a in self.factors)


@dataclass(frozen=True)
class Observable:
    """sum_l c_l P_l + identity_offset * 1, with real c_l."""

    terms: tuple[tuple[float, PauliString], ...] = ()
    identity_offset: float = 0.0

    def __post_init__(self):
        terms = []
        for c, p in self.terms:
            c = float(c)
            if not math.isfinite(c):
                raise ConfigurationError("observable coefficients must be finite")
            if not isinstance(p, PauliString):
                p = PauliString(tuple(p))
            terms.append((c, p))
        if not math.isfinite(self.identity_offset):
            raise ConfigurationError("identity offset must be finite")
        object.__setattr__(self, "terms", tuple(terms))
        object.__setattr__(self, "identity_offset", float(self.identity_offset))

    @property
    def max_qubit(self) -> int:
        return max((p.max_qubit for _, p in self.terms), default=-1)

    @property
    def is_diagonal(self) -> bool:
        return all(p.is_diagonal for _, p in self.terms)

    def check_qubits(self, n_qubits: int) -> None:
        if self.max_qubit >= n_qubits:
            raise ConfigurationError(
                f"observable addresses qubit {self.max_qubit} on a {n_qubits}-qubit register"
            )

    def __add__(self, other: "Observable") -> "Observable":
        return Observable(self.terms + other.terms, self.identity_offset + other.identity_offset)

    def scaled(self, factor: float) -> "Observable":
        return Observable(tuple((factor * c, p) for c, p in self.terms), factor * self.identity_offset)

    def with_offset(self, offset: float) -> "Observable":
        return Observable(self.terms, offset)

    def matrix(self, n_qubits: int, include_offset: bool = True) -> np.ndarray:
        """Dense 2^N x 2^N matrix."""
        self.check_qubits(n_qubits)
        dim = 1 << n_qubits
        mat = np.zeros((dim, dim), dtype=complex)
        cols = np.arange(dim)
        for c, p in self.terms:
            perm, phase = p.action(n_qubits)
            mat[perm, cols] += c * phase
        if include_offset:
            mat[cols, cols] += self.identity_offset
        return mat

    def diagonal(self, n_qubits: int, include_offset: bool = True) -> np.ndarray:
        if not self.is_diagonal:
            raise ConfigurationError("observable has off-diagonal terms")
        self.check_qubits(n_qubits)
        diag = np.full(1 << n_qubits, self.identity_offset if include_offset else 0.0)
        for c, p in self.terms:
            _, phase = p.action(n_qubits)
            diag += c * phase.real
        return diag

    def __str__(self) -> str:
        parts = [f"{c:+g}*{p}" for c, p in self.terms]
        if self.identity_offset or not parts:
            parts.append(f"{self.identity_offset:+g}*I")
        return " ".join(parts)


IDENTITY = Observable((), 1.0)


def z(q: int) -> PauliString:
    return PauliString(((q, "Z"),))


def x(q: int) -> PauliString:
    return PauliString(((q, "X"),))


def zz(i: int, j: int) -> PauliString:
    return PauliString(((i, "Z"), (j, "Z")))


# -- cost specifications ---------------------------------------------------


@dataclass(frozen=True)
class SingleZ:
    qubit: int = 0


@dataclass(frozen=True)
class TotalZ:
    pass


@dataclass(frozen=True)
class IsingChain:
    J: tuple[float, ...]
    h_z: tuple[float, ...]
    h_x: tuple[float, ...]


@dataclass(frozen=True)
class SpinGlass:
    J: Mapping[tuple[int, int], float]
    h_z: tuple[float, ...]

    def __hash__(self):
        return hash((tuple(sorted(self.J.items())), tuple(self.h_z)))


@dataclass(frozen=True)
class WeightedSum:
    specs: tuple["CostSpec", ...]
    weights: tuple[float, ...]
    trainable: bool = False


CostSpec = Union[SingleZ, TotalZ, IsingChain, SpinGlass, WeightedSum]


def _need(seq: Sequence[float], n: int, what: str) -> None:
    if len(seq) != n:
        raise ConfigurationError(f"{what} has {len(seq)} entries, expected {n}")


def build_cost(spec: CostSpec, n_qubits: int) -> Observable:
    """Materialize a cost specification as an Observable on ``n_qubits``."""
    if isinstance(spec, SingleZ):
        if not 0 <= spec.qubit < n_qubits:
            raise ConfigurationError(f"SingleZ qubit {spec.qubit} outside {n_qubits}-qubit register")
        return Observable(((1.0, z(spec.qubit)),))
    if isinstance(spec, TotalZ):
        return Observable(tuple((1.0, z(q)) for q in range(n_qubits)))
    if isinstance(spec, IsingChain):
        _need(spec.J, n_qubits - 1, "Ising J")
        _need(spec.h_z, n_qubits, "Ising h_z")
        _need(spec.h_x, n_qubits, "Ising h_x")
        terms = [(j, zz(q, q + 1)) for q, j in enumerate(spec.J)]
        terms += [(h, z(q)) for q, h in enumerate(spec.h_z)]
        terms += [(h, x(q)) for q, h in enumerate(spec.h_x)]
        return Observable(tuple(terms))
    if isinstance(spec, SpinGlass):
        _need(spec.h_z, n_qubits, "spin-glass h_z")
        terms = []
        for (i, j), c in sorted(spec.J.items()):
            if not i < j:
                raise ConfigurationError(f"spin-glass pair ({i}, {j}) must satisfy i < j")
            if j >= n_qubits:
                raise ConfigurationError(f"spin-glass pair ({i}, {j}) outside register")
            terms.append((c, zz(i, j)))
        terms += [(h, z(q)) for q, h in enumerate(spec.h_z)]
        return Observable(tuple(terms))
    if isinstance(spec, WeightedSum):
        parts = cost_components(spec, n_qubits)
        out = Observable()
        for w, obs in zip(spec.weights, parts):
            out = out + obs.scaled(w)
        return out
    raise ConfigurationError(f"unknown cost spec {spec!r}")


def cost_components(spec: CostSpec, n_qubits: int) -> list[Observable]:
    """Sub-observables C_l of a weighted sum (a single entry otherwise)."""
    if isinstance(spec, WeightedSum):
        if len(spec.specs) != len(spec.weights):
            raise ConfigurationError("weighted sum needs one weight per sub-cost")
        if not spec.specs:
            raise ConfigurationError("weighted sum is empty")
        return [build_cost(s, n_qubits) for s in spec.specs]
    return [build_cost(spec, n_qubits)]


def random_ising(n_qubits: int, seed: int, homogeneous: bool = True) -> Observable:
    """H = -sum_j J_j Z_j Z_{j+1} + sum_j h_j X_j with J, h ~ Uniform(0, 1].

    By default a single J and a single h are drawn for the whole chain;
    ``homogeneous=False`` draws one J per bond and one h per site.
    """
    rng = np.random.default_rng(seed)
    n_bonds = max(n_qubits - 1, 0)
    if homogeneous:
        j, h = 1.0 - rng.random(2)
        J = np.full(n_bonds, j)
        hx = np.full(n_qubits, h)
    else:
        J = 1.0 - rng.random(n_bonds)
        hx = 1.0 - rng.random(n_qubits)
    terms = [(-float(c), zz(q, q + 1)) for q, c in enumerate(J)]
    terms += [(float(c), x(q)) for q, c in enumerate(hx)]
    return Observable(tuple(terms))
