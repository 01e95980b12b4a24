"""Quantum feature maps: x -> encoding rotations, with analytic chain-rule factors."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import ConfigurationError, DomainError, LogicError
from .observables import Observable, SingleZ, build_cost
from .statevector import (
    HamiltonianEvolution,
    expectation,
    new_zero_state,
    apply_rotation,
    rotate,
    zero_states,
    evolve_array,
)

# Chebyshev-type maps reject |x| >= 1 - DOMAIN_EPS, where d(phi)/dx blows up.
DOMAIN_EPS = 1e-9


def chebyshev_T(n: int, x: float) -> float:
    """First-kind Chebyshev polynomial by the three-term recursion."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    t_prev, t = 1.0, x
    if n == 0:
        return t_prev
    for _ in range(n - 1):
        t_prev, t = t, 2.0 * x * t - t_prev
    return t


def chebyshev_U(n: int, x: float) -> float:
    """Second-kind Chebyshev polynomial by the three-term recursion."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    u_prev, u = 1.0, 2.0 * x
    if n == 0:
        return u_prev
    for _ in range(n - 1):
        u_prev, u = u, 2.0 * x * u - u_prev
    return u


# -- angle functions ---------------------------------------------------------
# Each returns (phi, dphi/dx, d2phi/dx2) for a scale factor k.


def _arcsin(x: float, k: float):
    r = 1.0 - x * x
    if r <= 0.0:
        return k * math.asin(max(-1.0, min(1.0, x))), math.inf, math.copysign(math.inf, x)
    return k * math.asin(x), k / math.sqrt(r), k * x / r ** 1.5


def _arccos(x: float, k: float):
    r = 1.0 - x * x
    if r <= 0.0:
        return k * math.acos(max(-1.0, min(1.0, x))), -math.inf, -math.copysign(math.inf, x)
    return k * math.acos(x), -k / math.sqrt(r), -k * x / r ** 1.5


NONLINEARITIES: dict[str, tuple[Callable, float]] = {
    "arcsin": (_arcsin, 1.0),
    "arccos": (_arccos, 1.0),
    "2arccos": (_arccos, 2.0),
}


# -- specifications ------------------------------------------------------------


@dataclass(frozen=True)
class ProductArcsin:
    qubits: int


@dataclass(frozen=True)
class ChebyshevSparse:
    qubits: int


@dataclass(frozen=True)
class ChebyshevTower:
    qubits: int


@dataclass(frozen=True)
class Layer:
    qubits: tuple[int, ...]
    nonlinearity: str = "arcsin"
    scale: float = 1.0


@dataclass(frozen=True)
class LayeredProduct:
    layers: tuple[Layer, ...]


@dataclass(frozen=True)
class EvolutionEnhanced:
    """Base map followed by exp(-i H tau).

    ``tau`` may be a callable of x; such maps evaluate but cannot be
    differentiated in x by shifting rotations.
    """

    base: "FeatureMapSpec"
    hamiltonian: Observable
    tau: Union[float, Callable[[float], float]] = 2.0


FeatureMapSpec = Union[ProductArcsin, ChebyshevSparse, ChebyshevTower, LayeredProduct, EvolutionEnhanced]


@dataclass(frozen=True)
class EncodingGate:
    qubit: int
    axis: str
    angle: float
    dphi_dx: float
    d2phi_dx2: float


def _layers(spec: FeatureMapSpec) -> list[Layer]:
    if isinstance(spec, ProductArcsin):
        return [Layer(tuple(range(spec.qubits)), "arcsin")]
    if isinstance(spec, ChebyshevSparse):
        return [Layer(tuple(range(spec.qubits)), "2arccos")]
    if isinstance(spec, ChebyshevTower):
        # degree n[j] = j, 1-based
        return [Layer((q,), "2arccos", float(q + 1)) for q in range(spec.qubits)]
    if isinstance(spec, LayeredProduct):
        return list(spec.layers)
    if isinstance(spec, EvolutionEnhanced):
        return _layers(spec.base)
    raise ConfigurationError(f"unknown feature map {spec!r}")


def map_name(spec: FeatureMapSpec) -> str:
    return type(spec).__name__


def domain(spec: FeatureMapSpec) -> tuple[float, float, bool]:
    """(lo, hi, strict) admissible interval for x."""
    strict = any(layer.nonlinearity != "arcsin" for layer in _layers(spec))
    return -1.0, 1.0, strict


def check_domain(spec: FeatureMapSpec, x: float) -> None:
    if not math.isfinite(x):
        raise DomainError(f"{map_name(spec)}: x={x!r} is not finite")
    lo, hi, strict = domain(spec)
    if strict:
        if abs(x) >= 1.0 - DOMAIN_EPS:
            raise DomainError(
                f"{map_name(spec)}: x={x!r} outside admissible interval "
                f"(-{1 - DOMAIN_EPS}, {1 - DOMAIN_EPS})"
            )
    elif not lo <= x <= hi:
        raise DomainError(f"{map_name(spec)}: x={x!r} outside admissible interval [-1, 1]")


def in_domain(spec: FeatureMapSpec, x: float) -> bool:
    try:
        check_domain(spec, x)
    except DomainError:
        return False
    return True


def n_encoding_gates(spec: FeatureMapSpec) -> int:
    return sum(len(layer.qubits) for layer in _layers(spec))


def max_qubit(spec: FeatureMapSpec) -> int:
    return max((q for layer in _layers(spec) for q in layer.qubits), default=-1)


def encode(spec: FeatureMapSpec, x: float) -> list:
    """Encoding rotations for x, followed by the evolution layer if any."""
    check_domain(spec, x)
    gates: list = []
    for layer in _layers(spec):
        try:
            fn, k0 = NONLINEARITIES[layer.nonlinearity]
        except KeyError:
            raise ConfigurationError(f"unknown nonlinearity {layer.nonlinearity!r}") from None
        phi, d1, d2 = fn(x, k0 * layer.scale)
        for q in layer.qubits:
            gates.append(EncodingGate(q, "Y", phi, d1, d2))
    if isinstance(spec, EvolutionEnhanced):
        tau = spec.tau(x) if callable(spec.tau) else spec.tau
        gates.append(HamiltonianEvolution(spec.hamiltonian, float(tau)))
    return gates


def rotation_gates(spec: FeatureMapSpec, x: float) -> list[EncodingGate]:
    return [g for g in encode(spec, x) if isinstance(g, EncodingGate)]


def has_x_dependent_evolution(spec: FeatureMapSpec) -> bool:
    return isinstance(spec, EvolutionEnhanced) and callable(spec.tau)


def encoded_states(spec: FeatureMapSpec, n_qubits: int, xs: Sequence[float],
                   order: int = 0, tau: float | None = None):
    """Batched encoded states with the parameter shifts needed up to ``order``.

    Returns ``(states, readout)`` where ``states`` has shape (M, S, 2^N) and
    ``readout[r]`` (shape (M, S)) combines the S expectations at each point
    into the r-th x-derivative of <C>:

        d^r<C>/dx^r (x_i) = sum_s readout[r][i, s] * <psi_is|C|psi_is>

    Variant 0 is unshifted; 1..2G are single +-pi/2 shifts; for order 2 the
    4G^2 double shifts follow. ``tau`` overrides a constant evolution time.
    """
    if order and has_x_dependent_evolution(spec):
        raise LogicError("x-dependent evolution time cannot be differentiated by shifting rotations")
    if max_qubit(spec) >= n_qubits:
        raise ConfigurationError(f"feature map addresses qubit {max_qubit(spec)} on {n_qubits} qubits")
    xs = [float(v) for v in xs]
    m = len(xs)
    per_x = [rotation_gates(spec, v) for v in xs]
    g = len(per_x[0]) if per_x else 0
    ang = np.array([[e.angle for e in gates] for gates in per_x]).reshape(m, g)
    d1 = np.array([[e.dphi_dx for e in gates] for gates in per_x]).reshape(m, g)
    d2 = np.array([[e.d2phi_dx2 for e in gates] for gates in per_x]).reshape(m, g)
    qubits = [e.qubit for e in per_x[0]] if per_x else []

    # shift table: (S, G) offsets added to the encoding angles
    h = math.pi / 2
    rows = [np.zeros(g)]
    if order >= 1:
        for j in range(g):
            for sgn in (1.0, -1.0):
                r = np.zeros(g)
                r[j] = sgn * h
                rows.append(r)
    if order >= 2:
        for j in range(g):
            for k in range(g):
                for sj in (1.0, -1.0):
                    for sk in (1.0, -1.0):
                        r = np.zeros(g)
                        r[j] += sj * h
                        r[k] += sk * h
                        rows.append(r)
    shifts = np.array(rows)
    n_var = shifts.shape[0]

    states = zero_states(n_qubits, m * n_var).reshape(m, n_var, 1 << n_qubits)
    for j, q in enumerate(qubits):
        rotate(states, n_qubits, "Y", q, ang[:, j:j + 1] + shifts[None, :, j])
    if isinstance(spec, EvolutionEnhanced):
        t = spec.tau if tau is None else tau
        if callable(t):
            for i, v in enumerate(xs):
                evolve_array(states[i], n_qubits, spec.hamiltonian, float(t(v)))
        else:
            evolve_array(states, n_qubits, spec.hamiltonian, float(t))

    readout = [np.zeros((m, n_var))]
    readout[0][:, 0] = 1.0
    if order >= 1:
        r1 = np.zeros((m, n_var))
        for j in range(g):
            r1[:, 1 + 2 * j] += 0.5 * d1[:, j]
            r1[:, 2 + 2 * j] -= 0.5 * d1[:, j]
        readout.append(r1)
    if order >= 2:
        r2 = np.zeros((m, n_var))
        # first-order part with d2phi/dx2
        for j in range(g):
            r2[:, 1 + 2 * j] += 0.5 * d2[:, j]
            r2[:, 2 + 2 * j] -= 0.5 * d2[:, j]
        base = 1 + 2 * g
        for j in range(g):
            for k in range(g):
                w = 0.25 * d1[:, j] * d1[:, k]
                idx = base + 4 * (j * g + k)
                r2[:, idx + 0] += w   # (+, +)
                r2[:, idx + 1] -= w   # (+, -)
                r2[:, idx + 2] -= w   # (-, +)
                r2[:, idx + 3] += w   # (-, -)
        readout.append(r2)
    return states, readout


def full_basis_check(spec: FeatureMapSpec, x: float) -> float:
    """<Z> of a single-qubit encoded state with no ansatz; equals T_2n(x)."""
    if max_qubit(spec) != 0:
        raise ConfigurationError("full_basis_check needs a single-qubit feature map")
    state = new_zero_state(1)
    for g in encode(spec, x):
        if isinstance(g, EncodingGate):
            apply_rotation(state, g.axis, g.qubit, g.angle)
        else:
            evolve_array(state.amplitudes, 1, g.hamiltonian, g.tau)
    return expectation(state, build_cost(SingleZ(0), 1))


def single_degree_map(n: int) -> LayeredProduct:
    """One qubit carrying R_y(2 n arccos x)."""
    return LayeredProduct((Layer((0,), "2arccos", float(n)),))
