"""Dense statevector simulation.

Amplitude arrays may carry leading batch axes: shape ``(..., 2**n)``. The
kernels act in place on the last axis, so a stack of independent circuits
(e.g. all parameter-shifted copies) advances through one gate per call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Union

import numpy as np

from .errors import ConfigurationError, NumericError
from .observables import Observable

MAX_QUBITS = 12
AXES = ("X", "Y", "Z")


@dataclass(frozen=True)
class Rotation:
    axis: str
    qubit: int
    angle: float


@dataclass(frozen=True)
class CNOT:
    control: int
    target: int


@dataclass(frozen=True)
class HamiltonianEvolution:
    hamiltonian: Observable
    tau: float


Gate = Union[Rotation, CNOT, HamiltonianEvolution]


class StateVector:
    """2^N complex amplitudes, qubit j on bit j of the basis index."""

    __slots__ = ("n_qubits", "amplitudes")

    def __init__(self, amplitudes, n_qubits: int | None = None):
        amps = np.ascontiguousarray(amplitudes, dtype=complex)
        if amps.ndim != 1:
            raise ConfigurationError("amplitudes must be one-dimensional")
        n = int(round(math.log2(amps.size))) if amps.size else -1
        if n_qubits is None:
            n_qubits = n
        if amps.size != 1 << n_qubits:
            raise ConfigurationError(f"{amps.size} amplitudes do not match {n_qubits} qubits")
        _check_n(n_qubits)
        self.n_qubits = n_qubits
        self.amplitudes = amps

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.n_qubits)

    def norm(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def __len__(self):
        return self.amplitudes.size

    def __repr__(self):
        return f"StateVector(n_qubits={self.n_qubits})"


def _check_n(n_qubits: int) -> None:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigurationError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")


def _check_qubit(q: int, n: int) -> None:
    if not 0 <= q < n:
        raise ConfigurationError(f"qubit index {q} outside {n}-qubit register")


def new_zero_state(n_qubits: int) -> StateVector:
    _check_n(n_qubits)
    amps = np.zeros(1 << n_qubits, dtype=complex)
    amps[0] = 1.0
    return StateVector(amps, n_qubits)


def zero_states(n_qubits: int, batch: int) -> np.ndarray:
    _check_n(n_qubits)
    amps = np.zeros((batch, 1 << n_qubits), dtype=complex)
    amps[:, 0] = 1.0
    return amps


# -- kernels on raw arrays -------------------------------------------------


def _pair_views(arr: np.ndarray, n: int, qubit: int, axis: int):
    """Views (a0, a1) of the amplitude pairs differing in ``qubit``."""
    if not arr.flags.c_contiguous:
        raise ValueError("kernel requires a C-contiguous array")
    shape = arr.shape
    lo = 1 << qubit
    hi = 1 << (n - qubit - 1)
    v = arr.reshape(shape[:axis] + (hi, 2, lo) + shape[axis + 1:])
    pre = (slice(None),) * (axis + 1)
    return v[pre + (0,)], v[pre + (1,)]


def rotate(arr: np.ndarray, n: int, axis: str, qubit: int, angle, dim_axis: int = -1) -> np.ndarray:
    """In-place exp(-i angle/2 P_axis) on ``qubit``.

    ``angle`` is a scalar or an array over the leading batch axes (only when
    the amplitude index is the last axis).
    """
    dim_axis = dim_axis % arr.ndim
    a0, a1 = _pair_views(arr, n, qubit, dim_axis)
    half = np.asarray(angle, dtype=float) * 0.5
    if half.ndim:
        half = half.reshape(half.shape + (1, 1))
    c = np.cos(half)
    s = np.sin(half)
    if axis == "Y":
        t = a0.copy()
        a0 *= c
        a0 -= s * a1
        a1 *= c
        a1 += s * t
    elif axis == "X":
        t = a0.copy()
        a0 *= c
        a0 -= 1j * s * a1
        a1 *= c
        a1 -= 1j * s * t
    elif axis == "Z":
        ph = np.exp(-1j * half)
        a0 *= ph
        a1 *= np.conj(ph)
    else:
        raise ConfigurationError(f"unknown rotation axis {axis!r}")
    return arr


def cnot(arr: np.ndarray, n: int, control: int, target: int, dim_axis: int = -1) -> np.ndarray:
    """In-place CNOT: flips ``target`` where ``control`` is 1."""
    dim_axis = dim_axis % arr.ndim
    if not arr.flags.c_contiguous:
        raise ValueError("kernel requires a C-contiguous array")
    shape = arr.shape
    v = arr.reshape(shape[:dim_axis] + (2,) * n + shape[dim_axis + 1:])
    # bit q lives on tensor axis dim_axis + (n - 1 - q)
    idx10 = [slice(None)] * v.ndim
    idx11 = [slice(None)] * v.ndim
    idx10[dim_axis + n - 1 - control] = 1
    idx11[dim_axis + n - 1 - control] = 1
    idx10[dim_axis + n - 1 - target] = 0
    idx11[dim_axis + n - 1 - target] = 1
    idx10, idx11 = tuple(idx10), tuple(idx11)
    t = v[idx10].copy()
    v[idx10] = v[idx11]
    v[idx11] = t
    return arr


def expectation_array(arr: np.ndarray, n: int, obs: Observable) -> np.ndarray:
    """<psi|obs|psi> for every state in a batch (real part)."""
    obs.check_qubits(n)
    out = np.full(arr.shape[:-1], obs.identity_offset, dtype=float)
    probs = None
    for c, p in obs.terms:
        if p.is_identity:
            out += c * np.einsum("...k,...k->...", arr.conj(), arr).real
            continue
        perm, phase = p.action(n)
        if p.is_diagonal:
            if probs is None:
                probs = (arr.conj() * arr).real
            out += c * (probs @ phase.real)
        else:
            # (P psi)[perm] = phase * psi  ->  <psi|P psi> = sum conj(psi[perm]) phase psi
            val = np.einsum("...k,...k->...", arr[..., perm].conj(), phase * arr)
            out += c * val.real
    return out


@lru_cache(maxsize=64)
def _evolution_unitary(h: Observable, tau: float, n: int) -> np.ndarray:
    mat = h.matrix(n)
    w, v = np.linalg.eigh(mat)
    return (v * np.exp(-1j * tau * w)) @ v.conj().T


def evolution_unitary(h: Observable, tau: float, n: int) -> np.ndarray:
    """exp(-i H tau) from a dense Hermitian eigendecomposition."""
    if not math.isfinite(tau):
        raise NumericError("evolution time must be finite")
    return _evolution_unitary(h, float(tau), n)


def evolve_array(arr: np.ndarray, n: int, h: Observable, tau: float) -> np.ndarray:
    if tau == 0.0:
        return arr
    u = evolution_unitary(h, tau, n)
    arr[...] = arr @ u.T
    return arr


# -- StateVector operations --------------------------------------------------


def apply_rotation(state: StateVector, axis: str, qubit: int, angle: float) -> StateVector:
    _check_qubit(qubit, state.n_qubits)
    if not math.isfinite(angle):
        raise NumericError(f"non-finite rotation angle {angle!r}")
    rotate(state.amplitudes, state.n_qubits, axis.upper(), qubit, angle)
    return state


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    _check_qubit(control, state.n_qubits)
    _check_qubit(target, state.n_qubits)
    if control == target:
        raise ConfigurationError("CNOT control and target must differ")
    cnot(state.amplitudes, state.n_qubits, control, target)
    return state


def apply_pauli_string(state: StateVector, pauli) -> StateVector:
    perm, phase = pauli.action(state.n_qubits)
    out = np.empty_like(state.amplitudes)
    out[perm] = phase * state.amplitudes
    state.amplitudes[:] = out
    return state


def evolve(state: StateVector, h: Observable, tau: float) -> StateVector:
    h.check_qubits(state.n_qubits)
    evolve_array(state.amplitudes, state.n_qubits, h, tau)
    return state


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    if isinstance(gate, Rotation):
        return apply_rotation(state, gate.axis, gate.qubit, gate.angle)
    if isinstance(gate, CNOT):
        return apply_cnot(state, gate.control, gate.target)
    if isinstance(gate, HamiltonianEvolution):
        return evolve(state, gate.hamiltonian, gate.tau)
    raise ConfigurationError(f"unknown gate {gate!r}")


def expectation(state: StateVector, obs: Observable) -> float:
    """sum_l c_l <psi|P_l|psi> + offset; the imaginary residue is discarded."""
    return float(expectation_array(state.amplitudes, state.n_qubits, obs))


# -- operator conjugation (Heisenberg picture) -----------------------------


def conjugate_rotation(op: np.ndarray, n: int, axis: str, qubit: int, angle: float) -> np.ndarray:
    """In place op <- R op R^dagger for R = exp(-i angle/2 P_axis).

    Rows transform by R, columns by conj(R); conj(R_X(a)) = R_X(-a),
    conj(R_Y(a)) = R_Y(a), conj(R_Z(a)) = R_Z(-a).
    """
    rotate(op, n, axis, qubit, angle, dim_axis=0)
    rotate(op, n, axis, qubit, angle if axis == "Y" else -angle, dim_axis=1)
    return op


def conjugate_cnot(op: np.ndarray, n: int, control: int, target: int) -> np.ndarray:
    cnot(op, n, control, target, dim_axis=0)
    cnot(op, n, control, target, dim_axis=1)
    return op
