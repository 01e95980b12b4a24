"""Variational circuits: hardware-efficient and alternating-blocks layouts."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ConfigurationError
from .statevector import CNOT, StateVector, cnot, rotate

SLOTS = ("Z", "X", "Z")


@dataclass(frozen=True)
class HardwareEfficient:
    depth: int


@dataclass(frozen=True)
class AlternatingBlocks:
    block_width: int
    block_depth: int
    n_layers: int


AnsatzSpec = Union[HardwareEfficient, AlternatingBlocks]


@dataclass(frozen=True)
class ParamRotation:
    axis: str
    qubit: int
    index: int


@dataclass(frozen=True)
class AnsatzTemplate:
    n_qubits: int
    ops: tuple
    n_params: int
    # theta index -> (layer, qubit, slot)
    layout: tuple[tuple[int, int, int], ...]

    @property
    def rotations(self) -> list[ParamRotation]:
        return [op for op in self.ops if isinstance(op, ParamRotation)]


class _Builder:
    def __init__(self, n):
        self.n = n
        self.ops = []
        self.layout = []

    def hea_block(self, qubits, depth, layer):
        for _ in range(depth):
            for q in qubits:
                for slot, axis in enumerate(SLOTS):
                    self.ops.append(ParamRotation(axis, q, len(self.layout)))
                    self.layout.append((layer, q, slot))
            for a, b in zip(qubits[:-1], qubits[1:]):
                self.ops.append(CNOT(a, b))
            layer += 1
        return layer

    def build(self):
        return AnsatzTemplate(self.n, tuple(self.ops), len(self.layout), tuple(self.layout))


def _aba_blocks(n: int, width: int, shifted: bool) -> list[list[int]]:
    start = width // 2 if shifted else 0
    blocks = []
    if start:
        blocks.append(list(range(0, start)))
    q = start
    while q < n:
        blocks.append(list(range(q, min(q + width, n))))
        q += width
    return blocks


def build_ansatz(spec: AnsatzSpec, n_qubits: int) -> AnsatzTemplate:
    if n_qubits < 1:
        raise ConfigurationError("ansatz needs at least one qubit")
    b = _Builder(n_qubits)
    if isinstance(spec, HardwareEfficient):
        # depth 0 is the identity circuit
        if spec.depth < 0:
            raise ConfigurationError(f"HEA depth must be >= 0, got {spec.depth}")
        b.hea_block(list(range(n_qubits)), spec.depth, 0)
    elif isinstance(spec, AlternatingBlocks):
        if spec.n_layers < 1 or spec.block_depth < 1:
            raise ConfigurationError("ABA needs n_layers >= 1 and block_depth >= 1")
        if not 2 <= spec.block_width <= n_qubits:
            raise ConfigurationError(
                f"ABA block width {spec.block_width} must lie in [2, {n_qubits}]"
            )
        layer = 0
        for lay in range(spec.n_layers):
            base = layer
            for block in _aba_blocks(n_qubits, spec.block_width, shifted=bool(lay % 2)):
                layer = b.hea_block(block, spec.block_depth, base)
    else:
        raise ConfigurationError(f"unknown ansatz {spec!r}")
    return b.build()


def init_theta(template: AnsatzTemplate, rng: np.random.Generator) -> np.ndarray:
    return rng.uniform(0.0, 2.0 * math.pi, size=template.n_params)


def _check_theta(template, theta):
    theta = np.asarray(theta, dtype=float)
    if theta.shape[-1] != template.n_params:
        raise ConfigurationError(
            f"theta has {theta.shape[-1]} entries, template needs {template.n_params}"
        )
    return theta


def run_template(arr: np.ndarray, template: AnsatzTemplate, theta) -> np.ndarray:
    """Apply the ansatz in place to a batch ``(..., 2^N)``.

    ``theta`` is shape (P,) or (..., P) with one parameter row per state.
    """
    theta = _check_theta(template, theta)
    n = template.n_qubits
    for op in template.ops:
        if isinstance(op, ParamRotation):
            rotate(arr, n, op.axis, op.qubit, theta[..., op.index])
        else:
            cnot(arr, n, op.control, op.target)
    return arr


def apply_ansatz(state: StateVector, template: AnsatzTemplate, theta) -> StateVector:
    if state.n_qubits != template.n_qubits:
        raise ConfigurationError("state and template sizes differ")
    theta = _check_theta(template, theta)
    if theta.ndim != 1:
        raise ConfigurationError("apply_ansatz takes a single parameter vector")
    run_template(state.amplitudes, template, theta)
    return state
