"""Differentiable quantum functions f(x) = shift + <psi(x)|U(theta)^dag C U(theta)|psi(x)>.

Derivatives in x come from shifting the encoding rotations by +-pi/2 and
weighting the differences with the feature-map chain factors; derivatives in
theta shift the ansatz rotations the same way. Two routes compute them:

* the per-point functions (``evaluate_f``, ``evaluate_dfdx``, ``grad_theta``,
  ...) simulate every shifted circuit as its own statevector;
* :class:`Evaluator`, used by the trainer, aggregates the same shifted
  expectations by linearity: a loss gradient is a weighted sum of shifted
  expectations, i.e. Tr(G U^dag C U) for a fixed Hermitian G, so each
  parameter shift is evaluated once on the propagated operators instead of
  once per grid point.

A finite-difference backend (``backend="fd"``) exists solely for cross-checks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from . import featuremap as fmap
from .ansatz import AnsatzSpec, AnsatzTemplate, ParamRotation, build_ansatz, init_theta, run_template
from .errors import ConfigurationError, LogicError
from .observables import CostSpec, Observable, WeightedSum, cost_components
from .statevector import conjugate_cnot, conjugate_rotation, expectation_array

HALF_PI = math.pi / 2
BACKENDS = ("shift", "fd")


@dataclass(frozen=True)
class Pinned:
    x0: float
    u0: float


@dataclass(frozen=True)
class Floating:
    x0: float
    u0: float


@dataclass(frozen=True)
class Optimized:
    x0: float
    u0: float
    f_c: float = 0.0


BoundaryMode = Union[Pinned, Floating, Optimized]


@dataclass
class ModelEvaluation:
    f: float
    dfdx: float
    d2fdx2: Optional[float]
    circuit_evaluations: int


@dataclass(frozen=True)
class QuantumModel:
    n_qubits: int
    feature_map: fmap.FeatureMapSpec
    template: AnsatzTemplate
    components: tuple[Observable, ...]
    weights: tuple[float, ...]
    boundary: BoundaryMode
    trainable_weights: bool = False
    offset: float = 0.0  # identity term alpha_0 (pinned calibration)
    function_id: int = 0
    register: int = 0

    @property
    def cost(self) -> Observable:
        out = Observable()
        for w, obs in zip(self.weights, self.components):
            out = out + obs.scaled(w)
        return out.with_offset(out.identity_offset + self.offset)

    @property
    def n_params(self) -> int:
        return self.template.n_params

    @property
    def n_encoding(self) -> int:
        return fmap.n_encoding_gates(self.feature_map)


def _readout_observable(model: QuantumModel, weights=None) -> Observable:
    w = model.weights if weights is None else weights
    out = Observable()
    for wl, obs in zip(w, model.components):
        out = out + obs.scaled(float(wl))
    return out


def build_model(n_qubits: int, feature_map: fmap.FeatureMapSpec, ansatz: AnsatzSpec | AnsatzTemplate,
                cost: CostSpec | Observable, boundary: BoundaryMode, *, function_id: int = 0,
                register: Optional[int] = None, seed: int = 0, validate: bool = True) -> QuantumModel:
    """Assemble a model; pinned models get alpha_0 calibrated at x0.

    ``validate`` checks that at least one ansatz generator fails to commute
    with the cost (some theta has a nonzero gradient on a random state).
    """
    if fmap.max_qubit(feature_map) >= n_qubits:
        raise ConfigurationError("feature map addresses more qubits than the register has")
    template = ansatz if isinstance(ansatz, AnsatzTemplate) else build_ansatz(ansatz, n_qubits)
    if template.n_qubits != n_qubits:
        raise ConfigurationError("ansatz template size differs from register size")
    if isinstance(cost, Observable):
        comps, weights, trainable = [cost], (1.0,), False
    else:
        comps = cost_components(cost, n_qubits)
        if isinstance(cost, WeightedSum):
            weights, trainable = tuple(float(w) for w in cost.weights), cost.trainable
        else:
            weights, trainable = (1.0,), False
    for c in comps:
        c.check_qubits(n_qubits)
    model = QuantumModel(n_qubits, feature_map, template, tuple(comps), weights, boundary,
                         trainable, 0.0, function_id, function_id if register is None else register)
    if validate and template.n_params:
        _check_generators(model, seed)
    if isinstance(boundary, Pinned):
        model = replace(model, offset=_calibrate_offset(model, boundary, seed))
    return model


def _check_generators(model: QuantumModel, seed: int) -> None:
    rng = np.random.default_rng(seed + 7919)
    dim = 1 << model.n_qubits
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    psi /= np.linalg.norm(psi)
    theta = init_theta(model.template, rng)
    ops = [c.matrix(model.n_qubits) for c in model.components]
    mat = sum(w * o for w, o in zip(model.weights, ops))
    g = np.outer(psi, psi.conj())
    grad = _shift_sweep(model.template, theta, g, _heisenberg(model.template, theta, mat))
    if not np.any(np.abs(grad) > 1e-10):
        raise ConfigurationError(
            "cost operator commutes with every ansatz generator: no theta changes f"
        )


def _calibrate_offset(model: QuantumModel, boundary: Pinned, seed: int, draws: int = 16) -> float:
    rng = np.random.default_rng(seed + 104729)
    thetas = np.stack([init_theta(model.template, rng) for _ in range(draws)])
    states, _ = fmap.encoded_states(model.feature_map, model.n_qubits, [boundary.x0], 0)
    arr = np.repeat(states[0], draws, axis=0)
    run_template(arr, model.template, thetas)
    vals = expectation_array(arr, model.n_qubits, _readout_observable(model))
    return float(boundary.u0 - vals.mean())


def initial_shift(model: QuantumModel, theta, weights=None) -> float:
    """The additive constant f carries under the model's boundary mode."""
    b = model.boundary
    if isinstance(b, Floating):
        return update_floating_shift(model, theta, weights)
    if isinstance(b, Optimized):
        return float(b.f_c)
    return float(model.offset)


# -- per-point circuit route ---------------------------------------------------


def _theta_rows(theta: np.ndarray) -> np.ndarray:
    p = theta.size
    rows = np.repeat(theta[None, :], 1 + 2 * p, axis=0)
    idx = np.arange(p)
    rows[1 + 2 * idx, idx] += HALF_PI
    rows[2 + 2 * idx, idx] -= HALF_PI
    return rows


def _run_circuits(model: QuantumModel, theta, x: float, order: int, shift_theta: bool, weights=None):
    """Expectations of every shifted circuit at x.

    Returns (e, readout, count); e has shape (S,) or (S, 1 + 2P).
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.n_params,):
        raise ConfigurationError(f"theta has shape {theta.shape}, model needs ({model.n_params},)")
    states, readout = fmap.encoded_states(model.feature_map, model.n_qubits, [x], order)
    arr = states[0]
    if shift_theta:
        rows = _theta_rows(theta)
        arr = np.ascontiguousarray(np.repeat(arr[:, None, :], rows.shape[0], axis=1))
        run_template(arr, model.template, rows)
    else:
        run_template(arr, model.template, theta)
    e = expectation_array(arr, model.n_qubits, _readout_observable(model, weights))
    return e, [r[0] for r in readout], int(np.prod(e.shape))


def _check_backend(backend: str) -> None:
    if backend not in BACKENDS:
        raise ConfigurationError(f"unknown backend {backend!r}; choose from {BACKENDS}")


def evaluate_f(model: QuantumModel, theta, x: float, shift: Optional[float] = None, *, weights=None) -> float:
    """shift + <C>(x); ``shift=None`` uses the boundary mode's own constant."""
    e, _, _ = _run_circuits(model, theta, x, 0, False, weights)
    if shift is None:
        shift = initial_shift(model, theta, weights)
    return float(shift + e[0])


def evaluate_dfdx(model: QuantumModel, theta, x: float, *, weights=None, backend: str = "shift",
                  h: float = 1e-6) -> float:
    _check_backend(backend)
    if backend == "fd":
        return (evaluate_f(model, theta, x + h, 0.0, weights=weights)
                - evaluate_f(model, theta, x - h, 0.0, weights=weights)) / (2 * h)
    e, readout, _ = _run_circuits(model, theta, x, 1, False, weights)
    return float(readout[1] @ e)


def evaluate_d2fdx2(model: QuantumModel, theta, x: float, *, weights=None, backend: str = "shift",
                    h: float = 1e-4) -> float:
    _check_backend(backend)
    if backend == "fd":
        f = lambda v: evaluate_f(model, theta, v, 0.0, weights=weights)  # noqa: E731
        return (f(x + h) - 2 * f(x) + f(x - h)) / (h * h)
    e, readout, _ = _run_circuits(model, theta, x, 2, False, weights)
    return float(readout[2] @ e)


def evaluate(model: QuantumModel, theta, x: float, shift: Optional[float] = None, order: int = 1,
             *, weights=None) -> ModelEvaluation:
    """f and its x-derivatives up to ``order`` with circuit accounting."""
    if order not in (0, 1, 2):
        raise ConfigurationError("derivative order must be 0, 1 or 2")
    if shift is None:
        shift = initial_shift(model, theta, weights)
    g = model.n_encoding
    e, readout, _ = _run_circuits(model, theta, x, order, False, weights)
    f = float(shift + e[0])
    # budget per quantity: 1 for f, 2G for df/dx, 4G^2 + 2G for d2f/dx2
    count = 1
    dfdx = d2 = None
    if order >= 1:
        dfdx = float(readout[1] @ e)
        count += 2 * g
    if order >= 2:
        d2 = float(readout[2] @ e)
        count += 4 * g * g + 2 * g
    return ModelEvaluation(f, dfdx if dfdx is not None else float("nan"), d2, count)


def grad_theta(model: QuantumModel, theta, x: float, of: str = "f", *, weights=None,
               backend: str = "shift", h: float = 1e-6, include_shift: bool = False) -> np.ndarray:
    """d f/d theta or d(df/dx)/d theta at x.

    ``include_shift`` appends the derivative with respect to an optimized
    boundary constant f_c (1 for f, 0 for df/dx).
    """
    _check_backend(backend)
    if of not in ("f", "dfdx"):
        raise ConfigurationError("of must be 'f' or 'dfdx'")
    theta = np.asarray(theta, dtype=float)
    if backend == "fd":
        fn = (lambda t: evaluate_f(model, t, x, 0.0, weights=weights)) if of == "f" else \
            (lambda t: evaluate_dfdx(model, t, x, weights=weights))
        grad = np.empty(theta.size)
        for k in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[k] += h
            tm[k] -= h
            grad[k] = (fn(tp) - fn(tm)) / (2 * h)
    else:
        e, readout, _ = _run_circuits(model, theta, x, 0 if of == "f" else 1, True, weights)
        diff = 0.5 * (e[:, 1::2] - e[:, 2::2])  # (S, P)
        grad = diff[0] if of == "f" else readout[1] @ diff
    if include_shift:
        if not isinstance(model.boundary, Optimized):
            raise LogicError("only optimized-boundary models carry a trainable shift")
        grad = np.append(grad, 1.0 if of == "f" else 0.0)
    return grad


def update_floating_shift(model: QuantumModel, theta, weights=None) -> float:
    """f_b = u0 - <C>(x0), so that f(x0) = u0 exactly."""
    b = model.boundary
    if not isinstance(b, Floating):
        raise LogicError(f"floating shift requested for a {type(b).__name__} boundary")
    e, _, _ = _run_circuits(model, theta, b.x0, 0, False, weights)
    return float(b.u0 - e[0])


# -- aggregated route for training ------------------------------------------------


def _heisenberg(template: AnsatzTemplate, theta, op: np.ndarray) -> np.ndarray:
    """U^dag op U for the ansatz U(theta)."""
    o = np.array(op, dtype=complex, order="C")
    n = template.n_qubits
    for g in reversed(template.ops):
        if isinstance(g, ParamRotation):
            conjugate_rotation(o, n, g.axis, g.qubit, -theta[g.index])
        else:
            conjugate_cnot(o, n, g.control, g.target)
    return o


def _shift_sweep(template: AnsatzTemplate, theta, g_op: np.ndarray, heis: np.ndarray) -> np.ndarray:
    """0.5 * [Tr(G O(theta_k + pi/2)) - Tr(G O(theta_k - pi/2))] for every k.

    ``heis`` is U^dag C U. Both G and the observable advance gate by gate,
    rho_k = g_k rho g_k^dag and C_k = g_k C g_k^dag, so that at gate k the
    shifted value is Tr(R(+-pi/2) rho_k R(+-pi/2)^dag C_k).
    """
    n = template.n_qubits
    rho = np.array(g_op, dtype=complex, order="C")
    obs = np.array(heis, dtype=complex, order="C")
    grad = np.zeros(template.n_params)
    for g in template.ops:
        if isinstance(g, ParamRotation):
            a = theta[g.index]
            conjugate_rotation(rho, n, g.axis, g.qubit, a)
            conjugate_rotation(obs, n, g.axis, g.qubit, a)
            obs_t = obs.T
            plus = conjugate_rotation(rho.copy(), n, g.axis, g.qubit, HALF_PI)
            minus = conjugate_rotation(rho.copy(), n, g.axis, g.qubit, -HALF_PI)
            grad[g.index] = 0.5 * (np.sum(plus * obs_t).real - np.sum(minus * obs_t).real)
        else:
            conjugate_cnot(rho, n, g.control, g.target)
            conjugate_cnot(obs, n, g.control, g.target)
    return grad


class Evaluator:
    """Model outputs on fixed point blocks, with loss-gradient backpropagation.

    ``blocks`` is a sequence of (xs, order). Encoded states are cached; a
    constant evolution time may be changed with :meth:`set_tau`.
    """

    def __init__(self, model: QuantumModel, blocks: Sequence[tuple[Sequence[float], int]]):
        self.model = model
        self.blocks = [(np.asarray(xs, dtype=float), int(order)) for xs, order in blocks]
        self._mats = [c.matrix(model.n_qubits) for c in model.components]
        self._tau = None
        self._build_states()
        self._cache = None

    def _build_states(self, tau=None):
        rows, readouts, sizes = [], [], []
        for xs, order in self.blocks:
            if xs.size == 0:
                readouts.append(None)
                sizes.append((0, 0))
                continue
            st, ro = fmap.encoded_states(self.model.feature_map, self.model.n_qubits, xs, order, tau=tau)
            m, s, d = st.shape
            rows.append(st.reshape(m * s, d))
            readouts.append(ro)
            sizes.append((m, s))
        dim = 1 << self.model.n_qubits
        self._phi = np.concatenate(rows) if rows else np.zeros((0, dim), dtype=complex)
        self._readouts = readouts
        self._sizes = sizes
        self._cache = None

    def set_tau(self, tau: float) -> None:
        if tau != self._tau:
            self._tau = tau
            self._build_states(tau)

    @property
    def circuits_per_pass(self) -> int:
        g = self.model.n_encoding
        total = 0
        for (xs, order) in self.blocks:
            per = 1 + (2 * g if order >= 1 else 0) + (4 * g * g + 2 * g if order >= 2 else 0)
            total += per * xs.size
        return total

    def _expect(self, op: np.ndarray) -> np.ndarray:
        phi = self._phi
        return np.einsum("rd,rd->r", phi.conj(), phi @ op.T).real

    def forward(self, theta, weights=None) -> list[np.ndarray]:
        """Per block an array (order + 1, M) of <C> and its x-derivatives."""
        theta = np.asarray(theta, dtype=float)
        w = np.asarray(self.model.weights if weights is None else weights, dtype=float)
        heis = [_heisenberg(self.model.template, theta, m) for m in self._mats]
        comp_e = [self._expect(h) for h in heis]
        e = sum(wl * el for wl, el in zip(w, comp_e))
        self._cache = (theta.copy(), w.copy(), heis, comp_e)
        out = []
        start = 0
        for (m, s), ro in zip(self._sizes, self._readouts):
            if ro is None:
                out.append(np.zeros((1, 0)))
                continue
            eb = e[start:start + m * s].reshape(m, s)
            out.append(np.stack([np.einsum("ms,ms->m", r, eb) for r in ro]))
            start += m * s
        return out

    def backward(self, adjoints: Sequence[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
        """Gradients w.r.t. theta and cost weights of sum(adjoint * outputs).

        Uses the theta/weights of the preceding :meth:`forward` call.
        """
        if self._cache is None:
            raise LogicError("backward called before forward")
        theta, w, heis, comp_e = self._cache
        row_w = []
        for (m, s), ro, adj in zip(self._sizes, self._readouts, adjoints):
            if ro is None:
                continue
            adj = np.asarray(adj, dtype=float).reshape(-1, m)
            wb = np.zeros((m, s))
            for r in range(min(len(ro), adj.shape[0])):
                wb += adj[r][:, None] * ro[r]
            row_w.append(wb.reshape(-1))
        rw = np.concatenate(row_w) if row_w else np.zeros(0)
        phi = self._phi
        g_op = (phi.T * rw) @ phi.conj()
        total = sum(wl * h for wl, h in zip(w, heis))
        grad_theta = _shift_sweep(self.model.template, theta, g_op, total)
        grad_w = np.array([rw @ el for el in comp_e])
        return grad_theta, grad_w
