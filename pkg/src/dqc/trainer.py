"""Loss assembly, Adam, and the training loop."""
from __future__ import annotations

import csv
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import featuremap as fmap
from .ansatz import init_theta
from .despec import ProblemSpec, eval_with_partials
from .errors import ConfigurationError, ConvergenceError, NumericError
from .qmodel import Evaluator, Floating, Optimized, Pinned, QuantumModel

# -- configuration -----------------------------------------------------------------


@dataclass(frozen=True)
class NoSchedule:
    pass


@dataclass(frozen=True)
class Linear:
    pass


@dataclass(frozen=True)
class ReverseSigmoid:
    n_drop: int
    delta: float


Schedule = Union[NoSchedule, Linear, ReverseSigmoid]


@dataclass(frozen=True)
class LossConfig:
    distance: str = "MSE"
    eta: float = 1.0
    schedule: Schedule = NoSchedule()
    # "through": d f_b/d theta is kept, "frozen": f_b treated as a constant per step
    floating_gradient: str = "through"

    def __post_init__(self):
        if self.distance not in ("MSE", "MAE"):
            raise ConfigurationError(f"distance must be MSE or MAE, got {self.distance!r}")
        if not self.eta >= 0:
            raise ConfigurationError("boundary pinning eta must be >= 0")
        if self.floating_gradient not in ("through", "frozen"):
            raise ConfigurationError("floating_gradient must be 'through' or 'frozen'")
        if isinstance(self.schedule, ReverseSigmoid) and not self.schedule.delta > 0:
            raise ConfigurationError("reverse-sigmoid delta must be positive")


@dataclass(frozen=True)
class OptimizerConfig:
    learning_rate: float = 0.01
    n_iter: int = 250
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    loss_below: Optional[float] = None
    grad_norm_below: Optional[float] = None
    # raise ConvergenceError when a loss/gradient exit was set but never reached
    strict: bool = False
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ConfigurationError("learning rate must be >= 0")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ConfigurationError("Adam betas must lie in (0, 1)")
        if not self.epsilon > 0:
            raise ConfigurationError("Adam epsilon must be positive")
        if self.n_iter < 0:
            raise ConfigurationError("n_iter must be >= 0")
        for name in ("loss_below", "grad_norm_below"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ConfigurationError(f"exit condition {name} must be positive")
        if self.strict and self.loss_below is None and self.grad_norm_below is None:
            raise ConfigurationError("strict exit needs loss_below or grad_norm_below")


# -- state -----------------------------------------------------------------------


@dataclass
class TrainingState:
    thetas: dict[int, np.ndarray]          # register -> theta
    weights: list[np.ndarray]              # per model, cost weights alpha_l
    f_c: list[Optional[float]]             # per model, optimized shift
    f_b: list[Optional[float]] = field(default_factory=list)  # last floating shifts
    m: Optional[np.ndarray] = None
    v: Optional[np.ndarray] = None
    n_j: int = 0
    adam_t: int = 0

    def copy(self) -> "TrainingState":
        return TrainingState(
            {r: t.copy() for r, t in self.thetas.items()},
            [w.copy() for w in self.weights],
            list(self.f_c), list(self.f_b),
            None if self.m is None else self.m.copy(),
            None if self.v is None else self.v.copy(),
            self.n_j, self.adam_t,
        )


def _registers(models: Sequence[QuantumModel]) -> dict[int, int]:
    """register -> n_params, checking models sharing a register agree."""
    regs: dict[int, int] = {}
    for m in models:
        if m.register in regs and regs[m.register] != m.n_params:
            raise ConfigurationError(f"models on register {m.register} have different ansatz sizes")
        regs.setdefault(m.register, m.n_params)
    return dict(sorted(regs.items()))


def init_state(models: Sequence[QuantumModel], seed: int = 0) -> TrainingState:
    rng = np.random.default_rng(seed)
    thetas = {}
    for r in _registers(models):
        tmpl = next(m.template for m in models if m.register == r)
        thetas[r] = init_theta(tmpl, rng)
    weights = [np.asarray(m.weights, dtype=float) for m in models]
    f_c = [float(m.boundary.f_c) if isinstance(m.boundary, Optimized) else None for m in models]
    return TrainingState(thetas, weights, f_c, [None] * len(models))


def _flatten(state: TrainingState, models) -> np.ndarray:
    parts = [state.thetas[r] for r in sorted(state.thetas)]
    for k, mdl in enumerate(models):
        if mdl.trainable_weights:
            parts.append(state.weights[k])
        if state.f_c[k] is not None:
            parts.append(np.array([state.f_c[k]]))
    return np.concatenate(parts) if parts else np.zeros(0)


def _unflatten(flat: np.ndarray, state: TrainingState, models) -> TrainingState:
    out = state.copy()
    i = 0
    for r in sorted(out.thetas):
        n = out.thetas[r].size
        out.thetas[r] = flat[i:i + n].copy()
        i += n
    for k, mdl in enumerate(models):
        if mdl.trainable_weights:
            n = out.weights[k].size
            out.weights[k] = flat[i:i + n].copy()
            i += n
        if out.f_c[k] is not None:
            out.f_c[k] = float(flat[i])
            i += 1
    return out


# -- schedules and optimizer -----------------------------------------------------


def schedule_zeta(n_j: int, schedule: Schedule, n_iter: int) -> float:
    """Regularization weight at iteration n_j, within [0, 1]."""
    if isinstance(schedule, NoSchedule):
        return 1.0
    if isinstance(schedule, Linear):
        if n_iter <= 0:
            return 0.0
        return float(min(1.0, max(0.0, 1.0 - n_j / n_iter)))
    if isinstance(schedule, ReverseSigmoid):
        if n_iter <= 0:
            return 0.0
        z = 1.0 - math.tanh((n_j - schedule.n_drop) / (schedule.delta * n_iter))
        return float(min(1.0, max(0.0, z)))
    raise ConfigurationError(f"unknown schedule {schedule!r}")


def adam_step(state: TrainingState, grad, cfg: OptimizerConfig, models) -> TrainingState:
    """One bias-corrected Adam update over theta (and alpha_l, f_c when trainable)."""
    flat = _flatten(state, models)
    grad = np.asarray(grad, dtype=float)
    if grad.shape != flat.shape:
        raise ConfigurationError(f"gradient has shape {grad.shape}, parameters {flat.shape}")
    if not np.all(np.isfinite(grad)):
        bad = int(np.flatnonzero(~np.isfinite(grad))[0])
        raise NumericError(f"non-finite gradient component {bad} at iteration {state.n_j}")
    m = np.zeros_like(flat) if state.m is None else state.m
    v = np.zeros_like(flat) if state.v is None else state.v
    t = state.adam_t + 1
    m = cfg.beta1 * m + (1 - cfg.beta1) * grad
    v = cfg.beta2 * v + (1 - cfg.beta2) * grad * grad
    m_hat = m / (1 - cfg.beta1 ** t)
    v_hat = v / (1 - cfg.beta2 ** t)
    flat = flat - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    out = _unflatten(flat, state, models)
    out.m, out.v, out.adam_t = m, v, t
    return out


def warm_start(source: TrainingState, to_models: Sequence[QuantumModel]) -> TrainingState:
    """Carry parameters into new models; moments and counters restart."""
    regs = _registers(to_models)
    if set(regs) != set(source.thetas):
        raise ConfigurationError("warm start: register layout differs")
    for r, n in regs.items():
        if source.thetas[r].size != n:
            raise ConfigurationError(
                f"warm start: register {r} has {source.thetas[r].size} angles, target needs {n}"
            )
    if len(source.weights) != len(to_models):
        raise ConfigurationError("warm start: model count differs")
    weights = []
    f_c = []
    for k, mdl in enumerate(to_models):
        if source.weights[k].size != len(mdl.weights):
            raise ConfigurationError(f"warm start: model {k} cost weights differ in length")
        weights.append(source.weights[k].copy())
        if isinstance(mdl.boundary, Optimized):
            f_c.append(source.f_c[k] if source.f_c[k] is not None else float(mdl.boundary.f_c))
        else:
            f_c.append(None)
    return TrainingState({r: t.copy() for r, t in source.thetas.items()}, weights, f_c,
                         [None] * len(to_models))


# -- metrics ------------------------------------------------------------------------


@dataclass
class MetricsLog:
    rows: list[tuple[int, float, float, float, float]] = field(default_factory=list)

    def append(self, n_j, l_f, l_d, l_q, elapsed_ms):
        self.rows.append((int(n_j), float(l_f), float(l_d), float(l_q), float(elapsed_ms)))

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        idx = ("n_j", "L_F", "L_D", "L_Q", "elapsed_ms").index(name)
        return np.array([r[idx] for r in self.rows])

    def to_csv(self, path=None, timing: bool = True) -> str:
        """Write the log; without ``timing`` the wall-clock column is left out."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        head = ["n_j", "L_F", "L_D", "L_Q"] + (["elapsed_ms"] if timing else [])
        w.writerow(head)
        for r in self.rows:
            vals = [str(r[0])] + [repr(v) for v in r[1:4]]
            if timing:
                vals.append(f"{r[4]:.3f}")
            w.writerow(vals)
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


@dataclass
class LossBreakdown:
    L_F: float
    L_D: float
    diff: float
    boundary: float
    regularization: float
    per_equation: list[float]
    L_Q: float = float("nan")
    zeta: float = 1.0
    grad: Optional[np.ndarray] = None
    f_b: list = field(default_factory=list)


# -- loss engine --------------------------------------------------------------------


def _distance(kind: str, r: np.ndarray):
    if kind == "MSE":
        return r * r, 2.0 * r
    return np.abs(r), np.sign(r)


class LossEngine:
    """Loss and gradient for a problem with one model per declared function."""

    def __init__(self, problem: ProblemSpec, models: Sequence[QuantumModel], loss_cfg: LossConfig,
                 n_iter: int = 0, reference: Optional[Callable] = None, threads: int = 1):
        if len(models) != problem.n_functions:
            raise ConfigurationError(
                f"problem declares {problem.n_functions} functions but {len(models)} models were given"
            )
        ids = sorted(m.function_id for m in models)
        if ids != list(range(problem.n_functions)):
            raise ConfigurationError("models must cover function ids 0..K-1 exactly once")
        self.models = sorted(models, key=lambda m: m.function_id)
        self.problem = problem
        self.cfg = loss_cfg
        self.n_iter = n_iter
        self.xs = problem.points()
        self.threads = max(1, int(threads))
        _registers(self.models)
        for a in problem.boundary:
            b = self.models[a.k].boundary
            if abs(b.x0 - a.x0) > 0 or abs(b.u0 - a.u0) > 0:
                raise ConfigurationError(f"model {a.k} boundary anchor differs from the problem's")
        self.extras = []
        self.evaluators = []
        for k, mdl in enumerate(self.models):
            anchors = problem.anchors_for(k)
            if isinstance(mdl.boundary, Floating) and len(anchors) > 1:
                raise ConfigurationError(f"floating boundary for function {k} needs exactly one anchor")
            ex = [mdl.boundary.x0] + [r.x for r in problem.reg_for(k)]
            for x in list(self.xs) + ex:
                fmap.check_domain(mdl.feature_map, float(x))
            self.extras.append(np.array(ex, dtype=float))
            order = problem.max_order(k)
            self.evaluators.append(Evaluator(mdl, [(self.xs, order), (ex, 0)]))
        self.orders = [problem.max_order(k) for k in range(problem.n_functions)]
        self.ref = None
        if reference is not None:
            ref = np.asarray(reference(self.xs), dtype=float).reshape(problem.n_functions, -1)
            self.ref = ref

    def _map(self, fn, items):
        if self.threads > 1 and len(items) > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as ex:
                return list(ex.map(fn, items))
        return [fn(i) for i in items]

    def shifts(self, state: TrainingState, extra_vals) -> list[float]:
        out = []
        for k, mdl in enumerate(self.models):
            b = mdl.boundary
            if isinstance(b, Floating):
                out.append(b.u0 - extra_vals[k][0])
            elif isinstance(b, Optimized):
                out.append(float(state.f_c[k]))
            else:
                out.append(float(mdl.offset))
        return out

    def evaluate(self, state: TrainingState, n_j: int, want_grad: bool = True) -> LossBreakdown:
        K = len(self.models)
        M = self.xs.size
        cfg = self.cfg

        def fwd(k):
            mdl = self.models[k]
            return self.evaluators[k].forward(state.thetas[mdl.register], state.weights[k])

        outs = self._map(fwd, list(range(K)))
        extra_c = [o[1][0] for o in outs]
        shifts = self.shifts(state, extra_c)
        u = np.zeros((K, 3, M))
        for k in range(K):
            grid = outs[k][0]
            u[k, 0] = shifts[k] + grid[0]
            for r in range(1, grid.shape[0]):
                u[k, r] = grid[r]

        adj_u = np.zeros_like(u)
        per_eq = []
        for ast in self.problem.residuals:
            val, partials = eval_with_partials(ast, self.xs, u)
            d, dd = _distance(cfg.distance, val)
            per_eq.append(float(d.sum() / M))
            adj_u += partials[:, :, :] * (dd / M)[None, None, :]
        l_diff = float(sum(per_eq))

        # values at anchors / regularization points
        adj_extra = [np.zeros(e.size) for e in self.extras]
        l_bnd = 0.0
        for k, mdl in enumerate(self.models):
            b = mdl.boundary
            if isinstance(b, (Pinned, Optimized)):
                r = shifts[k] + extra_c[k][0] - b.u0
                d, dd = _distance(cfg.distance, np.array([r]))
                l_bnd += cfg.eta * float(d[0])
                adj_extra[k][0] += cfg.eta * dd[0]
        zeta = schedule_zeta(n_j, cfg.schedule, self.n_iter)
        l_reg = 0.0
        for k in range(K):
            regs = self.problem.reg_for(k)
            if not regs:
                continue
            fr = shifts[k] + extra_c[k][1:]
            ur = np.array([r.u for r in regs])
            d, dd = _distance(cfg.distance, fr - ur)
            l_reg += zeta * float(d.sum())
            adj_extra[k][1:] += zeta * dd

        l_d = l_diff + l_bnd
        out = LossBreakdown(l_d + l_reg, l_d, l_diff, l_bnd, l_reg, per_eq, zeta=zeta,
                            f_b=[s if isinstance(m.boundary, Floating) else None
                                 for s, m in zip(shifts, self.models)])
        if self.ref is not None:
            out.L_Q = float(np.sum(np.mean((u[:, 0] - self.ref) ** 2, axis=1)))
        if not want_grad:
            return out

        grads_shift = []
        for k, mdl in enumerate(self.models):
            g_shift = float(adj_u[k, 0].sum() + adj_extra[k][1:].sum())
            if isinstance(mdl.boundary, (Pinned, Optimized)):
                g_shift += float(adj_extra[k][0])
            grads_shift.append(g_shift)
            if isinstance(mdl.boundary, Floating) and cfg.floating_gradient == "through":
                adj_extra[k][0] -= g_shift

        def bwd(k):
            grid_adj = adj_u[k, : self.orders[k] + 1]
            return self.evaluators[k].backward([grid_adj, adj_extra[k][None, :]])

        back = self._map(bwd, list(range(K)))
        g_theta = {r: np.zeros(t.size) for r, t in state.thetas.items()}
        parts_tail = []
        for k, mdl in enumerate(self.models):
            gt, gw = back[k]
            g_theta[mdl.register] += gt
        flat = [g_theta[r] for r in sorted(g_theta)]
        for k, mdl in enumerate(self.models):
            if mdl.trainable_weights:
                flat.append(back[k][1])
            if state.f_c[k] is not None:
                flat.append(np.array([grads_shift[k]]))
        out.grad = np.concatenate(flat) if flat else np.zeros(0)
        return out


def compute_loss(state: TrainingState, problem: ProblemSpec, models: Sequence[QuantumModel], n_j: int,
                 loss_cfg: LossConfig = LossConfig(), n_iter: int = 0,
                 reference: Optional[Callable] = None) -> tuple[float, float, LossBreakdown]:
    """(L_F, L_D, breakdown) at the current parameters."""
    br = LossEngine(problem, models, loss_cfg, n_iter, reference).evaluate(state, n_j, want_grad=False)
    return br.L_F, br.L_D, br


def train(problem: ProblemSpec, models: Sequence[QuantumModel], loss_cfg: LossConfig = LossConfig(),
          opt_cfg: OptimizerConfig = OptimizerConfig(), reference: Optional[Callable] = None, *,
          state: Optional[TrainingState] = None, threads: int = 1,
          callback: Optional[Callable[[int, TrainingState, LossBreakdown], None]] = None,
          tau_schedule: Optional[Callable[[int], float]] = None,
          ) -> tuple[TrainingState, MetricsLog]:
    """Adam over the shift-rule gradient; returns the lowest-loss state seen.

    ``reference`` maps grid points to an array (K, M) of true values; L_Q is
    NaN without it. ``tau_schedule(n_j)`` re-sets a constant evolution time
    before every iteration (evolution-enhanced maps only).
    """
    models = sorted(models, key=lambda m: m.function_id)
    engine = LossEngine(problem, models, loss_cfg, opt_cfg.n_iter, reference, threads)
    if tau_schedule is not None and not all(
            isinstance(m.feature_map, fmap.EvolutionEnhanced) for m in models):
        raise ConfigurationError("tau_schedule needs evolution-enhanced feature maps")
    state = init_state(models, opt_cfg.seed) if state is None else state.copy()
    log = MetricsLog()
    if opt_cfg.n_iter == 0:
        return state, log
    best, best_loss = state.copy(), math.inf
    reached = False
    t0 = time.perf_counter()
    for n_j in range(1, opt_cfg.n_iter + 1):
        state.n_j = n_j
        if tau_schedule is not None:
            tau = float(tau_schedule(n_j))
            if not tau >= 0:
                raise ConfigurationError(f"tau_schedule gave {tau} at iteration {n_j}")
            for ev in engine.evaluators:
                ev.set_tau(tau)
        br = engine.evaluate(state, n_j)
        state.f_b = list(br.f_b)
        if not math.isfinite(br.L_F):
            raise NumericError(f"loss became non-finite at iteration {n_j}")
        log.append(n_j, br.L_F, br.L_D, br.L_Q, 1e3 * (time.perf_counter() - t0))
        if callback is not None:
            callback(n_j, state, br)
        if br.L_F < best_loss:
            best, best_loss = state.copy(), br.L_F
        if opt_cfg.loss_below is not None and br.L_F < opt_cfg.loss_below:
            reached = True
            break
        if opt_cfg.grad_norm_below is not None and float(np.linalg.norm(br.grad)) < opt_cfg.grad_norm_below:
            reached = True
            break
        state = adam_step(state, br.grad, opt_cfg, models)
    if opt_cfg.strict and not reached:
        raise ConvergenceError(f"no exit condition met in {opt_cfg.n_iter} iterations", residual=best_loss)
    return best, log


def evaluate_solution(models: Sequence[QuantumModel], state: TrainingState, xs) -> np.ndarray:
    """Trained functions f_k(x) on arbitrary points, shape (K, M), ordered by function id."""
    xs = np.asarray(xs, dtype=float)
    models = sorted(models, key=lambda m: m.function_id)
    out = np.zeros((len(models), xs.size))
    for k, mdl in enumerate(models):
        b = mdl.boundary
        ev = Evaluator(mdl, [(xs, 0), ([b.x0], 0)])
        grid, anchor = ev.forward(state.thetas[mdl.register], state.weights[k])
        if isinstance(b, Floating):
            shift = b.u0 - anchor[0][0]
        elif isinstance(b, Optimized):
            shift = float(state.f_c[k])
        else:
            shift = float(mdl.offset)
        out[k] = shift + grid[0]
    return out
