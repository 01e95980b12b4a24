"""Run orchestration: stages, warm starts, generated regularization points."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Optional

import numpy as np

from . import featuremap as fmap
from .config import (
    Reference,
    build_grid,
    build_loss,
    build_models,
    build_optimizer,
    build_problem,
    build_reference,
    stage_configs,
    tau_schedule,
)
from .despec import ProblemSpec, dense_grid, make_grid
from .errors import ConfigurationError
from .qmodel import QuantumModel
from .trainer import LossEngine, MetricsLog, TrainingState, evaluate_solution, train, warm_start


@dataclass
class StageResult:
    name: str
    config: dict
    problem: ProblemSpec
    models: list[QuantumModel]
    state: TrainingState        # best state of the stage
    log: MetricsLog
    L_F: float
    L_D: float
    L_Q: float
    L_Q_dense: float = float("nan")   # on the 4x validation grid


@dataclass
class RunResult:
    config: dict
    stages: list[StageResult]
    reference: Optional[Reference]

    @property
    def final(self) -> StageResult:
        return self.stages[-1]


def _generated_regularization(st: Mapping, prev: Optional[StageResult],
                              ref: Optional[Reference]) -> list[tuple]:
    reg = st.get("regularization", {})
    names = st["problem"]["functions"]
    out = []
    if "from_previous_stage" in reg:
        if prev is None:
            raise ConfigurationError("from_previous_stage regularization in the first stage")
        xs = make_grid(build_grid(reg["from_previous_stage"]))
        vals = evaluate_solution(prev.models, prev.state, xs)
        out += [(names[k], float(x), float(v)) for k in range(len(names)) for x, v in zip(xs, vals[k])]
    if "from_reference" in reg:
        if ref is None:
            raise ConfigurationError("from_reference regularization needs a problem reference")
        xs = make_grid(build_grid(reg["from_reference"]))
        vals = ref(xs)
        out += [(names[k], float(x), float(v)) for k in range(len(names)) for x, v in zip(xs, vals[k])]
    return out


def run(cfg: Mapping, threads: int = 1, callback: Optional[Callable] = None) -> RunResult:
    """Train every stage of a resolved configuration in order."""
    ref = build_reference(cfg)
    results: list[StageResult] = []
    prev = None
    for st in stage_configs(cfg):
        problem = build_problem(st, _generated_regularization(st, prev, ref))
        models = build_models(st, problem)
        loss_cfg = build_loss(st.get("loss", {}))
        opt_cfg = build_optimizer(st.get("optimizer", {}), int(st["seed"]))
        taus = tau_schedule(st["model"].get("feature_map", {}), opt_cfg.n_iter)
        init = warm_start(prev.state, models) if prev is not None else None
        cb = None
        if callback is not None:
            name = st["stage_name"]
            cb = lambda n_j, state, br, _name=name: callback(_name, n_j, state, br)
        best, log = train(problem, models, loss_cfg, opt_cfg, reference=ref, state=init,
                          threads=threads, callback=cb, tau_schedule=taus)
        engine = LossEngine(problem, models, loss_cfg, opt_cfg.n_iter, ref)
        if taus is not None:
            for ev in engine.evaluators:
                ev.set_tau(float(taus(max(1, best.n_j))))
        br = engine.evaluate(best, max(1, best.n_j), want_grad=False)
        lq_dense = float("nan")
        if ref is not None:
            xd = dense_grid(problem.grid)
            diff = evaluate_solution(models, best, xd) - ref(xd)
            lq_dense = float(np.sum(np.mean(diff ** 2, axis=1)))
        prev = StageResult(st["stage_name"], st, problem, models, best, log, br.L_F, br.L_D, br.L_Q, lq_dense)
        results.append(prev)
    return RunResult(dict(cfg), results, ref)


def solution_table(result: RunResult, xs) -> tuple[list[str], np.ndarray]:
    """Header and rows (x, f_k..., ref_k...) for the final stage on ``xs``."""
    fin = result.final
    names = list(fin.problem.functions)
    xs = np.asarray(xs, dtype=float)
    cols = [xs, *evaluate_solution(fin.models, fin.state, xs)]
    head = ["x"] + names
    if result.reference is not None and xs.size:
        cols += list(result.reference(xs))
        head += [f"ref_{n}" for n in names]
    return head, np.column_stack(cols) if xs.size else np.zeros((0, len(head)))


def models_domain_filter(models, xs) -> tuple[np.ndarray, int]:
    """Points admissible for every model, and the count dropped."""
    xs = np.asarray(xs, dtype=float)
    keep = np.array([all(fmap.in_domain(m.feature_map, float(x)) for m in models) for x in xs], dtype=bool)
    return xs[keep], int((~keep).sum())
