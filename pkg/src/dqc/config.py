"""Run configuration: schema validation, preset merging, object builders."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence, Union

import jsonschema
import numpy as np

from . import featuremap as fmap
from . import observables as obs
from .ansatz import AlternatingBlocks, HardwareEfficient
from .despec import ChebyshevNodes, Equidistant, ProblemSpec, RandomUniform
from .errors import ConfigurationError
from .oracle import (
    NozzleProblem,
    ReferenceSolution,
    analytic_coupled,
    analytic_damped,
    nozzle_steady_reference,
    rhs_system,
    rk4_integrate,
)
from .qmodel import Floating, Optimized, Pinned, QuantumModel, build_model
from .trainer import Linear, LossConfig, NoSchedule, OptimizerConfig, ReverseSigmoid

DEFAULT_OUTPUT_POINTS = 200
REQUIRED_SECTIONS = ("problem", "grid", "model")


def load_schema(name: str = "config") -> dict:
    text = resources.files("dqc").joinpath("schema", f"{name}.schema.json").read_text()
    return json.loads(text)


def _validate(doc: Any, name: str) -> None:
    schema = load_schema(name)
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigurationError(f"{name} schema violation at {where}: {e.message}")


def validate_params(doc: Any) -> None:
    _validate(doc, "params")


def deep_merge(base: Mapping, override: Mapping) -> dict:
    """Recursive dict merge; lists and scalars in ``override`` replace."""
    out = copy.deepcopy(dict(base))
    for k, v in override.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def read_json(path: Union[str, Path]) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigurationError(f"no such file: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: not valid JSON ({e.msg} at line {e.lineno})") from None


def resolve_config(raw: Any, seed: Optional[int] = None) -> dict:
    """Merge onto a preset if named, validate, and fill the seed."""
    from .presets import get_preset

    if not isinstance(raw, Mapping):
        raise ConfigurationError("configuration must be a JSON object")
    cfg = dict(raw)
    if "preset" in cfg:
        name = cfg["preset"]
        if not isinstance(name, str):
            raise ConfigurationError("preset must be a string")
        cfg = deep_merge(get_preset(name), cfg)
    if seed is not None:
        cfg["seed"] = int(seed)
    cfg.setdefault("seed", 0)
    _validate(cfg, "config")
    missing = [s for s in REQUIRED_SECTIONS if s not in cfg]
    if missing:
        raise ConfigurationError(f"configuration lacks sections {missing}")
    prob = cfg["problem"]
    for key in ("functions", "residuals"):
        if key not in prob:
            raise ConfigurationError(f"problem section lacks {key!r}")
    # stage overlays are partial; check each merged result against the full schema
    if cfg.get("stages"):
        for st in stage_configs(cfg):
            name = st.pop("stage_name")
            try:
                _validate(st, "config")
            except ConfigurationError as e:
                raise ConfigurationError(f"stage {name!r}: {e}") from None
    return cfg


def stage_configs(cfg: Mapping) -> list[dict]:
    """One fully merged configuration per training stage."""
    base = {k: v for k, v in cfg.items() if k != "stages"}
    stages = cfg.get("stages") or [{}]
    out = []
    for i, st in enumerate(stages):
        merged = deep_merge(base, {k: v for k, v in st.items() if k != "name"})
        merged["stage_name"] = st.get("name", f"stage{i + 1}")
        out.append(merged)
    return out


# -- builders --------------------------------------------------------------------


def build_grid(d: Mapping):
    intervals = d.get("intervals", [0.0, 1.0])
    kind = d["kind"]
    if kind == "equidistant":
        return Equidistant(d["points"], intervals, bool(d.get("open", False)))
    if d.get("open"):
        raise ConfigurationError("'open' applies to equidistant grids only")
    if kind == "chebyshev":
        return ChebyshevNodes(d["points"], intervals)
    return RandomUniform(d["points"], intervals, int(d.get("seed", 0)))


def build_cost_spec(d: Mapping) -> obs.CostSpec:
    kind = d["kind"]
    if kind == "total_z":
        return obs.TotalZ()
    if kind == "single_z":
        return obs.SingleZ(int(d.get("qubit", 0)))
    if kind == "ising":
        return obs.IsingChain(tuple(d["J"]), tuple(d["h_z"]), tuple(d["h_x"]))
    if kind == "spin_glass":
        return obs.SpinGlass({(int(i), int(j)): float(v) for i, j, v in d["J"]}, tuple(d["h_z"]))
    if kind == "weighted":
        if len(d["terms"]) != len(d["weights"]):
            raise ConfigurationError("weighted cost needs one weight per term")
        return obs.WeightedSum(tuple(build_cost_spec(t) for t in d["terms"]),
                               tuple(float(w) for w in d["weights"]), bool(d.get("trainable", False)))
    raise ConfigurationError(f"unknown cost kind {kind!r}")


def build_hamiltonian(d: Mapping, n_qubits: int, seed: int) -> obs.Observable:
    if d["kind"] == "random_ising":
        return obs.random_ising(n_qubits, int(d.get("seed", seed)), bool(d.get("homogeneous", True)))
    return obs.build_cost(build_cost_spec(d), n_qubits)


def build_feature_map(d: Mapping, n_qubits: int, seed: int) -> fmap.FeatureMapSpec:
    kind = d["kind"]
    q = int(d.get("qubits", n_qubits))
    if kind == "product":
        spec: fmap.FeatureMapSpec = fmap.ProductArcsin(q)
    elif kind == "chebyshev_sparse":
        spec = fmap.ChebyshevSparse(q)
    elif kind == "chebyshev_tower":
        spec = fmap.ChebyshevTower(q)
    elif kind == "layered":
        if not d.get("layers"):
            raise ConfigurationError("layered feature map needs 'layers'")
        spec = fmap.LayeredProduct(tuple(
            fmap.Layer(tuple(l["qubits"]), l.get("nonlinearity", "arcsin"), float(l.get("scale", 1.0)))
            for l in d["layers"]))
    else:
        raise ConfigurationError(f"unknown feature map kind {kind!r}")
    evo = d.get("evolution")
    if evo:
        h = build_hamiltonian(evo["hamiltonian"], n_qubits, seed)
        tau = float(evo.get("tau", evo.get("tau_schedule", {}).get("start", 2.0)))
        spec = fmap.EvolutionEnhanced(spec, h, tau)
    return spec


def tau_schedule(d: Mapping, n_iter: int):
    """Linear tau[n_j] from the feature-map section, or None for constant tau."""
    evo = d.get("evolution") or {}
    sch = evo.get("tau_schedule")
    if not sch:
        return None
    a, b = float(sch["start"]), float(sch["end"])
    span = max(1, n_iter - 1)
    return lambda n_j: a + (b - a) * min(1.0, (n_j - 1) / span)


def build_ansatz_spec(d: Mapping):
    if d["kind"] == "hea":
        return HardwareEfficient(int(d["depth"]))
    return AlternatingBlocks(int(d["block_width"]), int(d["block_depth"]), int(d["layers"]))


def build_loss(d: Mapping) -> LossConfig:
    sch = d.get("schedule", {"kind": "none"})
    if sch["kind"] == "none":
        schedule = NoSchedule()
    elif sch["kind"] == "linear":
        schedule = Linear()
    else:
        schedule = ReverseSigmoid(int(sch["n_drop"]), float(sch["delta"]))
    return LossConfig(d.get("distance", "MSE"), float(d.get("eta", 1.0)), schedule,
                      d.get("floating_gradient", "through"))


def build_optimizer(d: Mapping, seed: int) -> OptimizerConfig:
    return OptimizerConfig(
        learning_rate=float(d.get("learning_rate", 0.01)),
        n_iter=int(d.get("n_iter", 250)),
        beta1=float(d.get("beta1", 0.9)),
        beta2=float(d.get("beta2", 0.999)),
        epsilon=float(d.get("epsilon", 1e-8)),
        loss_below=d.get("loss_below"),
        grad_norm_below=d.get("grad_norm_below"),
        strict=bool(d.get("strict", False)),
        seed=seed,
    )


def build_problem(cfg: Mapping, regularization: Sequence[tuple] = ()) -> ProblemSpec:
    p = cfg["problem"]
    names = p["functions"]
    domain = tuple(p.get("domain", (0.0, 1.0)))
    boundary = [(b["function"], b["x0"], b["u0"]) for b in p.get("boundary", [])]
    regs = [(r["function"], r["x"], r["u"]) for r in cfg.get("regularization", {}).get("points", [])]
    return ProblemSpec.from_text(names, p["residuals"], boundary=boundary, grid=build_grid(cfg["grid"]),
                                 regularization=regs + list(regularization), domain=domain,
                                 auxiliaries=p.get("auxiliaries"))


def build_models(cfg: Mapping, problem: ProblemSpec) -> list[QuantumModel]:
    m = cfg["model"]
    seed = int(cfg.get("seed", 0))
    n = int(m.get("qubits", 6))
    fm = build_feature_map(m.get("feature_map", {"kind": "chebyshev_tower"}), n, seed)
    ans = build_ansatz_spec(m.get("ansatz", {"kind": "hea", "depth": 5}))
    if "costs" in m:
        if len(m["costs"]) != problem.n_functions:
            raise ConfigurationError(f"'costs' needs one entry per function ({problem.n_functions})")
        costs = [build_cost_spec(c) for c in m["costs"]]
    else:
        costs = [build_cost_spec(m.get("cost", {"kind": "total_z"}))] * problem.n_functions
    mode = m.get("boundary", "floating")
    shared = m.get("registers", "separate") == "shared"
    models = []
    for k, name in enumerate(problem.functions):
        anchors = problem.anchors_for(k)
        if len(anchors) != 1:
            raise ConfigurationError(f"function {name!r} needs exactly one boundary anchor, got {len(anchors)}")
        a = anchors[0]
        if mode == "pinned":
            b = Pinned(a.x0, a.u0)
        elif mode == "floating":
            b = Floating(a.x0, a.u0)
        else:
            b = Optimized(a.x0, a.u0, float(m.get("f_c", 0.0)))
        models.append(build_model(n, fm, ans, costs[k], b, function_id=k,
                                  register=0 if shared else k, seed=seed))
    return models


def output_grid(cfg: Mapping, models: Sequence[QuantumModel], points: Optional[int] = None) -> np.ndarray:
    """Dense equidistant points over the problem domain, kept inside every feature-map domain."""
    lo, hi = cfg["problem"].get("domain", (0.0, 1.0))
    n = points or cfg.get("output", {}).get("points", DEFAULT_OUTPUT_POINTS)
    xs = np.linspace(float(lo), float(hi), int(n))
    keep = [all(fmap.in_domain(mdl.feature_map, float(x)) for mdl in models) for x in xs]
    return xs[np.array(keep, dtype=bool)]


# -- references ----------------------------------------------------------------------


@dataclass
class Reference:
    """Oracle values for the declared functions at arbitrary points."""

    spec: dict
    names: tuple[str, ...]

    def __post_init__(self):
        self._cache: dict[bytes, np.ndarray] = {}
        kind = self.spec["kind"]
        fixed = {"damped": 1, "coupled": 2, "nozzle": 3}
        want = fixed[kind] if kind in fixed else len(self.spec.get("u0", ()))
        if want != len(self.names):
            raise ConfigurationError(f"{kind} reference provides {want} functions, problem declares {len(self.names)}")
        if kind == "rk4":
            self._system = rhs_system(self.spec["rhs"], self.names)

    @property
    def provenance(self) -> str:
        return {"damped": "analytic", "coupled": "analytic", "rk4": "rk4", "nozzle": "time-marched"}[self.spec["kind"]]

    def _compute(self, xs: np.ndarray) -> np.ndarray:
        s = self.spec
        kind = s["kind"]
        if kind == "damped":
            return np.atleast_2d(analytic_damped(xs, s.get("lambda", 8.0), s.get("kappa", 0.1), s.get("u0", 1.0)))
        if kind == "coupled":
            u1, u2 = analytic_coupled(xs, s.get("lambda1", 5.0), s.get("lambda2", 3.0), tuple(s.get("u0", (0.5, 0.0))))
            return np.array([u1, u2])
        if kind == "rk4":
            sol = rk4_integrate(self._system, s["u0"], xs, x0=s.get("x0", 0.0),
                                max_step=s.get("max_step", 1e-4), names=self.names)
            return np.array([sol.values[n] for n in self.names])
        prob = NozzleProblem(gamma=s.get("gamma", 1.4), throat_coeff=s.get("throat_coeff", 4.95))
        sol = nozzle_steady_reference(prob, grid=xs)
        return np.array([sol.column(k) for k in range(3)])

    def __call__(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float).reshape(-1)
        key = xs.tobytes()
        if key not in self._cache:
            uniq, inv = np.unique(xs, return_inverse=True)
            self._cache[key] = self._compute(uniq)[:, inv]
        return self._cache[key]

    def solution(self, xs) -> ReferenceSolution:
        xs = np.sort(np.asarray(xs, dtype=float))
        vals = self(xs)
        return ReferenceSolution(xs, {n: vals[k] for k, n in enumerate(self.names)}, self.provenance)


def build_reference(cfg: Mapping) -> Optional[Reference]:
    spec = cfg["problem"].get("reference")
    if not spec:
        return None
    return Reference(dict(spec), tuple(cfg["problem"]["functions"]))
