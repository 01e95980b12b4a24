"""Command-line interface.

Commands::

    dqc solve CONFIG        train and write solution.csv, metrics.csv, params.json
    dqc eval PARAMS         sample a trained solution on any grid
    dqc reference PRESET    emit the classical reference of a preset
    dqc presets             list built-in experiment configurations

Exit codes: 0 success, 1 internal error, 2 configuration error,
3 numeric failure, 4 non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .config import (
    build_models,
    build_problem,
    build_reference,
    output_grid,
    read_json,
    resolve_config,
    stage_configs,
    validate_params,
)
from .errors import ConfigurationError, ConvergenceError, DomainError, NumericError
from .presets import describe, get_preset, preset_names
from .runner import RunResult, models_domain_filter, run, solution_table
from .trainer import TrainingState

EXIT_OK, EXIT_INTERNAL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_CONVERGENCE = 0, 1, 2, 3, 4
OUT_DIR_ENV = "DQC_OUT_DIR"
DEFAULT_OUT_DIR = "dqc_out"


# -- artifact writing ------------------------------------------------------------


def write_atomic(path: Path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def table_csv(head: Sequence[str], rows: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    for r in rows:
        w.writerow([repr(float(v)) for v in r])
    return buf.getvalue()


def metrics_csv(result: RunResult, timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stage", "n_j", "L_F", "L_D", "L_Q"] + (["elapsed_ms"] if timing else []))
    for st in result.stages:
        for n_j, l_f, l_d, l_q, ms in st.log.rows:
            row = [st.name, str(n_j), repr(l_f), repr(l_d), repr(l_q)]
            if timing:
                row.append(f"{ms:.3f}")
            w.writerow(row)
    return buf.getvalue()


def params_document(result: RunResult) -> dict:
    fin = result.final
    st = fin.state
    models = []
    for k, m in enumerate(sorted(fin.models, key=lambda m: m.function_id)):
        models.append({
            "function": fin.problem.functions[m.function_id],
            "register": int(m.register),
            "boundary": type(m.boundary).__name__.lower(),
            "x0": float(m.boundary.x0),
            "u0": float(m.boundary.u0),
            "weights": [float(w) for w in st.weights[k]],
            "offset": float(m.offset),
            "f_c": None if st.f_c[k] is None else float(st.f_c[k]),
            "f_b": None if k >= len(st.f_b) or st.f_b[k] is None else float(st.f_b[k]),
        })
    return {
        "format": "dqc-params",
        "schema_version": 1,
        "library_version": __version__,
        "config": result.config,
        "functions": list(fin.problem.functions),
        "thetas": {str(r): [float(v) for v in t] for r, t in sorted(st.thetas.items())},
        "models": models,
        "stages": [{"name": s.name, "iterations": len(s.log), "best_n_j": int(s.state.n_j),
                    "L_F": s.L_F, "L_D": s.L_D, "L_Q": None if np.isnan(s.L_Q) else s.L_Q,
                    "L_Q_dense": None if np.isnan(s.L_Q_dense) else s.L_Q_dense}
                   for s in result.stages],
    }


def load_params(path) -> tuple[dict, list, TrainingState]:
    """Rebuild the final-stage models and trained state from a params document."""
    doc = read_json(path)
    validate_params(doc)
    cfg = resolve_config(doc["config"])
    st = stage_configs(cfg)[-1]
    problem = build_problem(st)
    models = build_models(st, problem)
    if len(models) != len(doc["models"]):
        raise ConfigurationError("params document and configuration disagree on the function count")
    models = [replace(m, offset=float(d["offset"])) for m, d in zip(models, doc["models"])]
    thetas = {int(r): np.array(t, dtype=float) for r, t in doc["thetas"].items()}
    for m in models:
        if m.register not in thetas or thetas[m.register].size != m.n_params:
            raise ConfigurationError(f"params lack a matching angle vector for register {m.register}")
    state = TrainingState(thetas, [np.array(d["weights"], dtype=float) for d in doc["models"]],
                          [d["f_c"] for d in doc["models"]], [d["f_b"] for d in doc["models"]])
    return cfg, models, state


# -- commands ------------------------------------------------------------------------


def _out_dir(args, cfg=None) -> Path:
    if args.out_dir:
        return Path(args.out_dir)
    if cfg is not None and cfg.get("output", {}).get("dir"):
        return Path(cfg["output"]["dir"])
    return Path(os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR)


def _progress(quiet: bool, every: int = 50):
    if quiet:
        return None

    def cb(stage, n_j, state, br):
        if n_j == 1 or n_j % every == 0:
            print(f"[{stage}] n_j={n_j} L_F={br.L_F:.3e} L_Q={br.L_Q:.3e}", file=sys.stderr)

    return cb


def cmd_solve(args) -> int:
    raw = read_json(args.config)
    if isinstance(raw, dict) and raw.get("format") == "dqc-params":
        raw = raw.get("config", {})
    cfg = resolve_config(raw, seed=args.seed)
    out = _out_dir(args, cfg)
    result = run(cfg, threads=args.threads, callback=_progress(args.quiet))
    xs = output_grid(cfg, result.final.models)
    head, rows = solution_table(result, xs)
    write_atomic(out / "solution.csv", table_csv(head, rows))
    write_atomic(out / "metrics.csv", metrics_csv(result, timing=args.timing))
    write_atomic(out / "params.json", json.dumps(params_document(result), indent=2) + "\n")
    for s in result.stages:
        print(f"{s.name}: L_F={s.L_F:.6e} L_Q={s.L_Q:.6e}")
    print(f"artifacts written to {out}")
    return EXIT_OK


def _grid_args(args, cfg) -> np.ndarray:
    lo, hi = cfg["problem"].get("domain", (0.0, 1.0))
    a = lo if args.x_from is None else args.x_from
    b = hi if args.x_to is None else args.x_to
    if args.points < 1:
        raise ConfigurationError("--points must be >= 1")
    return np.linspace(float(a), float(b), args.points) if args.points > 1 else np.array([float(a)])


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        write_atomic(Path(out), text)
    else:
        sys.stdout.write(text)


def cmd_eval(args) -> int:
    cfg, models, state = load_params(args.params)
    xs, skipped = models_domain_filter(models, _grid_args(args, cfg))
    if skipped:
        print(f"warning: {skipped} point(s) outside the feature-map domain were skipped", file=sys.stderr)
    from .trainer import evaluate_solution

    names = cfg["problem"]["functions"]
    cols = [xs, *evaluate_solution(models, state, xs)] if xs.size else []
    head = ["x"] + list(names)
    ref = build_reference(cfg) if args.reference else None
    if ref is not None and xs.size:
        cols += list(ref(xs))
        head += [f"ref_{n}" for n in names]
    rows = np.column_stack(cols) if xs.size else np.zeros((0, len(head)))
    _emit(table_csv(head, rows), args.out)
    return EXIT_OK


def cmd_reference(args) -> int:
    cfg = resolve_config(get_preset(args.preset))
    ref = build_reference(cfg)
    if ref is None:
        raise ConfigurationError(f"preset {args.preset!r} has no reference solution")
    _emit(ref.solution(_grid_args(args, cfg)).to_csv(), args.out)
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in preset_names():
        print(describe(name) if args.verbose else f"{name}: {get_preset(name).get('description', '')}")
    return EXIT_OK


# -- entry point -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="override the configuration seed")
    common.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    common.add_argument("--out-dir", default=None, help=f"artifact directory (default ${OUT_DIR_ENV} or ./{DEFAULT_OUT_DIR})")

    p = argparse.ArgumentParser(prog="dqc", description="Solve differential equations with differentiable quantum circuits.")
    p.add_argument("--version", action="version", version=f"dqc {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="train from a JSON configuration")
    s.add_argument("config", help="configuration file (or a params.json to re-run its echoed config)")
    s.add_argument("--timing", action="store_true", help="add wall-clock elapsed_ms to metrics.csv")
    s.add_argument("--quiet", action="store_true", help="no progress lines on stderr")
    s.set_defaults(func=cmd_solve)

    for name, func, target in (("eval", cmd_eval, "params"), ("reference", cmd_reference, "preset")):
        e = sub.add_parser(name, parents=[common],
                           help="sample a trained solution" if name == "eval" else "emit a preset's reference solution")
        e.add_argument(target)
        e.add_argument("--from", dest="x_from", type=float, default=None)
        e.add_argument("--to", dest="x_to", type=float, default=None)
        e.add_argument("--points", type=int, default=200)
        e.add_argument("--out", default=None, help="CSV path (default stdout)")
        if name == "eval":
            e.add_argument("--reference", action="store_true", help="append reference columns")
        e.set_defaults(func=func)

    ls = sub.add_parser("presets", help="list built-in presets")
    ls.add_argument("--verbose", "-v", action="store_true", help="show per-stage hyperparameters")
    ls.set_defaults(func=cmd_presets)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigurationError, DomainError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as e:
        where = "" if e.x is None else f" (x={e.x})"
        print(f"numeric error: {e}{where}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConvergenceError as e:
        extra = "" if e.residual is None else f" (residual {e.residual:.3e})"
        print(f"not converged: {e}{extra}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except Exception as e:  # noqa: BLE001 - last-resort exit code
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
