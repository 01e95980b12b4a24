"""Built-in experiment configurations.

Each preset is a complete run configuration (see the config schema); user
files may name one under ``"preset"`` and override any section.
"""
from __future__ import annotations

import copy

from .errors import ConfigurationError


def _damped(lam: float) -> dict:
    return {
        "description": f"damped oscillator du/dx + {lam:g} u (0.1 + tan({lam:g} x)) = 0, u(0) = 1",
        "problem": {
            "functions": ["u"],
            "residuals": [f"du/dx + {lam:g}*u*(0.1 + tan({lam:g}*x))"],
            "boundary": [{"function": "u", "x0": 0.0, "u0": 1.0}],
            "domain": [0.0, 0.9],
            "reference": {"kind": "damped", "lambda": lam, "kappa": 0.1, "u0": 1.0},
        },
        "grid": {"kind": "equidistant", "points": 20, "intervals": [[0.0, 0.9]]},
        "model": {
            "qubits": 6,
            "feature_map": {"kind": "chebyshev_tower"},
            "ansatz": {"kind": "hea", "depth": 5},
            "cost": {"kind": "total_z"},
            "boundary": "floating",
        },
        "loss": {"distance": "MSE"},
        "optimizer": {"learning_rate": 0.01, "n_iter": 250},
    }


_NONTRIVIAL_RESIDUAL = "du/dx - 4*u + 6*u^2 - sin(50*x) - u*cos(25*x) + 0.5"
_NONTRIVIAL_RHS = "4*u - 6*u^2 + sin(50*x) + u*cos(25*x) - 0.5"


def _nontrivial() -> dict:
    return {
        "description": "rapidly oscillating nonlinear ODE, u(0) = 0.75",
        "problem": {
            "functions": ["u"],
            "residuals": [_NONTRIVIAL_RESIDUAL],
            "boundary": [{"function": "u", "x0": 0.0, "u0": 0.75}],
            "domain": [0.0, 0.9],
            "reference": {"kind": "rk4", "rhs": [_NONTRIVIAL_RHS], "u0": [0.75], "x0": 0.0},
        },
        "grid": {"kind": "equidistant", "points": 100, "intervals": [[0.0, 0.9]]},
        "model": {
            "qubits": 6,
            "feature_map": {"kind": "chebyshev_tower"},
            "ansatz": {"kind": "hea", "depth": 5},
            "cost": {"kind": "total_z"},
            "boundary": "floating",
        },
        "optimizer": {"learning_rate": 0.01, "n_iter": 200},
    }


def _nontrivial_ee() -> dict:
    cfg = _nontrivial()
    cfg["description"] = ("nontrivial ODE in two stages: Chebyshev tower, then the same angles "
                          "under an evolution-enhanced map (random Ising, tau = 2)")
    cfg["stages"] = [
        {"name": "tower"},
        {
            "name": "evolution",
            "model": {"feature_map": {"evolution": {"hamiltonian": {"kind": "random_ising"}, "tau": 2.0}}},
        },
    ]
    return cfg


def _coupled(mode: str) -> dict:
    return {
        "description": f"coupled linear system, lambda1 = 5, lambda2 = 3, {mode} boundary",
        "problem": {
            "functions": ["u1", "u2"],
            "residuals": ["du1/dx - 5*u2 - 3*u1", "du2/dx + 3*u2 + 5*u1"],
            "boundary": [{"function": "u1", "x0": 0.0, "u0": 0.5},
                         {"function": "u2", "x0": 0.0, "u0": 0.0}],
            "domain": [0.0, 0.9],
            "reference": {"kind": "coupled", "lambda1": 5.0, "lambda2": 3.0, "u0": [0.5, 0.0]},
        },
        "grid": {"kind": "equidistant", "points": 20, "intervals": [[0.0, 0.9]]},
        "model": {
            "qubits": 6,
            "feature_map": {"kind": "chebyshev_tower"},
            "ansatz": {"kind": "hea", "depth": 5},
            "cost": {"kind": "total_z"},
            "boundary": mode,
        },
        "optimizer": {"learning_rate": 0.02, "n_iter": 250},
    }


_DLNA = "19.8*(2*x - 1)/(1 + 4.95*(2*x - 1)^2)"


def _nozzle() -> dict:
    return {
        "description": ("quasi-1D convergent-divergent nozzle, subsonic-supersonic branch; "
                        "stationary equations multiplied through by T - V^2"),
        "problem": {
            "functions": ["rho", "T", "V"],
            "auxiliaries": {"dlnA": _DLNA},
            "residuals": [
                "(T - V^2)*drho/dx - rho*V^2*dlnA",
                "(T - V^2)*dT/dx - T*V^2*(1.4 - 1)*dlnA",
                "(T - V^2)*dV/dx + T*V*dlnA",
            ],
            "boundary": [{"function": "rho", "x0": 0.0, "u0": 1.0},
                         {"function": "T", "x0": 0.0, "u0": 1.0},
                         {"function": "V", "x0": 0.0, "u0": 0.1}],
            "domain": [0.0, 0.9],
            "reference": {"kind": "nozzle", "gamma": 1.4, "throat_coeff": 4.95},
        },
        "grid": {"kind": "equidistant", "points": 20, "intervals": [[0.0, 0.4]]},
        "model": {
            "qubits": 6,
            "feature_map": {"kind": "chebyshev_sparse"},
            "ansatz": {"kind": "hea", "depth": 6},
            "cost": {"kind": "total_z"},
            "boundary": "floating",
        },
        "optimizer": {"learning_rate": 0.01, "n_iter": 200},
        "stages": [
            {"name": "subsonic"},
            {
                "name": "full",
                "grid": {"kind": "equidistant", "points": 20, "intervals": [[0.0, 0.4], [0.6, 0.9]]},
                "optimizer": {"learning_rate": 0.005, "n_iter": 600},
                "loss": {"schedule": {"kind": "reverse_sigmoid", "n_drop": 150, "delta": 0.05}},
                "regularization": {
                    "from_previous_stage": {"kind": "equidistant", "points": 20, "intervals": [[0.0, 0.4]]},
                    "from_reference": {"kind": "equidistant", "points": 5, "intervals": [[0.6, 0.9]],
                                       "open": True},
                },
            },
        ],
    }


PRESETS = {
    "damped_lambda8": lambda: _damped(8.0),
    "damped_lambda20": lambda: _damped(20.0),
    "nontrivial": _nontrivial,
    "nontrivial_evolution_enhanced": _nontrivial_ee,
    "coupled": lambda: _coupled("floating"),
    "coupled_floating": lambda: _coupled("floating"),
    "coupled_pinned": lambda: _coupled("pinned"),
    "coupled_optimized": lambda: _coupled("optimized"),
    "nozzle": _nozzle,
}


def preset_names() -> list[str]:
    return list(PRESETS)


def get_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}")
    return copy.deepcopy(PRESETS[name]())


def _intervals_text(iv) -> str:
    if len(iv) == 2 and not isinstance(iv[0], list):
        iv = [iv]
    return " and ".join(f"({a:g}, {b:g})" for a, b in iv)


def _stage_line(cfg: dict) -> str:
    g, o, m = cfg["grid"], cfg.get("optimizer", {}), cfg["model"]
    fm = m["feature_map"]["kind"] + ("+evolution" if m["feature_map"].get("evolution") else "")
    each = " each" if len(g.get("intervals", [])) > 1 and isinstance(g["intervals"][0], list) else ""
    parts = [
        f"grid {g['kind']} {_intervals_text(g.get('intervals', [0, 1]))} with {g['points']} points{each}",
        f"N={m['qubits']} {fm} HEA d={m['ansatz'].get('depth')} {m.get('boundary', 'floating')}",
        f"n_iter={o.get('n_iter', 250)} lr={o.get('learning_rate', 0.01):g}",
    ]
    sch = cfg.get("loss", {}).get("schedule")
    if sch and sch["kind"] == "reverse_sigmoid":
        parts.append(f"regularization drop near n_j={sch['n_drop']}")
    return "; ".join(parts)


def describe(name: str) -> str:
    from .config import stage_configs

    cfg = get_preset(name)
    lines = [f"{name}: {cfg.get('description', '')}"]
    for st in stage_configs(cfg):
        lines.append(f"  {st['stage_name']}: {_stage_line(st)}")
    return "\n".join(lines)
