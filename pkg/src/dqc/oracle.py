"""Classical reference solutions: closed forms, RK4, and a quasi-1D nozzle time-marcher."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import expm

from .errors import ConfigurationError, ConvergenceError, NumericError

PROVENANCE = ("analytic", "rk4", "time-marched")


@dataclass
class ReferenceSolution:
    grid: np.ndarray
    values: dict[str, np.ndarray]
    provenance: str
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        if self.provenance not in PROVENANCE:
            raise ConfigurationError(f"unknown provenance {self.provenance!r}")
        if np.any(np.diff(self.grid) < 0):
            raise ConfigurationError("reference grid must be sorted")
        self.values = {k: np.asarray(v, dtype=float) for k, v in self.values.items()}
        for k, v in self.values.items():
            if v.shape != self.grid.shape:
                raise ConfigurationError(f"reference column {k!r} does not match the grid")
            if not np.all(np.isfinite(v)):
                raise NumericError(f"reference column {k!r} has non-finite values")

    @property
    def names(self) -> list[str]:
        return list(self.values)

    def column(self, k: int) -> np.ndarray:
        return self.values[self.names[k]]

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        buf.write(f"# provenance: {self.provenance}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x"] + self.names)
        for i, x in enumerate(self.grid):
            w.writerow([repr(float(x))] + [repr(float(self.values[k][i])) for k in self.names])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path) -> "ReferenceSolution":
        lines = Path(path).read_text().splitlines()
        if not lines or not lines[0].startswith("# provenance:"):
            raise ConfigurationError("reference CSV lacks a provenance header line")
        prov = lines[0].split(":", 1)[1].strip()
        rows = list(csv.reader(lines[1:]))
        header, body = rows[0], np.array(rows[1:], dtype=float).reshape(-1, len(rows[0]))
        return cls(body[:, 0], {h: body[:, j + 1] for j, h in enumerate(header[1:])}, prov)


# -- closed forms ------------------------------------------------------------


def analytic_damped(x, lam: float = 8.0, kappa: float = 0.1, u0: float = 1.0):
    """exp(-kappa lam x) cos(lam x) + (u0 - 1): solves u' + lam u (kappa + tan(lam x)) = 0 for u0 = 1."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-kappa * lam * x) * np.cos(lam * x) + (u0 - 1.0)
    return float(out) if out.ndim == 0 else out


def analytic_damped_dx(x, lam: float = 8.0, kappa: float = 0.1):
    x = np.asarray(x, dtype=float)
    e = np.exp(-kappa * lam * x)
    return -kappa * lam * e * np.cos(lam * x) - lam * e * np.sin(lam * x)


def coupled_matrix(lambda1: float, lambda2: float) -> np.ndarray:
    return np.array([[lambda2, lambda1], [-lambda1, -lambda2]], dtype=float)


def analytic_coupled(x, lambda1: float = 5.0, lambda2: float = 3.0, u0_vec=(0.5, 0.0)):
    """u(x) = expm(A x) u0 for u1' = l1 u2 + l2 u1, u2' = -l2 u2 - l1 u1."""
    a = coupled_matrix(lambda1, lambda2)
    u0 = np.asarray(u0_vec, dtype=float)
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    out = np.array([u0.copy() if xi == 0 else expm(a * xi) @ u0 for xi in xs])
    if np.ndim(x) == 0:
        return float(out[0, 0]), float(out[0, 1])
    return out[:, 0], out[:, 1]


# -- Runge-Kutta -----------------------------------------------------------------


def rk4_integrate(system: Callable, u0, grid, *, x0: Optional[float] = None, max_step: float = 1e-4,
                  names: Optional[Sequence[str]] = None) -> ReferenceSolution:
    """Classic RK4 for u' = system(u, x) from (x0, u0), sampled at ``grid``.

    Each gap between sample points is split into equal steps of at most
    ``max_step``.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) < 0):
        raise ConfigurationError("rk4 grid must be nonempty and sorted")
    x = float(grid[0] if x0 is None else x0)
    if grid[0] < x:
        raise ConfigurationError("rk4 integrates forward: grid must start at or after x0")
    u = np.atleast_1d(np.asarray(u0, dtype=float)).copy()
    out = np.empty((grid.size, u.size))

    def g(uu, xx):
        return np.asarray(system(uu, xx), dtype=float).reshape(u.shape)

    for i, target in enumerate(grid):
        gap = target - x
        if gap > 0:
            n = max(1, math.ceil(gap / max_step - 1e-12))
            h = gap / n
            for s in range(n):
                xs = x + s * h
                k1 = g(u, xs)
                k2 = g(u + 0.5 * h * k1, xs + 0.5 * h)
                k3 = g(u + 0.5 * h * k2, xs + 0.5 * h)
                k4 = g(u + h * k3, xs + h)
                u = u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
                if not np.all(np.isfinite(u)):
                    xf = xs + h
                    raise NumericError(f"RK4 state became non-finite at x={xf!r}", x=xf)
            x = float(target)
        out[i] = u
    names = list(names) if names else [f"f{k + 1}" for k in range(u.size)]
    return ReferenceSolution(grid, {nm: out[:, k] for k, nm in enumerate(names)}, "rk4")


def rhs_system(rhs_texts: Sequence[str], names: Sequence[str]) -> Callable:
    """u' = g(u, x) from one expression per function in ``names`` and x."""
    from .despec import eval_ast, parse_residual, referenced

    asts = [parse_residual(t, names) for t in rhs_texts]
    if len(asts) != len(names):
        raise ConfigurationError("need one right-hand side per function")
    for a in asts:
        if any(order for _, order in referenced(a)):
            raise ConfigurationError("right-hand sides may not contain derivatives")

    def g(u, x):
        binding = {k: (float(u[k]), None, None) for k in range(len(names))}
        return np.array([eval_ast(a, binding, float(x)) for a in asts])

    return g


# -- quasi-1D nozzle ---------------------------------------------------------------


@dataclass(frozen=True)
class NozzleProblem:
    gamma: float = 1.4
    throat_coeff: float = 4.95
    rho0: float = 1.0
    T0: float = 1.0
    V0: float = 0.1
    length: float = 1.0

    def area(self, x):
        return 1.0 + self.throat_coeff * (2.0 * np.asarray(x, dtype=float) - 1.0) ** 2

    def dlnA(self, x):
        """d(ln A)/dx."""
        s = 2.0 * np.asarray(x, dtype=float) - 1.0
        return 4.0 * self.throat_coeff * s / (1.0 + self.throat_coeff * s * s)

    def initial_profiles(self, x):
        x = np.asarray(x, dtype=float)
        rho = 1.0 - 0.944 * x
        t = 1.0 - 0.694 * x
        v = (0.1 + 3.27 * x) * np.sqrt(t)
        return rho, t, v

    def key(self) -> str:
        return hashlib.sha256(json.dumps(asdict(self), sort_keys=True).encode()).hexdigest()[:16]


def nozzle_residuals(problem: NozzleProblem, x, rho, t, v, drho, dt, dv) -> np.ndarray:
    """Stationary equations multiplied through by (T - V^2); shape (3, M)."""
    d = problem.dlnA(x)
    g = problem.gamma
    den = t - v * v
    return np.stack([
        den * drho - rho * v * v * d,
        den * dt - t * v * v * (g - 1.0) * d,
        den * dv + t * v * d,
    ])


def _rates(p: NozzleProblem, rho, t, v, dlna, dx, forward: bool):
    """Time derivatives at interior nodes using one-sided differences."""
    if forward:
        dr = (rho[2:] - rho[1:-1]) / dx
        dT = (t[2:] - t[1:-1]) / dx
        dV = (v[2:] - v[1:-1]) / dx
    else:
        dr = (rho[1:-1] - rho[:-2]) / dx
        dT = (t[1:-1] - t[:-2]) / dx
        dV = (v[1:-1] - v[:-2]) / dx
    r, T, V, d = rho[1:-1], t[1:-1], v[1:-1], dlna[1:-1]
    g = p.gamma
    rr = -r * dV - r * V * d - V * dr
    rT = -V * dT - (g - 1.0) * T * (dV + V * d)
    rV = -V * dV - (dT + T * dr / r) / g
    return rr, rT, rV


def _apply_bc(p: NozzleProblem, rho, t, v):
    rho[0] = p.rho0
    t[0] = p.T0
    v[0] = 2.0 * v[1] - v[2]
    for a in (rho, t, v):
        a[-1] = 2.0 * a[-2] - a[-3]


def _march(p: NozzleProblem, n_points: int, courant: float, tol: float, max_steps: int):
    x = np.linspace(0.0, p.length, n_points)
    dx = x[1] - x[0]
    dlna = p.dlnA(x)
    rho, t, v = (a.copy() for a in p.initial_profiles(x))
    worst = math.inf
    for step in range(1, max_steps + 1):
        dt_step = courant * float(np.min(dx / (np.sqrt(t) + np.abs(v))))
        r1, t1, v1 = _rates(p, rho, t, v, dlna, dx, True)
        rp, tp, vp = rho.copy(), t.copy(), v.copy()
        rp[1:-1] += dt_step * r1
        tp[1:-1] += dt_step * t1
        vp[1:-1] += dt_step * v1
        _apply_bc(p, rp, tp, vp)
        r2, t2, v2 = _rates(p, rp, tp, vp, dlna, dx, False)
        ar, at, av = 0.5 * (r1 + r2), 0.5 * (t1 + t2), 0.5 * (v1 + v2)
        rho[1:-1] += dt_step * ar
        t[1:-1] += dt_step * at
        v[1:-1] += dt_step * av
        _apply_bc(p, rho, t, v)
        worst = max(np.max(np.abs(ar)), np.max(np.abs(at)), np.max(np.abs(av)))
        if not math.isfinite(worst) or np.any(t <= 0) or np.any(rho <= 0):
            raise NumericError(f"nozzle time-march diverged at step {step}")
        if worst < tol:
            return x, rho, t, v, step, worst
    raise ConvergenceError(
        f"nozzle time-march did not reach max |d/dt| < {tol} in {max_steps} steps (last {worst:.3e})",
        residual=worst,
    )


def _cache_dir() -> Path:
    root = os.environ.get("DQC_CACHE_DIR")
    return Path(root) if root else Path.home() / ".cache" / "dqc"


def nozzle_steady_reference(problem: NozzleProblem = NozzleProblem(), grid=None, *,
                            n_points: int = 801, courant: float = 0.5, tol: float = 1e-8,
                            max_steps: int = 2_000_000, richardson: bool = True,
                            polish: float = 0.05, cache: bool = True) -> ReferenceSolution:
    """Steady profiles by MacCormack time-marching, sampled on ``grid``.

    With ``richardson`` the march also runs on a mesh with half the spacing;
    the two steady states are combined to cancel the second-order
    discretization error. The extrapolated inlet/outlet nodes leave a thin
    numerical boundary layer; within ``polish`` of either end the profiles
    are re-integrated from the marched interior state with the (regular,
    throat-free) stationary equations. Marched profiles are cached on disk
    per problem.
    """
    if n_points < 5:
        raise ConfigurationError("nozzle mesh needs at least 5 points")
    meshes = [n_points, 2 * n_points - 1] if richardson else [n_points]
    sols = []
    info = {}
    for m in meshes:
        key = f"nozzle-{problem.key()}-{m}-{courant}-{tol}.npz"
        path = _cache_dir() / key
        if cache and path.exists():
            data = np.load(path)
            sols.append((data["x"], data["rho"], data["T"], data["V"]))
            info[f"steps_{m}"] = int(data["steps"])
            continue
        x, rho, t, v, steps, worst = _march(problem, m, courant, tol, max_steps)
        sols.append((x, rho, t, v))
        info[f"steps_{m}"] = steps
        if cache:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp.npz")
            np.savez(tmp, x=x, rho=rho, T=t, V=v, steps=steps)
            os.replace(tmp, path)
    x, rho, t, v = sols[0]
    if richardson:
        xf, rf, tf, vf = sols[1]
        rho = (4.0 * rf[::2] - rho) / 3.0
        t = (4.0 * tf[::2] - t) / 3.0
        v = (4.0 * vf[::2] - v) / 3.0
    if polish > 0:
        rho, t, v = _polish_ends(problem, x, np.stack([rho, t, v]), polish)
    splines = [CubicSpline(x, a) for a in (rho, t, v)]
    xs = x if grid is None else np.asarray(grid, dtype=float)
    if xs.min() < 0 or xs.max() > problem.length:
        raise ConfigurationError("nozzle grid leaves [0, length]")
    out = ReferenceSolution(xs, {"rho": splines[0](xs), "T": splines[1](xs), "V": splines[2](xs)},
                            "time-marched", info)
    out.info["splines"] = splines
    return out


def _steady_rhs(problem: NozzleProblem):
    g = problem.gamma

    def rhs(u, x):
        rho, t, v = u
        d = float(problem.dlnA(x))
        den = t - v * v
        return np.array([rho * v * v * d / den, t * v * v * (g - 1.0) * d / den, -t * v * d / den])

    return rhs


def _polish_ends(problem: NozzleProblem, x: np.ndarray, u: np.ndarray, width: float):
    """Replace values within ``width`` of both ends by RK4 from the interior."""
    u = u.copy()
    rhs = _steady_rhs(problem)
    lo = int(np.searchsorted(x, x[0] + width))
    hi = int(np.searchsorted(x, x[-1] - width)) - 1
    if not 0 < lo < hi < x.size - 1:
        raise ConfigurationError("polish width leaves no interior")
    # inlet side, integrated backwards in s = -x
    back = rk4_integrate(lambda w, s: -rhs(w, -s), u[:, lo], -x[lo::-1], max_step=1e-4)
    for j, nm in enumerate(back.names):
        u[j, lo::-1] = back.values[nm]
    fwd = rk4_integrate(rhs, u[:, hi], x[hi:], max_step=1e-4)
    for j, nm in enumerate(fwd.names):
        u[j, hi:] = fwd.values[nm]
    return u[0], u[1], u[2]


def nozzle_reference_residuals(problem: NozzleProblem, ref: ReferenceSolution, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    sr, st, sv = ref.info["splines"]
    return nozzle_residuals(problem, x, sr(x), st(x), sv(x), sr(x, 1), st(x, 1), sv(x, 1))


def isentropic_mach(area_ratio: float, supersonic: bool, gamma: float = 1.4) -> float:
    """Mach number from A/A* by bracketing the area-Mach relation."""
    from scipy.optimize import brentq

    g = gamma

    def f(m):
        return (1.0 / m) * ((2 / (g + 1)) * (1 + 0.5 * (g - 1) * m * m)) ** ((g + 1) / (2 * (g - 1))) - area_ratio

    if abs(area_ratio - 1.0) < 1e-14:
        return 1.0
    return brentq(f, 1.0, 50.0) if supersonic else brentq(f, 1e-6, 1.0)
