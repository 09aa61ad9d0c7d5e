"""Nonholonomic geodesics from an adapted orthonormal coframe."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from . import dual as D
from .dual import DiffEngine
from .exterior import levi_civita_connection
from .structures import NHStructure


class IntegrationError(RuntimeError):
    """Step failure or chart exit."""


@dataclass(frozen=True)
class IntegratorConfig:
    method: str = "rk4"
    dt: float = 1e-3
    t_end: float = 10.0
    rtol: float = 1e-11
    atol: float = 1e-12

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"unknown method {self.method!r}")
        if not (self.dt > 0 and self.t_end >= 0):
            raise ValueError("need dt > 0 and t_end >= 0")

    @property
    def n_steps(self) -> int:
        return math.ceil(self.t_end / self.dt - 1e-9)


@dataclass
class Trajectory:
    t: np.ndarray
    y: np.ndarray
    names: list[str]

    def column(self, name):
        return self.y[..., self.names.index(name)]


def rk4(rhs: Callable, y0, cfg: IntegratorConfig, guard: Callable | None = None,
        project: Callable | None = None):
    """Fixed-step RK4; returns ceil(t_end/dt)+1 samples, the last one at t_end.

    ``y0`` may carry leading batch axes when ``rhs`` broadcasts over them.
    """
    n = cfg.n_steps
    t = np.linspace(0.0, n * cfg.dt, n + 1)
    if n:
        t[-1] = cfg.t_end if abs(n * cfg.dt - cfg.t_end) < cfg.dt else t[-1]
    y = np.empty((n + 1,) + np.shape(y0))
    y[0] = y0
    for i in range(n):
        h = t[i + 1] - t[i]
        yi = y[i]
        k1 = rhs(t[i], yi)
        k2 = rhs(t[i] + h / 2, yi + h / 2 * k1)
        k3 = rhs(t[i] + h / 2, yi + h / 2 * k2)
        k4 = rhs(t[i] + h, yi + h * k3)
        yn = yi + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(yn)):
            raise IntegrationError(f"non-finite state at t={t[i + 1]:.6g}")
        if project is not None:
            yn = project(yn)
        if guard is not None:
            guard(t[i + 1], yn)
        y[i + 1] = yn
    return t, y


def integrate_ode(rhs: Callable, y0, cfg: IntegratorConfig, guard=None, project=None):
    y0 = np.asarray(y0, dtype=float)
    if cfg.method == "rk4":
        return rk4(rhs, y0, cfg, guard, project)
    sol = solve_ivp(rhs, (0.0, cfg.t_end), y0, method="RK45", rtol=cfg.rtol, atol=cfg.atol,
                    t_eval=np.linspace(0.0, cfg.t_end, cfg.n_steps + 1))
    if not sol.success:
        raise IntegrationError(sol.message)
    y = sol.y.T
    if guard is not None:
        for ti, yi in zip(sol.t, y):
            guard(ti, yi)
    return sol.t, y


# ------------------------------------------------------------------ geodesic equations

def nh_geodesic_rhs(s: NHStructure, q, v, engine: DiffEngine | None = None):
    """(q_dot, v_dot) with q_dot = sum v_i e_i and v_dot_i = -sum_j v_j omega_ij(q_dot)."""
    r = s.rank
    A = s.coframe(q)
    B = D.inv(A)
    qdot = D.einsum("...ai,...i->...a", B[..., :, :r], v)
    Gam = levi_civita_connection(s.coframe, q, engine)  # omega_IJ(e_K)
    eta = D.einsum("...ka,...a->...k", A, qdot)
    w = D.einsum("...ijk,...k->...ij", Gam[..., :r, :r, :], eta)  # omega_ij(q_dot)
    vdot = -D.einsum("...ij,...j->...i", w, v)
    return qdot, vdot


def horizontality_residual(s: NHStructure, q, qdot) -> float:
    A = np.asarray(s.coframe(q))
    return float(np.max(np.abs(A[s.rank:] @ qdot)))


def integrate_geodesic(s: NHStructure, q0, v0, cfg: IntegratorConfig = IntegratorConfig(),
                       engine: DiffEngine | None = None, chart_guard: Callable | None = None,
                       horizontality_tol: float = 1e-10) -> Trajectory:
    n, r = s.dim, s.rank

    def rhs(t, y):
        qd, vd = nh_geodesic_rhs(s, y[..., :n], y[..., n:], engine)
        return np.concatenate([qd, vd], axis=-1)

    def guard(t, y):
        q, v = y[..., :n], y[..., n:]
        A = np.asarray(s.coframe(q))
        qd = np.einsum("...ai,...i->...a", np.linalg.inv(A)[..., :, :r], v)
        res = np.abs(np.einsum("...ka,...a->...k", A[..., r:, :], qd)).max()
        if res > horizontality_tol * max(1.0, np.abs(v).max()):
            raise IntegrationError(f"horizontality residual {res:.3g} at t={t:.6g}")
        if chart_guard is not None:
            chart_guard(t, q)

    y0 = np.concatenate([np.asarray(q0, float), np.asarray(v0, float)], axis=-1)
    t, y = integrate_ode(rhs, y0, cfg, guard)
    energy = 0.5 * np.sum(y[..., n:] ** 2, axis=-1)
    names = [f"q{i}" for i in range(n)] + [f"v{i + 1}" for i in range(r)]
    return Trajectory(t, np.concatenate([y, energy[..., None]], axis=-1), names + ["energy"])


def penny_circle_period(J: float, B: float) -> float:
    """Time for theta to advance by 2 pi when theta_dot = sqrt(2) B / sqrt(J)."""
    return 2 * np.pi * np.sqrt(J) / (np.sqrt(2.0) * abs(B))


def collinearity_residual(xy) -> float:
    """Largest distance of planar points from their principal line, relative to the path length."""
    xy = np.asarray(xy, dtype=float)
    c = xy - xy.mean(0)
    u, s, vt = np.linalg.svd(c, full_matrices=False)
    return float(s[1] / max(s[0], 1e-300)) if len(s) > 1 else 0.0


def line_distance(xy) -> float:
    """Max distance of points from the line through the first and last point."""
    xy = np.asarray(xy, dtype=float)
    d = xy[-1] - xy[0]
    L = np.linalg.norm(d)
    if L == 0:
        return float(np.max(np.linalg.norm(xy - xy[0], axis=1)))
    nrm = np.array([-d[1], d[0]]) / L
    return float(np.max(np.abs((xy - xy[0]) @ nrm)))
