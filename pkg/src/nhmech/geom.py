"""SO(3) kinematics, sphere and Euler-angle charts.

Conventions: ``Rdot = hat(omega) R = R hat(Omega)`` with spatial ``omega = R Omega``;
the Poisson vector is the third row of ``R`` so that ``gamma_dot = gamma x Omega``.
All helpers accept batched inputs (leading axes) and dual numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dual as D
from .dual import DiffEngine

POLAR_CAP = 0.05

# chart id -> (dimension, index of the polar angle or None)
CHARTS: dict[str, tuple[int, int | None]] = {
    "s2": (2, 0),
    "ts2": (4, 0),
    "so3-euler": (3, 1),
    "tso3-euler": (6, 1),
    "penny": (4, None),
    "engel": (4, None),
    "r4": (4, None),
}


class ChartError(ValueError):
    """A point lies outside the usable part of its chart."""


@dataclass(frozen=True)
class ChartPoint:
    chart: str
    coords: np.ndarray = field(repr=False)
    theta_min: float = POLAR_CAP

    def __post_init__(self):
        if self.chart not in CHARTS:
            raise ChartError(f"unknown chart {self.chart!r}")
        c = np.asarray(self.coords, dtype=float)
        object.__setattr__(self, "coords", c)
        dim, polar = CHARTS[self.chart]
        if c.shape[-1] != dim:
            raise ChartError(f"chart {self.chart} expects {dim} coordinates, got {c.shape[-1]}")
        if not np.all(np.isfinite(c)):
            raise ChartError("non-finite coordinates")
        if polar is not None:
            th = c[..., polar]
            if np.any(th <= self.theta_min) or np.any(th >= np.pi - self.theta_min):
                raise ChartError(f"polar angle outside ({self.theta_min}, pi-{self.theta_min})")


# ------------------------------------------------------------------ so(3)

def hat(v):
    z = 0.0 * v[..., 0]
    return D.array([[z, -v[..., 2], v[..., 1]],
                    [v[..., 2], z, -v[..., 0]],
                    [-v[..., 1], v[..., 0], z]])


def unhat(m):
    return D.stack([m[..., 2, 1], m[..., 0, 2], m[..., 1, 0]], axis=-1)


def poisson_vector(R):
    return R[..., 2, :]


def horizontal_lift_so3(gamma, gdot, tol: float = 1e-9):
    """Body angular velocity orthogonal to gamma that produces ``gdot``."""
    if np.any(np.abs(D.real(D.dot(gamma, gdot))) > tol):
        raise ValueError("gdot is not tangent to the sphere at gamma")
    return D.cross(gdot, gamma)


def expm_so3(w):
    """Rodrigues formula for exp(hat(w)); float arrays only."""
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w, axis=-1)[..., None, None]
    K = hat(w)
    small = th < 1e-8
    ths = np.where(small, 1.0, th)
    a = np.where(small, 1.0 - th**2 / 6.0, np.sin(ths) / ths)
    b = np.where(small, 0.5 - th**2 / 24.0, (1.0 - np.cos(ths)) / ths**2)
    return np.eye(3) + a * K + b * (K @ K)


def is_rotation(R, tol: float = 1e-10) -> bool:
    R = np.asarray(R, dtype=float)
    ortho = np.abs(np.swapaxes(R, -1, -2) @ R - np.eye(3)).max()
    return bool(ortho < tol and np.all(np.abs(np.linalg.det(R) - 1.0) < tol))


def rot_z(a):
    c, s = D.cos(a), D.sin(a)
    z, o = 0.0 * c, 0.0 * c + 1.0
    return D.array([[c, -s, z], [s, c, z], [z, z, o]])


def rot_x(a):
    c, s = D.cos(a), D.sin(a)
    z, o = 0.0 * c, 0.0 * c + 1.0
    return D.array([[o, z, z], [z, c, -s], [z, s, c]])


# ------------------------------------------------------------------ S^2 chart

def sphere_point(theta, phi):
    st = D.sin(theta)
    return D.stack([st * D.cos(phi), st * D.sin(phi), D.cos(theta)], axis=-1)


def sphere_frame(theta, phi):
    """Orthonormal tangent frame (e1, e2) with e1 x e2 = gamma."""
    ct, st, cp, sp = D.cos(theta), D.sin(theta), D.cos(phi), D.sin(phi)
    e1 = D.stack([ct * cp, ct * sp, -st], axis=-1)
    e2 = D.stack([-sp, cp, 0.0 * cp], axis=-1)
    return e1, e2


def frame_rotation(theta, phi):
    """R(gamma) with rows e1, e2, gamma; its third row is gamma."""
    e1, e2 = sphere_frame(theta, phi)
    return D.stack([e1, e2, sphere_point(theta, phi)], axis=-2)


def sphere_angles(gamma):
    g = np.asarray(gamma, dtype=float)
    return np.arccos(np.clip(g[..., 2], -1.0, 1.0)), np.mod(np.arctan2(g[..., 1], g[..., 0]), 2 * np.pi)


# ------------------------------------------------------------------ Euler chart on SO(3)

def euler_rotation(q):
    """R = Rz(psi) Rx(theta) Rz(phi) for q = (psi, theta, phi)."""
    return rot_z(q[..., 0]) @ rot_x(q[..., 1]) @ rot_z(q[..., 2])


def right_coframe(q):
    """Rows are the right-invariant forms rho_i (spatial angular velocity) in dq."""
    e3 = np.array([0.0, 0.0, 1.0])
    e1 = np.array([1.0, 0.0, 0.0])
    Rz = rot_z(q[..., 0])
    Rzx = Rz @ rot_x(q[..., 1])
    c0 = D.broadcast_to(e3, D.shape_of(q)[:-1] + (3,))
    c1 = D.einsum("...ij,j->...i", Rz, e1)
    c2 = D.einsum("...ij,j->...i", Rzx, e3)
    return D.stack([c0, c1, c2], axis=-1)


def left_coframe(q):
    """Rows are the left-invariant forms lambda_i (body angular velocity) in dq."""
    return D.swapaxes(euler_rotation(q), -1, -2) @ right_coframe(q)


def directional_derivative(f, p: ChartPoint, k: int, engine: DiffEngine | None = None):
    engine = engine or DiffEngine()
    return engine.derivative(f, p.coords, k)
