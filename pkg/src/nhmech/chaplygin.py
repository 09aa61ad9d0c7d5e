"""Veselova system, Chaplygin marble, rubber ball and homogeneous sphere in (L, gamma) form.

States are arrays ``y = (L, gamma)`` of shape (..., 6).  Every right-hand side is
written with the helpers of :mod:`nhmech.dual`, so divergences and multipliers can
be differentiated exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dual as D
from .dual import DiffEngine
from .geom import sphere_frame, sphere_point

SYSTEMS = ("veselova", "marble", "rubber", "homogeneous")


class ConstraintViolation(ValueError):
    pass


@dataclass(frozen=True)
class BodyParams:
    I1: float = 1.0
    I2: float = 2.0
    I3: float = 3.0
    mu: float = 1.0
    r: float = 1.0

    def __post_init__(self):
        if min(self.I1, self.I2, self.I3) <= 0:
            raise ValueError("principal inertias must be positive")
        if self.mu < 0 or self.r < 0:
            raise ValueError("mass and radius must be non-negative")

    @property
    def A(self) -> np.ndarray:
        return np.array([self.I1, self.I2, self.I3])

    @property
    def mr2(self) -> float:
        return self.mu * self.r * self.r

    @property
    def At(self) -> np.ndarray:
        """Diagonal of A + mu r^2 id."""
        return self.A + self.mr2

    def with_r(self, r: float) -> "BodyParams":
        return BodyParams(self.I1, self.I2, self.I3, self.mu, r)


def split(y):
    return y[..., :3], y[..., 3:]


def join(L, g):
    return D.concatenate([L, g], axis=-1)


# ------------------------------------------------------------------ Veselova

def veselova_multiplier(p: BodyParams, L, g, tol: float | None = None):
    """lambda = (L, A^-1 gamma x A^-1 L) / (gamma, A^-1 gamma)."""
    u = g / p.A
    Om = L / p.A
    if tol is not None and np.any(np.abs(D.real(D.dot(Om, g))) > tol):
        raise ConstraintViolation("(A^-1 L, gamma) != 0")
    return D.dot(L, D.cross(u, Om)) / D.dot(g, u)


def veselova_rhs(p: BodyParams, y, tol: float | None = None):
    L, g = split(y)
    Om = L / p.A
    lam = veselova_multiplier(p, L, g, tol)
    return join(D.cross(L, Om) + lam[..., None] * g, D.cross(g, Om))


# ------------------------------------------------------------------ marble

def marble_L_of_omega(p: BodyParams, g, Om):
    return p.At * Om - p.mr2 * D.dot(g, Om)[..., None] * g


def marble_omega_of_L(p: BodyParams, g, L):
    """Inverse of marble_L_of_omega: Om = At^-1 L + alpha At^-1 gamma."""
    ug = g / p.At
    alpha = p.mr2 * D.dot(g, L / p.At) / (1.0 - p.mr2 * D.dot(g, ug))
    return L / p.At + alpha[..., None] * ug


def marble_rhs(p: BodyParams, y):
    L, g = split(y)
    Om = marble_omega_of_L(p, g, L)
    return join(D.cross(L, Om), D.cross(g, Om))


# ------------------------------------------------------------------ rubber ball

def rubber_multiplier(p: BodyParams, L, g, engine: DiffEngine | None = None):
    """lambda from d/dt (Om(L, gamma), gamma) = 0 with AD directional derivatives."""
    engine = engine or DiffEngine()
    y = join(L, g)
    Om = marble_omega_of_L(p, g, L)
    z3 = 0.0 * L

    def Omf(x):
        return marble_omega_of_L(p, x[..., 3:], x[..., :3])

    U = D.stack([join(D.cross(L, Om), z3), join(z3, D.cross(g, Om)), join(g, z3)], axis=0)
    dL, dg, dn = engine.directional(Omf, D.broadcast_to(y, (3,) + D.shape_of(y)), U)
    den = D.dot(dn, g)
    if np.any(np.abs(D.real(den)) < 1e-14):
        raise ZeroDivisionError("rubber multiplier denominator vanishes")
    return -(D.dot(dL, g) + D.dot(dg, g)) / den


def rubber_rhs(p: BodyParams, y, engine: DiffEngine | None = None):
    L, g = split(y)
    Om = marble_omega_of_L(p, g, L)
    lam = rubber_multiplier(p, L, g, engine)
    return join(D.cross(L, Om) + lam[..., None] * g, D.cross(g, Om))


def omega_of(system: str, p: BodyParams, y):
    L, g = split(y)
    if system == "veselova":
        return L / p.A
    if system in ("marble", "rubber", "homogeneous"):
        return marble_omega_of_L(p, g, L)
    raise KeyError(f"unknown system {system!r}")


def rhs_of(system: str, p: BodyParams, engine: DiffEngine | None = None):
    if system == "veselova":
        return lambda y: veselova_rhs(p, y)
    if system in ("marble", "homogeneous"):
        return lambda y: marble_rhs(p, y)
    if system == "rubber":
        return lambda y: rubber_rhs(p, y, engine)
    raise KeyError(f"unknown system {system!r}; choose from {SYSTEMS}")


# ------------------------------------------------------------------ integrals

def integrals(system: str, p: BodyParams, y) -> dict:
    """First integrals registered for each system (plain float arrays)."""
    y = np.asarray(y, dtype=float)
    L, g = split(y)
    Om = omega_of(system, p, y)
    out = {"H": 0.5 * np.sum(Om * L, -1), "gg": np.sum(g * g, -1)}
    if system == "veselova":
        out["G"] = np.sum(L * L, -1) - np.sum(L * g, -1) ** 2
        out["constraint"] = np.sum(Om * g, -1)
    elif system == "rubber":
        out["constraint"] = np.sum(Om * g, -1)
    else:
        out["l3"] = np.sum(L * g, -1)
    return out


def drifts(system: str, p: BodyParams, ys) -> dict:
    vals = integrals(system, p, ys)
    return {k: float(np.max(np.abs(v - v[0]))) for k, v in vals.items()}


# ------------------------------------------------------------------ densities

def measure_density(system: str, p: BodyParams, g):
    """Invariant-measure densities on the reduced phase space (functions of gamma)."""
    if system == "veselova":
        return D.power(D.dot(g / p.A, g), -0.5)
    if system in ("marble", "homogeneous"):
        return D.power(1.0 - p.mr2 * D.dot(g, g / p.At), -0.5)
    if system == "rubber":
        return D.power(rubber_legendre_det(p, g), -0.5)
    raise KeyError(f"unknown system {system!r}")


def rubber_legendre_det(p: BodyParams, g):
    """det of the compressed rubber Legendre map, det(At) (At^-1 gamma, gamma).

    On |gamma| = 1 this equals I1 I2 I3 (A^-1 gamma, gamma)
    + mu r^2 sum_i gamma_i^2 (I_j + I_k) + mu^2 r^4.
    """
    return float(np.prod(p.At)) * D.dot(g / p.At, g)


def rubber_legendre_det_expanded(p: BodyParams, g):
    I1, I2, I3 = p.A
    m = p.mr2
    g1, g2, g3 = g[..., 0], g[..., 1], g[..., 2]
    return (I1 * I2 * I3 * D.dot(g / p.A, g)
            + m * (g1 * g1 * (I2 + I3) + g2 * g2 * (I1 + I3) + g3 * g3 * (I1 + I2)) + m * m)


def compressed_legendre_det(system: str, p: BodyParams, theta, phi):
    """det of M = J^T A J (+ mu r^2 for the rubber ball) in the sphere frame."""
    M = frame_mass_matrix(system, p, theta, phi)
    return D.det(M)


def frame_mass_matrix(system: str, p: BodyParams, theta, phi):
    e1, e2 = sphere_frame(theta, phi)
    Jm = D.stack([-e2, e1], axis=-1)  # columns: body Om per unit frame velocity
    A = p.A if system == "veselova" else p.At
    return D.einsum("...ai,...aj->...ij", Jm * np.reshape(A, (3, 1)), Jm)


def transferred_density(system: str, p: BodyParams, y, engine: DiffEngine | None = None):
    """Density on R^6 whose restriction to the constraint manifold gives the reduced measure.

    For a preserved constraint g(L, gamma) = 0 the reduced density f transfers to
    f * (grad_L g, gamma).
    """
    L, g = split(y)
    f = measure_density(system, p, g)
    if system == "veselova":
        return f * D.dot(g / p.A, g)
    if system == "rubber":
        engine = engine or DiffEngine()
        dn = engine.directional(lambda x: marble_omega_of_L(p, x[..., 3:], x[..., :3]), y,
                                join(g, 0.0 * g))
        return f * D.dot(dn, g)
    return f


def divergence(field, y, engine: DiffEngine | None = None):
    engine = engine or DiffEngine()
    jac = engine.jacobian(field, y)
    return D.einsum("...ii->...", jac)


def measure_invariance_residual(system: str, p: BodyParams, y, density: str = "invariant",
                                engine: DiffEngine | None = None):
    """div(F X) on R^6 in (L, gamma) coordinates.

    ``density``: 'invariant' uses measure_density, 'unit' uses F = 1, 'transferred' uses
    transferred_density (the constrained systems need this one on R^6).
    """
    engine = engine or DiffEngine()
    rhs = rhs_of(system, p, engine)

    def F(x):
        if density == "unit":
            return 0.0 * x[..., 0] + 1.0
        if density == "transferred":
            return transferred_density(system, p, x, engine)
        return measure_density(system, p, x[..., 3:])

    return D.real(divergence(lambda x: F(x)[..., None] * rhs(x), y, engine))


# ------------------------------------------------------------------ T*S^2 chart (theta, phi, p1, p2)

def chart_to_state(system: str, p: BodyParams, x, l3=0.0):
    """(theta, phi, p1, p2) -> (L, gamma).

    p = (-(L, e2), (L, e1)).  For Veselova and rubber Om is horizontal and
    L = A Om (resp. At Om); for the marble L = p2 e1 - p1 e2 + l3 gamma.
    """
    th, ph = x[..., 0], x[..., 1]
    g = sphere_point(th, ph)
    e1, e2 = sphere_frame(th, ph)
    pm = x[..., 2:4]
    if system in ("marble", "homogeneous"):
        L = pm[..., 1:2] * e1 - pm[..., 0:1] * e2 + l3 * g
        return join(L, g)
    M = frame_mass_matrix(system, p, th, ph)
    v = D.solve(M, pm[..., None])[..., 0]
    Om = v[..., 1:2] * e1 - v[..., 0:1] * e2
    A = p.A if system == "veselova" else p.At
    return join(A * Om, g)


def state_to_chart(y):
    L, g = split(y)
    th = D.arctan2(D.sqrt(g[..., 0] * g[..., 0] + g[..., 1] * g[..., 1]), g[..., 2])
    ph = D.arctan2(g[..., 1], g[..., 0])
    e1, e2 = sphere_frame(th, ph)
    return D.stack([th, ph, -D.dot(L, e2), D.dot(L, e1)], axis=-1)


def chart_flow(system: str, p: BodyParams, x, l3=0.0, engine: DiffEngine | None = None):
    """(L, gamma) flow pushed to the chart by differentiating state_to_chart."""
    engine = engine or DiffEngine()
    y = chart_to_state(system, p, x, l3)
    return engine.directional(state_to_chart, y, rhs_of(system, p, engine)(y))


def chart_measure_residual(system: str, p: BodyParams, x, l3=0.0, engine: DiffEngine | None = None,
                           density=None):
    """div(f sin(theta) X) in the chart; sin(theta) d theta d phi dp1 dp2 is the Liouville volume."""
    engine = engine or DiffEngine()

    def weighted(z):
        g = sphere_point(z[..., 0], z[..., 1])
        f = measure_density(system, p, g) if density is None else density(g)
        return (f * D.sin(z[..., 0]))[..., None] * chart_flow(system, p, z, l3, engine)

    return D.real(divergence(weighted, x, engine))


# ------------------------------------------------------------------ reduced marble chart

def reduced_marble_rhs(p: BodyParams, y, l3: float):
    """(a, gamma) with L = a x gamma + l3 gamma: a_dot = -2H gamma + (gamma, Om) L."""
    a, g = split(y)
    L = D.cross(a, g) + l3 * g
    Om = marble_omega_of_L(p, g, L)
    H = 0.5 * D.dot(Om, L)
    adot = -2.0 * H[..., None] * g + D.dot(g, Om)[..., None] * L
    return join(adot, D.cross(g, Om))


def homogeneous_reduced_rhs(p: BodyParams, y, l3: float):
    """Isotropic case: a_dot = w3 a x gamma - |a|^2 gamma / (I + mu r^2), w3 = l3 / I."""
    if not np.allclose(p.A, p.A[0]):
        raise ValueError("homogeneous sphere requires equal inertias")
    I = p.A[0]
    a, g = split(y)
    w3 = l3 / I
    Om = marble_omega_of_L(p, g, D.cross(a, g) + l3 * g)
    adot = w3 * D.cross(a, g) - (D.dot(a, a) / (I + p.mr2))[..., None] * g
    return join(adot, D.cross(g, Om))


# ------------------------------------------------------------------ reconstruction and drift

def full_rhs(p: BodyParams, Y):
    """Marble flow lifted to (R, z): Y = (L, R.ravel(), x, y); R_dot = R hat(Om), z_dot = r omega x k."""
    L = Y[..., :3]
    R = Y[..., 3:12].reshape(Y.shape[:-1] + (3, 3))
    g = R[..., 2, :]
    Om = marble_omega_of_L(p, g, L)
    Rd = R @ _hat(Om)
    w = np.einsum("...ij,...j->...i", R, Om)
    zd = p.r * np.stack([w[..., 1], -w[..., 0]], -1)
    return np.concatenate([np.cross(L, Om), Rd.reshape(Y.shape[:-1] + (9,)), zd], -1)


def _hat(v):
    z = np.zeros(v.shape[:-1])
    return np.stack([np.stack([z, -v[..., 2], v[..., 1]], -1),
                     np.stack([v[..., 2], z, -v[..., 0]], -1),
                     np.stack([-v[..., 1], v[..., 0], z], -1)], -2)


def reorthonormalize(Y):
    R = Y[..., 3:12].reshape(Y.shape[:-1] + (3, 3))
    u, _, vt = np.linalg.svd(R)
    Y = Y.copy()
    Y[..., 3:12] = (u @ vt).reshape(Y.shape[:-1] + (9,))
    return Y


@dataclass
class DriftReport:
    residual: float
    mean_drift_sign: int
    sway_mean: float
    sway_amplitude: float
    contact_path: np.ndarray


def phase_drift(p: BodyParams, t, Y) -> DriftReport:
    """Check d/dt (z, l x k) = r (2T - l3 w3) along a lifted marble trajectory."""
    Y = np.asarray(Y)
    L = Y[:, :3]
    R = Y[:, 3:12].reshape(-1, 3, 3)
    g = R[:, 2, :]
    Om = marble_omega_of_L(p, g, L)
    w = np.einsum("nij,nj->ni", R, Om)
    l = np.einsum("nij,nj->ni", R, L)
    k = np.array([0.0, 0.0, 1.0])
    lk = np.cross(l, k)
    if np.any(np.linalg.norm(lk, axis=1) < 1e-12):
        raise ValueError("l parallel to k: drift direction undefined")
    zd = full_rhs(p, Y)[:, 12:14]
    lhs = np.sum(zd * lk[:, :2], 1)
    rhs = p.r * (np.sum(w * l, 1) - l[:, 2] * w[:, 2])
    ln = l[:, :2] / np.linalg.norm(l[:, :2], axis=1, keepdims=True)
    sway = np.sum(zd * ln, 1)
    return DriftReport(float(np.max(np.abs(lhs - rhs))), int(np.sign(np.mean(lhs))),
                       float(np.mean(sway)), float(np.max(np.abs(sway))), Y[:, 12:14])


def initial_full_state(L, g, z=(0.0, 0.0)):
    """Lift (L, gamma) to (L, R, z) with R = R(gamma) from the sphere frame."""
    g = np.asarray(g, float)
    th = np.arccos(np.clip(g[2], -1, 1))
    ph = np.arctan2(g[1], g[0])
    e1, e2 = sphere_frame(th, ph)
    R = np.stack([e1, e2, sphere_point(th, ph)])
    return np.concatenate([np.asarray(L, float), R.ravel(), np.asarray(z, float)])


def random_states(system: str, p: BodyParams, n: int, seed: int = 0, scale: float = 1.0):
    """Random (L, gamma) states, projected onto the constraint where one exists."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((n, 3))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    L = scale * rng.standard_normal((n, 3))
    if system == "veselova":
        u = g / p.A
        L = L - (np.sum(L * u, 1) / np.sum(u * u, 1))[:, None] * u  # (A^-1 L, gamma) = 0
    elif system == "rubber":
        # choose Om horizontal, then L = At Om
        Om = rng.standard_normal((n, 3)) * scale
        Om -= np.sum(Om * g, 1)[:, None] * g
        L = marble_L_of_omega(p, g, Om)
    return np.concatenate([L, g], 1)


def project_gamma(y):
    y = np.array(y, dtype=float, copy=True)
    g = y[..., 3:6]
    y[..., 3:6] = g / np.linalg.norm(g, axis=-1, keepdims=True)
    return y

