"""Almost-symplectic forms of the Chaplygin examples and the conformal obstruction test.

T*S^2 forms live in the chart (theta, phi, p1, p2) with the momenta paired to
theta_1 = d theta and theta_2 = sin(theta) d phi; coefficient matrices are in the
coordinate basis.  The T*SO(3) marble form is kept in the anholonomic basis
(rho_1, rho_2, rho_3, dl_1, dl_2, dl_3) over the Euler chart (psi, theta, phi, l).

``skew_gradient`` solves i_X Omega = dH literally.  With Omega = d(p dq) that field
is the physical flow with time reversed; ``physical_flow`` returns -X.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import dual as D
from .chaplygin import BodyParams, frame_mass_matrix, marble_omega_of_L, measure_density
from .dual import DiffEngine
from .exterior import CoframeField, Form, FormField, exterior_derivative, interior
from .geom import euler_rotation, frame_rotation, right_coframe, sphere_frame, sphere_point

TS2_SYSTEMS = ("veselova", "rubber", "marble-reduced")
ALL_SYSTEMS = TS2_SYSTEMS + ("marble-so3",)


class DegenerateForm(np.linalg.LinAlgError):
    pass


def _canonical_ts2(x):
    """d(p1 d theta + p2 sin(theta) d phi) as a 4x4 coefficient matrix."""
    th, p2 = x[..., 0], x[..., 3]
    z = 0.0 * th
    st, ct = D.sin(th), D.cos(th)
    w01 = p2 * ct
    return D.array([
        [z, w01, z - 1.0, z],
        [-w01, z, z, -st],
        [z + 1.0, z, z, z],
        [z, st, z, z],
    ])


def _area_term(x, coef):
    """coef * d theta ^ d phi."""
    z = 0.0 * x[..., 0] + 0.0 * coef
    return D.array([
        [z, coef, z, z],
        [-coef, z, z, z],
        [z, z, z, z],
        [z, z, z, z],
    ])


def _frame_velocity(system, p, x):
    """v = M^-1 p and the horizontal body angular velocity Om = v2 e1 - v1 e2."""
    th, ph = x[..., 0], x[..., 1]
    M = frame_mass_matrix(system, p, th, ph)
    v = D.solve(M, x[..., 2:4, None])[..., 0]
    e1, e2 = sphere_frame(th, ph)
    return v, v[..., 1:2] * e1 - v[..., 0:1] * e2, M


@dataclass(frozen=True)
class AlmostHamiltonianChart:
    """Omega_NH and H on an explicit chart; ``coframe`` is None for coordinate bases."""

    system: str
    dim: int
    omega: Callable
    hamiltonian: Callable
    density: Callable
    coframe: CoframeField | None = None
    sampler: Callable | None = field(default=None, repr=False)
    params: dict = field(default_factory=dict)

    @property
    def basis(self):
        return "coordinate" if self.coframe is None else self.coframe.name


# ------------------------------------------------------------------ T*S^2 charts

def omega_nh_veselova(p: BodyParams, x, system: str = "veselova"):
    """Canonical form plus m3 times the area form, m3 = (A Om, gamma)."""
    _, Om, _ = _frame_velocity(system, p, x)
    g = sphere_point(x[..., 0], x[..., 1])
    m3 = D.dot(Om * p.A, g)
    return _canonical_ts2(x) + _area_term(x, m3 * D.sin(x[..., 0]))


def omega_nh_rubber(p: BodyParams, x):
    return omega_nh_veselova(p, x, system="rubber")


def hamiltonian_ts2(system: str, p: BodyParams, x):
    _, _, M = _frame_velocity(system, p, x)
    return 0.5 * D.einsum("...i,...i->...", x[..., 2:4], D.solve(M, x[..., 2:4, None])[..., 0])


def reduced_marble_state(p: BodyParams, x, l3: float):
    th, ph = x[..., 0], x[..., 1]
    g = sphere_point(th, ph)
    e1, e2 = sphere_frame(th, ph)
    L = x[..., 3:4] * e1 - x[..., 2:3] * e2 + l3 * g
    Om = marble_omega_of_L(p, g, L)
    return g, e1, e2, L, Om


def omega_red_marble(p: BodyParams, x, l3: float):
    """Canonical + l3 area - mu r^2 (w1 d theta_2 - w2 d theta_1), d theta_1 = 0, d theta_2 = cos d theta ^ d phi."""
    g, e1, e2, L, Om = reduced_marble_state(p, x, l3)
    w1 = D.dot(e1, Om)
    th = x[..., 0]
    coef = l3 * D.sin(th) - p.mr2 * w1 * D.cos(th)
    return _canonical_ts2(x) + _area_term(x, coef)


def twisted_quotient_flow(p: BodyParams, x, l3: float, engine: DiffEngine | None = None):
    """Marble flow on T*SO(3) projected to the section (R(gamma), l = (p2, -p1, l3))
    along the twisted S^1 generator X3 - m2 d/dl1 + m1 d/dl2, m_i = l_i - mu r^2 w_i.

    The chart momenta here are read off the section, so they agree with the
    (L, gamma) chart only on the section itself, not along the flow.
    """
    engine = engine or DiffEngine()
    g, e1, e2, L, Om = reduced_marble_state(p, x, l3)
    th = x[..., 0]
    R = frame_rotation(x[..., 0], x[..., 1])
    w = D.einsum("...ij,...j->...i", R, Om)
    gd = D.cross(g, Om)
    ang = D.stack([D.dot(gd, e1), D.dot(gd, e2) / D.sin(th)], axis=-1)
    Rd = engine.directional(lambda a: frame_rotation(a[..., 0], a[..., 1]), x[..., :2], ang)
    kappa = D.einsum("...j,...j->...", Rd[..., 1, :], R[..., 0, :])  # (dR R^T)_{10}
    c = w[..., 2] - kappa
    m1 = x[..., 3] - p.mr2 * w[..., 0]
    m2 = -x[..., 2] - p.mr2 * w[..., 1]
    return D.stack([ang[..., 0], ang[..., 1], c * m1, c * m2], axis=-1)


def hamiltonian_red_marble(p: BodyParams, x, l3: float):
    _, _, _, L, Om = reduced_marble_state(p, x, l3)
    return 0.5 * D.dot(Om, L)


def ts2_sampler(rng, n):
    lo = [0.05, 0.0, -1.0, -1.0]
    hi = [np.pi - 0.05, 2 * np.pi, 1.0, 1.0]
    return rng.uniform(lo, hi, size=(n, 4))


def ts2_grid(n_per_axis: int = 10, p_max: float = 1.0, cap: float = 0.05) -> np.ndarray:
    """Tensor grid with n^4 points; polar caps and the endpoint 2 pi are excluded."""
    th = np.linspace(cap, np.pi - cap, n_per_axis + 2)[1:-1]
    ph = np.linspace(0.0, 2 * np.pi, n_per_axis, endpoint=False)
    pm = np.linspace(-p_max, p_max, n_per_axis)
    return np.stack(np.meshgrid(th, ph, pm, pm, indexing="ij"), -1).reshape(-1, 4)


def make_chart(system: str, p: BodyParams, l3: float = 0.0) -> AlmostHamiltonianChart:
    if system in ("veselova", "rubber"):
        return AlmostHamiltonianChart(
            system, 4,
            lambda x: omega_nh_veselova(p, x, system),
            lambda x: hamiltonian_ts2(system, p, x),
            lambda x: measure_density(system, p, sphere_point(x[..., 0], x[..., 1])),
            None, ts2_sampler, {"l3": 0.0})
    if system == "marble-reduced":
        return AlmostHamiltonianChart(
            system, 4,
            lambda x: omega_red_marble(p, x, l3),
            lambda x: hamiltonian_red_marble(p, x, l3),
            lambda x: measure_density("marble", p, sphere_point(x[..., 0], x[..., 1])),
            None, ts2_sampler, {"l3": l3})
    if system == "marble-so3":
        return marble_so3_chart(p)
    raise KeyError(f"unknown system {system!r}; choose from {ALL_SYSTEMS}")


# ------------------------------------------------------------------ T*SO(3)

def tso3_coframe() -> CoframeField:
    """(rho_1, rho_2, rho_3, dl_1, dl_2, dl_3) over (psi, theta, phi, l1, l2, l3)."""

    def A(x):
        Rc = right_coframe(x[..., :3])
        z = 0.0 * x[..., 0]
        o = z + 1.0
        rows = [[Rc[..., i, 0], Rc[..., i, 1], Rc[..., i, 2], z, z, z] for i in range(3)]
        rows += [[z, z, z] + [o if j == i else z for j in range(3)] for i in range(3)]
        return D.array(rows)

    return CoframeField(6, A, name="rho-dl")


def marble_spatial_omega(p: BodyParams, x):
    """omega = R Om_gamma(R^-1 l) on the Euler chart."""
    R = euler_rotation(x[..., :3])
    l = x[..., 3:6]
    L = D.einsum("...ji,...j->...i", R, l)
    Om = marble_omega_of_L(p, R[..., 2, :], L)
    return D.einsum("...ij,...j->...i", R, Om), L, Om


def omega_nh_marble_so3(p: BodyParams, x):
    w, _, _ = marble_spatial_omega(p, x)
    l1, l2, l3 = x[..., 3], x[..., 4], x[..., 5]
    a23 = l1 - p.mr2 * w[..., 0]
    a31 = l2 - p.mr2 * w[..., 1]
    a12 = l3
    z = 0.0 * a23 + 0.0 * a31
    o = z + 1.0
    return D.array([
        [z, a12, -a31, -o, z, z],
        [-a12, z, a23, z, -o, z],
        [a31, -a23, z, z, z, -o],
        [o, z, z, z, z, z],
        [z, o, z, z, z, z],
        [z, z, o, z, z, z],
    ])


def hamiltonian_marble_so3(p: BodyParams, x):
    _, L, Om = marble_spatial_omega(p, x)
    return 0.5 * D.dot(L, Om)


def so3_sampler(rng, n):
    lo = [0.0, 0.3, 0.0, -1.0, -1.0, -1.0]
    hi = [2 * np.pi, np.pi - 0.3, 2 * np.pi, 1.0, 1.0, 1.0]
    return rng.uniform(lo, hi, size=(n, 6))


def marble_so3_chart(p: BodyParams) -> AlmostHamiltonianChart:
    return AlmostHamiltonianChart(
        "marble-so3", 6,
        lambda x: omega_nh_marble_so3(p, x),
        lambda x: hamiltonian_marble_so3(p, x),
        lambda x: measure_density("marble", p, euler_rotation(x[..., :3])[..., 2, :]),
        tso3_coframe(), so3_sampler, {})


def m_basis_change(p: BodyParams):
    """Diagonal T with (rho, dl) = T (rho, dm) in the homogeneous case."""
    I = p.A[0]
    k = 1.0 + p.mr2 / I
    return np.diag([1.0, 1.0, 1.0, k, k, 1.0])


def closed_form_ix_d_omega(p: BodyParams, m):
    """(mu r^2 / I^2)(-m2 dm1^rho3 + m3 dm1^rho2 - m3 dm2^rho1 + m1 dm2^rho3) in the (rho, dm) basis."""
    I = p.A[0]
    c = p.mr2 / I**2
    m1, m2, m3 = m[..., 0], m[..., 1], m[..., 2]
    out = np.zeros(m.shape[:-1] + (6, 6))

    def put(i, j, v):  # v * e^i ^ e^j with i = dm index, j = rho index
        out[..., i, j] += v
        out[..., j, i] -= v

    put(3, 2, -c * m2)
    put(3, 1, c * m3)
    put(4, 0, -c * m3)
    put(4, 2, c * m1)
    return out


# ------------------------------------------------------------------ skew gradients

def differential(chart: AlmostHamiltonianChart, x, engine: DiffEngine | None = None):
    """dH in the chart's basis."""
    engine = engine or DiffEngine()
    dH = engine.jacobian(chart.hamiltonian, x)
    if chart.coframe is not None:
        dH = D.einsum("...a,...aj->...j", dH, chart.coframe.frame(x))
    return dH


def skew_gradient(chart: AlmostHamiltonianChart, x, engine: DiffEngine | None = None,
                  max_cond: float = 1e12):
    """X with i_X Omega = dH, i.e. X^i Omega_ij = dH_j."""
    W = chart.omega(x)
    cond = np.linalg.cond(D.real(W))
    if not np.all(np.isfinite(cond)) or np.max(cond) > max_cond:
        raise DegenerateForm(f"{chart.system}: Omega_NH singular (cond={np.max(cond):.3g})")
    dH = differential(chart, x, engine)
    return D.solve(D.swapaxes(W, -1, -2), dH[..., None])[..., 0]


def physical_flow(chart: AlmostHamiltonianChart, x, engine: DiffEngine | None = None):
    """Time-forward vector field, -X, in the chart's basis."""
    return -skew_gradient(chart, x, engine)


def to_coordinate_vector(chart: AlmostHamiltonianChart, x, X):
    if chart.coframe is None:
        return X
    return D.einsum("...aj,...j->...a", chart.coframe.frame(x), X)


# ------------------------------------------------------------------ obstruction

@dataclass
class ObstructionReport:
    system: str
    factor: str
    grid: dict
    max_d_fOmega: float
    max_ix_d_fOmega: float
    scale_fOmega: float
    noise_floor: float | None
    verdict: str
    engine: str
    extra: dict = field(default_factory=dict)

    @property
    def rel_d(self):
        return self.max_d_fOmega / self.scale_fOmega

    @property
    def rel_ix(self):
        return self.max_ix_d_fOmega / self.scale_fOmega

    def to_dict(self) -> dict:
        return {
            "system": self.system, "f-id": self.factor, "grid": self.grid,
            "max_d_fOmega": self.max_d_fOmega, "max_ix_d_fOmega": self.max_ix_d_fOmega,
            "max_fOmega": self.scale_fOmega, "noise_floor": self.noise_floor,
            "verdict": self.verdict, "engine": self.engine, **self.extra,
        }


CONFORMAL = "conformally symplectic"
AFFINE = "affine-Hamiltonizable candidate"
OBSTRUCTED = "obstructed"


def conformal_tolerance(engine: DiffEngine) -> float:
    return 1e-9 if engine.mode == "ad" else 1e-6


def obstruction_fields(chart: AlmostHamiltonianChart, f: Callable, x, engine: DiffEngine | None = None):
    """d(f Omega) and i_X d(f Omega) at the points x."""
    engine = engine or DiffEngine()

    def fW(z):
        fz = f(z)
        return chart.omega(z) * fz[..., None, None]

    field_ = FormField(2, fW, chart.coframe, name=f"f*Omega[{chart.system}]")
    dfw = exterior_derivative(field_, x, engine)
    X = skew_gradient(chart, x, engine)
    ix = interior(X, dfw)
    return Form(D.real(fW(x)), 2, field_.basis), Form(D.real(dfw.coeffs), 3, dfw.basis), \
        Form(D.real(ix.coeffs), 2, ix.basis)


def _chunks(x, n_jobs: int, size: int = 2500):
    return [x[i:i + size] for i in range(0, len(x), size)]


def obstruction_maxima(chart, f, x, engine=None, jobs: int = 1):
    """(max |f Omega|, max |d(f Omega)|, max |i_X d(f Omega)|) over x, processed in chunks."""
    engine = engine or DiffEngine()
    if np.any(D.real(f(x)) <= 0):
        raise ValueError("conformal factor must be positive on the grid")

    def work(chunk):
        w, d, ix = obstruction_fields(chart, f, chunk, engine)
        return w.max_abs(), d.max_abs(), ix.max_abs()

    chunks = _chunks(x, jobs)
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(jobs) as ex:
            res = list(ex.map(work, chunks))
    else:
        res = [work(c) for c in chunks]
    return tuple(float(max(r[i] for r in res)) for i in range(3))


def conformal_obstruction(chart: AlmostHamiltonianChart, f: Callable, x, factor_id: str = "custom",
                          noise_floor: float | None = None, engine: DiffEngine | None = None,
                          grid_meta: dict | None = None, jobs: int = 1) -> ObstructionReport:
    """Evaluate d(f Omega) and i_X d(f Omega); verdict per the contraction criterion.

    ``noise_floor`` (from a known-conformal reference at the same grid and engine) turns
    "nonzero" into "exceeds 1e3 x floor"; maxima are also reported relative to max |f Omega|.
    """
    engine = engine or DiffEngine()
    scale, md, mix = obstruction_maxima(chart, f, x, engine, jobs)
    tol = conformal_tolerance(engine)
    thresh = 1e3 * noise_floor if noise_floor is not None else tol
    if md < tol:
        verdict = CONFORMAL
    elif mix <= thresh:
        verdict = AFFINE
    else:
        verdict = OBSTRUCTED
    return ObstructionReport(chart.system, factor_id, grid_meta or {"points": int(len(x))},
                             md, mix, scale, noise_floor, verdict, engine.mode,
                             {"conformal_tol": tol, "nonzero_threshold": thresh})


def noise_floor(p: BodyParams, x, engine: DiffEngine | None = None, jobs: int = 1) -> float:
    """Max |d(f Omega_NH)| for Veselova with its density: the reference conformal run."""
    chart = make_chart("veselova", p)
    _, md, _ = obstruction_maxima(chart, chart.density, x, engine, jobs)
    return max(md, np.finfo(float).tiny)


def factor_function(chart: AlmostHamiltonianChart, factor: str, expr: str | None = None) -> Callable:
    """paper-density, unit, or a numpy expression in g0, g1, g2 (components of gamma)."""
    if factor == "paper-density":
        return chart.density
    if factor == "unit":
        return lambda x: 0.0 * x[..., 0] + 1.0
    if factor == "custom":
        if not expr:
            raise ValueError("custom factor needs an expression")
        code = compile(expr, "<factor>", "eval")
        env = {k: getattr(D, k) for k in ("sqrt", "exp", "log", "sin", "cos", "power")}

        def fn(x):
            if chart.system == "marble-so3":
                g = euler_rotation(x[..., :3])[..., 2, :]
            else:
                g = sphere_point(x[..., 0], x[..., 1])
            val = eval(code, {"__builtins__": {}}, dict(env, g0=g[..., 0], g1=g[..., 1], g2=g[..., 2]))
            return val + 0.0 * x[..., 0]

        return fn
    raise KeyError(f"unknown factor {factor!r}")
