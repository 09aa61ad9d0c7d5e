"""The ten acceptance checks, shared by the test suite and ``nhmech check``."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import cartan as K
from . import chaplygin as C
from . import hamiltonize as H
from .dual import DiffEngine
from .exterior import structure_functions
from .geodesic import IntegratorConfig, integrate_geodesic, line_distance, penny_circle_period, rk4
from .structures import engel_normal_form, penny, penny_bfinal, perturbed_penny

PENNY = dict(m=2.0, a=1.0, I=2.0, J=2.0)
BODY = C.BodyParams(1.0, 2.0, 3.0, 1.0, 1.0)  # A = diag(1,2,3), mu r^2 = 1


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    measured: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        vals = ", ".join(f"{k}={_fmt(v)}" for k, v in self.measured.items())
        return f"[{'PASS' if self.passed else 'FAIL'}] #{self.number} {self.name}: {vals}"


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.3e}"
    return str(v)


# 1 ------------------------------------------------------------------------------

def penny_geodesics(engine: DiffEngine | None = None) -> CheckResult:
    """Circle, line (B=0) and spin (A=0) in one batched RK4 run over [0, 10]."""
    s = penny(**PENNY)
    B = 2 * math.pi * math.sqrt(PENNY["J"]) / (10.0 * math.sqrt(2.0))  # circle period = 10
    q0 = np.array([[0.1, -0.2, 0.3, 0.5]] * 3)
    v0 = np.array([[0.7, B], [0.7, 0.0], [0.0, 0.4]])
    cfg = IntegratorConfig(dt=1e-3, t_end=10.0)
    tr = integrate_geodesic(s, q0, v0, cfg, engine)
    v = tr.y[..., 4:6]
    vdrift = float(np.abs(v - v[0]).max())
    xy = tr.y[..., :2]
    T = penny_circle_period(PENNY["J"], B)
    closure = float(np.linalg.norm(xy[-1, 0] - xy[0, 0]))
    line = line_distance(xy[:, 1])
    spin = float(np.abs(xy[:, 2] - xy[0, 2]).max())
    ok = vdrift < 1e-9 and closure < 1e-5 and line < 1e-8
    return CheckResult(1, "penny geodesics", ok, {
        "v_drift": vdrift, "circle_period": T, "circle_return": closure,
        "line_residual": line, "spin_contact_motion": spin})


# 2 ------------------------------------------------------------------------------

def penny_printed_coefficients(m, a, I, J):
    """Structure constants of the B_final-adapted penny coframe, as functions of the parameters."""
    return {"c3_12": 1.0, "c3_24": -math.sqrt((m * a * a + I) / m),
            "c4_23": 2.0 / J * math.sqrt(m / (m * a * a + I))}


def penny_cartan(engine: DiffEngine | None = None, n: int = 20, seed: int = 0) -> CheckResult:
    engine = engine or DiffEngine()
    par = dict(m=1.3, a=1.0, I=0.9, J=1.7)  # printed coframe assumes a = 1
    s = penny(**par)
    q = s.sample(n, seed)
    _, table = K.bfinal_normalize(s, q, engine)
    rep = K.symmetry_constancy_report(table)
    spread = max(rep.spreads.values())

    # coefficients of the printed B_final coframe, measured
    c = np.real(structure_functions(penny_bfinal(**par).coframe, q, engine))
    want = penny_printed_coefficients(**par)
    raw = max(abs(c[:, 2, 0, 1] - want["c3_12"]).max(), abs(c[:, 2, 1, 3] - want["c3_24"]).max(),
              abs(c[:, 3, 1, 2] - want["c4_23"]).max())

    # normalized table: T3_12 = 1, T4_23 = 1, T3_24 = c3_24 * c4_23, all else 0
    expect = np.zeros((4, 4, 4))
    for (i, j, k), v in {(2, 0, 1): 1.0, (3, 1, 2): 1.0,
                         (2, 1, 3): want["c3_24"] * want["c4_23"]}.items():
        expect[i, j, k], expect[i, k, j] = v, -v
    norm_err = float(np.abs(table.T - expect).max())
    ok = spread < 1e-8 and raw < 1e-8 and norm_err < 1e-8 and rep.maximal
    return CheckResult(2, "penny Cartan invariants", ok, {
        "spread": spread, "printed_coeff_err": float(raw), "normalized_err": norm_err,
        "T3_24": float(np.mean(table.T[:, 2, 1, 3])), "verdict": rep.verdict})


# 3 ------------------------------------------------------------------------------

def torsion_relation(engine: DiffEngine | None = None, n: int = 20, seed: int = 1) -> CheckResult:
    engine = engine or DiffEngine()
    rng = np.random.default_rng(seed)
    res = {}
    for s in (penny(**PENNY), engel_normal_form(), perturbed_penny(0.1)):
        q = s.sample(n, seed) if s.sampler else rng.uniform(-1, 1, (n, 4))
        _, table = K.bfinal_normalize(s, q, engine)
        res[s.name] = float(np.abs(table.relation_residual()).max())
    return CheckResult(3, "second-order torsion relation", max(res.values()) < 1e-6, res)


# 4 ------------------------------------------------------------------------------

def line_field(engine: DiffEngine | None = None, n: int = 20, seed: int = 2) -> CheckResult:
    engine = engine or DiffEngine()
    rng = np.random.default_rng(seed)
    out, ok = {}, True
    for s in (penny(**PENNY), engel_normal_form()):
        q = s.sample(n, seed) if s.sampler else rng.uniform(-1, 1, (n, 4))
        r = K.line_field_for(s, q, engine)
        ok &= r["X1"] and not r["X2"]
        out[f"{s.name}:X1"] = r["residual_X1"]
        out[f"{s.name}:X2"] = r["residual_X2"]
    return CheckResult(4, "canonical line field", bool(ok), out)


# 5 ------------------------------------------------------------------------------

def veselova_integrals(engine: DiffEngine | None = None, n: int = 10, seed: int = 0) -> CheckResult:
    p = BODY
    y0 = C.random_states("veselova", p, n, seed)
    rhs = C.rhs_of("veselova", p, engine)
    _, ys = rk4(lambda t, y: rhs(y), y0, IntegratorConfig(dt=1e-3, t_end=10.0), project=C.project_gamma)
    d = C.drifts("veselova", p, ys)
    return CheckResult(5, "Veselova integrals", max(d.values()) < 1e-8, d)


# 6 ------------------------------------------------------------------------------

def invariant_measures(engine: DiffEngine | None = None, n: int = 100, seed: int = 0) -> CheckResult:
    """Veselova on the T*S^2 chart (its density lives on the constraint surface);
    marble on R^6 with its density and with F = 1."""
    engine = engine or DiffEngine()
    p = BODY
    x = H.ts2_sampler(np.random.default_rng(seed), n)
    ves = float(np.abs(C.chart_measure_residual("veselova", p, x, engine=engine)).max())
    y = C.random_states("marble", p, n, seed)
    mar = float(np.abs(C.measure_invariance_residual("marble", p, y, "invariant", engine)).max())
    unit = np.abs(C.measure_invariance_residual("marble", p, y, "unit", engine))
    ok = ves < 1e-9 and mar < 1e-9 and float(np.median(unit)) > 1e-3
    return CheckResult(6, "invariant measures", ok, {
        "veselova_chart": ves, "marble_density": mar, "marble_unit_median": float(np.median(unit)),
        "marble_unit_min": float(unit.min())})


# 7 ------------------------------------------------------------------------------

def hamiltonization(engine: DiffEngine | None = None, n_axis: int = 10) -> CheckResult:
    engine = engine or DiffEngine()
    p = BODY
    x = H.ts2_grid(n_axis)
    floor = H.noise_floor(p, x, engine)
    out = {"grid_points": len(x), "noise_floor": floor}
    ok = True
    for sysn in ("veselova", "rubber"):
        ch = H.make_chart(sysn, p)
        r = H.conformal_obstruction(ch, ch.density, x, "paper-density", floor, engine)
        out[f"{sysn}_max_d"] = r.max_d_fOmega
        ok &= r.max_d_fOmega < 1e-9
    for l3 in (0.0, 0.5):
        ch = H.make_chart("marble-reduced", p, l3=l3)
        r = H.conformal_obstruction(ch, ch.density, x, "paper-density", floor, engine)
        out[f"marble_l3={l3}_max_ix"] = r.max_ix_d_fOmega
        ok &= r.max_ix_d_fOmega > 1e3 * floor and r.verdict == H.OBSTRUCTED
    return CheckResult(7, "Hamiltonization discrimination", bool(ok), out)


# 8 ------------------------------------------------------------------------------

def closed_form(engine: DiffEngine | None = None, n: int = 50, seed: int = 3) -> CheckResult:
    engine = engine or DiffEngine()
    out, ok = {}, True
    for I, mu, r in ((1.0, 1.0, 1.0), (1.7, 0.8, 0.9)):
        p = C.BodyParams(I, I, I, mu, r)
        ch = H.make_chart("marble-so3", p)
        x = H.so3_sampler(np.random.default_rng(seed), n)
        _, _, ix = H.obstruction_fields(ch, H.factor_function(ch, "unit"), x, engine)
        k = np.diag(H.m_basis_change(p))
        got = ix.coeffs * k[:, None] * k[None, :]
        w, _, _ = H.marble_spatial_omega(p, x)
        m = x[:, 3:6].copy()
        m[:, :2] -= p.mr2 * w[:, :2]
        err = float(np.abs(got - H.closed_form_ix_d_omega(p, m)).max())
        out[f"I={I},mr2={p.mr2:.3g}"] = err
        ok &= err < 1e-10
    return CheckResult(8, "closed-form i_X dOmega", bool(ok), out)


# 9 ------------------------------------------------------------------------------

def _lift_and_run(p, L, g, t_end=10.0, dt=1e-3):
    Y0 = np.stack([C.initial_full_state(Li, gi) for Li, gi in zip(L, g)])
    cfg = IntegratorConfig(dt=dt, t_end=t_end)
    return rk4(lambda t, Y: C.full_rhs(p, Y), Y0, cfg, project=C.reorthonormalize)


def phase_drift(engine: DiffEngine | None = None, seed: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((4, 3))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    L = rng.standard_normal((4, 3))
    t, Y = _lift_and_run(BODY, L, g)
    res = max(C.phase_drift(BODY, t, Y[:, i]).residual for i in range(len(L)))
    hom = C.BodyParams(1.5, 1.5, 1.5, 1.0, 1.0)
    _, Yh = _lift_and_run(hom, L, g)
    coll = max(line_distance(Yh[:, i, 12:14]) for i in range(len(L)))
    return CheckResult(9, "phase drift", res < 1e-8 and coll < 1e-8,
                       {"drift_identity_residual": res, "homogeneous_line_residual": coll})


# 10 -----------------------------------------------------------------------------

def obstruction_table(engine: DiffEngine, n_axis: int = 10, n_so3: int = 200) -> dict:
    """(max |f Omega|, max |d(f Omega)|, max |i_X d(f Omega)|) for every chart."""
    p = BODY
    x = H.ts2_grid(n_axis)
    out = {}
    for sysn, l3 in (("veselova", 0.0), ("rubber", 0.0), ("marble-reduced", 0.0), ("marble-reduced", 0.5)):
        ch = H.make_chart(sysn, p, l3)
        out[f"{sysn}:{l3}"] = H.obstruction_maxima(ch, ch.density, x, engine)
    ch = H.make_chart("marble-so3", C.BodyParams(1.5, 1.5, 1.5, 1.0, 1.0))
    xs = H.so3_sampler(np.random.default_rng(5), n_so3)
    out["marble-so3"] = H.obstruction_maxima(ch, H.factor_function(ch, "unit"), xs, engine)
    return out


def cross_oracle(engine: DiffEngine | None = None, seed: int = 6) -> CheckResult:
    """AD vs FD maxima, compared relative to max |f Omega|; rubber at r = 0 vs Veselova."""
    ad = obstruction_table(DiffEngine("ad"))
    fd = obstruction_table(DiffEngine("fd"))
    rel = max(abs(a - b) / a_ref[0] for key in ad for a, b, a_ref in
              ((ad[key][i], fd[key][i], ad[key]) for i in (1, 2)))
    p0 = BODY.with_r(0.0)
    y = C.random_states("veselova", p0, 100, seed)
    diff = float(np.abs(C.rubber_rhs(p0, y) - C.veselova_rhs(p0, y)).max())
    return CheckResult(10, "AD/FD cross-oracle", rel < 1e-4 and diff < 1e-10,
                       {"max_rel_AD_FD": float(rel), "rubber_r0_vs_veselova": diff})


CHECKS: list[Callable[..., CheckResult]] = [
    penny_geodesics, penny_cartan, torsion_relation, line_field, veselova_integrals,
    invariant_measures, hamiltonization, closed_form, phase_drift, cross_oracle,
]


def run(number: int, engine: DiffEngine | None = None) -> CheckResult:
    t0 = time.perf_counter()
    r = CHECKS[number - 1](engine)
    r.seconds = time.perf_counter() - t0
    return r


def run_all(engine: DiffEngine | None = None) -> list[CheckResult]:
    return [run(i, engine) for i in range(1, len(CHECKS) + 1)]
