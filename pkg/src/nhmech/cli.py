"""Command-line entry point: simulate | cartan | hamiltonize | check.

Exit codes: 0 ok, 1 failed acceptance checks, 2 configuration error,
3 numerical failure, 4 structural precondition (non-Engel input).
"""

from __future__ import annotations

import json
import math
import os
import sys
import time
from pathlib import Path
from typing import Literal, Optional

import click
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import acceptance
from . import cartan as K
from . import chaplygin as C
from . import hamiltonize as H
from .dual import DiffEngine
from .geodesic import IntegrationError, IntegratorConfig, integrate_geodesic, line_distance, penny_circle_period, rk4
from .structures import get_structure

EXIT_CONFIG, EXIT_NUMERIC, EXIT_STRUCTURE = 2, 3, 4

SIMULATE_SYSTEMS = ("penny", "veselova", "marble", "rubber", "homogeneous")
CARTAN_STRUCTURES = ("penny", "engel-normal-form", "perturbed-penny", "penny-bfinal", "integrable")
HAMILTONIZE_SYSTEMS = H.ALL_SYSTEMS
FACTORS = ("paper-density", "unit", "custom")


# ------------------------------------------------------------------ configuration

class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class BodyModel(_Strict):
    I1: float = Field(1.0, gt=0)
    I2: float = Field(2.0, gt=0)
    I3: float = Field(3.0, gt=0)
    mu: float = Field(1.0, ge=0)
    r: float = Field(1.0, ge=0)

    def params(self) -> C.BodyParams:
        return C.BodyParams(self.I1, self.I2, self.I3, self.mu, self.r)


class PennyModel(_Strict):
    m: float = Field(2.0, gt=0)
    a: float = Field(1.0, gt=0)
    I: float = Field(2.0, gt=0)
    J: float = Field(2.0, gt=0)
    A: float = 0.7
    B: float = 0.5
    eps: float = 0.1


class IntegratorModel(_Strict):
    method: Literal["rk4", "rk45"] = "rk4"
    dt: float = Field(1e-3, gt=0)
    t_end: float = Field(10.0, ge=0)


class GridModel(_Strict):
    n_per_axis: int = Field(10, ge=2)
    so3_points: int = Field(200, ge=1)
    cartan_points: int = Field(20, ge=1)


class RunConfig(_Strict):
    command: Literal["simulate", "cartan", "hamiltonize", "check"]
    system: Optional[str] = None
    body: BodyModel = BodyModel()
    penny: PennyModel = PennyModel()
    integrator: IntegratorModel = IntegratorModel()
    grid: GridModel = GridModel()
    factor: str = "paper-density"
    expr: Optional[str] = None
    l3: float = 0.0
    initial: Optional[list[float]] = None
    engine: Literal["ad", "fd"] = "ad"
    seed: int = 0
    jobs: int = Field(1, ge=1)
    out_dir: str = "."
    prefix: Optional[str] = None
    only: Optional[list[int]] = None

    @field_validator("only")
    @classmethod
    def _only_range(cls, v):
        if v and any(not 1 <= i <= len(acceptance.CHECKS) for i in v):
            raise ValueError(f"check numbers must lie in 1..{len(acceptance.CHECKS)}")
        return v

    @model_validator(mode="after")
    def _system_for_command(self):
        allowed = {"simulate": SIMULATE_SYSTEMS, "cartan": CARTAN_STRUCTURES,
                   "hamiltonize": HAMILTONIZE_SYSTEMS}.get(self.command)
        if allowed is not None:
            if self.system is None:
                self.system = allowed[0]
            if self.system not in allowed:
                raise ValueError(f"unknown system {self.system!r} for {self.command}; choose from {list(allowed)}")
        if self.command == "hamiltonize":
            if self.factor not in FACTORS:
                raise ValueError(f"unknown factor {self.factor!r}; choose from {list(FACTORS)}")
            if self.factor == "custom" and not self.expr:
                raise ValueError("factor 'custom' needs --expr")
        if self.initial is not None and self.command == "simulate":
            need = 4 if self.system == "penny" else 6
            if len(self.initial) != need:
                raise ValueError(f"initial state for {self.system} needs {need} numbers")
        return self

    def engine_obj(self) -> DiffEngine:
        mode = os.environ.get("NH_ENGINE", self.engine).strip().lower()
        if mode not in ("ad", "fd"):
            raise ValueError(f"NH_ENGINE must be 'ad' or 'fd', got {mode!r}")
        return DiffEngine(mode)

    def stem(self) -> Path:
        name = self.prefix or "-".join(x for x in (self.command, self.system) if x)
        return Path(self.out_dir) / name


def _set(d: dict, dotted: str, value):
    *head, last = dotted.split(".")
    for k in head:
        d = d.setdefault(k, {})
    d[last] = value


def build_config(command: str, config_file: Optional[str], overrides: dict) -> RunConfig:
    data: dict = {}
    if config_file:
        data = json.loads(Path(config_file).read_text())
        if not isinstance(data, dict):
            raise ValueError("config file must hold a JSON object")
    data["command"] = command
    for key, val in overrides.items():
        if val is not None and val != ():
            _set(data, key, list(val) if isinstance(val, tuple) else val)
    return RunConfig.model_validate(data)


# ------------------------------------------------------------------ outputs

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else repr(v)
    return x


def dump_json(path: Path, payload: dict):
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n")


def write_csv(path: Path, names: list[str], t, y):
    data = np.column_stack([t, y])
    np.savetxt(path, data, fmt="%.16e", delimiter=",", header=",".join(["t"] + names), comments="")


def write_outputs(cfg: RunConfig, manifest: dict, wall: float, csv: tuple | None = None):
    stem = cfg.stem()
    stem.parent.mkdir(parents=True, exist_ok=True)
    if csv is not None:
        write_csv(stem.with_suffix(".csv"), *csv)
    manifest = dict(manifest, config=cfg.model_dump(exclude={"out_dir", "prefix"}))
    dump_json(stem.with_suffix(".json"), manifest)
    dump_json(stem.parent / (stem.name + ".timing.json"), {"wall_seconds": wall})
    return stem


# ------------------------------------------------------------------ commands

def cmd_simulate(cfg: RunConfig, engine: DiffEngine):
    ic = IntegratorConfig(cfg.integrator.method, cfg.integrator.dt, cfg.integrator.t_end)
    if cfg.system == "penny":
        return _simulate_penny(cfg, ic, engine)
    return _simulate_body(cfg, ic, engine)


def _simulate_penny(cfg, ic, engine):
    pp = cfg.penny
    s = get_structure("penny", m=pp.m, a=pp.a, I=pp.I, J=pp.J)
    q0 = np.array(cfg.initial if cfg.initial else [0.0, 0.0, 0.3, 0.1])
    tr = integrate_geodesic(s, q0, np.array([pp.A, pp.B]), ic, engine)
    v = tr.y[:, 4:6]
    xy = tr.y[:, :2]
    kind = "spin" if pp.A == 0 else "line" if pp.B == 0 else "circle"
    info = {"trajectory": kind,
            "line_trajectory": kind == "line",
            "drifts": {"v1": float(np.abs(v[:, 0] - v[0, 0]).max()),
                       "v2": float(np.abs(v[:, 1] - v[0, 1]).max()),
                       "energy": float(np.abs(tr.y[:, 6] - tr.y[0, 6]).max())}}
    if kind == "line":
        info["line_residual"] = line_distance(xy)
    elif kind == "circle":
        T = penny_circle_period(pp.J, pp.B)
        info["circle_period"] = T
        i = int(round(T / ic.dt))
        if ic.method == "rk4" and i < len(tr.t) and abs(tr.t[i] - T) < 1e-9:
            info["circle_return"] = float(np.linalg.norm(xy[i] - xy[0]))
    else:
        info["contact_motion"] = float(np.abs(xy - xy[0]).max())
    names = ["x", "y", "theta", "phi", "v1", "v2", "energy"]
    return info, (names, tr.t, tr.y)


def _simulate_body(cfg, ic, engine):
    b = cfg.body
    system = cfg.system
    if system == "homogeneous":
        b = BodyModel(I1=b.I1, I2=b.I1, I3=b.I1, mu=b.mu, r=b.r)
    p = b.params()
    if cfg.initial:
        y0 = np.array(cfg.initial, dtype=float)
        y0[3:] /= np.linalg.norm(y0[3:])
    else:
        y0 = C.random_states("marble" if system == "homogeneous" else system, p, 1, cfg.seed)[0]
    rhs = C.rhs_of(system, p, engine)
    if ic.method == "rk4":
        t, y = rk4(lambda _t, z: rhs(z), y0, ic, project=C.project_gamma)
    else:
        from .geodesic import integrate_ode
        t, y = integrate_ode(lambda _t, z: rhs(z), y0, ic)
    vals = C.integrals(system, p, y)
    dr = {k: float(np.max(np.abs(v - v[0]))) for k, v in vals.items()}
    info = {"drifts": dr, "body": b.model_dump()}
    names = ["L1", "L2", "L3", "g1", "g2", "g3"] + sorted(vals)
    cols = np.column_stack([y] + [vals[k] for k in sorted(vals)])
    return info, (names, t, cols)


def cmd_cartan(cfg: RunConfig, engine: DiffEngine):
    pp = cfg.penny
    kw = {}
    if cfg.system in ("penny", "penny-bfinal", "perturbed-penny"):
        kw = dict(m=pp.m, a=pp.a, I=pp.I, J=pp.J)
    if cfg.system == "perturbed-penny":
        kw["eps"] = pp.eps
    s = get_structure(cfg.system, **kw)
    n = cfg.grid.cartan_points
    q = s.sample(n, cfg.seed) if s.sampler else np.random.default_rng(cfg.seed).uniform(-1, 1, (n, 4))
    g = K.growth_vector(K.structure_fields(s), q[0], engine)
    if not g.is_engel:
        raise K.NotEngel(f"{s.name}: growth vector {list(g.ranks)} is not (2, 3, 4)")
    norm, table = K.bfinal_normalize(s, q, engine)
    rep = K.symmetry_constancy_report(table)
    out = {
        "structure": s.name,
        "growth_vector": list(g.ranks),
        "points": q,
        "torsion": {k: v for k, v in table.entries().items()},
        "normalization_flags": table.flags,
        "spreads": rep.spreads,
        "verdict": rep.verdict,
        "relation_residual_T4_14": float(np.abs(table.relation_residual()).max()),
        "line_field": K.canonical_line_field_check(norm, q, engine),
    }
    if rep.maximal:
        out["lie_algebra"] = K.identify_lie_algebra(np.mean(table.T, axis=0))
    return out, None


def cmd_hamiltonize(cfg: RunConfig, engine: DiffEngine):
    p = cfg.body.params()
    chart = H.make_chart(cfg.system, p, cfg.l3)
    f = H.factor_function(chart, cfg.factor, cfg.expr)
    grid = H.ts2_grid(cfg.grid.n_per_axis)
    floor = H.noise_floor(p, grid, engine, cfg.jobs)
    if cfg.system == "marble-so3":
        x = H.so3_sampler(np.random.default_rng(cfg.seed), cfg.grid.so3_points)
        meta = {"kind": "random", "points": len(x), "seed": cfg.seed}
    else:
        x = grid
        meta = {"kind": "tensor", "n_per_axis": cfg.grid.n_per_axis, "points": len(x)}
    rep = H.conformal_obstruction(chart, f, x, cfg.factor, floor, engine, meta, cfg.jobs)
    out = rep.to_dict()
    if cfg.factor == "custom":
        out["factor_expr"] = cfg.expr
    if cfg.system == "marble-so3":
        out["closed_form_check"] = _closed_form(p, x, engine)
    return out, None


def _closed_form(p: C.BodyParams, x, engine):
    if not np.allclose(p.A, p.A[0]):
        return {"status": "skipped", "reason": "closed form needs equal inertias"}
    ch = H.make_chart("marble-so3", p)
    _, _, ix = H.obstruction_fields(ch, H.factor_function(ch, "unit"), x, engine)
    k = np.diag(H.m_basis_change(p))
    w, _, _ = H.marble_spatial_omega(p, x)
    m = x[:, 3:6].copy()
    m[:, :2] -= p.mr2 * w[:, :2]
    err = float(np.abs(ix.coeffs * k[:, None] * k[None, :] - H.closed_form_ix_d_omega(p, m)).max())
    tol = 1e-10 if engine.mode == "ad" else 1e-6
    return {"status": "pass" if err < tol else "fail", "max_error": err, "tolerance": tol}


def cmd_check(cfg: RunConfig, engine: DiffEngine):
    nums = cfg.only or list(range(1, len(acceptance.CHECKS) + 1))
    results = []
    for i in nums:
        r = acceptance.run(i, engine)
        click.echo(r.line())
        results.append(r)
    out = {"results": [{"number": r.number, "name": r.name, "passed": r.passed, "measured": r.measured}
                       for r in results],
           "all_passed": all(r.passed for r in results)}
    return out, None


COMMANDS = {"simulate": cmd_simulate, "cartan": cmd_cartan, "hamiltonize": cmd_hamiltonize, "check": cmd_check}


def execute(command: str, config_file: Optional[str], overrides: dict, write: bool = True) -> int:
    try:
        cfg = build_config(command, config_file, overrides)
        engine = cfg.engine_obj()
    except (ValidationError, ValueError, OSError) as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    t0 = time.perf_counter()
    try:
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            out, csv = COMMANDS[command](cfg, engine)
    except K.StructuralError as exc:
        click.echo(f"structural precondition failed: {exc}", err=True)
        return EXIT_STRUCTURE
    except (IntegrationError, H.DegenerateForm, C.ConstraintViolation, FloatingPointError,
            np.linalg.LinAlgError, ArithmeticError) as exc:
        click.echo(f"numerical failure: {exc}", err=True)
        return EXIT_NUMERIC
    except (KeyError, ValueError) as exc:
        click.echo(f"config error: {exc}", err=True)
        return EXIT_CONFIG
    wall = time.perf_counter() - t0
    out = dict(out, engine=engine.mode)
    if write:
        stem = write_outputs(cfg.model_copy(update={"engine": engine.mode}), out, wall, csv)
        click.echo(f"wrote {stem.with_suffix('.json')}")
    if command == "check":
        return 0 if out["all_passed"] else 1
    if "verdict" in out:
        click.echo(f"verdict: {out['verdict']}")
    return 0


# ------------------------------------------------------------------ click wiring

def _common(f):
    opts = [
        click.option("--config", "config_file", type=click.Path(dir_okay=False), help="JSON config file."),
        click.option("--seed", type=int),
        click.option("--engine", type=str, help="ad or fd (NH_ENGINE overrides)."),
        click.option("--jobs", type=int),
        click.option("--out-dir", "out_dir", type=str),
        click.option("--prefix", type=str),
    ]
    for o in reversed(opts):
        f = o(f)
    return f


def _body(f):
    for name in ("I1", "I2", "I3", "mu", "r"):
        f = click.option(f"--{name}", f"body_{name}", type=float)(f)
    return f


def _run(command, config_file, mapping: dict):
    sys.exit(execute(command, config_file, mapping))


@click.group()
def main():
    """Nonholonomic mechanics toolkit."""


@main.command()
@_common
@_body
@click.option("--system", type=str)
@click.option("--A", "A", type=float, help="Penny quasivelocity along d/d phi.")
@click.option("--B", "B", type=float, help="Penny quasivelocity along d/d theta.")
@click.option("--dt", type=float)
@click.option("--t-end", "t_end", type=float)
@click.option("--method", type=str)
@click.option("--initial", type=float, multiple=True, help="Initial state, repeat per component.")
def simulate(config_file, seed, engine, jobs, out_dir, prefix, system, A, B, dt, t_end, method, initial, **body):
    """Integrate a system and write a trajectory CSV plus a JSON manifest."""
    _run("simulate", config_file, {
        "seed": seed, "engine": engine, "jobs": jobs, "out_dir": out_dir, "prefix": prefix,
        "system": system, "penny.A": A, "penny.B": B, "integrator.dt": dt, "integrator.t_end": t_end,
        "integrator.method": method, "initial": initial,
        **{f"body.{k[5:]}": v for k, v in body.items()}})


@main.command()
@_common
@click.option("--structure", "system", type=str)
@click.option("--points", type=int)
@click.option("--eps", type=float)
def cartan(config_file, seed, engine, jobs, out_dir, prefix, system, points, eps):
    """Growth vector, normalized torsion table and symmetry verdict."""
    _run("cartan", config_file, {
        "seed": seed, "engine": engine, "jobs": jobs, "out_dir": out_dir, "prefix": prefix,
        "system": system, "grid.cartan_points": points, "penny.eps": eps})


@main.command()
@_common
@_body
@click.option("--system", type=str)
@click.option("--factor", type=str)
@click.option("--expr", type=str, help="Custom factor in g0, g1, g2.")
@click.option("--l3", type=float)
@click.option("--n-per-axis", "n", type=int)
@click.option("--so3-points", type=int)
def hamiltonize(config_file, seed, engine, jobs, out_dir, prefix, system, factor, expr, l3, n, so3_points,
                **body):
    """Conformal Hamiltonization obstruction report."""
    _run("hamiltonize", config_file, {
        "seed": seed, "engine": engine, "jobs": jobs, "out_dir": out_dir, "prefix": prefix,
        "system": system, "factor": factor, "expr": expr, "l3": l3, "grid.n_per_axis": n,
        "grid.so3_points": so3_points, **{f"body.{k[5:]}": v for k, v in body.items()}})


@main.command()
@_common
@click.option("--only", type=int, multiple=True, help="Run only these check numbers.")
def check(config_file, seed, engine, jobs, out_dir, prefix, only):
    """Run the acceptance suite and print one line per criterion."""
    _run("check", config_file, {
        "seed": seed, "engine": engine, "jobs": jobs, "out_dir": out_dir, "prefix": prefix, "only": only})


if __name__ == "__main__":
    main()
