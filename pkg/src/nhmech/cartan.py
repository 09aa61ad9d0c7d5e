"""Growth vectors, derived ideals and the pointwise B_final normalization for Engel structures."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import dual as D
from .dual import DiffEngine
from .exterior import CoframeField, lie_brackets, structure_functions
from .structures import NHStructure


class StructuralError(ValueError):
    """A structural precondition (adaptation, Engel growth) fails."""


class NotEngel(StructuralError):
    pass


RANK_TOL = 1e-8


# ------------------------------------------------------------------ distributions

def _bracket(X: Callable, Y: Callable, engine: DiffEngine) -> Callable:
    def Z(q):
        return (D.einsum("...ac,...c->...a", engine.jacobian(Y, q), X(q))
                - D.einsum("...ac,...c->...a", engine.jacobian(X, q), Y(q)))

    return Z


def numerical_rank(M, tol: float = RANK_TOL) -> int:
    s = np.linalg.svd(np.asarray(M, dtype=float), compute_uv=False)
    return int(np.sum(s > tol * s[0])) if s.size and s[0] > 0 else 0


def structure_fields(s: NHStructure) -> list[Callable]:
    """Horizontal frame vectors of an adapted coframe as vector fields."""
    return [(lambda i: lambda q: D.inv(s.coframe(q))[..., :, i])(i) for i in range(s.rank)]


@dataclass(frozen=True)
class GrowthReport:
    ranks: tuple[int, ...]
    locally_constant: bool

    @property
    def is_engel(self) -> bool:
        return self.ranks == (2, 3, 4)


def growth_vector(fields: list[Callable], q, engine: DiffEngine | None = None,
                  tol: float = RANK_TOL, probe: float = 1e-3, seed: int = 0) -> GrowthReport:
    """Ranks of H, H + [H, H], ... at a single point ``q`` (1-d array)."""
    engine = engine or DiffEngine()
    q = np.asarray(q, dtype=float)
    n = q.shape[-1]

    def ranks_at(x):
        span = list(fields)
        level = list(fields)
        out = [numerical_rank(np.stack([D.real(X(x)) for X in span], -1), tol)]
        while out[-1] < n:
            level = [_bracket(X, Y, engine) for X in fields for Y in level]
            span = span + level
            r = numerical_rank(np.stack([D.real(X(x)) for X in span], -1), tol)
            if r == out[-1]:
                break
            out.append(r)
        return tuple(out)

    base = ranks_at(q)
    rng = np.random.default_rng(seed)
    steady = all(ranks_at(q + probe * rng.standard_normal(n)) == base for _ in range(2))
    return GrowthReport(base, steady)


def derived_ideal_coframe(s: NHStructure, q, engine: DiffEngine | None = None, tol: float = 1e-9) -> dict:
    """Split annihilator rows by whether d eta^nu vanishes modulo the annihilator ideal.

    Modulo the ideal only the horizontal-horizontal components survive, so the test is
    c^nu_ij = 0 for horizontal i < j.
    """
    c = D.real(structure_functions(s.coframe, q, engine))
    r, n = s.rank, s.dim
    inside, outside = [], []
    for nu in range(r, n):
        block = c[..., nu, :r, :r]
        (inside if np.max(np.abs(block)) < tol else outside).append(nu)
    bad = [nu for nu in s.Phi if nu not in inside]
    if bad:
        raise StructuralError(f"{s.name}: declared derived-ideal rows {bad} fail the test")
    return {"horizontal": list(range(r)), "phi": outside, "Phi": inside}


# ------------------------------------------------------------------ B_final normalization

LABELS = [(i, j, k) for i in range(4) for j in range(4) for k in range(j + 1, 4)]


def label(i, j, k) -> str:
    return f"T{i + 1}_{j + 1}{k + 1}"


@dataclass
class TorsionTable:
    """Torsion T[..., I, J, K] of a normalized coframe (0-based indices)."""

    T: np.ndarray
    tol: float = 1e-6
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        T = self.T
        self.flags = {
            "T3_12=1": bool(np.all(np.abs(T[..., 2, 0, 1] - 1) < self.tol)),
            "T4_13=0": bool(np.all(np.abs(T[..., 3, 0, 2]) < self.tol)),
            "T4_23=1": bool(np.all(np.abs(T[..., 3, 1, 2] - 1) < self.tol)),
            "T1_23=T2_23=T3_23=0": bool(np.all(np.abs(T[..., :3, 1, 2]) < self.tol)),
            "T4_12=0": bool(np.all(np.abs(T[..., 3, 0, 1]) < self.tol)),
        }

    def entries(self) -> dict:
        return {label(*ijk): self.T[(...,) + ijk] for ijk in LABELS}

    def relation_residual(self):
        """T4_14 - (T2_12 + T3_13)."""
        T = self.T
        return T[..., 3, 0, 3] - (T[..., 1, 0, 1] + T[..., 2, 0, 2])

    def nonzero(self, tol: float = 1e-8) -> dict:
        return {k: v for k, v in self.entries().items() if np.all(np.abs(v) > tol)}


def _rot(a):
    c, s = D.cos(a), D.sin(a)
    return D.array([[c, -s], [s, c]])


def _first_reduction(c, tol):
    """g2 = blockdiag(A, a33, a44) from structure functions c of an adapted coframe."""
    c312 = c[..., 2, 0, 1]
    if np.any(np.abs(D.real(c[..., 3, 0, 1])) > 1e-7):
        raise StructuralError("d eta^4 has a horizontal component; row 4 is not in the derived ideal")
    if np.any(np.abs(D.real(c312)) < tol):
        raise StructuralError("T3_12 vanishes; annihilator rows misdeclared")
    v1, v2 = c[..., 3, 0, 2], c[..., 3, 1, 2]
    vn = D.sqrt(v1 * v1 + v2 * v2)
    if np.any(D.real(vn) < tol):
        raise NotEngel("(T4_13, T4_23) vanishes: distribution is not Engel here")
    sig = np.sign(D.real(c312))
    u1, u2 = v1, v2 * sig
    beta = D.arctan2(u2, u1)
    a = np.pi / 2 - beta
    # angle in [-pi/2, pi/2): a shift by pi is a sign in the structure group, and the
    # common cases (a = 0, pi) then sit away from the cut
    a = a - np.pi * np.floor((D.real(a) + np.pi / 2) / np.pi)
    R = _rot(a)
    A = R * D.array([[1.0 + 0 * sig, sig], [1.0 + 0 * sig, sig]])  # R @ diag(1, sig)
    w2 = R[..., 1, 0] * u1 + R[..., 1, 1] * u2
    s = np.sign(D.real(w2))
    a33 = 1.0 / (c312 * sig)
    a44 = a33 / (vn * s)
    z = 0.0 * a33
    return D.array([
        [A[..., 0, 0], A[..., 0, 1], z, z],
        [A[..., 1, 0], A[..., 1, 1], z, z],
        [z, z, a33, z],
        [z, z, z, a44],
    ])


def _second_reduction(c):
    """g3 = identity plus (B1, B2, a34) in the last column."""
    b = -c[..., :3, 1, 2]
    z = 0.0 * b[..., 0]
    o = z + 1.0
    return D.array([
        [o, z, z, b[..., 0]],
        [z, o, z, b[..., 1]],
        [z, z, o, b[..., 2]],
        [z, z, z, o],
    ])


FD_STEP = 1e-3  # three nested difference levels: round-off grows like eps / h^3


def cartan_engine(engine: DiffEngine | None) -> DiffEngine:
    engine = engine or DiffEngine()
    if engine.mode == "fd" and engine.h < FD_STEP:
        return DiffEngine("fd", FD_STEP)
    return engine


def normalized_coframe(s: NHStructure, engine: DiffEngine | None = None, tol: float = 1e-10) -> CoframeField:
    """Coframe field eta_bar = g3 g2 eta; each factor is recomputed pointwise."""
    if s.dim != 4 or s.rank != 2:
        raise NotEngel(f"{s.name}: B_final needs a rank-2 distribution on a 4-manifold")
    engine = cartan_engine(engine)
    cof = s.coframe

    def eta1(q):
        return _first_reduction(structure_functions(cof, q, engine), tol) @ cof(q)

    c1 = CoframeField(4, eta1, name=f"{cof.name}'")

    def eta2(q):
        return _second_reduction(structure_functions(c1, q, engine)) @ eta1(q)

    return CoframeField(4, eta2, name=f"{cof.name}-bfinal")


def bfinal_normalize(s: NHStructure, q, engine: DiffEngine | None = None):
    """Return the normalized coframe field and its torsion table at ``q``."""
    engine = cartan_engine(engine)
    norm = normalized_coframe(s, engine)
    T = D.real(structure_functions(norm, q, engine))
    return norm, TorsionTable(T)


# ------------------------------------------------------------------ symmetry

@dataclass(frozen=True)
class ConstancyReport:
    spreads: dict
    means: dict
    verdict: str
    nonconstant: list
    tol: float

    @property
    def maximal(self) -> bool:
        return not self.nonconstant


MAXIMAL = "integrable e-structure (dim-4 symmetry)"


def symmetry_constancy_report(table: TorsionTable, tol: float = 1e-8) -> ConstancyReport:
    """Spread of each torsion entry over the sampled points (leading axis)."""
    spreads, means = {}, {}
    for key, val in table.entries().items():
        val = np.atleast_1d(val)
        spreads[key] = float(val.max() - val.min())
        means[key] = float(val.mean())
    bad = sorted(k for k, v in spreads.items() if v >= tol)
    verdict = MAXIMAL if not bad else "non-maximal symmetry (non-constant invariants)"
    return ConstancyReport(spreads, means, verdict, bad, tol)


def structure_constants(T) -> np.ndarray:
    """C[I, J, K] with [e_J, e_K] = C^I_JK e_I = -T^I_JK e_I."""
    return -np.asarray(T, dtype=float)


def jacobi_residual(C) -> float:
    C = np.asarray(C)
    # [e_a,[e_b,e_c]] + cyclic, component m: C^l_bc C^m_al + ...
    J = (np.einsum("lbc,mal->mabc", C, C) + np.einsum("lca,mbl->mabc", C, C)
         + np.einsum("lab,mcl->mabc", C, C))
    return float(np.abs(J).max())


def identify_lie_algebra(T, tol: float = 1e-8) -> dict:
    """Test a 4-dim algebra for the se(2) + R pattern.

    se(2) + R is characterized here by: Jacobi identity, a 2-dim abelian derived
    algebra, a 1-dim centre, and an element acting on the derived algebra with
    purely imaginary nonzero eigenvalues.
    """
    C = structure_constants(T)
    n = C.shape[0]
    derived = C.reshape(n, -1)
    dr = numerical_rank(derived, tol) if np.abs(derived).max() > tol else 0
    # centre: X with C^I_JK X^J = 0 for all I, K
    M = np.transpose(C, (0, 2, 1)).reshape(-1, n)
    sv = np.linalg.svd(M, compute_uv=False)
    centre = int(np.sum(sv < tol * max(1.0, sv.max())))
    U = np.linalg.svd(derived)[0][:, :dr]
    abelian = bool(dr) and all(
        np.abs(np.einsum("ijk,j,k->i", C, U[:, a], U[:, b])).max() < tol
        for a in range(dr) for b in range(dr))
    elliptic = False
    for J in range(n):
        ad = C[:, J, :]
        block = U.T @ ad @ U
        ev = np.linalg.eigvals(block)
        if np.all(np.abs(ev.real) < tol) and np.all(np.abs(ev.imag) > tol):
            elliptic = True
    is_se2r = jacobi_residual(C) < tol and dr == 2 and centre == 1 and abelian and elliptic
    return {"derived_dim": dr, "centre_dim": centre, "derived_abelian": abelian,
            "elliptic_action": elliptic, "jacobi_residual": jacobi_residual(C),
            "algebra": "se(2)+R" if is_se2r else "other"}


def canonical_line_field_check(norm: CoframeField, q, engine: DiffEngine | None = None,
                               tol: float = 1e-8) -> dict:
    """Bracket test for the characteristic line L with [L, H1] in H1.

    Evaluates eta4([X3, X1]) and eta4([X3, X2]) from frame Jacobians.
    """
    engine = cartan_engine(engine)
    br = D.real(lie_brackets(norm, q, engine))
    eta4 = D.real(norm(q))[..., 3, :]
    r1 = np.einsum("...a,...a->...", eta4, br[..., :, 2, 0])
    r2 = np.einsum("...a,...a->...", eta4, br[..., :, 2, 1])
    return {"X1": bool(np.all(np.abs(r1) < tol)), "X2": bool(np.all(np.abs(r2) < tol)),
            "residual_X1": float(np.max(np.abs(r1))), "residual_X2": float(np.max(np.abs(r2)))}


def line_field_for(s: NHStructure, q, engine: DiffEngine | None = None) -> dict:
    """Run the growth precondition, normalize and apply the bracket test."""
    engine = engine or DiffEngine()
    q = np.atleast_2d(q)
    g = growth_vector(structure_fields(s), q[0], engine)
    if not g.is_engel:
        raise NotEngel(f"{s.name}: growth vector {g.ranks} is not (2, 3, 4)")
    return canonical_line_field_check(normalized_coframe(s, engine), q, engine)
