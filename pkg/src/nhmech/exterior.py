"""Numerical exterior calculus on coframes.

Forms are stored densely with fully antisymmetric coefficients: a k-form is
``(1/k!) a_{I1..Ik} eta^I1 ^ ... ^ eta^Ik``, i.e. ``a_{I1..Ik}`` is its value on
``(e_I1, ..., e_Ik)``.  Leading axes of coefficient arrays are batch axes.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, factorial
from typing import Callable

import numpy as np

from . import dual as D
from .dual import DiffEngine


class SingularCoframe(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class CoframeField:
    """``eta = A(q) dq``: row I of ``A`` holds the components of eta^I."""

    dim: int
    matrix: Callable
    orthonormal: bool = False
    name: str = "coframe"

    def __call__(self, q):
        return self.matrix(q)

    def frame(self, q):
        """Dual frame B = A^-1; column J holds e_J."""
        return checked_inv(self.matrix(q), self.name)


def checked_inv(A, name="coframe", max_cond=1e12):
    """Inverse with a cheap infinity-norm condition estimate."""
    Ar = D.real(A)
    try:
        Ai = np.linalg.inv(Ar)
    except np.linalg.LinAlgError:
        raise SingularCoframe(f"{name}: coframe singular") from None
    cond = np.abs(Ar).sum(-1).max(-1) * np.abs(Ai).sum(-1).max(-1)
    if not np.all(np.isfinite(cond)) or np.max(cond) > max_cond:
        raise SingularCoframe(f"{name}: coframe singular (cond~{np.max(cond):.3g})")
    return D.inv(A) if D.is_dual(A) else Ai


def check_orthonormal(cof: CoframeField, metric: Callable, q, tol: float = 1e-10) -> bool:
    """Spot-check sum_I eta^I (x) eta^I against a coordinate metric."""
    A = D.real(cof(q))
    return bool(np.abs(np.swapaxes(A, -1, -2) @ A - np.asarray(metric(q))).max() < tol)


def _frame_jacobian(cof, q, engine):
    # DB[..., a, J, c] = d B_aJ / d q^c
    return engine.jacobian(lambda x: D.inv(cof(x)), q)


def lie_brackets(cof: CoframeField, q, engine: DiffEngine | None = None, B=None):
    """Coordinate components br[..., a, J, K] of [e_J, e_K]."""
    engine = engine or DiffEngine()
    if B is None:
        B = cof.frame(q)
    DB = _frame_jacobian(cof, q, engine)
    t = D.einsum("...akc,...cj->...ajk", DB, B)  # (De_K e_J)^a
    return t - D.swapaxes(t, -1, -2)


def structure_functions(cof: CoframeField, q, engine: DiffEngine | None = None):
    """c[..., I, J, K] = d eta^I (e_J, e_K) = -eta^I([e_J, e_K])."""
    A = cof(q)
    B = checked_inv(A, cof.name)
    return -D.einsum("...ia,...ajk->...ijk", A, lie_brackets(cof, q, engine, B))


def structure_functions_direct(cof: CoframeField, q, engine: DiffEngine | None = None):
    """Independent route: antisymmetrised coordinate derivatives of A."""
    engine = engine or DiffEngine()
    B = cof.frame(q)
    dA = engine.jacobian(cof.matrix, q)  # [I, b, a] = d_a A_Ib
    curl = D.swapaxes(dA, -1, -2) - dA  # [I, a, b] = d_a A_Ib - d_b A_Ia
    return D.einsum("...iab,...aj,...bk->...ijk", curl, B, B)


def levi_civita_connection(cof: CoframeField, q, engine: DiffEngine | None = None):
    """Gamma[..., I, J, K] = omega_IJ(e_K) for an orthonormal coframe.

    From d eta = -omega ^ eta one gets c^I_JK = Gamma_IJK - Gamma_IKJ, and skewness in
    (I, J) then fixes Gamma_IJK = (c^I_JK + c^J_KI - c^K_IJ) / 2.
    """
    if not cof.orthonormal:
        raise ValueError(f"{cof.name} is not declared orthonormal")
    c = structure_functions(cof, q, engine)
    return 0.5 * (c + _cyc(c))


def _lead(x, k):
    n = len(D.shape_of(x)) - k
    return tuple(range(n))


def _cyc(c):
    # returns c^J_KI - c^K_IJ indexed as [I, J, K]
    lead = _lead(c, 3)
    n = len(lead)
    t1 = D.transpose(c, lead + (n + 2, n, n + 1))  # [I,J,K] <- c[J,K,I]
    t2 = D.transpose(c, lead + (n + 1, n + 2, n))  # [I,J,K] <- c[K,I,J]
    return t1 - t2


# ------------------------------------------------------------------ forms

@dataclass(frozen=True)
class Form:
    """Value of a k-form at one or more points; ``basis`` names the coframe."""

    coeffs: object
    degree: int
    basis: str = "coordinate"

    @property
    def dim(self):
        return D.shape_of(self.coeffs)[-1] if self.degree else None

    def component(self, *idx):
        return self.coeffs[(Ellipsis,) + tuple(idx)]

    def __add__(self, o: "Form"):
        _compatible(self, o)
        if self.degree != o.degree:
            raise ValueError("degree mismatch")
        return Form(self.coeffs + o.coeffs, self.degree, self.basis)

    def __sub__(self, o: "Form"):
        return self + o.scale(-1.0)

    def scale(self, f):
        f = f if D.is_dual(f) or np.ndim(f) == 0 else np.asarray(f)[(...,) + (None,) * self.degree]
        if D.is_dual(f):
            f = f.reshape(*(D.shape_of(f) + (1,) * self.degree))
        return Form(self.coeffs * f, self.degree, self.basis)

    def max_abs(self):
        return float(np.max(np.abs(D.real(self.coeffs))))


def _compatible(a: Form, b: Form):
    if a.basis != b.basis:
        raise ValueError(f"basis mismatch: {a.basis} vs {b.basis}")


def basis_form(n: int, idx, basis: str = "coordinate") -> Form:
    """eta^{i1} ^ ... ^ eta^{ik} for 0-based indices."""
    out = None
    for i in idx:
        e = np.zeros(n)
        e[i] = 1.0
        f = Form(e, 1, basis)
        out = f if out is None else wedge(out, f)
    return out


def wedge(a: Form, b: Form) -> Form:
    _compatible(a, b)
    k, l = a.degree, b.degree
    if k == 0 or l == 0:
        s, f = (a, b) if k == 0 else (b, a)
        return f.scale(s.coeffs)
    sa, sb = D.shape_of(a.coeffs), D.shape_of(b.coeffs)
    la, lb = sa[: len(sa) - k], sb[: len(sb) - l]
    lead = np.broadcast_shapes(la, lb)
    letters = "abcdefgh"
    ia, ib = letters[:k], letters[k : k + l]
    outer = D.einsum(f"...{ia},...{ib}->...{ia}{ib}",
                     D.broadcast_to(a.coeffs, lead + sa[len(la):]),
                     D.broadcast_to(b.coeffs, lead + sb[len(lb):]))
    coef = factorial(k + l) / (factorial(k) * factorial(l))
    return Form(D.alternate(outer, k + l) * coef, k + l, a.basis)


def interior(X, f: Form) -> Form:
    """Contraction of the vector ``X`` (components in the dual basis) into the first slot."""
    if f.degree < 1:
        raise ValueError("cannot contract a 0-form")
    letters = "bcdefgh"[: f.degree - 1]
    return Form(D.einsum(f"...a,...a{letters}->...{letters}", X, f.coeffs), f.degree - 1, f.basis)


def evaluate(f: Form, *vectors):
    """f(v1, ..., vk)."""
    out = f
    for v in vectors:
        out = interior(v, out)
    return out.coeffs


def to_coordinate(f: Form, A) -> Form:
    """Rewrite a form given in the basis eta = A dq in the dq basis."""
    c = f.coeffs
    for _ in range(f.degree):
        c = _contract_first(c, A, f.degree)
    return Form(c, f.degree, "coordinate")


def _contract_first(c, A, k):
    letters = "bcdefgh"[: k - 1]
    return D.einsum(f"...i{letters},...ia->...{letters}a", c, A)


@dataclass(frozen=True)
class FormField:
    """Point-dependent form: ``coeffs(q)`` returns the coefficient array."""

    degree: int
    coeffs: Callable
    coframe: CoframeField | None = None
    name: str = "form"

    @property
    def basis(self):
        return "coordinate" if self.coframe is None else self.coframe.name

    def at(self, q) -> Form:
        return Form(self.coeffs(q), self.degree, self.basis)


def exterior_derivative(field: FormField, q, engine: DiffEngine | None = None) -> Form:
    engine = engine or DiffEngine()
    k = field.degree
    jac = engine.jacobian(field.coeffs, q)  # [..., I1..Ik, a]
    lead = _lead(jac, k + 1)
    n0 = len(lead)
    E = D.transpose(jac, lead + (n0 + k,) + tuple(range(n0, n0 + k)))
    if field.coframe is None:
        return Form(D.alternate(E, k + 1) * (k + 1), k + 1, "coordinate")
    B = field.coframe.frame(q)
    # frame derivatives e_J(a) = B_aJ d_a a
    E = _frame_dir(E, B, k)
    out = D.alternate(E, k + 1) * (k + 1)
    if k >= 1:
        c = structure_functions(field.coframe, q, engine)
        a = field.coeffs(q)
        letters = "defgh"[: k - 1]
        F = D.einsum(f"...ibc,...i{letters}->...bc{letters}", c, a)
        out = out + D.alternate(F, k + 1) * comb(k + 1, 2)
    return Form(out, k + 1, field.basis)


def _frame_dir(E, B, k):
    letters = "cdefgh"[:k]
    return D.einsum(f"...a{letters},...aj->...j{letters}", E, B)


def exterior_derivative_coordinate_of(field: FormField, q, engine: DiffEngine | None = None) -> Form:
    """d of an anholonomic field computed after conversion to the coordinate basis."""
    cof = field.coframe
    if cof is None:
        return exterior_derivative(field, q, engine)

    def coord(x):
        return to_coordinate(Form(field.coeffs(x), field.degree, field.basis), cof(x)).coeffs

    return exterior_derivative(FormField(field.degree, coord), q, engine)


def coframe_forms(cof: CoframeField) -> list[FormField]:
    """The coframe rows eta^I as coordinate-basis 1-form fields."""
    return [FormField(1, (lambda i: lambda x: cof(x)[..., i, :])(i), name=f"{cof.name}[{i}]")
            for i in range(cof.dim)]


def torsion_residual(cof: CoframeField, q, engine: DiffEngine | None = None):
    """max |d eta + omega ^ eta| evaluated on frame pairs."""
    c = structure_functions(cof, q, engine)
    G = levi_civita_connection(cof, q, engine)
    rebuilt = G - D.swapaxes(G, -1, -2)
    return float(np.max(np.abs(D.real(c - rebuilt))))


# ------------------------------------------------------------------ cotangent bundle

def anholonomic_canonical_two_form(cof: CoframeField, m, q, engine: DiffEngine | None = None) -> Form:
    """dm_I ^ eps^I + m_I d eps^I in the basis (eps^1..eps^n, dm_1..dm_n)."""
    n = cof.dim
    c = structure_functions(cof, q, engine)
    E = D.einsum("...i,...ijk->...jk", m, c)
    lead = D.shape_of(E)[:-2]
    I = np.broadcast_to(np.eye(n), lead + (n, n))
    Z = np.zeros(lead + (n, n))
    top = D.concatenate([E, -I], axis=-1)
    bot = D.concatenate([I, Z], axis=-1)
    return Form(D.concatenate([top, bot], axis=-2), 2, f"T*{cof.name}")


def poisson_block(E):
    n = D.shape_of(E)[-1]
    lead = D.shape_of(E)[:-2]
    I = np.broadcast_to(np.eye(n), lead + (n, n))
    Z = np.zeros(lead + (n, n))
    return D.concatenate([D.concatenate([Z, I], -1), D.concatenate([-I, E], -1)], -2)
