"""Forward-mode dual numbers over numpy arrays, plus the differentiation engine.

A :class:`Dual` carries a value and one directional derivative, both arrays of
the same shape.  Components may themselves be duals, which gives higher
derivatives by nesting.  Every perturbation gets an integer tag; when two
duals with different tags meet, the one with the larger tag is the outer
perturbation and the other is treated as a constant.  That rule keeps nested
Jacobians free of perturbation confusion.

Model code should use the array helpers of this module (``sin``, ``stack``,
``array``, ``einsum``, ``inv`` ...) so that it runs unchanged on plain arrays
and on duals.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass
from math import factorial
from typing import Callable

import numpy as np

_tags = itertools.count(1)


class Dual:
    """Value ``v`` plus tangent ``d`` for perturbation ``tag``."""

    __slots__ = ("v", "d", "tag")
    __array_ufunc__ = None  # make numpy hand binary ops back to us

    def __init__(self, v, d, tag: int):
        self.v = v
        self.d = d
        self.tag = tag

    # shape plumbing
    @property
    def shape(self):
        return shape_of(self.v)

    @property
    def ndim(self):
        return len(self.shape)

    def __len__(self):
        return self.shape[0]

    def __getitem__(self, idx):
        return Dual(self.v[idx], self.d[idx], self.tag)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    @property
    def T(self):
        return swapaxes(self, -1, -2)

    def reshape(self, *shape):
        return Dual(reshape(self.v, *shape), reshape(self.d, *shape), self.tag)

    def sum(self, axis=None):
        return asum(self, axis)

    def __repr__(self):
        return f"Dual(tag={self.tag}, v={self.v!r}, d={self.d!r})"

    # arithmetic
    def __neg__(self):
        return Dual(-self.v, -self.d, self.tag)

    def __pos__(self):
        return self

    def __add__(self, o):
        return _add(self, o)

    __radd__ = __add__

    def __sub__(self, o):
        return _add(self, -o)

    def __rsub__(self, o):
        return _add(-self, o)

    def __mul__(self, o):
        return _mul(self, o)

    __rmul__ = __mul__

    def __truediv__(self, o):
        return _mul(self, reciprocal(o))

    def __rtruediv__(self, o):
        return _mul(o, reciprocal(self))

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("dual exponents are not supported")
        return Dual(self.v**p, p * self.v ** (p - 1) * self.d, self.tag)

    def __matmul__(self, o):
        return _matmul(self, o)

    def __rmatmul__(self, o):
        return _matmul(o, self)


# ---------------------------------------------------------------- internals

def _top(*xs) -> int:
    return max((x.tag for x in xs if isinstance(x, Dual)), default=0)


def _split(x, tag):
    if isinstance(x, Dual) and x.tag == tag:
        return x.v, x.d
    return x, None


def _acc(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a + b


def _wrap(v, d, tag, like):
    if d is None:
        d = zeros_like(v)
    return Dual(v, broadcast_to(d, shape_of(v)) if shape_of(d) != shape_of(v) else d, tag)


def _add(a, b):
    t = _top(a, b)
    av, ad = _split(a, t)
    bv, bd = _split(b, t)
    v = av + bv
    return _wrap(v, _acc(ad, bd), t, v)


def _mul(a, b):
    t = _top(a, b)
    av, ad = _split(a, t)
    bv, bd = _split(b, t)
    d = _acc(None if ad is None else ad * bv, None if bd is None else av * bd)
    v = av * bv
    return _wrap(v, d, t, v)


def _matmul(a, b):
    t = _top(a, b)
    av, ad = _split(a, t)
    bv, bd = _split(b, t)
    d = _acc(None if ad is None else ad @ bv, None if bd is None else av @ bd)
    return Dual(av @ bv, d, t)


# ---------------------------------------------------------------- helpers

def is_dual(x) -> bool:
    return isinstance(x, Dual)


def real(x):
    """Innermost float value, stripping every perturbation."""
    while isinstance(x, Dual):
        x = x.v
    return np.asarray(x, dtype=float)


def shape_of(x):
    if isinstance(x, Dual):
        return shape_of(x.v)
    return np.shape(x)


def zeros_like(x):
    return np.zeros(shape_of(x))


def broadcast_to(x, shape):
    if isinstance(x, Dual):
        return Dual(broadcast_to(x.v, shape), broadcast_to(x.d, shape), x.tag)
    return np.broadcast_to(np.asarray(x, dtype=float), shape)


def reshape(x, *shape):
    if isinstance(x, Dual):
        return x.reshape(*shape)
    return np.reshape(x, shape if len(shape) != 1 else shape[0])


def swapaxes(x, a, b):
    if isinstance(x, Dual):
        return Dual(swapaxes(x.v, a, b), swapaxes(x.d, a, b), x.tag)
    return np.swapaxes(x, a, b)


def moveaxis(x, a, b):
    if isinstance(x, Dual):
        return Dual(moveaxis(x.v, a, b), moveaxis(x.d, a, b), x.tag)
    return np.moveaxis(x, a, b)


def transpose(x, axes):
    if isinstance(x, Dual):
        return Dual(transpose(x.v, axes), transpose(x.d, axes), x.tag)
    return np.transpose(x, axes)


def asum(x, axis=None):
    if isinstance(x, Dual):
        return Dual(asum(x.v, axis), asum(x.d, axis), x.tag)
    return np.sum(x, axis=axis)


def stack(items, axis=0):
    items = list(items)
    t = _top(*items)
    shapes = [shape_of(i) for i in items]
    same = all(sh == shapes[0] for sh in shapes)
    shape = shapes[0] if same else np.broadcast_shapes(*shapes)
    if t == 0:
        if same:
            return np.stack(items, axis=axis)
        return np.stack([np.broadcast_to(i, shape) for i in items], axis=axis)
    vs, ds = [], []
    for i in items:
        v, d = _split(i, t)
        if d is None:
            d = np.zeros(shape_of(v))
        if not same:
            v, d = broadcast_to(v, shape), broadcast_to(d, shape)
        vs.append(v)
        ds.append(d)
    return Dual(stack(vs, axis), stack(ds, axis), t)


def concatenate(items, axis=0):
    items = list(items)
    t = _top(*items)
    if t == 0:
        return np.concatenate([np.asarray(i, float) for i in items], axis=axis)
    vs, ds = [], []
    for i in items:
        v, d = _split(i, t)
        vs.append(v)
        ds.append(zeros_like(v) if d is None else d)
    return Dual(concatenate(vs, axis), concatenate(ds, axis), t)


def array(nested):
    """Build an array from nested lists of scalars/arrays/duals.

    Leaves are broadcast against each other and the list nesting becomes the
    trailing axes, so ``array([[a, b], [c, d]])`` with leaves of shape ``(N,)``
    has shape ``(N, 2, 2)``.
    """

    struct = []
    x = nested
    while isinstance(x, (list, tuple)):
        struct.append(len(x))
        x = x[0]
    leaves = list(_flatten(nested))
    shape = np.broadcast_shapes(*(shape_of(l) for l in leaves))
    return _assemble(leaves, shape, tuple(struct))


def _flatten(x):
    if isinstance(x, (list, tuple)):
        for i in x:
            yield from _flatten(i)
    else:
        yield x


def _assemble(leaves, shape, struct):
    t = _top(*leaves)
    if t == 0:
        out = np.empty(shape + (len(leaves),))
        for k, leaf in enumerate(leaves):
            out[..., k] = leaf
        return out.reshape(shape + struct)
    vs, ds = [], []
    for leaf in leaves:
        v, d = _split(leaf, t)
        vs.append(v)
        ds.append(0.0 if d is None else d)
    return Dual(_assemble(vs, shape, struct), _assemble(ds, shape, struct), t)


def where(cond, a, b):
    cond = np.asarray(cond, dtype=bool)
    t = _top(a, b)
    if t == 0:
        return np.where(cond, a, b)
    av, ad = _split(a, t)
    bv, bd = _split(b, t)
    ad = zeros_like(av) if ad is None else ad
    bd = zeros_like(bv) if bd is None else bd
    return Dual(where(cond, av, bv), where(cond, ad, bd), t)


def einsum(spec: str, *ops):
    """Multilinear ``np.einsum`` with the product rule for duals."""
    t = _top(*ops)
    if t == 0:
        return np.einsum(spec, *ops, optimize=len(ops) > 2)
    vals, ders = zip(*(_split(o, t) for o in ops))
    v = einsum(spec, *vals)
    d = None
    for k, dk in enumerate(ders):
        if dk is None:
            continue
        args = list(vals)
        args[k] = dk
        d = _acc(d, einsum(spec, *args))
    return Dual(v, d, t)


def dot(a, b):
    """Inner product over the last axis."""
    return asum(a * b, -1)


def cross(a, b):
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], axis=-1)


def norm(a):
    return sqrt(dot(a, a))


# ---------------------------------------------------------------- elementary functions

def _unary(f, df):
    def g(x):
        if isinstance(x, Dual):
            return Dual(g(x.v), df(x.v) * x.d, x.tag)
        return f(np.asarray(x, dtype=float))

    return g


sin = _unary(np.sin, lambda v: cos(v))
cos = _unary(np.cos, lambda v: -sin(v))
exp = _unary(np.exp, lambda v: exp(v))
log = _unary(np.log, lambda v: reciprocal(v))
sqrt = _unary(np.sqrt, lambda v: 0.5 * reciprocal(sqrt(v)))
tan = _unary(np.tan, lambda v: 1.0 + tan(v) * tan(v))


def reciprocal(x):
    if isinstance(x, Dual):
        r = reciprocal(x.v)
        return Dual(r, -(r * r) * x.d, x.tag)
    return 1.0 / np.asarray(x, dtype=float)


def power(x, p: float):
    if isinstance(x, Dual):
        return x**p
    return np.asarray(x, dtype=float) ** p


def arctan2(y, x):
    t = _top(y, x)
    if t == 0:
        return np.arctan2(y, x)
    yv, yd = _split(y, t)
    xv, xd = _split(x, t)
    r2 = xv * xv + yv * yv
    d = _acc(None if yd is None else xv * yd, None if xd is None else -(yv * xd))
    return Dual(arctan2(yv, xv), d / r2, t)


# ---------------------------------------------------------------- linear algebra (batched)

def inv(m):
    if isinstance(m, Dual):
        mi = inv(m.v)
        return Dual(mi, -(mi @ m.d @ mi), m.tag)
    return np.linalg.inv(m)


def solve(m, b):
    """Solve ``m x = b`` for matrix right-hand sides ``b`` of shape (..., n, k)."""
    t = _top(m, b)
    if t == 0:
        return np.linalg.solve(m, b)
    mv, md = _split(m, t)
    bv, bd = _split(b, t)
    x = solve(mv, bv)
    rhs = _acc(bd, None if md is None else -(md @ x))
    return Dual(x, solve(mv, rhs), t)


def det(m):
    if isinstance(m, Dual):
        dv = det(m.v)
        tr = einsum("...ij,...ji->...", inv(m.v), m.d)
        return Dual(dv, dv * tr, m.tag)
    return np.linalg.det(m)


def alternate(t, k: int):
    """Antisymmetrise the last ``k`` axes of ``t`` (average with signs)."""
    if k <= 1:
        return t
    lead = len(shape_of(t)) - k
    out = None
    for perm in itertools.permutations(range(k)):
        sign = _perm_sign(perm)
        term = transpose(t, tuple(range(lead)) + tuple(lead + p for p in perm))
        out = term * sign if out is None else out + term * sign
    return out * (1.0 / factorial(k))


def _perm_sign(perm) -> int:
    perm = list(perm)
    s = 1
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            s = -s
    return s


# ---------------------------------------------------------------- differentiation engine

@dataclass(frozen=True)
class DiffEngine:
    """Derivative provider: dual-number AD (default) or central differences."""

    mode: str = "ad"
    h: float = 1e-5

    def __post_init__(self):
        if self.mode not in ("ad", "fd"):
            raise ValueError(f"unknown engine mode {self.mode!r}")
        if not self.h > 0:
            raise ValueError("fd step must be positive")

    @classmethod
    def from_env(cls, default: str = "ad", h: float = 1e-5) -> "DiffEngine":
        return cls(os.environ.get("NH_ENGINE", default).strip().lower() or default, h)

    def directional(self, f: Callable, q, u):
        """Derivative of ``f`` at ``q`` along the tangent ``u`` (same shape as q)."""
        if self.mode == "ad":
            tag = next(_tags)
            out = f(Dual(q, broadcast_to(u, shape_of(q)), tag))
            return _tangent(out, tag)
        h = self.h
        return (f(q + h * np.asarray(u)) - f(q - h * np.asarray(u))) * (0.5 / h)

    def derivative(self, f: Callable, q, k: int):
        e = np.zeros(shape_of(q)[-1])
        e[k] = 1.0
        return self.directional(f, q, e)

    def jacobian(self, f: Callable, q):
        """Partials of ``f`` stacked along a new trailing axis (one per coordinate).

        All directions are pushed through ``f`` in one call by adding a leading
        batch axis, so ``f`` must broadcast over leading axes.
        """
        n = shape_of(q)[-1]
        shape = shape_of(q)
        eye = np.eye(n).reshape((n,) + (1,) * (len(shape) - 1) + (n,))
        Q = broadcast_to(q, (n,) + shape)
        if self.mode == "ad":
            tag = next(_tags)
            out = _tangent(f(Dual(Q, np.broadcast_to(eye, (n,) + shape), tag)), tag)
        else:
            h = self.h
            out = (f(Q + h * eye) - f(Q - h * eye)) * (0.5 / h)
        return moveaxis(out, 0, -1)


def _tangent(out, tag):
    if isinstance(out, tuple):
        return tuple(_tangent(o, tag) for o in out)
    if isinstance(out, Dual) and out.tag == tag:
        return out.d
    return zeros_like(out)


def default_engine() -> DiffEngine:
    return DiffEngine.from_env()
