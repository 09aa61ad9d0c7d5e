"""Catalog of nonholonomic structures on four-dimensional charts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import dual as D
from .exterior import CoframeField


@dataclass(frozen=True)
class NHStructure:
    """Adapted coframe: rows [0, rank) span H*, the remaining rows annihilate H.

    ``phi`` lists annihilator rows outside the first derived ideal, ``Phi`` those inside.
    """

    name: str
    coframe: CoframeField
    rank: int
    phi: tuple[int, ...] = ()
    Phi: tuple[int, ...] = ()
    sampler: object = field(default=None, repr=False, compare=False)
    params: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self):
        return self.coframe.dim

    def sample(self, n: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        if self.sampler is not None:
            return self.sampler(rng, n)
        return rng.uniform(-1.0, 1.0, size=(n, self.dim))

    def horizontal_fields(self, q):
        """Frame vectors spanning H, shape (..., n, rank)."""
        return self.coframe.frame(q)[..., :, : self.rank]


def _zero(q):
    return 0.0 * q[..., 0]


def penny_coframe(m=2.0, a=1.0, I=2.0, J=2.0, scale3=None) -> CoframeField:
    """Orthonormal penny coframe on (x, y, theta, phi).

    ``scale3`` replaces the sqrt(m/2) factor of the third row (used for the
    alternative already-normalized representative).
    """
    k1 = np.sqrt((m * a * a + I) / 2.0)
    k2 = np.sqrt(J / 2.0)
    k3 = np.sqrt(m / 2.0) if scale3 is None else scale3
    k4 = np.sqrt(m / 2.0)

    def A(q):
        th = q[..., 2]
        z = _zero(q)
        c, s = D.cos(th), D.sin(th)
        return D.array([
            [z, z, z, z + k1],
            [z, z, z + k2, z],
            [-k3 * s, k3 * c, z, z],
            [k4 * c, k4 * s, z, z - k4 * a],
        ])

    return CoframeField(4, A, orthonormal=True, name="penny")


def _penny_sampler(rng, n):
    return rng.uniform([-2, -2, 0, 0], [2, 2, 2 * np.pi, 2 * np.pi], size=(n, 4))


def penny(m=2.0, a=1.0, I=2.0, J=2.0) -> NHStructure:
    return NHStructure("penny", penny_coframe(m, a, I, J), 2, (2,), (3,), _penny_sampler,
                       dict(m=m, a=a, I=I, J=J))


def penny_bfinal(m=2.0, a=1.0, I=2.0, J=2.0) -> NHStructure:
    """Penny coframe with the third row rescaled by sqrt(J (m a^2 + I)) / 2."""
    cof = penny_coframe(m, a, I, J, scale3=np.sqrt(J * (m * a * a + I)) / 2.0)
    cof = CoframeField(4, cof.matrix, orthonormal=False, name="penny-bfinal")
    return NHStructure("penny-bfinal", cof, 2, (2,), (3,), _penny_sampler, dict(m=m, a=a, I=I, J=J))


def scaled(s: NHStructure, factor) -> NHStructure:
    """Multiply the coframe by ``factor`` (a constant or a function of q)."""
    f = factor if callable(factor) else (lambda q, c=float(factor): c + 0.0 * q[..., 0])

    def A(q):
        return s.coframe(q) * f(q)[..., None, None]

    cof = CoframeField(s.dim, A, orthonormal=s.coframe.orthonormal, name=f"{s.coframe.name}*")
    return NHStructure(f"{s.name}-scaled", cof, s.rank, s.phi, s.Phi, s.sampler, s.params)


def perturbed_penny(eps=0.1, **kw) -> NHStructure:
    """Penny with kinetic energy multiplied by 1 + eps sin x."""
    base = penny(**kw)
    out = scaled(base, lambda q: D.sqrt(1.0 + eps * D.sin(q[..., 0])))
    return NHStructure("perturbed-penny", out.coframe, 2, (2,), (3,), _penny_sampler,
                       dict(base.params, eps=eps))


def engel_normal_form() -> NHStructure:
    """H = span{d/dw, d/dx + w d/dy + y d/dz} on (x, y, z, w), Euclidean metric on H."""

    def A(q):
        x, y, z, w = (q[..., i] for i in range(4))
        o = 0.0 * x
        n = D.sqrt(1.0 + w * w + y * y)
        return D.array([
            [o, o, o, o + 1.0],
            [1.0 / n + o, w / n, y / n, o],
            [-w, o + 1.0, o, o],
            [-y, o, o + 1.0, o],
        ])

    return NHStructure("engel-normal-form", CoframeField(4, A, orthonormal=False, name="engel"),
                       2, (2,), (3,))


def integrable() -> NHStructure:
    """Frobenius-integrable H = span{d/dx, d/dy} in R^4."""
    cof = CoframeField(4, lambda q: D.broadcast_to(np.eye(4), D.shape_of(q)[:-1] + (4, 4)) + 0.0 * q[..., :1, None],
                       orthonormal=True, name="flat")
    return NHStructure("integrable", cof, 2, (), (2, 3))


STRUCTURES = {
    "penny": penny,
    "penny-bfinal": penny_bfinal,
    "engel-normal-form": engel_normal_form,
    "perturbed-penny": perturbed_penny,
    "integrable": integrable,
}


def get_structure(name: str, **params) -> NHStructure:
    try:
        return STRUCTURES[name](**params)
    except KeyError:
        raise KeyError(f"unknown structure {name!r}; choose from {sorted(STRUCTURES)}") from None
