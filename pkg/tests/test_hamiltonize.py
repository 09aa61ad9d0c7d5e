import numpy as np
import pytest

from nhmech import chaplygin as C
from nhmech import dual as D
from nhmech import hamiltonize as H
from nhmech.dual import DiffEngine
from nhmech.exterior import FormField, exterior_derivative

P = C.BodyParams(1.0, 2.0, 3.0, 1.0, 1.0)
X50 = H.ts2_sampler(np.random.default_rng(0), 50)


@pytest.mark.parametrize("system", ["veselova", "rubber"])
def test_skew_gradient_reproduces_pushed_flow(system):
    ch = H.make_chart(system, P)
    assert np.abs(H.physical_flow(ch, X50) - C.chart_flow(system, P, X50)).max() < 1e-6


def test_rubber_form_at_r0_is_veselova():
    p0 = P.with_r(0.0)
    a = H.omega_nh_rubber(p0, X50)
    b = H.omega_nh_veselova(p0, X50)
    assert np.abs(a - b).max() < 1e-12


def test_zero_momentum_spherical_form_is_canonical():
    sph = C.BodyParams(2.0, 2.0, 2.0, 1.0, 1.0)
    x = X50.copy()
    x[:, 2:] = 0.0
    assert np.abs(H.omega_nh_veselova(sph, x) - H._canonical_ts2(x)).max() < 1e-15


def test_reduced_marble_canonical_limits():
    p0 = P.with_r(0.0)
    assert np.abs(H.omega_red_marble(p0, X50, 0.0) - H._canonical_ts2(X50)).max() < 1e-15
    # l3 alone: magnetic term, flow equal to the marble flow with r = 0 pushed to the chart
    ch = H.make_chart("marble-reduced", p0, l3=0.7)
    assert np.abs(H.physical_flow(ch, X50) - C.chart_flow("marble", p0, X50, l3=0.7)).max() < 1e-12


@pytest.mark.parametrize("l3", [0.0, 0.5])
@pytest.mark.parametrize("p", [P, C.BodyParams(0.7, 1.1, 1.9, 2.0, 0.6)])
def test_reduced_marble_matches_twisted_quotient(p, l3):
    ch = H.make_chart("marble-reduced", p, l3=l3)
    assert np.abs(H.physical_flow(ch, X50) - H.twisted_quotient_flow(p, X50, l3)).max() < 1e-10


def test_reduced_chart_momenta_are_not_body_momenta():
    """Same gamma dynamics; the momenta move differently because L is not twisted-invariant."""
    tw = H.twisted_quotient_flow(P, X50, 0.5)
    lg = C.chart_flow("marble", P, X50, l3=0.5)
    assert np.abs(tw[:, :2] - lg[:, :2]).max() < 1e-12
    assert np.abs(tw[:, 2:] - lg[:, 2:]).max() > 1e-2


def test_marble_so3_form_generates_lifted_flow():
    x = H.so3_sampler(np.random.default_rng(1), 20)
    ch = H.make_chart("marble-so3", P)
    w, _, _ = H.marble_spatial_omega(P, x)
    X = H.physical_flow(ch, x)
    assert np.abs(X[:, :3] - w).max() < 1e-12  # rho(X) = omega
    assert np.abs(X[:, 3:]).max() < 1e-12  # spatial momentum conserved


def test_canonical_skew_gradient_pattern():
    def omega(x):
        z = 0.0 * x[..., 0]
        o = z + 1.0
        return D.array([[z, z, -o, z], [z, z, z, -o], [o, z, z, z], [z, o, z, z]])  # dp ^ dq

    ch = H.AlmostHamiltonianChart("flat", 4, omega, lambda x: 0.5 * (x[..., 2] ** 2 + x[..., 3] ** 2),
                                  lambda x: 0.0 * x[..., 0] + 1.0)
    x = np.array([[0.1, 0.2, 0.7, -0.3]])
    assert np.allclose(H.physical_flow(ch, x), [[0.7, -0.3, 0.0, 0.0]])


@pytest.mark.parametrize("system,l3", [("veselova", 0.0), ("rubber", 0.0), ("marble-reduced", 0.5),
                                       ("marble-so3", 0.0)])
def test_energy_conserved_by_contraction(system, l3):
    ch = H.make_chart(system, P, l3)
    x = ch.sampler(np.random.default_rng(2), 30)
    X = H.skew_gradient(ch, x)
    assert np.abs(np.sum(H.differential(ch, x) * X, -1)).max() < 1e-13


def test_degenerate_form_rejected():
    ch = H.AlmostHamiltonianChart("zero", 4, lambda x: np.zeros(x.shape[:-1] + (4, 4)),
                                  lambda x: x[..., 0], lambda x: 1.0 + 0 * x[..., 0])
    with pytest.raises(H.DegenerateForm):
        H.skew_gradient(ch, X50[:2])


@pytest.mark.parametrize("system,l3", [("veselova", 0.0), ("rubber", 0.0), ("marble-reduced", 0.5)])
def test_nondegenerate_on_grid(system, l3):
    x = H.ts2_grid(10)
    det = np.linalg.det(H.make_chart(system, P, l3).omega(x))
    assert len(x) == 10_000 and np.min(np.abs(det)) > 1e-3


def test_canonical_part_closed():
    f = FormField(2, H._canonical_ts2)
    assert exterior_derivative(f, X50).max_abs() < 1e-14


def test_closed_form_example():
    """I = 1, mu r^2 = 1, m = (1, 0, 0): i_X dOmega = dm_2 ^ rho_3."""
    hom = C.BodyParams(1.0, 1.0, 1.0, 1.0, 1.0)
    W = H.closed_form_ix_d_omega(hom, np.array([1.0, 0.0, 0.0]))
    expect = np.zeros((6, 6))
    expect[4, 2], expect[2, 4] = 1.0, -1.0
    assert np.allclose(W, expect)


def _d_omega_m_basis(p, x):
    ch = H.make_chart("marble-so3", p)
    _, d, _ = H.obstruction_fields(ch, H.factor_function(ch, "unit"), x)
    k = np.diag(H.m_basis_change(p))
    return d.coeffs * k[:, None, None] * k[None, :, None] * k[None, None, :]


def test_homogeneous_d_omega():
    hom = C.BodyParams(1.7, 1.7, 1.7, 0.8, 0.9)
    x = H.so3_sampler(np.random.default_rng(4), 10)
    d = _d_omega_m_basis(hom, x)
    expect = np.zeros((6, 6, 6))
    c = -hom.mr2 / 1.7
    from itertools import permutations
    for (i, j, k) in ((3, 1, 2), (4, 2, 0)):  # dm1 rho2 rho3, dm2 rho3 rho1
        for perm in permutations(range(3)):
            idx = tuple((i, j, k)[q] for q in perm)
            sgn = np.linalg.det(np.eye(3)[list(perm)])
            expect[idx] = c * sgn
    assert np.abs(d - expect).max() < 1e-12


def test_canonical_tso3_closed():
    x = H.so3_sampler(np.random.default_rng(5), 10)
    assert np.abs(_d_omega_m_basis(P.with_r(0.0), x)).max() < 1e-13


def test_verdict_invariant_under_constant_factor():
    x = H.ts2_grid(4)
    out = []
    for c in (1.0, 7.5):
        for system in ("veselova", "marble-reduced"):
            ch = H.make_chart(system, P, 0.5)
            f = lambda z, ch=ch, c=c: c * ch.density(z)
            r = H.conformal_obstruction(ch, f, x, noise_floor=1e-16)
            out.append((r.verdict, round(r.rel_ix, 10)))
    assert out[:2] == out[2:]
    assert out[0][0] == H.CONFORMAL and out[1][0] == H.OBSTRUCTED


def test_nonpositive_factor_rejected():
    ch = H.make_chart("veselova", P)
    with pytest.raises(ValueError):
        H.conformal_obstruction(ch, lambda z: -ch.density(z), H.ts2_grid(3))


def test_unit_factor_is_not_conformal_for_veselova():
    ch = H.make_chart("veselova", P)
    r = H.conformal_obstruction(ch, H.factor_function(ch, "unit"), H.ts2_grid(4), "unit", 1e-16)
    assert r.verdict != H.CONFORMAL


def test_custom_factor_expression():
    ch = H.make_chart("veselova", P)
    f = H.factor_function(ch, "custom", "power(g0*g0 + g1*g1/2 + g2*g2/3, -0.5)")
    assert np.allclose(f(X50), ch.density(X50))
    with pytest.raises(ValueError):
        H.factor_function(ch, "custom", None)


@pytest.mark.parametrize("system", ["veselova", "rubber"])
def test_rescaled_field_preserves_liouville_volume(system):
    """div((f Omega)^2 / 2 volume density * X / f) = div(f Pf(Omega) X) = 0."""
    ch = H.make_chart(system, P)

    def weighted(z):
        W = ch.omega(z)
        pf = W[..., 0, 1] * W[..., 2, 3] - W[..., 0, 2] * W[..., 1, 3] + W[..., 0, 3] * W[..., 1, 2]
        return (ch.density(z) * pf)[..., None] * H.physical_flow(ch, z)

    assert np.abs(C.divergence(weighted, X50[:20])).max() < 1e-8


def test_obstruction_engines_agree():
    x = H.ts2_grid(4)
    ch = H.make_chart("marble-reduced", P, 0.5)
    a = H.obstruction_maxima(ch, ch.density, x, DiffEngine("ad"))
    f = H.obstruction_maxima(ch, ch.density, x, DiffEngine("fd"))
    assert np.allclose(a, f, rtol=1e-6)
    assert H.obstruction_maxima(ch, ch.density, x, DiffEngine("ad"), jobs=2) == a


def test_unknown_chart():
    with pytest.raises(KeyError):
        H.make_chart("nope", P)
