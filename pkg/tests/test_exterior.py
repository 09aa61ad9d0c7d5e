import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from nhmech import dual as D
from nhmech.dual import DiffEngine
from nhmech.exterior import (
    CoframeField, Form, FormField, SingularCoframe, anholonomic_canonical_two_form, basis_form,
    checked_inv, exterior_derivative, interior, levi_civita_connection, structure_functions,
    structure_functions_direct, torsion_residual, wedge,
)
from nhmech.structures import engel_normal_form, penny

N = 4
one_forms = arrays(np.float64, N, elements=st.floats(-2, 2, allow_nan=False))


def random_form(seed, k):
    r = np.random.default_rng(seed)
    out = Form(np.zeros((N,) * k), k)
    for _ in range(3):
        f = Form(r.standard_normal(N), 1)
        for _ in range(k - 1):
            f = wedge(f, Form(r.standard_normal(N), 1))
        out = out + f
    return out


@given(one_forms, one_forms, one_forms)
def test_wedge_associative(a, b, c):
    A, B, C = (Form(x, 1) for x in (a, b, c))
    lhs = wedge(wedge(A, B), C).coeffs
    rhs = wedge(A, wedge(B, C)).coeffs
    assert np.allclose(lhs, rhs, atol=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 2), st.integers(1, 2))
def test_wedge_graded_commutative(seed, k, l):
    a, b = random_form(seed, k), random_form(seed + 1, l)
    assert np.allclose(wedge(a, b).coeffs, (-1) ** (k * l) * wedge(b, a).coeffs, atol=1e-12)


def test_basis_forms_evaluate_to_determinants():
    f = basis_form(3, (0, 1, 2))
    assert f.coeffs[0, 1, 2] == pytest.approx(1.0)
    assert f.coeffs[1, 0, 2] == pytest.approx(-1.0)
    a = wedge(Form(np.array([1.0, 2.0, 0.0]), 1), Form(np.array([0.0, 1.0, 3.0]), 1))
    u, v = np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 1.0])
    # (a ^ b)(u, v) = a(u) b(v) - a(v) b(u)
    assert interior(v, interior(u, a)).coeffs == pytest.approx(1 * 3 - 0 * 0)


def _poly_one_form(z):
    x, y, u, w = (z[..., i] for i in range(4))
    return D.stack([x * y * w, D.sin(u) * x, y * y + w, D.exp(0.3 * x) * u], axis=-1)


@pytest.mark.parametrize("mode", ["ad", "fd"])
def test_d_squared_zero_coordinate(mode):
    E = DiffEngine(mode, h=1e-4)
    a = FormField(1, _poly_one_form)
    da = FormField(2, lambda z: exterior_derivative(a, z, E).coeffs)
    q = np.array([[0.2, -0.5, 0.9, 1.3], [1.0, 0.4, -0.3, 0.1]])
    dda = exterior_derivative(da, q, E)
    assert dda.degree == 3
    assert dda.max_abs() < (1e-12 if mode == "ad" else 1e-5)


def test_d_squared_zero_anholonomic():
    s = engel_normal_form()
    E = DiffEngine()
    a = FormField(1, _poly_one_form, s.coframe)
    da = FormField(2, lambda z: exterior_derivative(a, z, E).coeffs, s.coframe)
    q = np.array([[0.2, -0.5, 0.9, 1.3]])
    assert exterior_derivative(da, q, E).max_abs() < 1e-12


def test_d_of_coframe_rows_gives_structure_functions():
    s = penny(m=1.3, a=0.7, I=0.9, J=1.7)
    E = DiffEngine()
    q = s.sample(3, 0)
    c = structure_functions(s.coframe, q, E)
    for i in range(4):
        row = FormField(1, lambda z, i=i: np.broadcast_to(np.eye(4)[i], D.shape_of(z)) + 0.0 * z, s.coframe)
        d_eta = exterior_derivative(row, q, E).coeffs
        # d eta^i = 1/2 c^i_jk eta^j ^ eta^k
        assert np.allclose(d_eta, c[:, i], atol=1e-13)


def test_structure_functions_two_routes_agree():
    for s in (penny(m=1.3, a=0.7, I=0.9, J=1.7), engel_normal_form()):
        q = np.random.default_rng(1).uniform(-1, 1, (5, 4)) + np.array([0, 0, 1.0, 0])
        a = structure_functions(s.coframe, q)
        b = structure_functions_direct(s.coframe, q)
        assert np.abs(a - b).max() < 1e-13


def test_penny_levi_civita_connection():
    """omega_12(e_3) = -(1/sqrt 2) sqrt(m / (J (m a^2 + I))) for the orthonormal penny coframe."""
    m, a, I, J = 2.0, 1.0, 2.0, 2.0
    s = penny(m=m, a=a, I=I, J=J)
    q = s.sample(4, 3)
    G = levi_civita_connection(s.coframe, q)
    want = -np.sqrt(m / (J * (m * a * a + I))) / np.sqrt(2.0)
    assert np.allclose(G[:, 0, 1, 2], want, atol=1e-12)
    assert want == pytest.approx(-0.353553, abs=1e-6)
    assert np.abs(G + np.swapaxes(G, 1, 2)).max() < 1e-14  # so(n)-valued
    assert torsion_residual(s.coframe, q) < 1e-13


def test_penny_structure_coefficients():
    s = penny()
    c = structure_functions(s.coframe, s.sample(3, 0))
    assert np.allclose(c[:, 2, 0, 1], 1 / np.sqrt(2))
    assert np.allclose(c[:, 2, 1, 3], -1.0)
    assert np.allclose(c[:, 3, 1, 2], 1.0)


def test_singular_coframe_rejected():
    with pytest.raises(SingularCoframe):
        checked_inv(np.array([[1.0, 2.0], [2.0, 4.0]]))
    bad = CoframeField(2, lambda q: D.array([[q[..., 0], q[..., 0]], [q[..., 0], q[..., 0]]]))
    with pytest.raises(SingularCoframe):
        bad.frame(np.array([1.0, 2.0]))


def test_canonical_two_form_closed_on_cotangent_bundle():
    """With m-dependence the 2-form dm^eps + m d eps is closed; check via its 6x6 block pattern."""
    from nhmech.geom import right_coframe

    cof = CoframeField(3, right_coframe, name="rho")
    q = np.array([0.3, 1.2, -0.4])
    W = anholonomic_canonical_two_form(cof, np.array([0.5, -1.0, 2.0]), q)
    assert W.basis == "T*rho"
    assert np.allclose(W.coeffs, -W.coeffs.T)
    # E_jk = m_i c^i_jk with c^i_jk = eps_ijk for the right coframe
    assert W.coeffs[1, 2] == pytest.approx(0.5)
    assert W.coeffs[0, 3] == pytest.approx(-1.0)
