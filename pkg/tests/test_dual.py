import numpy as np
import pytest
from hypothesis import given, strategies as st

from nhmech import dual as D
from nhmech.dual import DiffEngine

reals = st.floats(-2.0, 2.0, allow_nan=False)


@given(reals)
def test_elementary_derivatives(x):
    E = DiffEngine()
    f = lambda z: D.sin(z) * D.exp(z) + D.sqrt(z * z + 1.0)
    want = np.cos(x) * np.exp(x) + np.sin(x) * np.exp(x) + x / np.sqrt(x * x + 1)
    assert E.derivative(f, np.array([x]), 0)[0] == pytest.approx(want, rel=1e-12, abs=1e-12)


def test_nested_second_derivative():
    E = DiffEngine()
    f = lambda z: D.sin(z[..., 0]) * z[..., 1] ** 2
    dx = lambda z: E.derivative(f, z, 0)
    q = np.array([0.4, 1.3])
    # d/dy (cos x y^2) = 2 y cos x
    assert E.derivative(dx, q, 1) == pytest.approx(2 * 1.3 * np.cos(0.4), rel=1e-14)


def test_jacobian_matches_fd():
    f = lambda z: D.stack([z[..., 0] * z[..., 1], D.arctan2(z[..., 1], z[..., 0]), D.log(z[..., 2])], axis=-1)
    q = np.array([[0.3, 0.7, 1.9], [1.1, -0.4, 0.5]])
    ja = DiffEngine("ad").jacobian(f, q)
    jf = DiffEngine("fd").jacobian(f, q)
    assert ja.shape == (2, 3, 3)
    assert np.abs(ja - jf).max() < 1e-8


def test_linear_algebra_derivatives(rng):
    M0 = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    dM = rng.standard_normal((3, 3))
    E = DiffEngine()
    dinv = E.directional(lambda m: D.inv(m), M0, dM)
    Mi = np.linalg.inv(M0)
    assert np.abs(dinv + Mi @ dM @ Mi).max() < 1e-12
    ddet = E.directional(lambda m: D.det(m), M0, dM)
    assert ddet == pytest.approx(np.linalg.det(M0) * np.trace(Mi @ dM), rel=1e-12)


def test_engine_modes(monkeypatch):
    with pytest.raises(ValueError):
        DiffEngine("bogus")
    monkeypatch.setenv("NH_ENGINE", "fd")
    assert DiffEngine.from_env().mode == "fd"
