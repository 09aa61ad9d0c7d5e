import math

import numpy as np
import pytest

from nhmech.dual import DiffEngine
from nhmech.geodesic import (
    IntegrationError, IntegratorConfig, collinearity_residual, horizontality_residual, integrate_geodesic,
    integrate_ode, line_distance, nh_geodesic_rhs, penny_circle_period, rk4,
)
from nhmech.structures import engel_normal_form, penny, perturbed_penny

Q0 = np.array([0.1, -0.2, 0.3, 0.5])


def test_config_validation_and_sample_count():
    with pytest.raises(ValueError):
        IntegratorConfig(dt=0)
    with pytest.raises(ValueError):
        IntegratorConfig(method="euler")
    cfg = IntegratorConfig(dt=0.3, t_end=1.0)
    t, y = rk4(lambda t, y: -y, np.array([1.0]), cfg)
    assert len(t) == math.ceil(1.0 / 0.3) + 1
    assert t[-1] == pytest.approx(1.0)


def test_rk4_order():
    errs = []
    for dt in (0.1, 0.05):
        t, y = rk4(lambda t, y: -y, np.array([1.0]), IntegratorConfig(dt=dt, t_end=1.0))
        errs.append(abs(y[-1, 0] - math.exp(-1.0)))
    assert 14 < errs[0] / errs[1] < 18


def test_rk45_matches_rk4():
    f = lambda t, y: np.array([y[1], -y[0]])
    t1, y1 = integrate_ode(f, [1.0, 0.0], IntegratorConfig(method="rk45", dt=0.1, t_end=3.0))
    assert abs(y1[-1, 0] - math.cos(3.0)) < 1e-9


def test_nonfinite_state_raises():
    with pytest.raises(IntegrationError), np.errstate(over="ignore", invalid="ignore"):
        rk4(lambda t, y: y * y, np.array([10.0]), IntegratorConfig(dt=0.1, t_end=1.0))


def test_penny_quasivelocities_constant_short_run():
    s = penny()
    tr = integrate_geodesic(s, Q0, np.array([0.7, 0.4]), IntegratorConfig(dt=1e-2, t_end=2.0))
    v = tr.y[:, 4:6]
    assert np.abs(v - v[0]).max() < 1e-12
    assert np.ptp(tr.column("energy")) < 1e-12
    assert horizontality_residual(s, tr.y[-1, :4], nh_geodesic_rhs(s, tr.y[-1, :4], v[-1])[0]) < 1e-12


def test_penny_circle_closes():
    J, B = 2.0, 1.2
    T = penny_circle_period(J, B)
    cfg = IntegratorConfig(dt=T / 2000, t_end=T)
    tr = integrate_geodesic(penny(J=J), Q0, np.array([0.5, B]), cfg)
    assert np.linalg.norm(tr.y[-1, :2] - tr.y[0, :2]) < 1e-9
    assert tr.y[-1, 2] - tr.y[0, 2] == pytest.approx(2 * np.pi, abs=1e-9)


def test_penny_line_and_spin():
    tr = integrate_geodesic(penny(), np.stack([Q0, Q0]), np.array([[0.8, 0.0], [0.0, 0.6]]),
                            IntegratorConfig(dt=1e-2, t_end=3.0))
    assert line_distance(tr.y[:, 0, :2]) < 1e-12
    assert collinearity_residual(tr.y[:, 0, :2]) < 1e-12
    assert np.abs(tr.y[:, 1, :2] - Q0[:2]).max() < 1e-14


def test_perturbed_penny_energy():
    s = perturbed_penny(0.3)
    tr = integrate_geodesic(s, Q0, np.array([0.6, -0.8]), IntegratorConfig(dt=1e-2, t_end=2.0))
    assert np.ptp(tr.column("energy")) < 1e-12
    v = tr.y[:, 4:6]
    assert np.abs(v - v[0]).max() > 1e-3  # quasivelocities now rotate


def test_requires_orthonormal_coframe():
    with pytest.raises(ValueError):
        integrate_geodesic(engel_normal_form(), np.zeros(4), np.array([1.0, 0.0]),
                           IntegratorConfig(dt=0.1, t_end=0.1))


def test_ad_fd_geodesic_rhs_agree():
    s = penny(m=1.3, a=0.7, I=0.9, J=1.7)
    q, v = Q0, np.array([0.3, -0.4])
    a = nh_geodesic_rhs(s, q, v, DiffEngine("ad"))
    f = nh_geodesic_rhs(s, q, v, DiffEngine("fd"))
    assert np.abs(np.asarray(a[1]) - np.asarray(f[1])).max() < 1e-8
