import numpy as np
import pytest

from nhmech import cartan as K
from nhmech.dual import DiffEngine
from nhmech.exterior import structure_functions
from nhmech.structures import (
    engel_normal_form, get_structure, integrable, penny, penny_bfinal, perturbed_penny, scaled,
)

PAR = dict(m=1.3, a=0.7, I=0.9, J=1.7)


def _points(s, n=6, seed=0):
    return s.sample(n, seed) if s.sampler else np.random.default_rng(seed).uniform(-1, 1, (n, 4))


@pytest.mark.parametrize("s", [penny(**PAR), engel_normal_form(), perturbed_penny(0.1)], ids=lambda s: s.name)
def test_engel_growth(s):
    g = K.growth_vector(K.structure_fields(s), _points(s)[0])
    assert g.ranks == (2, 3, 4) and g.is_engel and g.locally_constant


def test_integrable_is_not_engel():
    s = integrable()
    assert K.growth_vector(K.structure_fields(s), np.zeros(4)).ranks == (2,)
    with pytest.raises(K.NotEngel):
        K.line_field_for(s, np.zeros((1, 4)))


def test_derived_ideal_split():
    s = penny(**PAR)
    d = K.derived_ideal_coframe(s, _points(s))
    assert d == {"horizontal": [0, 1], "phi": [2], "Phi": [3]}


def test_penny_normalized_table_general_parameters():
    """T3_12 = T4_23 = 1, T3_24 = -2/J, every other entry zero, at a != 1."""
    s = penny(**PAR)
    _, table = K.bfinal_normalize(s, _points(s, 10))
    assert all(table.flags.values())
    nz = table.nonzero()
    assert set(nz) == {"T3_12", "T4_23", "T3_24"}
    assert np.allclose(nz["T3_24"], -2.0 / PAR["J"], atol=1e-12)
    rep = K.symmetry_constancy_report(table)
    assert rep.maximal and rep.verdict == K.MAXIMAL


def test_normalization_independent_of_starting_coframe():
    """The printed B_final coframe and the orthonormal one describe the same metric."""
    q = _points(penny(**PAR), 5)
    Ta = K.bfinal_normalize(penny(**PAR), q)[1].T
    Tb = K.bfinal_normalize(penny_bfinal(**PAR), q)[1].T
    assert np.abs(Ta - Tb).max() < 1e-12


@pytest.mark.parametrize("k", [0.5, 3.0])
def test_metric_rescaling_changes_invariant(k):
    """Scaling the metric by k^2 is the penny with J -> k^2 J on the T3_24 entry."""
    s = scaled(penny(**PAR), k)
    _, table = K.bfinal_normalize(s, _points(s, 4))
    assert np.allclose(table.T[:, 2, 1, 3], -2.0 / (k * k * PAR["J"]), atol=1e-12)


def test_penny_symmetry_algebra():
    s = penny(**PAR)
    _, table = K.bfinal_normalize(s, _points(s, 3))
    info = K.identify_lie_algebra(table.T[0])
    assert info["algebra"] == "se(2)+R"
    assert info["jacobi_residual"] < 1e-12


def test_non_maximal_structures():
    for s in (engel_normal_form(), perturbed_penny(0.1)):
        _, table = K.bfinal_normalize(s, _points(s, 12))
        rep = K.symmetry_constancy_report(table)
        assert not rep.maximal and rep.nonconstant


@pytest.mark.parametrize("s", [penny(**PAR), engel_normal_form(), perturbed_penny(0.3)], ids=lambda s: s.name)
def test_second_order_relation(s):
    _, table = K.bfinal_normalize(s, _points(s, 10, seed=7))
    assert np.abs(table.relation_residual()).max() < 1e-10


@pytest.mark.parametrize("s", [penny(**PAR), engel_normal_form()], ids=lambda s: s.name)
def test_line_field(s):
    r = K.line_field_for(s, _points(s, 5))
    assert r["X1"] and not r["X2"]


def test_jacobi_identity_of_penny_constants():
    s = penny(**PAR)
    c = structure_functions(K.normalized_coframe(s), _points(s, 1))[0]
    assert K.jacobi_residual(K.structure_constants(c)) < 1e-12


def test_fd_engine_agrees():
    s = engel_normal_form()
    q = _points(s, 4)
    Ta = K.bfinal_normalize(s, q, DiffEngine("ad"))[1].T
    Tf = K.bfinal_normalize(s, q, DiffEngine("fd"))[1].T
    assert np.abs(Ta - Tf).max() < 1e-5
    assert K.cartan_engine(DiffEngine("fd")).h == K.FD_STEP


def test_unknown_structure():
    with pytest.raises(KeyError):
        get_structure("nope")
