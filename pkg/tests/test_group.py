import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from carnot.group import (
    AlgebraError,
    AntisymmetryViolation,
    GradingViolation,
    GroupData,
    JacobiViolation,
    NotGenerated,
    abelian,
    bch_series,
    check_algebra,
    engel,
    estimate_A0,
    free_step_two,
    heisenberg,
    validate_algebra,
)

from oracles import engel_bracket, engel_product, heisenberg_closed_form, heisenberg_product

coords = st.floats(-3, 3, allow_nan=False)
vec4 = arrays(np.float64, 4, elements=coords)
vec3 = arrays(np.float64, 3, elements=coords)


def mutated_fixtures():
    """(label, data, expected error class)."""
    h = heisenberg().to_data()
    e = engel().to_data()
    out = []
    d = GroupData(h.dimension, h.strata, dict(h.brackets))
    d.brackets[(2, 1)] = {3: 1.0}
    out.append(("antisymmetric pair", d, AntisymmetryViolation))
    d = GroupData(h.dimension, h.strata, {(1, 2): {3: 1.0}, (1, 1): {3: 2.0}})
    out.append(("self bracket", d, AntisymmetryViolation))
    d = GroupData(e.dimension, e.strata, {(1, 2): {4: 1.0}, (1, 3): {4: 1.0}})
    out.append(("wrong layer", d, GradingViolation))
    br = {(1, 2): {4: 1.0}, (1, 3): {5: 1.0}, (2, 3): {6: 1.0}, (1, 6): {7: 1.0}}
    out.append(("jacobi", GroupData(7, [3, 3, 1], br), JacobiViolation))
    out.append(("not generated", GroupData(3, [2, 1], {}), NotGenerated))
    return out


def test_fixture_algebras_are_valid():
    for alg in (heisenberg(1), heisenberg(2), engel(), abelian(3), free_step_two(3)):
        assert check_algebra(alg.to_data()) == []


@pytest.mark.parametrize("label,data,cls", mutated_fixtures(), ids=[m[0] for m in mutated_fixtures()])
def test_mutations_raise_matching_class(label, data, cls):
    with pytest.raises(cls):
        validate_algebra(data)
    assert check_algebra(data)


def test_bad_strata_rejected():
    with pytest.raises(AlgebraError):
        validate_algebra(GroupData(3, [2, 2], {(1, 2): {3: 1.0}}))
    with pytest.raises(AlgebraError):
        validate_algebra(GroupData(3, [2, 1], {(1, 2): {5: 1.0}}))


def test_homogeneous_dimensions():
    assert heisenberg(1).Q == 4
    assert heisenberg(2).Q == 6
    assert engel().Q == 7
    assert abelian(2).Q == 2
    assert free_step_two(3).Q == 9


def test_engel_product_frozen():
    # [DERIVED] matrix-log oracle: exp(e1) exp(e2) = exp(e1 + e2 + e3/2 + e4/12)
    alg = engel()
    np.testing.assert_allclose(alg.multiply([1, 0, 0, 0], [0, 1, 0, 0]), [1, 1, 0.5, 1 / 12], atol=1e-15)
    np.testing.assert_allclose(engel_product([1, 0, 0, 0], [0, 1, 0, 0]), [1, 1, 0.5, 1 / 12], atol=1e-12)


def test_engel_structure_matches_matrix_model():
    alg = engel()
    eye = np.eye(4)
    for i in range(4):
        for j in range(4):
            np.testing.assert_allclose(alg.bracket(eye[i], eye[j]), engel_bracket(eye[i], eye[j]), atol=1e-15)


@given(vec4, vec4)
def test_engel_bch_matches_matrix_log(x, y):
    np.testing.assert_allclose(engel().multiply(x, y), engel_product(x, y), atol=1e-9 * (1 + np.abs(x).max() + np.abs(y).max()) ** 3)


@given(vec3, vec3)
def test_heisenberg_bch_closed_form(x, y):
    alg = heisenberg()
    np.testing.assert_allclose(alg.multiply(x, y), heisenberg_closed_form(x, y), atol=1e-12)
    np.testing.assert_allclose(heisenberg_product(x, y), heisenberg_closed_form(x, y), atol=1e-9)


@given(vec4, vec4, vec4)
def test_engel_associativity(x, y, z):
    alg = engel()
    lhs = alg.multiply(alg.multiply(x, y), z)
    rhs = alg.multiply(x, alg.multiply(y, z))
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(lhs).max()))


@given(vec4, st.floats(0.1, 5))
def test_inverse_and_dilation(x, r):
    alg = engel()
    np.testing.assert_allclose(alg.multiply(x, alg.inverse(x)), 0, atol=1e-12)
    np.testing.assert_allclose(alg.dilate(1 / r, alg.dilate(r, x)), x, atol=1e-9)


@given(vec4, vec4, st.floats(0.1, 5))
def test_dilation_is_automorphism(x, y, r):
    alg = engel()
    lhs = alg.dilate(r, alg.multiply(x, y))
    rhs = alg.multiply(alg.dilate(r, x), alg.dilate(r, y))
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(lhs).max()))


@given(vec3, st.floats(0.1, 10))
def test_gauge_homogeneous_and_symmetric(x, r):
    alg = heisenberg()
    assert alg.norm(alg.dilate(r, x)) == pytest.approx(r * alg.norm(x), rel=1e-12, abs=1e-300)
    assert alg.norm(alg.inverse(x)) == pytest.approx(alg.norm(x), rel=1e-12, abs=1e-300)


def test_gauge_zero_only_at_origin():
    alg = engel()
    assert alg.norm(np.zeros(4)) == 0
    assert alg.norm(np.array([0, 0, 0, 1e-8])) > 0


def test_bch_series_components():
    # abelian bracket: only the first component survives
    z = bch_series(np.array([1.0, 2.0]), np.array([3.0, -1.0]), lambda a, b: 0 * a, order=4)
    np.testing.assert_allclose(z[0], [4.0, 1.0])
    np.testing.assert_allclose(np.asarray(z[1:]), 0.0)
    # Engel: degree-3 component of x=e1, y=e2 is e4/12
    alg = engel()
    z = bch_series(np.eye(4)[0], np.eye(4)[1], alg.bracket, order=3)
    np.testing.assert_allclose(z[1], [0, 0, 0.5, 0], atol=1e-15)
    np.testing.assert_allclose(z[2], [0, 0, 0, 1 / 12], atol=1e-15)


def test_A0_at_least_one_and_abelian_exact():
    assert estimate_A0(heisenberg(), 500) >= 1.0
    assert estimate_A0(abelian(2), 500) <= 1 + 1e-9


def test_free_step_two_product():
    alg = free_step_two(3)
    x = np.array([1.0, 0, 0, 0, 0, 0])
    y = np.array([0, 1.0, 0, 0, 0, 0])
    np.testing.assert_allclose(alg.multiply(x, y), [1, 1, 0, 0.5, 0, 0])
