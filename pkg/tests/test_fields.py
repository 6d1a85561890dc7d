import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from carnot.fields import (
    InverseUnavailable,
    NewtonInverse,
    OpaqueMap,
    PolynomialMap,
    affine_map,
    bracket_closure_residual,
    bracket_evaluators,
    conjugation_correction,
    derive_left_invariant_fields,
    dilation_map,
    left_invariance_residual,
    left_translation,
    pushforward_field,
)
from carnot.group import engel, free_step_two, heisenberg
from carnot.poly import Poly

from oracles import engel_product

pts3 = arrays(np.float64, 3, elements=st.floats(-2, 2))
pts4 = arrays(np.float64, 4, elements=st.floats(-2, 2))


@given(pts3)
def test_heisenberg_fields_closed_form(x):
    # [DERIVED] from the closed-form product: Z1 = d1 - x2/2 d3, Z2 = d2 + x1/2 d3
    Z = derive_left_invariant_fields(heisenberg())
    np.testing.assert_allclose(Z[0].vector(x), [1, 0, -0.5 * x[1]], atol=1e-15)
    np.testing.assert_allclose(Z[1].vector(x), [0, 1, 0.5 * x[0]], atol=1e-15)
    np.testing.assert_allclose(Z[2].vector(x), [0, 0, 1], atol=1e-15)


@given(pts4)
def test_engel_fields_match_oracle_derivative(x):
    # Z_j(x) = d/dt (x * t e_j) at t = 0, differentiated through the matrix-log oracle
    Z = derive_left_invariant_fields(engel())
    h = 1e-5
    for j in range(4):
        e = np.eye(4)[j]
        fd = (engel_product(x, h * e) - engel_product(x, -h * e)) / (2 * h)
        np.testing.assert_allclose(Z[j].vector(x), fd, atol=1e-6)


def test_first_layer_fields_are_partial_plus_higher():
    alg = engel()
    for j, z in enumerate(derive_left_invariant_fields(alg)):
        for m in range(alg.dim):
            a = z.alpha(m)
            if m == j:
                assert a == Poly.const(alg.dim, 1.0)
            elif alg.weights[m] <= alg.weights[j]:
                assert a.is_zero
        assert z.homogeneity_violations() == []


@pytest.mark.parametrize("alg", [heisenberg(1), heisenberg(2), engel(), free_step_two(3)], ids=lambda a: a.name)
def test_bracket_closure_exact(alg):
    probes = np.random.default_rng(0).uniform(-2, 2, (32, alg.dim))
    assert bracket_closure_residual(alg, probes) <= 1e-12


@pytest.mark.parametrize("alg", [heisenberg(1), engel()], ids=lambda a: a.name)
def test_left_invariance(alg):
    assert left_invariance_residual(alg, 100, seed=3) <= 1e-10


def test_fd_bracket_matches_polynomial_bracket():
    alg = engel()
    Z = derive_left_invariant_fields(alg)
    x = np.random.default_rng(2).uniform(-1, 1, (10, 4))
    np.testing.assert_allclose(bracket_evaluators(Z[0], Z[2]).vector(x), Z[3].vector(x), atol=1e-6)


def test_pushforward_by_left_translation_is_identity():
    alg = heisenberg()
    Z = derive_left_invariant_fields(alg)
    La = left_translation(alg, [0.3, -1.0, 2.0])
    y = np.random.default_rng(5).normal(size=(20, 3))
    for z in Z:
        np.testing.assert_allclose(pushforward_field(La, z).vector(y), z.vector(y), atol=1e-13)


def test_pushforward_by_dilation_scales_by_weight():
    alg = heisenberg()
    Z = derive_left_invariant_fields(alg)
    y = np.random.default_rng(6).normal(size=(10, 3))
    D = dilation_map(alg, 2.0)
    for z, w in zip(Z, alg.weights):
        np.testing.assert_allclose(pushforward_field(D, z).vector(y), 2.0 ** w * z.vector(y), atol=1e-13)


def test_conjugation_correction_zero_for_affine():
    alg = heisenberg()
    a = conjugation_correction(affine_map(np.diag([2.0, 3.0, 6.0])), 0, alg)
    np.testing.assert_allclose(a(np.ones((4, 3))), 0.0)


def test_conjugation_correction_polynomial_vs_opaque():
    alg = heisenberg()
    v = [Poly.var(3, i) for i in range(3)]
    cubic = PolynomialMap([v[0] + 0.2 * v[0] ** 3, v[1], v[2]])
    cubic.inverse = NewtonInverse(cubic)
    opaque = OpaqueMap(cubic, 3, label="cubic-opaque")
    opaque.inverse = NewtonInverse(opaque)
    y = np.random.default_rng(0).uniform(-1, 1, (8, 3))
    exact = conjugation_correction(cubic, 0, alg)(y)
    approx = conjugation_correction(opaque, 0, alg)(y)
    np.testing.assert_allclose(approx, exact, atol=1e-6)


def test_newton_inverse_roundtrip():
    alg = engel()
    La = left_translation(alg, [1.0, 2.0, -1.0, 0.5])
    opaque = OpaqueMap(La, 4)
    inv = NewtonInverse(opaque)
    x = np.random.default_rng(1).normal(size=(10, 4))
    np.testing.assert_allclose(inv(opaque(x)), x, atol=1e-10)


def test_missing_inverse_raises():
    m = OpaqueMap(lambda x: x, 3)
    with pytest.raises(InverseUnavailable):
        m.invert(np.zeros(3))
