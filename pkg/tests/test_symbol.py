import numpy as np
import pytest
from hypothesis import given, strategies as st

from carnot.fields import affine_map, identity_map, left_translation
from carnot.geometry import extend_first_block
from carnot.group import abelian, heisenberg
from carnot.io import load_atlas
from carnot.spectral import Lattice, MatrixField, smooth_bump
from carnot.symbol import (
    AutField,
    Compact,
    FormalElement,
    Mult,
    NotCertified,
    PartitionGap,
    Riesz,
    RieszAdj,
    as_symbol_field,
    SupportLeak,
    bump_function,
    conjugate_by_automorphism,
    conjugate_by_diffeo,
    constant_function,
    extend,
    gaussian,
    globalize,
    kernel_test,
    lift,
    localization_echo,
    restrict,
    symbol,
    symbol_of_sandwich,
    theta_embedding,
)

H = heisenberg()
f1 = gaussian("f1", np.zeros(3))
f2 = bump_function("f2", [0.3, 0, 0], 1.5)
A = extend_first_block(H, np.array([[2.0, 0.0], [0.0, 1.0]]))
B = extend_first_block(H, np.array([[0.0, 1.0], [-1.0, 0.0]]))
ALPHABET = [Mult(f1), Mult(f2), Riesz(0, A, "A"), Riesz(1, B, "B"), RieszAdj(0, A, "A"), Compact()]
PROBES = np.random.default_rng(0).uniform(-2, 2, (24, 3))


@st.composite
def elements(draw):
    pool = draw(st.lists(st.sampled_from(ALPHABET), min_size=1, max_size=4, unique_by=repr))
    terms = draw(st.lists(st.tuples(st.lists(st.sampled_from(pool), max_size=6),
                                    st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)),
                          min_size=1, max_size=3))
    out = FormalElement()
    for word, c in terms:
        out = out + FormalElement.word(*word, coeff=c)
    return out


@given(elements(), elements())
def test_homomorphism(e1, e2):
    assert symbol(e1 * e2) == symbol(e1) * symbol(e2)
    assert symbol(e1 + e2) == symbol(e1) + symbol(e2)


@given(elements())
def test_star_compatible_and_lift(e):
    assert symbol(e.adjoint()) == symbol(e).adjoint()
    assert e.adjoint().adjoint() == e
    s = symbol(e)
    assert symbol(lift(s)) == s


@given(elements(), elements())
def test_compacts_in_kernel(e1, e2):
    assert kernel_test(e1 * FormalElement.word(Compact()) * e2)


def test_worked_examples():
    s = symbol(FormalElement.word(Mult(f1)))
    assert list(s.terms) == [(("f1",), ())]
    assert symbol(FormalElement.word(Compact())) == symbol(FormalElement())
    w = FormalElement.word(Mult(f1), Riesz(0, A), Mult(f2), Riesz(1, B))
    assert list(symbol(w).terms) == [(("f1", "f2"), (Riesz(0, A), Riesz(1, B)))]


def test_kernel_examples():
    comm = FormalElement.word(Mult(f1), Riesz(0, A)) - FormalElement.word(Riesz(0, A), Mult(f1))
    assert kernel_test(comm)
    assert not kernel_test(FormalElement.word(Mult(f1)), PROBES)
    w = FormalElement.word(Mult(f1), Riesz(0, A))
    assert not kernel_test(w - FormalElement.word(Mult(f2), Riesz(0, A), Compact()))


def test_probe_equality_detects_scalar_identities():
    g = gaussian("g", np.zeros(3))  # same function as f1 under another name
    e = FormalElement.word(Mult(f1), Riesz(0, A)) - FormalElement.word(Mult(g), Riesz(0, A))
    assert not symbol(e).is_zero()
    assert symbol(e).is_zero(PROBES)


def test_sandwich_constant_case():
    psi = bump_function("psi", np.zeros(3), 1.0)
    sf = symbol_of_sandwich(psi, A, 0, H)
    word = symbol(FormalElement.word(Mult(psi), Riesz(0, A), Mult(psi)))
    for x in PROBES[:6]:
        assert sf(x).distance(word.at(x, H)) <= 1e-14
    assert sf(np.array([3.0, 0, 0])).is_zero()


def test_sandwich_field_letters_freeze_pointwise():
    a = AutField("a", lambda x: extend_first_block(H, np.diag([1 + 0.1 * x[0], 1.0])))
    psi = constant_function("one", 1.0)
    sf = symbol_of_sandwich(psi, a, 1, H)
    x = np.array([0.5, 0, 0])
    (word, c), = sf(x).terms
    np.testing.assert_allclose(word[0].matrix, a(x))


def test_conjugate_identity_and_automorphism():
    e = FormalElement.word(Mult(f1), Riesz(0, B, "B"), Mult(f2))
    same = conjugate_by_diffeo(e, identity_map(3), H)
    exact = conjugate_by_automorphism(symbol(e), A, H)
    via = conjugate_by_diffeo(e, affine_map(A), H, certify_on=PROBES)
    for y in PROBES[:8]:
        assert same(y).distance(symbol(e).at(y, H)) <= 1e-14
        assert via(y).distance(exact.at(y, H)) <= 1e-12
    (_, g), = exact.terms
    np.testing.assert_allclose(g[0].ref, A @ B)


def test_conjugate_requires_certificate():
    bad = affine_map(np.diag([1.0, 1.0, 2.0]))
    with pytest.raises(NotCertified):
        conjugate_by_diffeo(FormalElement.word(Riesz(0, A)), bad, H, certify_on=PROBES)


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_equivariance_composes(a):
    e = FormalElement.word(Mult(f1), Riesz(0, B, "B"), Mult(f2)) + FormalElement.word(RieszAdj(1, A, "A"))
    phi = affine_map(A, label="A")
    psi = left_translation(H, a)
    lhs = conjugate_by_diffeo(conjugate_by_diffeo(e, psi, H), phi, H)
    rhs = conjugate_by_diffeo(e, phi.compose(psi), H)
    for y in PROBES[:4]:
        assert lhs(y).distance(rhs(y)) <= 1e-12


def test_restrict_extend_roundtrip():
    h = left_translation(H, [1.0, 0.5, 0.2])
    e = FormalElement.word(Mult(f2), Riesz(0, A), Mult(f1))
    dom = np.array([[-2, 2]] * 3, float)
    assert extend(restrict(e, h, dom), h) == e
    assert restrict(e, identity_map(3), dom) == e
    with pytest.raises(SupportLeak):
        restrict(FormalElement.word(Mult(f1)), h, dom)
    with pytest.raises(SupportLeak):
        restrict(e, h, np.array([[-0.5, 0.5]] * 3))


def test_globalize_two_chart():
    atlas = load_atlas("two_chart.atlas")
    e0 = FormalElement.word(Mult(f1), Riesz(0, B)) + 3 * FormalElement.word(Compact())
    e1 = FormalElement.word(RieszAdj(1, A), Mult(f2))
    phi0 = lambda p: np.clip((1 - p[:, 0]) / 2, 0, 1)
    part = {0: phi0, 1: lambda p: 1 - phi0(p)}
    pts = np.random.default_rng(2).uniform(-1, 1, (16, 3))
    sec = globalize(atlas, {0: e0, 1: e1}, part, samples=pts)
    assert sec.compatibility_residual() == 0.0
    zero = globalize(atlas, {0: FormalElement.word(Compact()), 1: FormalElement.word(Mult(f1), Compact())}, part)
    assert all(zero(j, p).is_zero() for j in (0, 1) for p in pts)
    with pytest.raises(PartitionGap):
        globalize(atlas, {0: e0}, {0: phi0}, samples=pts)


def test_globalize_single_chart_is_theta():
    atlas = load_atlas("two_chart.atlas")
    e = FormalElement.word(Mult(f1), Riesz(0, B))
    sec = globalize(atlas, {0: e}, {0: lambda p: np.ones(len(p))})
    th = theta_embedding(atlas, 0, as_symbol_field(e, H))
    for p in np.random.default_rng(3).uniform(-1, 1, (8, 3)):
        for j in (0, 1):
            assert sec(j, p).distance(th(j, p)) <= 1e-14


def test_localization_echo_decreases():
    lat = Lattice(abelian(1), 128, 8.0)
    a = MatrixField.scalar(lambda x: 1 + 0.5 * smooth_bump(x, np.zeros(1), 3.0), 1, "a", 3.0)
    r = localization_echo(lat, a, [0.7])
    assert r["decreasing"]
