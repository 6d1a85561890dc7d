import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm, logm

from carnot.approx import (
    ApproximationFamily,
    EpsilonTooLarge,
    approximation_family,
    field_constants,
    heisenberg_fixture_field,
    log_series,
    patched_riesz_sums,
    theta_profile,
)
from carnot.group import heisenberg
from carnot.spectral import Lattice, MatrixField

H = heisenberg()
BOX = np.array([[-2.0, 2.0]] * 3)


@given(arrays(np.float64, (3, 3), elements=st.floats(-0.15, 0.15)))
def test_log_series_matches_scipy(E):
    V = np.eye(3) + E
    np.testing.assert_allclose(log_series(V), np.real(logm(V)), atol=1e-12)
    np.testing.assert_allclose(expm(log_series(V)), V, atol=1e-12)


def test_log_series_radius():
    with pytest.raises(EpsilonTooLarge):
        log_series(np.diag([1.0, 1.8]))


def test_theta_profile():
    t = np.array([0.0, 0.5, 1.0, 1.5, 2.0, 3.0])
    th = theta_profile(t)
    np.testing.assert_allclose(th[[0, 1, 2, 4, 5]], [1, 1, 1, 0, 0])
    assert 0 < th[3] < 1
    assert np.all(np.diff(theta_profile(np.linspace(0, 3, 200))) <= 0)


def test_constant_field_has_infinite_scale():
    c = field_constants(H, MatrixField.constant(np.diag([1.0, 2.0])), BOX, samples=400)
    assert c.sobolev == 0 and math.isinf(c.eps_w)


@pytest.fixture(scope="module")
def consts():
    return field_constants(H, heisenberg_fixture_field(), np.array([[-3.0, 3.0]] * 3), samples=2000)


def test_fixture_constants(consts):
    assert 1.0 < consts.eps_w < 3.0
    assert consts.C_w == pytest.approx(1 / (2 * consts.eps_w))


def test_eps_too_large(consts):
    with pytest.raises(EpsilonTooLarge):
        ApproximationFamily(H, heisenberg_fixture_field(), consts.eps_w, consts)


@given(arrays(np.float64, 3, elements=st.floats(-1.5, 1.5)))
def test_local_field_items(gamma):
    c = field_constants(H, heisenberg_fixture_field(), np.array([[-3.0, 3.0]] * 3), samples=500)
    w = heisenberg_fixture_field()
    fam = ApproximationFamily(H, w, c.eps_w / 4, c)
    x = np.random.default_rng(0).uniform(-3, 3, (200, 3))
    vals = fam.local(gamma, x)
    rho = H.norm(H.multiply(np.broadcast_to(-gamma, x.shape), x))
    inner, outer = rho < fam.eps, rho >= 2 * fam.eps
    np.testing.assert_allclose(vals[inner], w(x[inner]), atol=1e-12)
    assert np.all(vals[outer] == w(gamma))
    dev = np.linalg.norm(vals - w(gamma), ord=2, axis=(-2, -1))
    assert dev.max() <= 6 * c.sup_w * c.C_w * fam.eps


def test_approximation_audit_small_lattice(consts):
    lat = Lattice(H, 5, 3.0)
    _, r = approximation_family(lat, heisenberg_fixture_field(), consts.eps_w / 2, consts)
    assert r["agree_error"] <= 1e-12 and r["constant_error"] == 0
    assert r["deviation_ok"] and r["bounded_ok"]


def test_patched_sums_constant_field_vanish():
    lat = Lattice(H, 5, 2.0)
    w = MatrixField.constant(np.array([[1.0, 0.3], [0.0, 1.2]]))
    c = field_constants(H, w, BOX, samples=200)
    c.eps_w = 2.0  # constant field: any scale is admissible
    r = patched_riesz_sums(lat, w, 0.8, consts=c)
    assert r["deviation"] == 0.0 and r["recomputed"] == 0
