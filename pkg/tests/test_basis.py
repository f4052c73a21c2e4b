import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import hermite_e
from scipy import integrate

from boltzgap.basis import (
    BasisError,
    HermiteBasis,
    StateVector,
    admissible_sigma_interval,
    chi_square_product_gaussian,
    l1_estimate,
    l1_upper_bound,
    product_gaussian_coefficients_1d,
    product_gaussian_state,
    product_gaussian_truncation,
    project_H0,
)


def test_size_and_ordering():
    B = HermiteBasis(4)
    assert B.size == math.comb(7, 3)
    assert B.indices[0] == (0, 0, 0)
    assert list(B.degrees) == sorted(B.degrees)


def test_bounds_on_degree():
    with pytest.raises(BasisError):
        HermiteBasis(1)
    with pytest.raises(BasisError, match="budget"):
        HermiteBasis(13)


def test_orthonormal_under_gauss_hermite():
    B = HermiteBasis(4)
    x, w = hermite_e.hermegauss(8)
    w = w / math.sqrt(2 * math.pi)
    X = np.stack(np.meshgrid(x, x, x, indexing="ij"), -1).reshape(-1, 3)
    W = np.einsum("i,j,k->ijk", w, w, w).reshape(-1)
    Phi = B.evaluate(X)
    assert np.allclose(Phi.T @ (W[:, None] * Phi), np.eye(B.size), atol=1e-12)


def test_evaluate_one_matches_full():
    B = HermiteBasis(5)
    pts = np.random.default_rng(1).standard_normal((20, 3))
    full = B.evaluate(pts)
    for i in range(B.size):
        assert np.allclose(B.evaluate_one(pts, i), full[:, i], atol=1e-13)


def test_coefficients_of_polynomial_round_trip():
    B = HermiteBasis(4)
    for i in (0, 5, 17, B.size - 1):
        c = B.coefficients_of(B.poly(i))
        assert np.allclose(c, np.eye(B.size)[i], atol=1e-12)


def test_invariant_projector_spans_invariants():
    B = HermiteBasis(4)
    P = B.projector
    assert np.allclose(P.vectors @ P.vectors.T, np.eye(5), atol=1e-13)
    Q = P.complement_basis()
    assert Q.shape == (B.size, B.size - 5)
    assert np.allclose(P.vectors @ Q, 0, atol=1e-13)


@given(st.lists(st.floats(-5, 5), min_size=35, max_size=35))
@settings(max_examples=30, deadline=None)
def test_projection_idempotent(vals):
    B = HermiteBasis(4)
    s = project_H0(StateVector(B, vals))
    assert s.in_H0(1e-10)
    assert np.allclose(project_H0(s).coeffs, s.coeffs, atol=1e-12)


def test_state_csv_round_trip():
    B = HermiteBasis(3)
    s = StateVector(B, np.random.default_rng(0).standard_normal(B.size) / 3)
    back = StateVector.from_csv(s.to_csv(), B)
    assert np.array_equal(back.coeffs, s.coeffs)


def test_embed_and_truncate():
    B4, B6 = HermiteBasis(4), HermiteBasis(6)
    s = StateVector(B4, np.arange(B4.size, dtype=float))
    e = s.embed(B6)
    assert e.norm == s.norm
    assert np.array_equal(e.embed(B4).coeffs, s.coeffs)
    with pytest.raises(BasisError):
        StateVector(B6, np.ones(B6.size)).embed(B4)


def test_product_gaussian_1d_coefficients_by_quadrature():
    s2 = 1.3
    c = product_gaussian_coefficients_1d(s2, 6)
    for n in range(7):
        he = hermite_e.HermiteE([0] * n + [1])
        val, _ = integrate.quad(lambda x: he(x) * math.exp(-x * x / (2 * s2)) / math.sqrt(2 * math.pi * s2), -30, 30)
        assert abs(c[n] - val / math.sqrt(math.factorial(n))) < 1e-10


def test_product_gaussian_lives_in_h0_and_converges():
    sig = (1.1, 1.0, 0.9)
    for N, prev in ((4, None), (8, None)):
        st_ = product_gaussian_state(sig, HermiteBasis(N))
        assert st_.in_H0(1e-14)
    t4 = product_gaussian_truncation(sig, HermiteBasis(4))
    t8 = product_gaussian_truncation(sig, HermiteBasis(8))
    assert 0 < t8 < t4


def test_chi_square_exact_value():
    c = chi_square_product_gaussian((1.1, 1.0, 0.9))
    assert abs(c.exact - (1 / 0.99 - 1)) < 1e-14
    assert c.telescoped_bound >= c.exact


@pytest.mark.parametrize("sig,msg", [((2.5, 0.25, 0.25), "infinite"), ((1.0, 1.0, 1.5), "energy")])
def test_product_gaussian_errors(sig, msg):
    with pytest.raises(BasisError, match=msg):
        product_gaussian_state(sig, HermiteBasis(2))


def test_admissible_interval_value():
    lo, hi = admissible_sigma_interval(1 / 48)
    assert abs((hi - 1) - (1 / 48) * math.sqrt(42 + 1 / 48**2) / (21 + 1 / 48**2)) < 1e-15
    assert math.isclose(1 - lo, hi - 1)


def test_l1_estimate_single_mode_against_1d_quadrature():
    B = HermiteBasis(4)
    c = np.zeros(B.size)
    c[B.index((2, 0, 0))] = 0.02
    st_ = StateVector(B, c)
    he2 = lambda x: (x * x - 1) / math.sqrt(2)  # noqa: E731
    exact, _ = integrate.quad(lambda x: abs(0.02 * he2(x)) * math.exp(-x * x / 2) / math.sqrt(2 * math.pi),
                              -np.inf, np.inf, points=None, limit=200)
    est = l1_estimate(st_)
    assert abs(est.value - exact) < 1e-6 * exact + est.delta
    assert est.value <= l1_upper_bound(st_) + 1e-12
    assert l1_estimate(StateVector.zeros(B)).value == 0.0
