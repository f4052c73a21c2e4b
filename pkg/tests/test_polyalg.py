import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial import hermite_e
from scipy import integrate, special

from boltzgap.kernel import builtin_kernel
from boltzgap.polyalg import (
    AngularTable,
    MultiPoly,
    compose_linear,
    double_factorial,
    gaussian_integrate,
    hermite_monomial_matrix,
    multi_indices,
    radial_moment,
    reduce_omega_norm,
    sphere_average,
)

XY = ("x", "y")

coef = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
small_poly = st.dictionaries(st.tuples(st.integers(0, 3), st.integers(0, 3)), coef, max_size=5)


def test_double_factorial():
    assert [double_factorial(n) for n in (-1, 0, 1, 5, 6)] == [1, 1, 1, 15, 48]


def test_multi_indices_graded_and_counted():
    idx = multi_indices(3, 4)
    assert len(idx) == math.comb(6, 2)
    assert idx[0] == (4, 0, 0)
    assert all(sum(a) == 4 for a in idx)


@given(small_poly, small_poly, st.floats(-2, 2), st.floats(-2, 2))
@settings(max_examples=60, deadline=None)
def test_arithmetic_matches_evaluation(ta, tb, x, y):
    p, q = MultiPoly(XY, ta), MultiPoly(XY, tb)
    at = {"x": x, "y": y}
    pv, qv = p.evaluate(at), q.evaluate(at)
    assert math.isclose((p * q).evaluate(at), pv * qv, rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose((p - q).evaluate(at), pv - qv, rel_tol=1e-9, abs_tol=1e-9)
    assert math.isclose((p**2).evaluate(at), pv * pv, rel_tol=1e-9, abs_tol=1e-9)


@given(small_poly)
def test_text_round_trip(terms):
    p = MultiPoly(XY, terms)
    assert MultiPoly.from_text(p.to_text()) == p


def test_compose_requires_complete_substitution():
    p = MultiPoly.variable("x", XY) * MultiPoly.variable("y", XY)
    with pytest.raises(ValueError, match="incomplete substitution"):
        compose_linear(p, {"x": MultiPoly.variable("x", XY)})


def test_compose_linear_change_of_variables():
    x, y = (MultiPoly.variable(v, XY) for v in XY)
    p = x * x - y
    q = compose_linear(p, {"x": x + y, "y": x - y}, XY)
    assert q.allclose(x * x + 2 * x * y + y * y - x + y)


def test_gaussian_integrate_against_quadrature():
    x, y = (MultiPoly.variable(v, XY) for v in XY)
    p = x**4 * y**2 + 3 * x**2 - y
    nodes, w = hermite_e.hermegauss(10)
    w = w / math.sqrt(2 * math.pi)
    X, Y = np.meshgrid(nodes, nodes, indexing="ij")
    quad = float(np.sum(np.outer(w, w) * p.evaluate({"x": X, "y": Y})))
    full = gaussian_integrate(p, XY)
    assert math.isclose(full.evaluate({}), quad, rel_tol=1e-13)
    partial = gaussian_integrate(p, ("x",))
    assert partial.allclose(MultiPoly.variable("y", ("y",)) ** 2 * 3.0 + 3.0 - MultiPoly.variable("y", ("y",)))


def test_sphere_average_against_lebedev():
    from scipy.integrate import lebedev_rule

    pts, w = lebedev_rule(35)
    w = w / w.sum()
    for beta in [(0, 0, 0), (2, 0, 0), (2, 2, 0), (4, 2, 2), (6, 0, 2), (1, 1, 0), (3, 0, 1)]:
        lb = float(np.sum(w * pts[0] ** beta[0] * pts[1] ** beta[1] * pts[2] ** beta[2]))
        assert abs(sphere_average(beta) - lb) < 1e-14


@pytest.mark.parametrize("p", [-2, -1, 0, 1, 2, 5])
def test_radial_moment_chi_distribution(p):
    val, _ = integrate.quad(lambda r: r**p * r * r * math.exp(-r * r / 2), 0, np.inf)
    assert math.isclose(radial_moment(p), val * math.sqrt(2 / math.pi), rel_tol=1e-10)


def test_radial_moment_rejects_non_integrable():
    with pytest.raises(ValueError, match="non-integrable"):
        radial_moment(-3)


def test_reduce_omega_norm_preserves_values():
    om = ("o1", "o2", "o3")
    o3 = MultiPoly.variable("o3", om)
    o1 = MultiPoly.variable("o1", om)
    p = o3**5 * o1 + o3**2
    r = reduce_omega_norm(p)
    assert r.degree_in(("o3",)) <= 1
    v = np.array([0.3, -0.5, 0.0])
    v[2] = math.sqrt(1 - v[0] ** 2 - v[1] ** 2)
    at = dict(zip(om, v))
    assert math.isclose(p.evaluate(at), r.evaluate(at), rel_tol=1e-13)


def _angular_oracle(kernel, u, beta):
    """(1/4pi) int b(u.o) o^beta do by adaptive quadrature in a frame around u."""
    u = np.asarray(u, float) / np.linalg.norm(u)
    helper = np.array([1.0, 0, 0]) if abs(u[0]) < 0.9 else np.array([0, 1.0, 0])
    e1 = np.cross(u, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)

    def f(phi, t):
        s = math.sqrt(1 - t * t)
        o = t * u + s * (math.cos(phi) * e1 + math.sin(phi) * e2)
        return float(kernel(np.array([t]))[0]) * o[0] ** beta[0] * o[1] ** beta[1] * o[2] ** beta[2]

    total = 0.0
    for lo, hi in ((-1, 0), (0, 1)):
        val, _ = integrate.dblquad(f, lo, hi, 0, 2 * math.pi, epsabs=1e-12, epsrel=1e-12)
        total += val
    return total / (4 * math.pi)


@pytest.mark.parametrize("beta", [(2, 0, 0), (1, 1, 0), (2, 1, 1), (0, 0, 4), (3, 1, 0)])
def test_omega_average_against_quadrature(beta):
    k = builtin_kernel("quintic")
    table = AngularTable(k.moments, 8)
    u = np.array([0.3, -0.4, 0.866])
    u /= np.linalg.norm(u)
    closed = table.omega_average(beta).evaluate(dict(zip(table.uhat_vars, u)))
    assert abs(closed - _angular_oracle(k, u, beta)) < 1e-9


def test_relative_average_is_homogeneous_average():
    k = builtin_kernel("linear")
    table = AngularTable(k.moments, 8)
    g = np.array([0.7, -1.2, 0.4])
    c = (1, 0, 1)
    poly = table.relative_average(c)
    # (g.o)^2 o1 o3 averaged; compare with |g|^2 times the unit-vector average
    u = g / np.linalg.norm(g)
    om = ("o1", "o2", "o3")
    guo = MultiPoly.linear_form(dict(zip(om, u)), om)
    integrand = guo * guo * MultiPoly.monomial((1, 0, 1), om)
    ref = 0.0
    for e, cc in integrand.items():
        ref += cc * table.omega_average(e).evaluate(dict(zip(table.uhat_vars, u)))
    assert math.isclose(poly.evaluate(dict(zip(table.rel_vars, g))), ref * (g @ g), rel_tol=1e-12)


def test_angular_table_too_small():
    table = AngularTable(builtin_kernel("linear").moments[:5], 4)
    with pytest.raises(ValueError, match="angular table too small"):
        table.omega_average((6, 0, 0))


def test_hermite_monomial_matrix_inverts_hermite_e():
    P = hermite_monomial_matrix(7)
    x = np.linspace(-2, 2, 11)
    for n in range(8):
        recon = sum(P[n, k] * hermite_e.hermeval(x, [0] * k + [1]) / math.sqrt(special.factorial(k)) for k in range(8))
        assert np.allclose(recon, x**n, atol=1e-12)
