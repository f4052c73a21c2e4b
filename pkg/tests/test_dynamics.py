import math

import numpy as np
import pytest

from boltzgap.basis import StateVector
from boltzgap.dynamics import (
    _midpoint_run,
    DynamicsError,
    Semigroup,
    c_star,
    decay_rate_fit,
    integrate,
    picard_solve,
    riccati_envelope,
    theorem_check,
    time_grid,
    trajectory_csv,
)


@pytest.fixture(scope="module")
def setup(ops):
    L, T = ops("linear", 6)
    h = StateVector(L.basis, L.gap_eigenvector()).scaled_to(1 / 48)
    Q = L.basis.projector.complement_basis()
    r = StateVector(L.basis, Q @ np.random.default_rng(7).standard_normal(Q.shape[1])).scaled_to(1 / 48)
    return L, T, h, r


def test_semigroup_is_exact_on_eigenvector(setup):
    L, _, h, _ = setup
    S = Semigroup(L)
    assert np.allclose(S.apply(2.0, h.coeffs), math.exp(-2 / 3) * h.coeffs, atol=1e-15)
    with pytest.raises(DynamicsError):
        S.apply(-1.0, h.coeffs)


def test_semigroup_contracts(setup):
    L, _, _, r = setup
    S = Semigroup(L)
    for t in (0.5, 1, 3):
        assert np.linalg.norm(S.apply(t, r.coeffs)) <= math.exp(-t / 3) * r.norm * (1 + 1e-12)


def test_time_grid_contains_uniform_and_geometric():
    g = time_grid(2.0, 0.25, 1e-3)
    assert g[0] == 0 and g[-1] == 2.0
    assert 1e-3 in g and 0.25 in g
    assert np.all(np.diff(g) > 0)


def test_zero_state_stays_zero(setup):
    L, T, _, _ = setup
    tr = integrate(StateVector.zeros(L.basis), L, T, 1.0)
    assert not np.any(tr.states)


def test_rejects_state_outside_h0(setup):
    L, T, _, _ = setup
    x = np.zeros(L.basis.size)
    x[0] = 1e-3
    with pytest.raises(DynamicsError, match="not in H0"):
        integrate(StateVector(L.basis, x), L, T, 1.0)


def test_linear_run_matches_semigroup(setup):
    L, T, _, r = setup
    tr = integrate(r, L, T, 3.0, nonlinear=False)
    S = Semigroup(L)
    assert np.allclose(tr.states[-1], S.apply(3.0, r.coeffs), atol=1e-15)


def test_blow_up_is_reported(setup):
    L, T, h, _ = setup
    big = h.scaled_to(2000.0)  # theta starts above the 1e6 guard
    with pytest.raises(DynamicsError, match="perturbative"):
        integrate(big, L, T, 1.0)


def test_large_data_uses_relative_tolerance(setup):
    L, T, h, _ = setup
    tr = integrate(h.scaled_to(2.0), L, T, 2.0)
    assert tr.refinements < 10 and np.all(np.isfinite(tr.theta))


def test_integrator_second_order(setup):
    L, T, _, r = setup
    x0 = r.scaled_to(0.3).coeffs
    grid = np.array([0.0, 1.0])
    S = Semigroup(L)
    ref, _ = _midpoint_run(S, T, x0, grid, 1 / 1024)
    errs = [np.linalg.norm(_midpoint_run(S, T, x0, grid, dt)[0][-1] - ref[-1]) for dt in (1 / 8, 1 / 16, 1 / 32)]
    assert 3.0 < errs[0] / errs[1] < 5.0 and 3.0 < errs[1] / errs[2] < 5.0


def test_picard_matches_integrator(setup):
    L, T, _, r = setup
    pr = picard_solve(r, L, T, 3.0)
    tr = integrate(r, L, T, 3.0, grid=pr.trajectory.times)
    assert np.max(np.linalg.norm(pr.trajectory.states - tr.states, axis=1)) < 1e-6
    assert pr.max_factor < 0.5
    assert pr.max_iterate_norm <= pr.ball_radius


def test_picard_rejects_large_data(setup):
    L, T, h, _ = setup
    with pytest.raises(DynamicsError, match="exceeds delta"):
        picard_solve(h.scaled_to(0.1), L, T, 1.0)


def test_riccati_envelope_closed_form():
    t = np.linspace(0, 15, 31)
    env = riccati_envelope(1 / 48**2, -1 / 3, t)
    assert np.allclose(env, (42 * np.exp(t / 6) + 6) ** -2.0, rtol=1e-13)
    # solves the ODE
    dt = 1e-6
    d = (riccati_envelope(1 / 48**2, -1 / 3, 1 + dt) - riccati_envelope(1 / 48**2, -1 / 3, 1 - dt)) / (2 * dt)
    th = riccati_envelope(1 / 48**2, -1 / 3, 1.0)
    assert math.isclose(d, -th / 3 + 2 * th**1.5, rel_tol=1e-6)
    with pytest.raises(DynamicsError):
        riccati_envelope(0.04, -1 / 3, 1.0)


def test_c_star_value():
    assert math.isclose(c_star(1 / 48, -1 / 3), 1 / 1764, rel_tol=1e-14)


def test_theorem_check_and_csv(setup):
    L, T, _, r = setup
    tr = integrate(r, L, T, 4.0)
    rep = theorem_check(tr, -1 / 3, l1_stride=8)
    assert rep.passed
    assert rep.margins["l1_stated_prefactor"] < 0  # displayed prefactor fails at t=0
    text = trajectory_csv(tr, -1 / 3, l1=False)
    header = text.splitlines()[0].split(",")
    assert header == ["t", "theta", "sup_norm", "C_star_bound", "riccati_envelope", "l1_estimate",
                      "l1_bound_sqrtCstar", "invariant_residual"]
    first = text.splitlines()[1].split(",")
    assert first[1] == format(tr.theta[0], ".17g")


def test_theorem_check_hypothesis_failure(setup):
    L, T, h, _ = setup
    tr = integrate(h.scaled_to(3 / 48), L, T, 1.0)
    rep = theorem_check(tr, -1 / 3)
    assert not rep.hypothesis_ok and not rep.passed
    assert '"status": "hypothesis_failed"' in rep.to_json()


def test_decay_rate_fit(setup):
    L, T, h, _ = setup
    tr = integrate(h, L, T, 10.0, nonlinear=False)
    assert abs(decay_rate_fit(tr, 5.0) + 2 / 3) < 1e-9
    with pytest.raises(ValueError, match="at least"):
        decay_rate_fit(tr, 9.99)
