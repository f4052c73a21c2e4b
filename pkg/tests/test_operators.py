import numpy as np
import pytest

from boltzgap.basis import HermiteBasis, StateVector, project_H0
from boltzgap.kernel import builtin_kernel
from boltzgap.operators import (
    apply_R,
    assemble,
    conservation_residuals,
    mc_oracle,
    parity_zero,
    reference_entry,
    verify_spectral_inequality,
    verify_trilinear_bound,
)

# frozen values from exact assembly (linear kernel, N=4); rational where recognisable
FROZEN_L = {((2, 0, 0), (2, 0, 0)): -1 / 3, ((0, 0, 0), (0, 0, 0)): 0.0}
LINEAR_SPECTRUM = [-1 / 3, -1 / 2]


@pytest.mark.parametrize("name", ["linear", "quintic"])
def test_structure(ops, name):
    L, T = ops(name, 6)
    assert L.symmetry_residual <= 1e-12
    assert L.invariant_residual <= 1e-12
    assert T.symmetry_residual == 0.0
    assert T.gain_asymmetry <= 1e-12
    w, _ = L.h0_eigen
    assert w.max() <= 1e-10


@pytest.mark.parametrize("name,gap", [("linear", -1 / 3), ("quintic", -2 / 5)])
def test_top_eigenvalue_matches_gap_for_all_N(ops, name, gap):
    for N in (4, 6):
        assert abs(ops(name, N)[0].top_eigenvalue - gap) < 1e-12


def test_linear_spectrum_and_gap_mode_degrees(ops):
    L, _ = ops("linear", 6)
    w = np.unique(np.round(L.h0_eigen[0], 10))[::-1]
    assert np.allclose(w[:2], LINEAR_SPECTRUM)
    assert L.gap_mode_degrees() == [3, 4]


def test_frozen_entries(ops):
    L, _ = ops("linear", 4)
    B = L.basis
    for (a, b), v in FROZEN_L.items():
        assert abs(L.matrix[B.index(b), B.index(a)] - v) < 1e-14


@pytest.mark.parametrize("name", ["linear", "quintic"])
def test_reference_pipeline_agrees_with_fast_assembly(ops, name):
    k = builtin_kernel(name)
    L, T = ops(name, 3)
    B = L.basis
    rng = np.random.default_rng(3)
    for _ in range(6):
        a, b = (int(x) for x in rng.integers(0, B.size, 2))
        assert abs(reference_entry(k, B, a, b) - L.matrix[b, a]) < 1e-12
    for e in [(1, 1, 4), (4, 0, 4), (2, 5, 7), (3, 3, 9), (6, 8, 1)]:
        assert abs(reference_entry(k, B, *e) - T.T[e]) < 1e-12


def test_parity_mask_exact_zeros(ops):
    L, T = ops("quintic", 4)
    B = L.basis
    n = B.size
    for a in range(n):
        for b in range(n):
            if parity_zero(B, a, b):
                assert L.matrix[b, a] == 0.0
    pz = np.array([[[parity_zero(B, a, b, c) for c in range(n)] for b in range(n)] for a in range(n)])
    assert np.all(T.T[pz] == 0.0)


def test_spectral_inequality_and_equality(ops):
    L, _ = ops("quintic", 6)
    r = verify_spectral_inequality(L, -0.4, trials=50, seed=1)
    assert r["pass"] and r["equality_residual"] < 1e-12


def test_trilinear_bound(ops):
    _, T = ops("linear", 4)
    r = verify_trilinear_bound(T, trials=100, seed=2)
    assert r["pass"]
    assert r["max_trilinear_ratio"] < 2


def test_conservation(ops):
    L, T = ops("linear", 4)
    assert conservation_residuals(L, T, trials=20)["pass"]


def test_apply_R_dimension_check(ops):
    _, T = ops("linear", 4)
    x = StateVector(HermiteBasis(3), np.ones(20))
    with pytest.raises(ValueError, match="dimension mismatch"):
        apply_R(T, x, x)


def test_R_feeds_only_degree_four_and_up_from_h0(ops):
    _, T = ops("linear", 6)
    B = T.basis
    x = project_H0(StateVector(B, np.random.default_rng(0).standard_normal(B.size))).coeffs
    x[B.degrees > 3] = 0.0
    x = project_H0(StateVector(B, x)).coeffs
    r = T.quadratic(x)
    assert np.max(np.abs(r[B.degrees < 4])) < 1e-14


def test_oracle_unbiased_on_l_entry(linear):
    B = HermiteBasis(3)
    L, _ = assemble(linear, B)
    i = B.index((2, 0, 0))
    est = mc_oracle(linear, B, (i, i), n_samples=200_000, seed=5)
    assert est.z_score(L.matrix[i, i]) < 4


def test_oracle_parity_zero_exact(linear):
    B = HermiteBasis(3)
    e = (B.index((1, 0, 0)), B.index((0, 0, 0)))
    assert parity_zero(B, *e)
    assert mc_oracle(linear, B, e, n_samples=10**4).estimate == 0.0


def test_oracle_is_seed_reproducible(linear):
    B = HermiteBasis(2)
    a = mc_oracle(linear, B, (4, 4, 0), n_samples=20_000, seed=9)
    b = mc_oracle(linear, B, (4, 4, 0), n_samples=20_000, seed=9)
    assert a == b
