"""Acceptance checks, one function per criterion.

Each check returns a :class:`CriterionResult` with the measured margins;
``run_all`` shares assembled operators and trajectories between checks.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property

import numpy as np
from scipy import integrate as spi

from .basis import (
    HermiteBasis,
    StateVector,
    admissible_sigma_interval,
    chi_square_product_gaussian,
)
from .dynamics import decay_rate_fit, integrate, picard_solve, theorem_check, time_grid
from .kernel import (
    builtin_kernel,
    check_kernel,
    kernel_function,
    spectral_gap,
    spectral_gap_quadrature,
    symmetry_residual,
)
from .operators import (
    assemble,
    conservation_residuals,
    mc_oracle,
    parity_zero,
    verify_spectral_inequality,
    verify_trilinear_bound,
)

__all__ = ["CriterionResult", "AcceptanceContext", "CRITERIA", "run_criterion", "run_all"]

EXACT_GAPS = {"linear": Fraction(-1, 3), "quintic": Fraction(-2, 5)}


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0

    def line(self) -> str:
        return f"criterion {self.number:2d} [{'PASS' if self.passed else 'FAIL'}] {self.title}"


class AcceptanceContext:
    """Lazily assembled operators and theorem trajectories shared by checks."""

    theorem_seeds = (1, 2, 3)

    def __init__(self, seed: int = 0, oracle_samples: int = 10**6):
        self.seed = seed
        self.oracle_samples = oracle_samples
        self._ops: dict = {}
        self._kernels: dict = {}

    def kernel(self, name: str):
        if name not in self._kernels:
            self._kernels[name] = builtin_kernel(name)
        return self._kernels[name]

    def operators(self, name: str, N: int):
        key = (name, N)
        if key not in self._ops:
            self._ops[key] = assemble(self.kernel(name), HermiteBasis(N))
        return self._ops[key]

    def theorem_initials(self, N: int = 6) -> list[tuple[str, StateVector]]:
        """Gap eigenvector and three random H0 directions, each of norm delta, at degree 6."""
        L, _ = self.operators("linear", 6)
        basis = L.basis
        delta = self.kernel("linear").delta
        states = [("gap-eigvec", StateVector(basis, L.gap_eigenvector()).scaled_to(delta))]
        Q = basis.projector.complement_basis()
        for s in self.theorem_seeds:
            rng = np.random.default_rng(s)
            states.append((f"random({s})", StateVector(basis, Q @ rng.standard_normal(Q.shape[1])).scaled_to(delta)))
        if N != 6:
            target = self.operators("linear", N)[0].basis
            states = [(name, st.embed(target)) for name, st in states]
        return states

    @cached_property
    def theorem_runs(self):
        L, T = self.operators("linear", 6)
        return [(name, integrate(h, L, T, 15.0)) for name, h in self.theorem_initials()]


def c1_gap_formula(ctx: AcceptanceContext) -> CriterionResult:
    d = {}
    ok = True
    for name, exact in EXACT_GAPS.items():
        k = ctx.kernel(name)
        g = spectral_gap(k)
        q = spectral_gap_quadrature(k.evaluate)
        d[name] = {"gap": g, "exact": float(exact), "error": abs(g - float(exact)), "quadrature_error": abs(g - q)}
        ok &= abs(g - float(exact)) <= 1e-12 and abs(g - q) <= 1e-12
    return CriterionResult(1, "gap formula", ok, d)


def c2_kernel_conditions(ctx: AcceptanceContext) -> CriterionResult:
    d = {}
    ok = True
    for name in EXACT_GAPS:
        r = check_kernel(ctx.kernel(name).evaluate)
        d[name] = r.to_dict()
        ok &= r.passed and r.symmetry_residual < 1e-10 and r.cutoff_residual < 1e-10
    one = kernel_function("raw:1")
    at_half = float(symmetry_residual(one, 0.5))
    expected = 1 - 1 / math.sqrt(3)
    r1 = check_kernel(one)
    d["constant"] = {"residual_at_half": at_half, "expected": expected, "check_passed": r1.passed}
    ok &= (not r1.passed) and abs(at_half - expected) < 1e-9 and abs(at_half - 0.42265) < 5e-6
    return CriterionResult(2, "kernel conditions", ok, d)


def c3_operator_structure(ctx: AcceptanceContext) -> CriterionResult:
    d = {}
    ok = True
    for name, exact in EXACT_GAPS.items():
        L, _ = ctx.operators(name, 6)
        top = {N: ctx.operators(name, N)[0].top_eigenvalue for N in (4, 6, 8)}
        spread = max(top.values()) - min(top.values())
        e = {
            "symmetry_residual": L.symmetry_residual,
            "invariant_residual": L.invariant_residual,
            "max_h0_eigenvalue": L.top_eigenvalue,
            "gap_error": abs(L.top_eigenvalue - float(exact)),
            "top_by_N": {str(k): v for k, v in top.items()},
            "N_spread": spread,
            "gap_mode_degrees": L.gap_mode_degrees(),
        }
        d[name] = e
        ok &= (e["symmetry_residual"] <= 1e-10 and e["invariant_residual"] <= 1e-10
               and e["max_h0_eigenvalue"] <= 1e-10 and e["gap_error"] <= 1e-8 and spread <= 1e-8)
    return CriterionResult(3, "operator structure", ok, d)


def c4_spectral_inequality(ctx: AcceptanceContext) -> CriterionResult:
    d = {}
    ok = True
    for name in EXACT_GAPS:
        L, _ = ctx.operators(name, 6)
        r = verify_spectral_inequality(L, ctx.kernel(name).gap, trials=200, seed=ctx.seed)
        d[name] = r
        ok &= r["pass"] and r["equality_residual"] <= 1e-10
    return CriterionResult(4, "spectral inequality", ok, d)


def c5_trilinear_bound(ctx: AcceptanceContext) -> CriterionResult:
    d = {}
    ok = True
    for name in EXACT_GAPS:
        _, T = ctx.operators(name, 6)
        r = verify_trilinear_bound(T, trials=500, seed=ctx.seed)
        d[name] = r
        ok &= r["pass"]
    return CriterionResult(5, "trilinear bound", ok, d)


def _oracle_entries(basis: HermiteBasis, rng: np.random.Generator, order: int, count: int) -> list[tuple[int, ...]]:
    n = basis.size
    out: list[tuple[int, ...]] = []
    seen = set()
    while len(out) < count:
        e = tuple(int(x) for x in rng.integers(0, n, size=order))
        if order == 2:
            e = (min(e), max(e))
        else:
            e = (min(e[:2]), max(e[:2]), e[2])
        if e in seen or parity_zero(basis, *e):
            continue
        seen.add(e)
        out.append(e)
    return out


def c6_oracle_equivalence(ctx: AcceptanceContext) -> CriterionResult:
    k = ctx.kernel("linear")
    L, T = ctx.operators("linear", 4)
    basis = L.basis
    rng = np.random.default_rng(ctx.seed)
    rows = []
    worst = 0.0
    for e in _oracle_entries(basis, rng, 2, 20) + _oracle_entries(basis, rng, 3, 20):
        exact = float(L.matrix[e[1], e[0]] if len(e) == 2 else T.T[e])
        est = mc_oracle(k, basis, e, n_samples=ctx.oracle_samples, seed=ctx.seed)
        z = est.z_score(exact)
        worst = max(worst, abs(z))
        rows.append({"entry": list(e), "exact": exact, "estimate": est.estimate, "std_error": est.std_error, "z": z})
    # parity-zero entries must vanish exactly, both in the assembly and in the oracle
    n = basis.size
    pz_L = [(a, b) for a in range(n) for b in range(n) if parity_zero(basis, a, b)]
    pz_T = [(a, b, c) for a in range(n) for b in range(n) for c in range(n) if parity_zero(basis, a, b, c)]
    zero_L = all(L.matrix[b, a] == 0.0 for a, b in pz_L)
    zero_T = all(T.T[e] == 0.0 for e in pz_T)
    zero_oracle = all(mc_oracle(k, basis, e, n_samples=ctx.oracle_samples).estimate == 0.0 for e in pz_T[:20])
    d = {"entries": rows, "max_abs_z": worst, "parity_zero_count": len(pz_L) + len(pz_T),
         "parity_zero_exact": bool(zero_L and zero_T and zero_oracle)}
    return CriterionResult(6, "oracle equivalence", bool(worst <= 4.0 and d["parity_zero_exact"]), d)


def c7_conservation(ctx: AcceptanceContext) -> CriterionResult:
    d = {}
    ok = True
    for name in EXACT_GAPS:
        L, T = ctx.operators(name, 6)
        r = conservation_residuals(L, T, trials=100, seed=ctx.seed)
        d[name] = r
        ok &= r["pass"]
    traj_res = max(float(tr.invariant_residuals.max()) for _, tr in ctx.theorem_runs)
    d["trajectory_invariant_residual"] = traj_res
    ok &= traj_res <= 1e-10
    return CriterionResult(7, "conservation", ok, d)


def c8_theorem(ctx: AcceptanceContext) -> CriterionResult:
    k = ctx.kernel("linear")
    d = {}
    ok = True
    for name, tr in ctx.theorem_runs:
        rep = theorem_check(tr, k.gap, k.delta)
        t = tr.times
        env = (42 * np.exp(t / 6) + 6) ** -2.0
        closed_form_margin = float(np.min(env * (1 + 1e-12) - tr.theta))
        d[name] = {"clauses": rep.clauses, "margins": rep.margins, "c_star": rep.c_star,
                   "closed_form_envelope_margin": closed_form_margin, "l1_unconverged": rep.l1_flagged}
        ok &= rep.passed and closed_form_margin >= 0 and abs(rep.c_star - 1 / 1764) <= 1e-15
    return CriterionResult(8, "theorem reproduction", ok, d)


def _compare_on_grid(a, b) -> float:
    common, ia, ib = np.intersect1d(np.round(a.times, 12), np.round(b.times, 12), return_indices=True)
    if common.size == 0:
        raise ValueError("no common grid points")
    return float(np.max(np.linalg.norm(a.states[ia] - b.states[ib], axis=1)))


def c9_picard(ctx: AcceptanceContext) -> CriterionResult:
    L, T = ctx.operators("linear", 6)
    d = {}
    ok = True
    for (name, h), (_, tr) in zip(ctx.theorem_initials(), ctx.theorem_runs):
        pr = picard_solve(h, L, T, 15.0)
        dist = _compare_on_grid(pr.trajectory, tr)
        d[name] = {"max_contraction_factor": pr.max_factor, "max_iterate_norm": pr.max_iterate_norm,
                   "ball_radius": pr.ball_radius, "distance_to_integrator": dist, "iterations": pr.iterations}
        ok &= pr.max_factor <= 0.55 and pr.max_iterate_norm <= pr.ball_radius and dist <= 1e-6
    return CriterionResult(9, "Picard scheme", ok, d)


def chi_square_quadrature(sigma2) -> float:
    """int f0^2 / M - 1 by adaptive quadrature, one factor per axis."""
    prod = 1.0
    for s in sigma2:
        f = lambda x, s=s: math.exp(-x * x / s + x * x / 2) / (s * math.sqrt(2 * math.pi))  # noqa: E731
        val, _ = spi.quad(f, -np.inf, np.inf, epsabs=0.0, epsrel=1e-13)
        prod *= val
    return prod - 1.0


def c10_gaussian_example(ctx: AcceptanceContext) -> CriterionResult:
    sig = (1.1, 1.0, 0.9)
    exact = chi_square_product_gaussian(sig).exact
    quad = chi_square_quadrature(sig)
    closed = 1 / 0.99 - 1
    d = {"exact": exact, "quadrature": quad, "closed_form": closed}
    ok = abs(exact - quad) <= 1e-10 and abs(exact - closed) <= 1e-10
    delta = 1 / 48
    lo, hi = admissible_sigma_interval(delta)
    rng = np.random.default_rng(ctx.seed)
    worst = math.inf
    count = 0
    while count < 50:
        s1, s2 = rng.uniform(lo, hi, 2)
        s3 = 3 - s1 - s2
        if not lo <= s3 <= hi:
            continue
        c = chi_square_product_gaussian((s1, s2, s3))
        worst = min(worst, c.telescoped_bound - c.exact)
        count += 1
    d["min_bound_margin"] = worst
    ok &= worst >= 0
    r = hi - 1
    patterns = [(hi, 1.0, lo), (lo, 1.0, hi), (hi, lo, 1.0), (1.0, hi, lo), (hi, 1 - r / 2, 1 - r / 2), (lo, 1 + r / 2, 1 + r / 2)]
    ends = []
    for p in patterns:
        dist = chi_square_product_gaussian(p).distance
        ends.append({"sigma2": list(p), "norm": dist, "margin": delta - dist})
        ok &= dist <= delta
    d["interval"] = [lo, hi]
    d["endpoints"] = ends
    return CriterionResult(10, "Gaussian example", bool(ok), d)


def c11_truncation(ctx: AcceptanceContext) -> CriterionResult:
    grid = time_grid(1.0)
    theta1 = {}
    for N in (6, 8):
        L, T = ctx.operators("linear", N)
        theta1[N] = [float(integrate(h, L, T, 1.0, grid=grid, tol=1e-13).theta[-1])
                     for _, h in ctx.theorem_initials(N)]
    rel = [abs(a - b) / a for a, b in zip(theta1[6], theta1[8])]
    names = [n for n, _ in ctx.theorem_initials()]
    d = {n: {"theta1_N6": a, "theta1_N8": b, "relative_change": r} for n, a, b, r in zip(names, theta1[6], theta1[8], rel)}
    return CriterionResult(11, "truncation robustness", bool(max(rel) < 1e-6), d)


def c12_decay_rate(ctx: AcceptanceContext) -> CriterionResult:
    k = ctx.kernel("linear")
    L, T = ctx.operators("linear", 6)
    h = ctx.theorem_initials()[0][1]
    lin = integrate(h, L, T, 15.0, nonlinear=False)
    rate = decay_rate_fit(lin, 7.5)
    d = {"linear_rate": rate, "expected": 2 * k.gap, "linear_error": abs(rate - 2 * k.gap)}
    ok = abs(rate - 2 * k.gap) <= 1e-6
    for name, tr in ctx.theorem_runs:
        r = decay_rate_fit(tr, 7.5)
        d[name] = r
        ok &= r <= k.gap
    return CriterionResult(12, "decay-rate sanity", bool(ok), d)


CRITERIA = {
    1: c1_gap_formula,
    2: c2_kernel_conditions,
    3: c3_operator_structure,
    4: c4_spectral_inequality,
    5: c5_trilinear_bound,
    6: c6_oracle_equivalence,
    7: c7_conservation,
    8: c8_theorem,
    9: c9_picard,
    10: c10_gaussian_example,
    11: c11_truncation,
    12: c12_decay_rate,
}


def run_criterion(number: int, ctx: AcceptanceContext | None = None) -> CriterionResult:
    if number not in CRITERIA:
        raise KeyError(f"no criterion {number}")
    ctx = ctx or AcceptanceContext()
    t0 = time.perf_counter()
    res = CRITERIA[number](ctx)
    res.seconds = time.perf_counter() - t0
    return res


def run_all(numbers=None, ctx: AcceptanceContext | None = None) -> list[CriterionResult]:
    ctx = ctx or AcceptanceContext()
    return [run_criterion(n, ctx) for n in (numbers or sorted(CRITERIA))]
