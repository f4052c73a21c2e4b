"""Galerkin matrices of the linearized collision operator and the quadratic remainder.

Assembly is exact.  For Maxwellian molecules the collision average
``K p(v, w) = E_o[p(v*)]`` of a polynomial is again a polynomial in
``(v, w)`` of no larger degree, because every factor ``(w - v).o`` pairs
with an ``o`` and the kernel-weighted average of ``(g.o)^k o^c`` is a
homogeneous polynomial in ``g`` (see :class:`~boltzgap.polyalg.AngularTable`).
Expanding ``K phi_c`` in the product basis ``phi_a(v) phi_b(w)`` of
``L^2(M x M)`` yields all gain integrals at once:

* ``E[phi_b(v) phi_a(v*)]`` is the ``(b, 0)`` coefficient of ``K phi_a``;
* ``E[phi_b(v) phi_a(w*)]`` is its ``(0, b)`` coefficient;
* ``E[phi_c(v) phi_a(v*) phi_b(w*)] = E[phi_a(v) phi_b(w) phi_c(v*)]`` (the
  collision map is a measure-preserving involution) is the ``(a, b)``
  coefficient of ``K phi_c``.

:func:`reference_entry` evaluates single entries by the slower
(xi, eta) pipeline instead, and :func:`mc_oracle` by Monte Carlo.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .basis import HermiteBasis, StateVector, V, project_H0
from .kernel import CollisionKernel, KernelError
from .report import dumps
from .polyalg import (
    AngularTable,
    MultiPoly,
    angular_average,
    compose_linear,
    gaussian_integrate,
    hermite_monomial_matrix,
    multi_indices,
    radial_moment,
    sphere_average,
)

__all__ = [
    "LMatrix",
    "RTensor",
    "assemble",
    "assemble_L",
    "assemble_R",
    "apply_R",
    "collision_projection",
    "reference_entry",
    "mc_oracle",
    "OracleEstimate",
    "parity_zero",
    "verify_spectral_inequality",
    "verify_trilinear_bound",
    "conservation_residuals",
]

log = logging.getLogger(__name__)

W = ("w1", "w2", "w3")
G = ("g1", "g2", "g3")
VW = V + W


def _required_moments(basis: HermiteBasis) -> int:
    return 2 * basis.N


def _covering(kernel: CollisionKernel, basis: HermiteBasis) -> CollisionKernel:
    """The kernel with enough moments for exact assembly at this degree."""
    need = _required_moments(basis)
    return kernel if kernel.m_max >= need else kernel.with_moments(need)


# ---------------------------------------------------------------------------
# fast exact assembly

_PROJECTION_CACHE: dict[tuple, np.ndarray] = {}


def _relative_forms(table: AngularTable, N: int) -> dict[tuple[int, ...], tuple[np.ndarray, np.ndarray]]:
    """E[((w-v).o)^|c| o^c] as sparse (exponents over (v, w), coefficients)."""
    g_sub = {g: MultiPoly.linear_form({w: 1.0, v: -1.0}, VW) for g, v, w in zip(G, V, W)}
    out = {}
    for k in range(N + 1):
        for c in multi_indices(3, k):
            poly = compose_linear(table.relative_average(c), g_sub, VW)
            items = poly.items()
            if items:
                exps = np.array([e for e, _ in items], dtype=np.intp)
                coefs = np.array([x for _, x in items])
            else:
                exps = np.zeros((0, 6), dtype=np.intp)
                coefs = np.zeros(0)
            out[c] = (exps, coefs)
    return out


def collision_projection(kernel: CollisionKernel, basis: HermiteBasis) -> np.ndarray:
    """Kmon[j, a, b]: coefficient of phi_a(v) phi_b(w) in E_o[(v*)^m_j].

    ``m_j`` runs over the monomials ``basis.indices``.  Only pairs with
    ``|a| + |b| <= |m_j|`` can be non-zero.
    """
    kernel = _covering(kernel, basis)
    key = (kernel.name, kernel.moments[: 2 * basis.N + 1].tobytes(), basis.N)
    if key in _PROJECTION_CACHE:
        return _PROJECTION_CACHE[key]
    N = basis.N
    table = AngularTable(kernel.moments, 2 * N)
    forms = _relative_forms(table, N)
    P = hermite_monomial_matrix(N)
    idx = np.array(basis.indices)
    n = basis.size
    out = np.zeros((n, n, n))
    for j, m in enumerate(basis.indices):
        dense = np.zeros((N + 1,) * 6)
        # (v*)^m = sum_{c <= m} C(m, c) v^(m - c) ((w-v).o)^|c| o^c
        for c0 in range(m[0] + 1):
            for c1 in range(m[1] + 1):
                for c2 in range(m[2] + 1):
                    exps, coefs = forms[(c0, c1, c2)]
                    if not coefs.size:
                        continue
                    binom = math.comb(m[0], c0) * math.comb(m[1], c1) * math.comb(m[2], c2)
                    shifted = exps.copy()
                    shifted[:, 0] += m[0] - c0
                    shifted[:, 1] += m[1] - c1
                    shifted[:, 2] += m[2] - c2
                    np.add.at(dense, tuple(shifted.T), binom * coefs)
        herm = dense
        for axis in range(6):
            herm = np.moveaxis(np.tensordot(herm, P, axes=([axis], [0])), -1, axis)
        out[j] = herm[idx[:, 0], idx[:, 1], idx[:, 2]][:, idx[:, 0], idx[:, 1], idx[:, 2]]
    _PROJECTION_CACHE[key] = out
    return out


def parity_zero(basis: HermiteBasis, *entry: int) -> bool:
    """True when some coordinate axis carries an odd total exponent.

    Reflecting that axis in every velocity leaves the collision integrals
    invariant and flips the integrand's sign, so the entry vanishes.
    """
    total = np.zeros(3, dtype=int)
    for i in entry:
        total += np.array(basis.indices[i])
    return bool(np.any(total % 2))


def _parity_mask(basis: HermiteBasis, ndim: int) -> np.ndarray:
    par = np.array(basis.indices) % 2
    if ndim == 2:
        tot = par[:, None, :] + par[None, :, :]
    else:
        tot = par[:, None, None, :] + par[None, :, None, :] + par[None, None, :, :]
    return np.all(tot % 2 == 0, axis=-1)


@dataclass
class LMatrix:
    """Symmetric Galerkin matrix ``matrix[i, j] = (L phi_j, phi_i)``."""

    matrix: np.ndarray = field(repr=False)
    basis: HermiteBasis
    kernel_name: str = ""

    def __matmul__(self, x):
        return self.matrix @ x

    def apply(self, state: StateVector) -> StateVector:
        return StateVector(self.basis, self.matrix @ state.coeffs)

    @property
    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.T)))

    @property
    def invariant_residual(self) -> float:
        vecs = self.basis.projector.vectors
        return float(np.max(np.abs(self.matrix @ vecs.T)))

    @cached_property
    def h0_eigen(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (ascending) and orthonormal eigenvectors of L restricted to H0."""
        Q = self.basis.projector.complement_basis()
        sub = Q.T @ self.matrix @ Q
        sub = 0.5 * (sub + sub.T)
        w, U = np.linalg.eigh(sub)
        return w, Q @ U

    @property
    def top_eigenvalue(self) -> float:
        return float(self.h0_eigen[0][-1])

    def gap_eigenspace(self, tol: float = 1e-8) -> np.ndarray:
        w, U = self.h0_eigen
        return U[:, w >= w[-1] - tol]

    def gap_eigenvector(self, tol: float = 1e-8) -> np.ndarray:
        """A canonical unit vector of the top H0 eigenspace.

        The eigenspace is degenerate; the basis direction with the largest
        projection onto it (lowest index on ties) fixes the choice.
        """
        E = self.gap_eigenspace(tol)
        proj = E @ E.T
        weights = np.round(np.diag(proj), 12)
        i = int(np.argmax(weights))
        v = proj[:, i] / math.sqrt(proj[i, i])
        return v

    def gap_mode_degrees(self, tol: float = 1e-8) -> list[int]:
        E = self.gap_eigenspace(tol)
        mass = np.sum(E * E, axis=1)
        return sorted({int(self.basis.degrees[i]) for i in np.nonzero(mass > 1e-10)[0]})

    def summary(self) -> dict:
        w, _ = self.h0_eigen
        return {
            "kernel": self.kernel_name,
            "N": self.basis.N,
            "dimension": self.basis.size,
            "symmetry_residual": self.symmetry_residual,
            "invariant_residual": self.invariant_residual,
            "top_eigenvalues": [float(x) for x in w[::-1][:10]],
        }

    def to_text(self) -> str:
        lines = [f"# L matrix, kernel={self.kernel_name}, N={self.basis.N}, size={self.basis.size}"]
        for i in range(self.basis.size):
            for j in range(self.basis.size):
                if self.matrix[i, j] != 0.0:
                    lines.append(f"{i} {j} {self.matrix[i, j]:.17g}")
        return "\n".join(lines) + "\n"


@dataclass
class RTensor:
    """``T[a, b, c] = (R[phi_a, phi_b], phi_c)``, symmetrised in (a, b)."""

    T: np.ndarray = field(repr=False)
    basis: HermiteBasis
    kernel_name: str = ""
    gain_asymmetry: float = 0.0

    def apply(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return np.einsum("abc,a,b->c", self.T, x, y, optimize=True)

    def quadratic(self, x: np.ndarray) -> np.ndarray:
        return self.apply(x, x)

    def form(self, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> float:
        return float(self.apply(x, y) @ z)

    @property
    def symmetry_residual(self) -> float:
        return float(np.max(np.abs(self.T - self.T.transpose(1, 0, 2))))

    def summary(self) -> dict:
        return {
            "kernel": self.kernel_name,
            "N": self.basis.N,
            "shape": list(self.T.shape),
            "symmetry_residual": self.symmetry_residual,
            "gain_asymmetry_before_symmetrization": self.gain_asymmetry,
            "max_abs_entry": float(np.max(np.abs(self.T))),
        }

    def to_text(self) -> str:
        lines = [f"# R tensor, kernel={self.kernel_name}, N={self.basis.N}, size={self.basis.size}"]
        nz = np.argwhere(self.T != 0.0)
        for a, b, c in nz:
            lines.append(f"{a} {b} {c} {self.T[a, b, c]:.17g}")
        return "\n".join(lines) + "\n"


def assemble(kernel: CollisionKernel, basis: HermiteBasis) -> tuple[LMatrix, RTensor]:
    Kmon = collision_projection(kernel, basis)
    A = basis.monomial_matrix
    n = basis.size
    # K phi_c expanded in phi_a(v) phi_b(w)
    K = np.einsum("cj,jab->abc", A, Kmon, optimize=True)

    gain_v = K[:, 0, :]   # [b, a] = E[phi_b(v) phi_a(v*)]
    gain_w = K[0, :, :]   # [b, a] = E[phi_b(v) phi_a(w*)]
    L = gain_v + gain_w - np.eye(n)
    L[0, 0] -= 1.0
    mask2 = _parity_mask(basis, 2)
    L = np.where(mask2, 0.5 * (L + L.T), 0.0)

    gain = K
    asym = float(np.max(np.abs(gain - gain.transpose(1, 0, 2))))
    T = gain.copy()
    T[:, 0, :] -= np.eye(n)  # loss term (phi_a, phi_c)(phi_b, 1)
    T = 0.5 * (T + T.transpose(1, 0, 2))
    T = np.where(_parity_mask(basis, 3), T, 0.0)
    log.debug("assembled N=%d kernel=%s gain asymmetry %.3e", basis.N, kernel.name, asym)
    return LMatrix(L, basis, kernel.name), RTensor(T, basis, kernel.name, asym)


def assemble_L(kernel: CollisionKernel, basis: HermiteBasis) -> LMatrix:
    return assemble(kernel, basis)[0]


def assemble_R(kernel: CollisionKernel, basis: HermiteBasis) -> RTensor:
    return assemble(kernel, basis)[1]


def apply_R(T: RTensor, x: StateVector, y: StateVector) -> StateVector:
    if x.basis != T.basis or y.basis != T.basis:
        raise ValueError("dimension mismatch between states and tensor")
    return StateVector(T.basis, T.apply(x.coeffs, y.coeffs))


# ---------------------------------------------------------------------------
# reference pipeline for single entries

XI = ("x1", "x2", "x3")
ETA = ("e1", "e2", "e3")
OM = ("o1", "o2", "o3")
NHAT = ("n1", "n2", "n3")


def _collision_forms() -> tuple[dict, dict]:
    vars9 = V + W + OM
    v = [MultiPoly.variable(x, vars9) for x in V]
    w = [MultiPoly.variable(x, vars9) for x in W]
    o = [MultiPoly.variable(x, vars9) for x in OM]
    s = sum(((w[i] - v[i]) * o[i] for i in range(3)), MultiPoly(vars9))
    vstar = {V[i]: v[i] + s * o[i] for i in range(3)}
    wstar = {V[i]: w[i] - s * o[i] for i in range(3)}
    return vstar, wstar


def reference_entry(kernel: CollisionKernel, basis: HermiteBasis, a: int, b: int, c: int | None = None) -> float:
    """One L entry ``(L phi_a, phi_b)`` or R entry ``(R[phi_a, phi_b], phi_c)``.

    R entries are symmetrised in (a, b), matching :class:`RTensor`.
    """
    if c is None or a == b:
        return _reference_raw(kernel, basis, a, b, c)
    return 0.5 * (_reference_raw(kernel, basis, a, b, c) + _reference_raw(kernel, basis, b, a, c))


def _reference_raw(kernel: CollisionKernel, basis: HermiteBasis, a: int, b: int, c: int | None) -> float:
    """Unsymmetrised entry.

    Pipeline: compose with the collision map; change variables to
    ``xi = (v + w)/sqrt 2``, ``eta = (v - w)/sqrt 2``; integrate out ``xi``;
    average ``o`` against ``b(eta_hat . o)``; finish with sphere averages
    times radial Gaussian moments.
    """
    vars9 = V + W + OM
    vstar, wstar = _collision_forms()
    pa = basis.poly(a)
    pb = basis.poly(b)

    def lift(p: MultiPoly, names) -> MultiPoly:
        return compose_linear(p, {V[i]: MultiPoly.variable(names[i], vars9) for i in range(3)}, vars9)

    if c is None:
        integrand = lift(pb, V) * (compose_linear(pa, vstar, vars9) + compose_linear(pa, wstar, vars9))
        loss = float(a == b) + float(a == 0 and b == 0)
    else:
        pc = basis.poly(c)
        integrand = lift(pc, V) * compose_linear(pa, vstar, vars9) * compose_linear(pb, wstar, vars9)
        loss = float(a == c and b == 0)

    vars_xe = XI + ETA + OM
    r = 1.0 / math.sqrt(2.0)
    sub = {}
    for i in range(3):
        sub[V[i]] = MultiPoly.linear_form({XI[i]: r, ETA[i]: r}, vars_xe)
        sub[W[i]] = MultiPoly.linear_form({XI[i]: r, ETA[i]: -r}, vars_xe)
        sub[OM[i]] = MultiPoly.variable(OM[i], vars_xe)
    p = compose_linear(integrand, sub, vars_xe)
    p = gaussian_integrate(p, XI)
    # b(u.o) with u = (w - v)/|w - v| = -eta_hat; b is even
    k_max = p.degree_in(OM)
    if kernel.m_max < k_max:
        kernel = kernel.with_moments(k_max)
    table = AngularTable(kernel.moments, k_max, uhat_vars=NHAT)
    p = angular_average(p, table, OM)
    total = 0.0
    for k, coef in p.items():
        e, nh = k[:3], k[3:]
        total += coef * sphere_average(tuple(x + y for x, y in zip(e, nh))) * radial_moment(sum(e))
    return total - loss


# ---------------------------------------------------------------------------
# Monte-Carlo oracle


ROUNDOFF_FLOOR = 1e-12


@dataclass(frozen=True)
class OracleEstimate:
    estimate: float
    std_error: float
    n_samples: int

    def z_score(self, exact: float, floor: float = ROUNDOFF_FLOOR) -> float:
        """Deviation in standard errors.

        Integrands that vanish identically (e.g. against an invariant) have
        zero sample variance; the error is then floored at ``floor`` so
        rounding noise in the exact value does not count as a deviation.
        """
        return abs(self.estimate - exact) / max(self.std_error, floor)


class _PolarSampler:
    """Inverse-CDF sampler for t in (-1, 1) with density b(t)/2."""

    def __init__(self, kernel: CollisionKernel, n_grid: int = 200001):
        t = np.linspace(0.0, 1.0, n_grid)
        dens = np.asarray(kernel(t), dtype=float)
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(t))])
        if cdf[-1] <= 0:
            raise KernelError("kernel has no mass on (0, 1)")
        self.t = t
        self.cdf = cdf / cdf[-1]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        u = rng.random(n)
        t = np.interp(u, self.cdf, self.t)
        sign = np.where(rng.random(n) < 0.5, -1.0, 1.0)
        return sign * t


def _sample_omega(rng, u_hat: np.ndarray, sampler: _PolarSampler) -> np.ndarray:
    n = u_hat.shape[0]
    t = sampler.sample(rng, n)
    phi = rng.uniform(0.0, 2.0 * math.pi, n)
    # orthonormal frame around u_hat
    helper = np.where(np.abs(u_hat[:, :1]) < 0.9, np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
    e1 = np.cross(u_hat, helper)
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(u_hat, e1)
    s = np.sqrt(np.clip(1.0 - t * t, 0.0, None))
    return t[:, None] * u_hat + s[:, None] * (np.cos(phi)[:, None] * e1 + np.sin(phi)[:, None] * e2)


def mc_oracle(kernel: CollisionKernel, basis: HermiteBasis, entry: tuple[int, ...],
              n_samples: int = 10**6, seed: int = 0, chunk: int = 250_000) -> OracleEstimate:
    """Monte-Carlo estimate of an L entry (a, b) or an R entry (a, b, c).

    Velocities are drawn from M x M and the direction o from the kernel's
    polar density around (w - v)/|w - v|, so the sample mean of the
    collision bracket is unbiased.  The stream is seeded by (seed, entry).
    """
    if n_samples < 10**4:
        raise ValueError("need at least 1e4 samples")
    if len(entry) not in (2, 3):
        raise ValueError("entry must be (a, b) or (a, b, c)")
    if parity_zero(basis, *entry):
        return OracleEstimate(0.0, 0.0, n_samples)
    rng = np.random.default_rng([seed, *entry])
    sampler = _PolarSampler(kernel)
    s1 = 0.0
    s2 = 0.0
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        v = rng.standard_normal((m, 3))
        w = rng.standard_normal((m, 3))
        g = w - v
        u_hat = g / np.linalg.norm(g, axis=1, keepdims=True)
        om = _sample_omega(rng, u_hat, sampler)
        proj = np.sum(g * om, axis=1, keepdims=True)
        vs = v + proj * om
        ws = w - proj * om
        ev = basis.evaluate_one
        if len(entry) == 2:
            a, b = entry
            vals = ev(v, b) * (ev(vs, a) + ev(ws, a) - ev(v, a) - ev(w, a))
        else:
            a, b, c = entry
            # symmetrised in (a, b) to match the stored tensor
            gain = ev(vs, a) * ev(ws, b) + ev(vs, b) * ev(ws, a)
            loss = ev(v, a) * ev(w, b) + ev(v, b) * ev(w, a)
            vals = 0.5 * ev(v, c) * (gain - loss)
        s1 += float(np.sum(vals))
        s2 += float(np.sum(vals * vals))
        done += m
    mean = s1 / n_samples
    var = max(s2 / n_samples - mean * mean, 0.0)
    return OracleEstimate(mean, math.sqrt(var / n_samples), n_samples)


# ---------------------------------------------------------------------------
# verification of the operator inequalities


def _random_h0(basis: HermiteBasis, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal(basis.size)
    return project_H0(StateVector(basis, x)).coeffs


def verify_spectral_inequality(L: LMatrix, gap: float, trials: int = 200, seed: int = 0) -> dict:
    """Largest Rayleigh quotient over random H0 states, compared with the gap."""
    rng = np.random.default_rng(seed)
    quotients = []
    for _ in range(trials):
        x = _random_h0(L.basis, rng)
        quotients.append(float(x @ L.matrix @ x) / float(x @ x))
    e = L.gap_eigenvector()
    eq = float(e @ L.matrix @ e) / float(e @ e)
    worst = max(quotients)
    return {
        "trials": trials,
        "gap": gap,
        "max_quotient": worst,
        "margin": gap - worst,
        "gap_eigvec_quotient": eq,
        "equality_residual": abs(eq - gap),
        "pass": bool(worst - gap <= 1e-9),
    }


def verify_trilinear_bound(T: RTensor, trials: int = 500, seed: int = 0) -> dict:
    """max |(R[x, y], z)| / (|x||y||z|) and max |R[x, y]| / (|x||y|) over random draws."""
    rng = np.random.default_rng(seed)
    n = T.basis.size
    tri = 0.0
    bil = 0.0
    for _ in range(trials):
        x, y, z = (rng.standard_normal(n) for _ in range(3))
        r = T.apply(x, y)
        nx, ny = np.linalg.norm(x), np.linalg.norm(y)
        tri = max(tri, abs(float(r @ z)) / (nx * ny * np.linalg.norm(z)))
        bil = max(bil, float(np.linalg.norm(r)) / (nx * ny))
    return {
        "trials": trials,
        "max_trilinear_ratio": tri,
        "max_bilinear_ratio": bil,
        "pass": bool(tri <= 2.0 * (1 + 1e-9) and bil <= 2.0 * (1 + 1e-9)),
    }


def conservation_residuals(L: LMatrix, T: RTensor, trials: int = 100, seed: int = 0) -> dict:
    """max |(L x, psi)| and |(R[x, y], psi)| over random states and all invariants psi."""
    rng = np.random.default_rng(seed)
    vecs = L.basis.projector.vectors
    lin = 0.0
    quad = 0.0
    for _ in range(trials):
        x, y = rng.standard_normal(L.basis.size), rng.standard_normal(L.basis.size)
        lin = max(lin, float(np.max(np.abs(vecs @ (L.matrix @ x)))))
        quad = max(quad, float(np.max(np.abs(vecs @ T.apply(x, y)))))
    return {"linear": lin, "quadratic": quad, "pass": bool(lin <= 1e-10 and quad <= 1e-10)}


def summary_json(L: LMatrix, T: RTensor) -> str:
    return dumps({"L": L.summary(), "R": T.summary()})
