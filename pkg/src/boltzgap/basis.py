"""Orthonormal Hermite basis of H = L^2(R^3, M(v) dv) and states in it.

A state with coefficients ``c`` represents ``h(v) = sum_a c_a phi_a(v)``,
i.e. the density ``f = M (1 + h)``.  The basis functions are tensor
products of probabilists' Hermite polynomials normalised to unit norm
under the standard Gaussian, so Parseval gives ``||h||^2 = sum c_a^2``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np
from numpy.polynomial import hermite_e

from .polyalg import MultiPoly, gaussian_integrate, hermite_monomial_matrix, multi_indices

__all__ = [
    "BasisError",
    "HermiteBasis",
    "StateVector",
    "InvariantProjector",
    "build_basis",
    "project_H0",
    "hermite_1d",
    "product_gaussian_coefficients_1d",
    "product_gaussian_state",
    "product_gaussian_truncation",
    "ChiSquare",
    "chi_square_product_gaussian",
    "admissible_sigma_interval",
    "l1_upper_bound",
    "L1Estimate",
    "l1_estimate",
]

MAX_DEGREE = 12
V = ("v1", "v2", "v3")


class BasisError(ValueError):
    pass


def hermite_1d(n: int) -> np.ndarray:
    """Monomial coefficients (increasing powers) of He_n / sqrt(n!)."""
    unit = np.zeros(n + 1)
    unit[n] = 1.0
    return hermite_e.herme2poly(unit) / math.sqrt(math.factorial(n))


class HermiteBasis:
    """Tensor Hermite basis phi_a(v) = prod_i h_{a_i}(v_i) for |a| <= N.

    Indices are graded by total degree, then ordered with the first
    component decreasing; index 0 is the constant function.
    """

    def __init__(self, N: int, max_degree: int = MAX_DEGREE):
        if N < 2:
            raise BasisError("basis degree must be at least 2")
        if N > max_degree:
            raise BasisError("basis too large for exact assembly budget")
        self.N = int(N)
        self.indices: list[tuple[int, int, int]] = [
            a for d in range(N + 1) for a in multi_indices(3, d)]  # type: ignore[misc]
        self.position = {a: i for i, a in enumerate(self.indices)}
        self._validate_1d()

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def size(self) -> int:
        return len(self.indices)

    def __repr__(self) -> str:
        return f"HermiteBasis(N={self.N}, size={self.size})"

    def __eq__(self, other) -> bool:
        return isinstance(other, HermiteBasis) and other.N == self.N

    def __hash__(self) -> int:
        return hash(("HermiteBasis", self.N))

    def index(self, alpha: Sequence[int]) -> int:
        return self.position[tuple(alpha)]

    def degree_of(self, i: int) -> int:
        return sum(self.indices[i])

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([sum(a) for a in self.indices])

    def _validate_1d(self) -> None:
        # tensor structure: 1-D orthonormality implies orthonormality in 3-D
        x = ("x",)
        polys = [MultiPoly(x, {(j,): c for j, c in enumerate(hermite_1d(n))}) for n in range(self.N + 1)]
        for i in range(self.N + 1):
            for j in range(i + 1):
                val = gaussian_integrate(polys[i] * polys[j], x).terms.get((), 0.0)
                if abs(val - (i == j)) > 1e-12:
                    raise BasisError(f"1-D Hermite orthonormality failed at ({i}, {j}): {val}")

    @cached_property
    def monomial_matrix(self) -> np.ndarray:
        """A[i, j]: coefficient of the monomial v**indices[j] in phi_i."""
        h = [hermite_1d(n) for n in range(self.N + 1)]
        A = np.zeros((self.size, self.size))
        for i, a in enumerate(self.indices):
            for j, m in enumerate(self.indices):
                if all(mm <= aa and (aa - mm) % 2 == 0 for aa, mm in zip(a, m)):
                    A[i, j] = h[a[0]][m[0]] * h[a[1]][m[1]] * h[a[2]][m[2]]
        return A

    @cached_property
    def monomial_to_hermite(self) -> np.ndarray:
        """B[j, i]: coefficient of phi_i in the monomial v**indices[j]."""
        P = hermite_monomial_matrix(self.N)
        B = np.zeros((self.size, self.size))
        for j, m in enumerate(self.indices):
            for i, a in enumerate(self.indices):
                B[j, i] = P[m[0], a[0]] * P[m[1], a[1]] * P[m[2], a[2]]
        return B

    def poly(self, i: int, vars: Sequence[str] = V) -> MultiPoly:
        """phi_i as a MultiPoly in ``vars``."""
        row = self.monomial_matrix[i]
        return MultiPoly(vars, {self.indices[j]: c for j, c in enumerate(row) if c != 0.0})

    def coefficients_of(self, p: MultiPoly) -> np.ndarray:
        """Hermite coefficients of a polynomial in v of degree <= N."""
        p = p.with_vars(V)
        mono = np.zeros(self.size)
        for k, c in p.items():
            if sum(k) > self.N:
                raise BasisError(f"polynomial degree {sum(k)} exceeds basis degree {self.N}")
            mono[self.position[k]] += c
        return mono @ self.monomial_to_hermite

    def hermite_values_1d(self, x: np.ndarray) -> np.ndarray:
        """Matrix H[j, n] = h_n(x_j) for n <= N via the three-term recursion."""
        x = np.asarray(x, dtype=float)
        H = np.zeros((x.size, self.N + 1))
        H[:, 0] = 1.0
        if self.N >= 1:
            H[:, 1] = x
        for n in range(1, self.N):
            H[:, n + 1] = (x * H[:, n] - math.sqrt(n) * H[:, n - 1]) / math.sqrt(n + 1)
        return H

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Values phi_i(v) for an (n, 3) array of velocities, shape (n, size)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        H = [self.hermite_values_1d(pts[:, d]) for d in range(3)]
        idx = np.array(self.indices)
        return H[0][:, idx[:, 0]] * H[1][:, idx[:, 1]] * H[2][:, idx[:, 2]]

    def evaluate_one(self, points: np.ndarray, i: int) -> np.ndarray:
        """Values of the single basis function phi_i at an (n, 3) array of points."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.ones(pts.shape[0])
        for d, k in enumerate(self.indices[i]):
            if k == 0:
                continue
            x = pts[:, d]
            prev, cur = np.ones_like(x), x
            for n in range(1, k):
                prev, cur = cur, (x * cur - math.sqrt(n) * prev) / math.sqrt(n + 1)
            out *= cur
        return out

    def coefficient_tensor(self, coeffs: np.ndarray) -> np.ndarray:
        C = np.zeros((self.N + 1,) * 3)
        idx = np.array(self.indices)
        C[idx[:, 0], idx[:, 1], idx[:, 2]] = coeffs
        return C

    def axis_parity(self, i: int) -> tuple[int, int, int]:
        return tuple(a % 2 for a in self.indices[i])  # type: ignore[return-value]

    @cached_property
    def projector(self) -> "InvariantProjector":
        return InvariantProjector(self)


def build_basis(N: int, max_degree: int = MAX_DEGREE) -> HermiteBasis:
    return HermiteBasis(N, max_degree)


@dataclass
class StateVector:
    """Coefficients of a perturbation h over a Hermite basis."""

    basis: HermiteBasis
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float).reshape(-1)
        if self.coeffs.size != self.basis.size:
            raise BasisError(f"expected {self.basis.size} coefficients, got {self.coeffs.size}")

    @classmethod
    def zeros(cls, basis: HermiteBasis) -> "StateVector":
        return cls(basis, np.zeros(basis.size))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    @property
    def theta(self) -> float:
        return float(self.coeffs @ self.coeffs)

    def invariant_components(self) -> np.ndarray:
        return self.basis.projector.components(self.coeffs)

    def invariant_residual(self) -> float:
        return float(np.max(np.abs(self.invariant_components())))

    def in_H0(self, tol: float = 1e-12) -> bool:
        return self.invariant_residual() <= tol

    def scaled_to(self, radius: float) -> "StateVector":
        n = self.norm
        if n == 0.0:
            raise BasisError("cannot rescale the zero state")
        return StateVector(self.basis, self.coeffs * (radius / n))

    def embed(self, basis: HermiteBasis) -> "StateVector":
        """Same function expressed over another basis (truncating if smaller)."""
        out = np.zeros(basis.size)
        for i, a in enumerate(self.basis.indices):
            j = basis.position.get(a)
            if j is not None:
                out[j] = self.coeffs[i]
            elif self.coeffs[i] != 0.0:
                raise BasisError(f"component {a} does not fit into degree {basis.N}")
        return StateVector(basis, out)

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return self.basis.evaluate(points) @ self.coeffs

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha1", "alpha2", "alpha3", "coefficient"])
        for a, c in zip(self.basis.indices, self.coeffs):
            w.writerow([a[0], a[1], a[2], format(c, ".17g")])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, basis: HermiteBasis | None = None) -> "StateVector":
        rows = list(csv.DictReader(io.StringIO(text)))
        entries = {(int(r["alpha1"]), int(r["alpha2"]), int(r["alpha3"])): float(r["coefficient"]) for r in rows}
        if basis is None:
            basis = HermiteBasis(max(sum(a) for a in entries), max_degree=max(MAX_DEGREE, max(sum(a) for a in entries)))
        coeffs = np.zeros(basis.size)
        for a, c in entries.items():
            coeffs[basis.index(a)] = c
        return cls(basis, coeffs)


class InvariantProjector:
    """Orthogonal projector onto span{1, v1, v2, v3, |v|^2}."""

    def __init__(self, basis: HermiteBasis):
        x = [MultiPoly.variable(v, V) for v in V]
        one = MultiPoly.constant(1.0, V)
        invariants = [one, x[0], x[1], x[2], x[0] * x[0] + x[1] * x[1] + x[2] * x[2]]
        raw = np.array([basis.coefficients_of(p) for p in invariants])
        q, _ = np.linalg.qr(raw.T)
        # fix signs for reproducibility
        signs = np.sign(np.sum(q * raw.T, axis=0))
        self.vectors = (q * signs).T
        self.raw = raw

    def components(self, coeffs: np.ndarray) -> np.ndarray:
        return self.vectors @ coeffs

    def matrix(self) -> np.ndarray:
        return self.vectors.T @ self.vectors

    def complement_basis(self) -> np.ndarray:
        """Orthonormal columns spanning H0 within the truncated space."""
        n = self.vectors.shape[1]
        full, _ = np.linalg.qr(np.hstack([self.vectors.T, np.eye(n)]))
        return full[:, 5:n]


def project_H0(state: StateVector) -> StateVector:
    P = state.basis.projector
    c = state.coeffs - P.vectors.T @ (P.vectors @ state.coeffs)
    return StateVector(state.basis, c)


# ---------------------------------------------------------------------------
# product-Gaussian initial data


def _check_sigma2(sigma2: Sequence[float], normalized: bool = True) -> np.ndarray:
    s = np.asarray(sigma2, dtype=float)
    if s.shape != (3,):
        raise BasisError("need three variances")
    if np.any(s <= 0):
        raise BasisError("variances must be positive")
    if np.any(s >= 2):
        raise BasisError("chi-square divergence infinite")
    if normalized and abs(s.sum() - 3.0) > 1e-12:
        raise BasisError("violates energy normalization: variances must sum to 3")
    return s


def product_gaussian_coefficients_1d(sigma2: float, n_max: int) -> np.ndarray:
    """c_n = E[h_n(X)] for X ~ N(0, sigma2); odd coefficients vanish.

    From the generating function of He_n, E[He_2j(X)] = (2j)!/(j! 2^j) (sigma2 - 1)^j,
    which gives the ratio c_{2j+2}/c_{2j} = sqrt((2j+2)(2j+1)) / (2(j+1)) * (sigma2 - 1).
    """
    c = np.zeros(n_max + 1)
    c[0] = 1.0
    for j in range(0, (n_max - 2) // 2 + 1):
        c[2 * j + 2] = c[2 * j] * math.sqrt((2 * j + 2) * (2 * j + 1)) / (2 * (j + 1)) * (sigma2 - 1.0)
    return c


def product_gaussian_state(sigma2: Sequence[float], basis: HermiteBasis) -> StateVector:
    """Truncated coefficients of h0 = f0/M - 1 for f0 = prod_i N(0, sigma_i^2)."""
    s = _check_sigma2(sigma2)
    one_d = [product_gaussian_coefficients_1d(si, basis.N) for si in s]
    c = np.array([one_d[0][a[0]] * one_d[1][a[1]] * one_d[2][a[2]] for a in basis.indices])
    c[0] -= 1.0
    return StateVector(basis, c)


def product_gaussian_truncation(sigma2: Sequence[float], basis: HermiteBasis) -> float:
    """Exact squared norm minus the squared norm captured by the basis."""
    state = product_gaussian_state(sigma2, basis)
    return chi_square_product_gaussian(sigma2).exact - state.theta


@dataclass(frozen=True)
class ChiSquare:
    exact: float
    telescoped_bound: float

    @property
    def distance(self) -> float:
        """||h0||, the square root of the chi-square divergence."""
        return math.sqrt(self.exact)


def chi_square_product_gaussian(sigma2: Sequence[float]) -> ChiSquare:
    """||f0/M - 1||^2 for a product Gaussian, and the telescoped upper bound.

    With a_i = 1 / (sigma_i sqrt(2 - sigma_i^2)) the exact value is
    a1 a2 a3 - 1; the telescoped bound is
    3 a2 a3 (a1 - 1) + 3 a3 (a2 - 1) + 3 (a3 - 1).
    """
    s = _check_sigma2(sigma2, normalized=False)
    a = 1.0 / np.sqrt(s * (2.0 - s))
    exact = float(a[0] * a[1] * a[2] - 1.0)
    bound = float(3 * a[1] * a[2] * (a[0] - 1) + 3 * a[2] * (a[1] - 1) + 3 * (a[2] - 1))
    return ChiSquare(exact, bound)


def admissible_sigma_interval(delta: float) -> tuple[float, float]:
    if delta <= 0:
        raise BasisError("delta must be positive")
    r = delta * math.sqrt(42.0 + delta**2) / (21.0 + delta**2)
    return 1.0 - r, 1.0 + r


# ---------------------------------------------------------------------------
# L1 distance


def l1_upper_bound(state: StateVector) -> float:
    """||h||, which bounds int |f - M| dv by Jensen's inequality."""
    return state.norm


@dataclass(frozen=True)
class L1Estimate:
    value: float
    delta: float
    panels: int
    converged: bool

    @property
    def upper(self) -> float:
        """Value plus the refinement difference, a conservative estimate."""
        return self.value + self.delta


L1_HALF_WIDTH = 9.0  # Gaussian mass beyond |v_i| = 9 is below 1e-18


def _composite_l1(state: StateVector, panels: int, order: int = 4) -> float:
    g, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-L1_HALF_WIDTH, L1_HALF_WIDTH, panels + 1)
    h = edges[1] - edges[0]
    x = (edges[:-1, None] + h * (g[None, :] + 1) / 2).ravel()
    wx = np.tile(w * h / 2, panels) * np.exp(-x * x / 2) / math.sqrt(2.0 * math.pi)
    H = state.basis.hermite_values_1d(x)
    C = state.basis.coefficient_tensor(state.coeffs)
    vals = np.einsum("abc,ia,jb,kc->ijk", C, H, H, H, optimize=True)
    return float(np.einsum("ijk,i,j,k->", np.abs(vals), wx, wx, wx, optimize=True))


def l1_estimate(state: StateVector, panels: int = 32, tol: float = 1e-3) -> L1Estimate:
    """Estimate int |h| M dv = ||f - M||_1.

    |h| has kinks on the zero set of h, which spoils Gauss-Hermite rules,
    so a composite 4-point Gauss-Legendre rule on [-9, 9]^3 is used at
    ``panels`` and ``panels // 2`` panels per axis.  ``delta`` is the
    difference between the two; ``converged`` means ``delta <= tol * value``.
    """
    if panels < 4 or panels % 2:
        raise BasisError("panels must be an even number >= 4")
    if not np.any(state.coeffs):
        return L1Estimate(0.0, 0.0, panels, True)
    fine = _composite_l1(state, panels)
    coarse = _composite_l1(state, panels // 2)
    delta = abs(fine - coarse)
    return L1Estimate(fine, delta, panels, delta <= tol * fine)
