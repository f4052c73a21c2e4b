"""Exact integration engine for the collision integrals.

Polynomials are stored sparsely as ``{exponent tuple: coefficient}`` over a
named, ordered variable set.  Everything the Galerkin assembly needs
(composition with the collision map, Gaussian moments, sphere averages,
radial moments and kernel-weighted angular averages) is closed form here.
"""

from __future__ import annotations

import math
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "MultiPoly",
    "AngularTable",
    "compose_linear",
    "reduce_omega_norm",
    "gaussian_integrate",
    "sphere_average",
    "radial_moment",
    "angular_average",
    "double_factorial",
    "multi_indices",
]

OMEGA = ("o1", "o2", "o3")


def double_factorial(n: int) -> int:
    """n!! with the conventions (-1)!! = 0!! = 1."""
    if n <= 0:
        return 1
    return math.prod(range(n, 0, -2))


def multi_indices(dim: int, degree: int) -> list[tuple[int, ...]]:
    """All exponent tuples of length ``dim`` with total degree exactly ``degree``."""
    if dim == 1:
        return [(degree,)]
    out = []
    for first in range(degree, -1, -1):
        for rest in multi_indices(dim - 1, degree - first):
            out.append((first,) + rest)
    return out


def _add_exp(a: tuple[int, ...], b: tuple[int, ...]) -> tuple[int, ...]:
    return tuple(x + y for x, y in zip(a, b))


class MultiPoly:
    """Sparse real polynomial over an ordered tuple of variable names.

    Zero coefficients are never stored.  Iteration and serialization use
    sorted exponent keys so that results do not depend on insertion order.

    >>> x = MultiPoly.variable("x", ("x", "y"))
    >>> y = MultiPoly.variable("y", ("x", "y"))
    >>> ((x + y) ** 2).terms[(1, 1)]
    2.0
    """

    __slots__ = ("vars", "terms")

    def __init__(self, vars: Sequence[str], terms: Mapping[tuple[int, ...], float] | None = None):
        self.vars = tuple(vars)
        clean: dict[tuple[int, ...], float] = {}
        if terms:
            n = len(self.vars)
            for exp, coef in terms.items():
                if len(exp) != n:
                    raise ValueError(f"exponent {exp} does not match variables {self.vars}")
                if coef != 0.0:
                    clean[tuple(int(e) for e in exp)] = float(coef)
        self.terms = clean

    # construction -----------------------------------------------------------
    @classmethod
    def constant(cls, value: float, vars: Sequence[str]) -> "MultiPoly":
        return cls(vars, {(0,) * len(vars): value})

    @classmethod
    def variable(cls, name: str, vars: Sequence[str]) -> "MultiPoly":
        vars = tuple(vars)
        exp = tuple(1 if v == name else 0 for v in vars)
        if sum(exp) != 1:
            raise ValueError(f"unknown variable {name!r}")
        return cls(vars, {exp: 1.0})

    @classmethod
    def monomial(cls, exp: Sequence[int], vars: Sequence[str], coef: float = 1.0) -> "MultiPoly":
        return cls(vars, {tuple(exp): coef})

    @classmethod
    def linear_form(cls, coefs: Mapping[str, float], vars: Sequence[str]) -> "MultiPoly":
        vars = tuple(vars)
        terms = {}
        for name, c in coefs.items():
            exp = tuple(1 if v == name else 0 for v in vars)
            terms[exp] = terms.get(exp, 0.0) + c
        return cls(vars, terms)

    @classmethod
    def _raw(cls, vars: tuple[str, ...], terms: dict) -> "MultiPoly":
        p = cls.__new__(cls)
        p.vars = vars
        p.terms = {k: v for k, v in terms.items() if v != 0.0}
        return p

    # basic properties -------------------------------------------------------
    @property
    def degree(self) -> int:
        if not self.terms:
            return 0
        return max(sum(e) for e in self.terms)

    def degree_in(self, names: Iterable[str]) -> int:
        idx = [self.vars.index(n) for n in names]
        if not self.terms:
            return 0
        return max(sum(e[i] for i in idx) for e in self.terms)

    def is_zero(self) -> bool:
        return not self.terms

    def items(self):
        return sorted(self.terms.items())

    def __len__(self) -> int:
        return len(self.terms)

    def __repr__(self) -> str:
        return f"MultiPoly({self.vars}, {len(self.terms)} terms, degree {self.degree})"

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MultiPoly):
            return NotImplemented
        return self.vars == other.vars and self.terms == other.terms

    def allclose(self, other: "MultiPoly", atol: float = 1e-12) -> bool:
        other = other.with_vars(self.vars)
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.terms.get(k, 0.0) - other.terms.get(k, 0.0)) <= atol for k in keys)

    # arithmetic -------------------------------------------------------------
    def _coerce(self, other) -> "MultiPoly":
        if isinstance(other, MultiPoly):
            if other.vars != self.vars:
                raise ValueError(f"variable sets differ: {self.vars} vs {other.vars}")
            return other
        return MultiPoly.constant(float(other), self.vars)

    def __add__(self, other) -> "MultiPoly":
        other = self._coerce(other)
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, 0.0) + v
        return MultiPoly._raw(self.vars, out)

    __radd__ = __add__

    def __neg__(self) -> "MultiPoly":
        return MultiPoly._raw(self.vars, {k: -v for k, v in self.terms.items()})

    def __sub__(self, other) -> "MultiPoly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "MultiPoly":
        return (-self) + other

    def __mul__(self, other) -> "MultiPoly":
        if not isinstance(other, MultiPoly):
            c = float(other)
            return MultiPoly._raw(self.vars, {k: v * c for k, v in self.terms.items()})
        other = self._coerce(other)
        out: dict[tuple[int, ...], float] = {}
        for ka, va in self.items():
            for kb, vb in other.items():
                k = _add_exp(ka, kb)
                out[k] = out.get(k, 0.0) + va * vb
        return MultiPoly._raw(self.vars, out)

    __rmul__ = __mul__

    def __truediv__(self, c: float) -> "MultiPoly":
        return self * (1.0 / c)

    def __pow__(self, n: int) -> "MultiPoly":
        if n < 0:
            raise ValueError("negative power")
        result = MultiPoly.constant(1.0, self.vars)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def shift(self, exp: Sequence[int], coef: float = 1.0) -> "MultiPoly":
        """Multiply by the monomial ``coef * x**exp``."""
        exp = tuple(exp)
        return MultiPoly._raw(self.vars, {_add_exp(k, exp): v * coef for k, v in self.terms.items()})

    # variable bookkeeping ---------------------------------------------------
    def with_vars(self, vars: Sequence[str]) -> "MultiPoly":
        """Re-express over a variable set that contains every used variable."""
        vars = tuple(vars)
        if vars == self.vars:
            return self
        pos = {v: i for i, v in enumerate(vars)}
        out = {}
        for k, c in self.terms.items():
            new = [0] * len(vars)
            for name, e in zip(self.vars, k):
                if e:
                    if name not in pos:
                        raise ValueError(f"variable {name!r} is used but missing from {vars}")
                    new[pos[name]] = e
            out[tuple(new)] = c
        return MultiPoly._raw(vars, out)

    def collect(self, names: Sequence[str]) -> dict[tuple[int, ...], "MultiPoly"]:
        """Group terms by their exponents in ``names``; values are polynomials in the rest."""
        idx = [self.vars.index(n) for n in names]
        rest = [i for i in range(len(self.vars)) if i not in idx]
        rest_vars = tuple(self.vars[i] for i in rest)
        groups: dict[tuple[int, ...], dict] = {}
        for k, c in self.terms.items():
            key = tuple(k[i] for i in idx)
            sub = tuple(k[i] for i in rest)
            groups.setdefault(key, {})[sub] = c
        return {key: MultiPoly._raw(rest_vars, t) for key, t in sorted(groups.items())}

    def evaluate(self, values: Mapping[str, np.ndarray | float]) -> np.ndarray | float:
        arrays = [np.asarray(values[v], dtype=float) for v in self.vars]
        total = 0.0
        for k, c in self.items():
            term = c
            for a, e in zip(arrays, k):
                if e:
                    term = term * a**e
            total = total + term
        return total

    # serialization ----------------------------------------------------------
    def to_text(self) -> str:
        lines = ["# vars: " + " ".join(self.vars)]
        for k, c in self.items():
            lines.append("(" + ", ".join(str(e) for e in k) + "): " + format(c, ".17g"))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MultiPoly":
        vars: tuple[str, ...] = ()
        terms = {}
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            if line.startswith("# vars:"):
                vars = tuple(line[len("# vars:"):].split())
                continue
            key, _, val = line.partition(":")
            exp = tuple(int(e) for e in key.strip().strip("()").split(",") if e.strip())
            terms[exp] = float(val)
        return cls(vars, terms)


# ---------------------------------------------------------------------------
# substitution and integration


def compose_linear(p: MultiPoly, mapping: Mapping[str, MultiPoly], new_vars: Sequence[str] | None = None) -> MultiPoly:
    """Substitute every variable of ``p`` by a polynomial form.

    The forms may live in a larger variable set (e.g. the collision map
    ``v -> v + ((w - v).o) o`` is quadratic jointly in ``(v, w, o)``).
    """
    missing = [v for i, v in enumerate(p.vars) if v not in mapping and p.degree_in([v]) > 0]
    if missing:
        raise ValueError(f"incomplete substitution: no form for {missing}")
    if new_vars is None:
        forms = [mapping[v] for v in p.vars if v in mapping]
        new_vars = forms[0].vars if forms else p.vars
    new_vars = tuple(new_vars)
    forms = {v: mapping[v].with_vars(new_vars) for v in p.vars if v in mapping}
    one = MultiPoly.constant(1.0, new_vars)
    power_cache: dict[tuple[str, int], MultiPoly] = {}

    def power(name: str, e: int) -> MultiPoly:
        key = (name, e)
        if key not in power_cache:
            power_cache[key] = one if e == 0 else power(name, e - 1) * forms[name]
        return power_cache[key]

    out: dict[tuple[int, ...], float] = {}
    for k, c in p.items():
        term = one * c
        for name, e in zip(p.vars, k):
            if e:
                term = term * power(name, e)
        for kk, cc in term.terms.items():
            out[kk] = out.get(kk, 0.0) + cc
    return MultiPoly._raw(new_vars, out)


def reduce_omega_norm(p: MultiPoly, omega: Sequence[str] = OMEGA) -> MultiPoly:
    """Rewrite with ``o3**2 = 1 - o1**2 - o2**2`` until every ``o3`` exponent is below 2."""
    i1, i2, i3 = (p.vars.index(o) for o in omega)
    out: dict[tuple[int, ...], float] = {}
    stack = list(p.items())
    while stack:
        k, c = stack.pop()
        if k[i3] < 2:
            out[k] = out.get(k, 0.0) + c
            continue
        base = list(k)
        base[i3] -= 2
        stack.append((tuple(base), c))
        for idx in (i1, i2):
            nk = list(base)
            nk[idx] += 2
            stack.append((tuple(nk), -c))
    return MultiPoly._raw(p.vars, dict(sorted(out.items())))


def _gaussian_moment(n: int) -> float:
    return 0.0 if n % 2 else float(double_factorial(n - 1))


def gaussian_integrate(p: MultiPoly, names: Sequence[str]) -> MultiPoly:
    """Integrate out ``names`` against independent standard normal weights."""
    idx = [p.vars.index(n) for n in names]
    keep = [i for i in range(len(p.vars)) if i not in idx]
    out: dict[tuple[int, ...], float] = {}
    for k, c in p.items():
        w = 1.0
        for i in idx:
            w *= _gaussian_moment(k[i])
            if w == 0.0:
                break
        if w:
            kk = tuple(k[i] for i in keep)
            out[kk] = out.get(kk, 0.0) + c * w
    return MultiPoly._raw(tuple(p.vars[i] for i in keep), out)


def sphere_average(beta: Sequence[int]) -> float:
    """Average of ``o**beta`` under the uniform probability measure on the unit sphere."""
    b1, b2, b3 = beta
    if min(beta) < 0:
        raise ValueError("negative exponent")
    if b1 % 2 or b2 % 2 or b3 % 2:
        return 0.0
    num = double_factorial(b1 - 1) * double_factorial(b2 - 1) * double_factorial(b3 - 1)
    return num / double_factorial(b1 + b2 + b3 + 1)


def radial_moment(p: int) -> float:
    """E|eta|**p for a standard 3-D Gaussian vector."""
    if p < -2:
        raise ValueError("non-integrable radial power")
    return 2.0 ** (p / 2) * math.gamma((p + 3) / 2) / math.gamma(1.5)


# ---------------------------------------------------------------------------
# kernel-weighted angular averages


def _wallis(m: int) -> float:
    """Average of cos(phi)**m over a full period."""
    if m % 2:
        return 0.0
    return double_factorial(m - 1) / double_factorial(m)


class AngularTable:
    """Kernel-weighted angular averages expressed through kernel moments.

    ``moments[m]`` is ``(1/2) * int_{-1}^{1} b(t) t**m dt``.  Averages are
    taken with respect to ``b(u.o)`` times the uniform probability measure
    on the sphere, in a frame whose pole is the unit vector ``u``: the
    azimuth is integrated with Wallis' formula and the polar variable
    reduces to the moments.  Every entry is therefore linear in the moments.

    Two families of entries are provided:

    * ``omega_average(beta)``: the average of ``o**beta`` as a polynomial in
      the unit vector ``u`` (variables ``uhat_vars``);
    * ``relative_average(c)``: the average of ``(g.o)**|c| o**c`` for a
      non-normalised vector ``g``, which is a homogeneous polynomial of
      degree ``|c|`` in ``g`` (variables ``rel_vars``).
    """

    def __init__(self, moments: Sequence[float], k_max: int,
                 uhat_vars: Sequence[str] = ("n1", "n2", "n3"),
                 rel_vars: Sequence[str] = ("g1", "g2", "g3"), even: bool = True):
        self.even = even
        self.moments = np.asarray(moments, dtype=float)
        self.k_max = int(k_max)
        self.uhat_vars = tuple(uhat_vars)
        self.rel_vars = tuple(rel_vars)
        self._omega_cache: dict[tuple[int, ...], MultiPoly] = {}
        self._rel_cache: dict[tuple[int, ...], MultiPoly] = {}

    def _mu(self, j: int) -> float:
        if j >= len(self.moments):
            raise ValueError(f"angular table too small: moment {j} not available")
        return float(self.moments[j])

    def _polar(self, p: int, j: int) -> float:
        # E_b[t**p (1 - t**2)**j]
        return sum(math.comb(j, l) * (-1) ** l * self._mu(p + 2 * l) for l in range(j + 1))

    def _radial_coeffs(self, n: int, extra: int) -> list[float]:
        """Coefficients c_q with E_b[t**extra (z.o)**n] = sum_q c_q a**(n-2q) |z|**(2q), a = u.z."""
        coeffs = [0.0] * (n // 2 + 1)
        for m in range(0, n + 1, 2):
            base = math.comb(n, m) * _wallis(m) * self._polar(n - m + extra, m // 2)
            for i in range(m // 2 + 1):
                q = m // 2 - i
                coeffs[q] += base * math.comb(m // 2, i) * (-1) ** i
        return coeffs

    @staticmethod
    def _extract(beta: tuple[int, ...], p: int, q: int) -> dict[tuple[int, ...], float]:
        # coefficient of z**beta in (u.z)**p |z|**(2q), as a dict over u-exponents
        out: dict[tuple[int, ...], float] = {}
        for d in multi_indices(3, q):
            e = tuple(b - 2 * dd for b, dd in zip(beta, d))
            if min(e) < 0:
                continue
            c = math.factorial(q) / math.prod(math.factorial(x) for x in d)
            c *= math.factorial(p) / math.prod(math.factorial(x) for x in e)
            out[e] = out.get(e, 0.0) + c
        return out

    def omega_average(self, beta: Sequence[int]) -> MultiPoly:
        beta = tuple(int(b) for b in beta)
        n = sum(beta)
        if n > self.k_max:
            raise ValueError(f"angular table too small: degree {n} > {self.k_max}")
        if beta in self._omega_cache:
            return self._omega_cache[beta]
        if self.even and n % 2:
            self._omega_cache[beta] = MultiPoly(self.uhat_vars)
            return self._omega_cache[beta]
        coeffs = self._radial_coeffs(n, 0)
        scale = math.prod(math.factorial(b) for b in beta) / math.factorial(n)
        terms: dict[tuple[int, ...], float] = {}
        for q, cq in enumerate(coeffs):
            if cq == 0.0:
                continue
            for e, c in self._extract(beta, n - 2 * q, q).items():
                terms[e] = terms.get(e, 0.0) + scale * cq * c
        poly = MultiPoly(self.uhat_vars, terms)
        self._omega_cache[beta] = poly
        return poly

    def relative_average(self, c: Sequence[int]) -> MultiPoly:
        c = tuple(int(x) for x in c)
        k = sum(c)
        if 2 * k > self.k_max:
            raise ValueError(f"angular table too small: degree {2 * k} > {self.k_max}")
        if c in self._rel_cache:
            return self._rel_cache[c]
        coeffs = self._radial_coeffs(k, k)
        scale = math.prod(math.factorial(x) for x in c) / math.factorial(k)
        g = [MultiPoly.variable(v, self.rel_vars) for v in self.rel_vars]
        g2 = g[0] * g[0] + g[1] * g[1] + g[2] * g[2]
        total = MultiPoly(self.rel_vars)
        for q, cq in enumerate(coeffs):
            if cq == 0.0:
                continue
            part = MultiPoly(self.rel_vars, self._extract(c, k - 2 * q, q))
            total = total + part * (g2 ** q) * (scale * cq)
        self._rel_cache[c] = total
        return total


def angular_average(p: MultiPoly, table: AngularTable, omega: Sequence[str] = OMEGA) -> MultiPoly:
    """Replace every ``o``-monomial by its kernel-weighted average.

    The result is a polynomial in the remaining variables plus the unit
    vector variables ``table.uhat_vars``.
    """
    omega = tuple(omega)
    groups = p.collect(omega)
    rest_vars = tuple(v for v in p.vars if v not in omega)
    clash = set(rest_vars) & set(table.uhat_vars)
    if clash:
        raise ValueError(f"variables {sorted(clash)} clash with the unit-vector names")
    out_vars = rest_vars + table.uhat_vars
    out: dict[tuple[int, ...], float] = {}
    for beta, coef_poly in groups.items():
        avg = table.omega_average(beta)
        for ka, ca in coef_poly.items():
            for kb, cb in avg.items():
                k = ka + kb
                out[k] = out.get(k, 0.0) + ca * cb
    return MultiPoly._raw(out_vars, out)


@lru_cache(maxsize=None)
def hermite_monomial_matrix(n_max: int) -> np.ndarray:
    """P[n, k] with x**n = sum_k P[n, k] * He_k(x) / sqrt(k!)."""
    P = np.zeros((n_max + 1, n_max + 1))
    for n in range(n_max + 1):
        for j in range(n // 2 + 1):
            k = n - 2 * j
            P[n, k] = math.factorial(n) / (2**j * math.factorial(j) * math.factorial(k)) * math.sqrt(math.factorial(k))
    return P
