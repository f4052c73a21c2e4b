"""Maxwellian collision kernels b on (-1, 1).

Kernels are carried through assembly by their moment table
``mu_m = (1/2) * int_{-1}^{1} b(t) t**m dt``; pointwise evaluation is only
used for validation and for the Monte-Carlo oracle.

Kernel specs accepted by :func:`parse_kernel`:

``linear``
    b(x) = 2|x|
``quintic``
    b(x) = 12 x^2 (1 - x^2) |x|
``family:<expr in s>``
    b(x) = g(x^2) |x| with g given by the expression; g must satisfy
    g(s) = g(1 - s) and int_0^1 g = 2.
``raw:<expr in x>``
    b given directly; not validated at construction (use :func:`check_kernel`).

Expression grammar (both ``family`` and ``raw``)::

    expr    := term (("+" | "-") term)*
    term    := factor (("*" | "/") factor)*
    factor  := ("+" | "-") factor | power
    power   := atom (("^" | "**") factor)?
    atom    := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"
    NAME    := s | x | pi | e
    FUNC    := sqrt | exp | log | sin | cos | tan | abs
"""

from __future__ import annotations

import ast
import csv
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

__all__ = [
    "KernelError",
    "CollisionKernel",
    "KernelReport",
    "kernel_moments",
    "check_kernel",
    "symmetry_residual",
    "spectral_gap",
    "spectral_gap_quadrature",
    "builtin_kernel",
    "family_kernel",
    "raw_kernel",
    "parse_kernel",
    "kernel_function",
    "parse_expression",
]

QUAD_TOL = 1e-13
DEFAULT_M_MAX = 14  # 2N + 2 for the default degree N = 6


class KernelError(ValueError):
    """Raised for kernels that are invalid or cannot be integrated."""


# ---------------------------------------------------------------------------
# expression parsing

_FUNCS = {
    "sqrt": np.sqrt,
    "exp": np.exp,
    "log": np.log,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "abs": np.abs,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


def parse_expression(text: str, variable: str) -> Callable[[np.ndarray], np.ndarray]:
    """Compile an arithmetic expression in one variable to a vectorised function."""
    try:
        tree = ast.parse(text.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise KernelError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            value = float(node.value)
            return lambda x: np.full_like(x, value)
        if isinstance(node, ast.Name):
            if node.id == variable:
                return lambda x: x
            if node.id in _CONSTS:
                value = _CONSTS[node.id]
                return lambda x: np.full_like(x, value)
            raise KernelError(f"unknown name {node.id!r} in {text!r}")
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
            inner = build(node.operand)
            if isinstance(node.op, ast.USub):
                return lambda x: -inner(x)
            return inner
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op = _BINOPS[type(node.op)]
            left, right = build(node.left), build(node.right)
            return lambda x: op(left(x), right(x))
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            fn = _FUNCS[node.func.id]
            arg = build(node.args[0])
            return lambda x: fn(arg(x))
        raise KernelError(f"unsupported syntax in {text!r}")

    compiled = build(tree)

    def f(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            return np.asarray(compiled(x), dtype=float)

    return f


# ---------------------------------------------------------------------------
# moments and validation


def _quad(fn, a, b, tol):
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(fn, a, b, epsabs=tol, epsrel=0.0, limit=500)
        except (integrate.IntegrationWarning, ZeroDivisionError, FloatingPointError):
            raise KernelError("kernel not integrable at requested tolerance") from None
    if not math.isfinite(val) or err > tol:
        raise KernelError("kernel not integrable at requested tolerance")
    return val, err


def kernel_moments(b: Callable, m_max: int, tol: float = QUAD_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Moments mu_0..mu_{m_max} and their error estimates.

    Each half interval is integrated separately so the |x| kink sits on a
    panel boundary.
    """
    if m_max < 0 or tol <= 0:
        raise ValueError("need m_max >= 0 and tol > 0")

    def scalar(x):
        return float(np.asarray(b(np.asarray([x], dtype=float)))[0])

    mu = np.zeros(m_max + 1)
    err = np.zeros(m_max + 1)
    for m in range(m_max + 1):
        left, e_left = _quad(lambda t: scalar(t) * t**m, -1.0, 0.0, tol / 2)
        right, e_right = _quad(lambda t: scalar(t) * t**m, 0.0, 1.0, tol / 2)
        mu[m] = 0.5 * (left + right)
        err[m] = 0.5 * (e_left + e_right)
    return mu, err


@dataclass(frozen=True)
class KernelReport:
    symmetry_residual: float
    cutoff_residual: float
    passed: bool
    tol: float
    worst_x: float

    def to_dict(self) -> dict:
        return {
            "symmetry_residual": self.symmetry_residual,
            "cutoff_residual": self.cutoff_residual,
            "pass": self.passed,
            "tol": self.tol,
            "worst_x": self.worst_x,
        }


def _sample_grid(n: int = 2000) -> np.ndarray:
    x = np.linspace(-1.0, 1.0, n + 1)[1:-1]
    x = x[x != 0.0]
    return np.union1d(x, [-0.5, 0.5])


def symmetry_residual(b: Callable, x) -> np.ndarray:
    """Pointwise residual max(|b(x) - b(sqrt(1-x^2)) |x|/sqrt(1-x^2)|, |b(x) - b(-x)|)."""
    x = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        c = np.sqrt(1.0 - x * x)
        bx = np.asarray(b(x), dtype=float)
        swapped = np.asarray(b(c), dtype=float) * np.abs(x) / c
        mirrored = np.asarray(b(-x), dtype=float)
    return np.maximum(np.abs(bx - swapped), np.abs(bx - mirrored))


def check_kernel(b: Callable, tol: float = 1e-10) -> KernelReport:
    """Check the angular symmetry relation and the cutoff normalisation."""
    grid = _sample_grid()
    try:
        values = np.asarray(b(grid), dtype=float)
    except Exception as exc:  # user-supplied callables may fail arbitrarily
        raise KernelError("kernel undefined on domain") from exc
    if values.shape != grid.shape or not np.all(np.isfinite(values)):
        raise KernelError("kernel undefined on domain")
    res = symmetry_residual(b, grid)
    if not np.all(np.isfinite(res)):
        raise KernelError("kernel undefined on domain")
    i = int(np.argmax(res))
    integral, _ = _quad(lambda t: float(np.asarray(b(np.asarray([t])))[0]), 0.0, 1.0, QUAD_TOL)
    sym = float(res[i])
    cut = abs(integral - 1.0)
    return KernelReport(sym, cut, bool(sym <= tol and cut <= tol and np.all(values >= 0)), tol, float(grid[i]))


# ---------------------------------------------------------------------------
# the kernel object


@dataclass(frozen=True)
class CollisionKernel:
    """A validated cutoff kernel with its moment table."""

    name: str
    evaluate: Callable = field(repr=False, compare=False)
    moments: np.ndarray = field(repr=False, compare=False)
    moment_errors: np.ndarray = field(repr=False, compare=False)

    @property
    def m_max(self) -> int:
        return len(self.moments) - 1

    def __call__(self, x):
        return self.evaluate(x)

    def moment(self, m: int) -> float:
        if m > self.m_max:
            raise KernelError(f"moment {m} not tabulated (m_max = {self.m_max})")
        return float(self.moments[m])

    def with_moments(self, m_max: int) -> "CollisionKernel":
        """Same kernel with a moment table extended (or trimmed) to ``m_max``."""
        if m_max <= self.m_max:
            return CollisionKernel(self.name, self.evaluate, self.moments[: m_max + 1].copy(),
                                   self.moment_errors[: m_max + 1].copy())
        mu, err = kernel_moments(self.evaluate, m_max)
        return CollisionKernel(self.name, self.evaluate, mu, err)

    @property
    def gap(self) -> float:
        return spectral_gap(self)

    @property
    def delta(self) -> float:
        """Radius of the admissible initial neighbourhood, |gap| / 16."""
        return abs(self.gap) / 16.0

    def moments_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["m", "mu_m", "est_error"])
        for m, (mu, e) in enumerate(zip(self.moments, self.moment_errors)):
            w.writerow([m, format(mu, ".17g"), format(e, ".17g")])
        return buf.getvalue()


def spectral_gap(kernel: CollisionKernel) -> float:
    """-2 (mu_2 - mu_4), i.e. -2 int_0^1 x^2 (1 - x^2) b(x) dx for even b."""
    gap = -2.0 * (kernel.moment(2) - kernel.moment(4))
    if abs(gap) < 1e-14:
        raise KernelError("degenerate kernel: zero spectral gap")
    return gap


def spectral_gap_quadrature(b: Callable) -> float:
    """Direct quadrature of -2 int_0^1 x^2 (1 - x^2) b(x) dx (independent check)."""
    val, _ = _quad(lambda x: x * x * (1 - x * x) * float(np.asarray(b(np.asarray([x])))[0]), 0.0, 1.0, QUAD_TOL)
    return -2.0 * val


def _make(name: str, b: Callable, m_max: int, validate: bool = True) -> CollisionKernel:
    if validate:
        report = check_kernel(b)
        if not report.passed:
            raise KernelError(
                f"kernel {name!r} fails validation (symmetry {report.symmetry_residual:.3g}, "
                f"cutoff {report.cutoff_residual:.3g})")
    mu, err = kernel_moments(b, m_max)
    return CollisionKernel(name, b, mu, err)


def family_kernel(g: Callable, m_max: int = DEFAULT_M_MAX, name: str = "family") -> CollisionKernel:
    """Kernel b(x) = g(x^2) |x| for g symmetric about 1/2 with int_0^1 g = 2."""
    s = np.linspace(0.0, 1.0, 1001)
    try:
        gs = np.asarray(g(s), dtype=float)
        gm = np.asarray(g(1.0 - s), dtype=float)
    except Exception as exc:
        raise KernelError("kernel undefined on domain") from exc
    if not np.all(np.isfinite(gs)) or np.max(np.abs(gs - gm)) > 1e-10 * max(1.0, np.max(np.abs(gs))):
        raise KernelError("kernel family constraint violated: g(s) != g(1 - s)")
    total, _ = _quad(lambda t: float(np.asarray(g(np.asarray([t])))[0]), 0.0, 1.0, QUAD_TOL)
    if abs(total - 2.0) > 1e-10:
        raise KernelError(f"kernel family constraint violated: int_0^1 g = {total:.12g}, expected 2")

    def b(x):
        x = np.asarray(x, dtype=float)
        return np.asarray(g(x * x), dtype=float) * np.abs(x)

    return _make(name, b, m_max)


def raw_kernel(b: Callable, m_max: int = DEFAULT_M_MAX, name: str = "raw") -> CollisionKernel:
    """Wrap an arbitrary b without validation; moments may still fail to converge."""
    return _make(name, b, m_max, validate=False)


def builtin_kernel(name: str, m_max: int = DEFAULT_M_MAX) -> CollisionKernel:
    if name == "linear":
        return family_kernel(lambda s: np.full_like(np.asarray(s, dtype=float), 2.0), m_max, "linear")
    if name == "quintic":
        return family_kernel(lambda s: 12.0 * np.asarray(s) * (1.0 - np.asarray(s)), m_max, "quintic")
    raise KernelError(f"unknown builtin kernel {name!r}")


def parse_kernel(spec: str, m_max: int = DEFAULT_M_MAX) -> CollisionKernel:
    """Build a kernel from a spec string (see module docstring)."""
    spec = spec.strip()
    if spec.startswith("family:"):
        expr = spec[len("family:"):]
        return family_kernel(parse_expression(expr, "s"), m_max, spec)
    if spec.startswith("raw:"):
        expr = spec[len("raw:"):]
        return raw_kernel(parse_expression(expr, "x"), m_max, spec)
    return builtin_kernel(spec, m_max)


def kernel_function(spec: str) -> Callable:
    """Pointwise b for a spec, without any validation."""
    spec = spec.strip()
    if spec == "linear":
        return lambda x: 2.0 * np.abs(np.asarray(x, dtype=float))
    if spec == "quintic":
        return lambda x: 12.0 * np.asarray(x, dtype=float) ** 2 * (1.0 - np.asarray(x, dtype=float) ** 2) * np.abs(x)
    if spec.startswith("family:"):
        g = parse_expression(spec[len("family:"):], "s")
        return lambda x: np.asarray(g(np.asarray(x, dtype=float) ** 2), dtype=float) * np.abs(x)
    if spec.startswith("raw:"):
        return parse_expression(spec[len("raw:"):], "x")
    raise KernelError(f"unknown builtin kernel {spec!r}")
