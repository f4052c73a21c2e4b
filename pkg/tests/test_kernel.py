import math

import numpy as np
import pytest
from scipy import integrate

from boltzgap.kernel import (
    KernelError,
    builtin_kernel,
    check_kernel,
    family_kernel,
    kernel_function,
    kernel_moments,
    parse_expression,
    parse_kernel,
    raw_kernel,
    spectral_gap,
    spectral_gap_quadrature,
    symmetry_residual,
)


def test_linear_moments_closed_form():
    k = builtin_kernel("linear", m_max=6)
    # (1/2) int 2|t| t^m dt = 2/(m+2) for even m
    expected = [2 / (m + 2) if m % 2 == 0 else 0.0 for m in range(7)]
    assert np.allclose(k.moments, expected, atol=1e-14)


def test_quintic_moments_closed_form():
    k = builtin_kernel("quintic", m_max=8)
    # int_0^1 12 t^(m+3) (1 - t^2) dt = 12 (1/(m+4) - 1/(m+6))
    expected = [12 * (1 / (m + 4) - 1 / (m + 6)) if m % 2 == 0 else 0.0 for m in range(9)]
    assert np.allclose(k.moments, expected, atol=1e-14)


@pytest.mark.parametrize("name,gap", [("linear", -1 / 3), ("quintic", -2 / 5)])
def test_gap_and_delta(name, gap):
    k = builtin_kernel(name)
    assert abs(spectral_gap(k) - gap) < 1e-12
    assert abs(spectral_gap_quadrature(k.evaluate) - gap) < 1e-12
    assert math.isclose(k.delta, abs(gap) / 16)


def test_family_kernel_from_expression():
    k = parse_kernel("family:6*s^2 - 6*s + 3")  # symmetric about 1/2, integral 2
    assert check_kernel(k.evaluate).passed
    val, _ = integrate.quad(lambda x: x * x * (1 - x * x) * float(k(np.array([x]))[0]), 0, 1)
    assert abs(k.gap + 2 * val) < 1e-12


@pytest.mark.parametrize("spec,msg", [
    ("family:1", "int_0\\^1 g"),
    ("family:s", "g\\(s\\) != g\\(1 - s\\)"),
    ("bogus", "unknown builtin"),
])
def test_family_constraints(spec, msg):
    with pytest.raises(KernelError, match=msg):
        parse_kernel(spec)


def test_constant_kernel_fails_symmetry():
    b = kernel_function("raw:1")
    assert abs(float(symmetry_residual(b, 0.5)) - 0.42264973) < 1e-8
    assert not check_kernel(b).passed


def test_builtins_pass_checks():
    for name in ("linear", "quintic"):
        r = check_kernel(builtin_kernel(name).evaluate)
        assert r.passed and r.symmetry_residual < 1e-10 and r.cutoff_residual < 1e-10


def test_undefined_kernel():
    with pytest.raises(KernelError, match="undefined on domain"):
        check_kernel(kernel_function("raw:log(x)"))


def test_non_integrable_moments():
    with pytest.raises(KernelError, match="not integrable"):
        kernel_moments(lambda x: 1 / np.abs(np.asarray(x)) ** 1.5, 2)


def test_zero_gap_is_degenerate():
    # b(x) = 2 delta-like mass is not expressible; a raw kernel with mu2 = mu4 is
    k = raw_kernel(lambda x: np.zeros_like(np.asarray(x, float)), m_max=4)
    with pytest.raises(KernelError, match="degenerate kernel"):
        spectral_gap(k)


def test_expression_parser_whitelist():
    f = parse_expression("sqrt(x)^2 + 2*pi - exp(0)", "x")
    assert math.isclose(float(f(np.array([0.25]))[0]), 0.25 + 2 * math.pi - 1)
    for bad in ("__import__('os')", "x.real", "[x]", "y + 1"):
        with pytest.raises(KernelError):
            parse_expression(bad, "x")


def test_with_moments_extends_consistently():
    k = builtin_kernel("linear", m_max=4)
    k2 = k.with_moments(10)
    assert k2.m_max == 10
    assert np.allclose(k2.moments[:5], k.moments, atol=1e-15)
    with pytest.raises(KernelError):
        k.moment(6)


def test_moments_csv_digits():
    line = builtin_kernel("linear", m_max=2).moments_csv().splitlines()[3]
    assert line.startswith("2,0.5")
