import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from gapnls.ode import (AdmissibilityError, OdeNonlinearity, find_s1, gtilde, gtilde_inverse,
                        kappa_comparison_check, l2_window_bound_check, linf_l2_constants, m_of_M,
                        measure_kappa0, period, period_majorant, potential, second_derivative, shoot,
                        validate_f2)
from gapnls.problem import two_sided_power

# sqrt(2) * B(1/4, 1/2): closed form of the cubic oscillator period at lambda = 0, M = 1
TAU_CUBIC = math.sqrt(2) * gamma(0.25) * gamma(0.5) / gamma(0.75)
TAU_CUBIC_FROZEN = 7.416298709205489
# root of 3 m^4 - 4 m^3 - 7 (equal potential of F = u^4/4 + u^3/3 at 1 and -m)
M_MINUS_FROZEN = 1.7607683602615747

cubic = OdeNonlinearity.power(4.0)


def test_frozen_constants_match_oracles():
    assert TAU_CUBIC == pytest.approx(TAU_CUBIC_FROZEN, rel=1e-15)
    roots = np.roots([3, -4, 0, 0, -7])
    real = max(r.real for r in roots if abs(r.imag) < 1e-12 and r.real > 0)
    assert real == pytest.approx(M_MINUS_FROZEN, rel=1e-15)


def test_potential_examples():
    F = lambda u: u ** 4 / 4  # noqa: E731
    assert potential(0.0, F, 0.0) == 0.0
    assert potential(0.0, F, 1.0) == 0.25
    assert potential(2.0, F, 1.0) == 1.25


def test_period_golden():
    res = period(0.0, cubic, 1.0)
    assert res.tau == pytest.approx(TAU_CUBIC_FROZEN, abs=1e-12)
    assert res.tau == pytest.approx(2 * math.sqrt(2) * 2.62206, abs=1e-4)
    assert res.m == 1.0


def test_shoot_agrees_with_quadrature():
    tr = shoot(0.0, cubic, 1.0)
    assert tr.tau == pytest.approx(TAU_CUBIC_FROZEN, rel=1e-9)
    assert tr.energy_drift <= 1e-8
    assert abs(tr.minimum + 1.0) <= 1e-8


@given(st.floats(0.1, 20.0))
@settings(max_examples=25, deadline=None)
def test_cubic_scaling_law(M):
    assert period(0.0, cubic, M).tau == pytest.approx(TAU_CUBIC_FROZEN / M, rel=1e-8)


def test_period_decreasing_in_M():
    taus = [period(0.0, cubic, M).tau for M in (1.0, 2.0, 4.0)]
    assert taus[0] > taus[1] > taus[2]


def test_harmonic_calibration():
    zero = OdeNonlinearity(lambda u: 0.0 * u, lambda u: 0.0 * u, calibration=True, name="0")
    tr = shoot(1.0, zero, 1.0)
    assert tr.tau == pytest.approx(2 * math.pi, rel=1e-6)


def test_m_of_M_asymmetric_golden():
    F = lambda u: u ** 4 / 4 + u ** 3 / 3  # noqa: E731
    assert m_of_M(0.0, F, 1.0) == pytest.approx(M_MINUS_FROZEN, abs=1e-12)


def test_m_of_M_odd_and_large_lambda():
    assert m_of_M(3.0, cubic.F, 2.5) == pytest.approx(2.5, abs=1e-10)
    F = lambda u: u ** 4 / 4 + u ** 3 / 3  # noqa: E731
    assert abs(m_of_M(1e4, F, 1.0) - 1.0) <= 1e-3


def test_f1_validator():
    with pytest.raises(AdmissibilityError):
        OdeNonlinearity(lambda t: t ** 3 + t)
    with pytest.raises(AdmissibilityError):
        OdeNonlinearity(lambda t: t ** 3 + t ** 2)
    OdeNonlinearity(lambda t: t ** 3)


@pytest.mark.parametrize("p", [3.0, 4.0, 6.0])
def test_gtilde_power(p):
    nl = OdeNonlinearity.power(p)
    for t in (0.3, 1.0, 2.7):
        assert gtilde(nl.f, t) == pytest.approx(t ** (p - 2), rel=1e-14)
        assert gtilde_inverse(nl.f, t) == pytest.approx(t ** (1 / (p - 2)), rel=1e-12)


def test_gtilde_asymmetric():
    nl = two_sided_power(4.0, 1.0, 2.0)
    assert gtilde(nl.f, 3.0) == pytest.approx(18.0)
    assert nl.kappa0 == pytest.approx(2 ** 0.25)
    assert validate_f2(nl, nl.kappa0, 1.0)
    assert measure_kappa0(nl, 1.0) == pytest.approx(2 ** 0.25, rel=1e-8)
    assert kappa_comparison_check(0.0, nl, 10.0)


def test_kappa_check_not_applicable_for_small_M():
    nl = two_sided_power(4.0, 1.0, 2.0, s0=1.0)
    assert kappa_comparison_check(0.0, nl, 0.01) is None


def test_linf_l2_constants_interval():
    R, gam, s1 = linf_l2_constants(math.pi, cubic)
    assert gam == pytest.approx(math.sqrt(math.pi) / 4, rel=1e-15)
    assert s1 == pytest.approx(4 * math.sqrt(2), rel=1e-10)
    assert R == pytest.approx(max(1.0, s1))


def test_period_majorant_bounds_tau():
    s1 = find_s1(cubic, math.pi / 2)
    for lam in (0.0, 1.0, 10.0, 100.0):
        for M in (s1, 3 * s1):
            tau = period(lam, cubic, M).tau
            assert tau <= period_majorant(cubic, M, M) + 1e-12 <= math.pi / 2 + 1e-9


@pytest.mark.parametrize("lam", [0.0, 1.0, 10.0])
@pytest.mark.parametrize("M", [0.5, 1.0, 4.0])
def test_l2_window(lam, M):
    assert l2_window_bound_check(lam, cubic, M)


def test_second_derivative_sixth_order():
    errs = []
    for n in (33, 65):
        x = np.linspace(0, math.pi, n)
        d2 = second_derivative(np.sin(3 * x), x[1] - x[0])
        errs.append(np.max(np.abs(d2 + 9 * np.sin(3 * x))))
    assert errs[0] / errs[1] > 30
