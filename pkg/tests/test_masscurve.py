import numpy as np
import pytest

from gapnls.masscurve import (MASS_CONVENTIONS, BisectionStagnation, TargetOutsideRange, branch_switch_flags,
                              derivative_bounds_check, find_normalized, from_internal_mass,
                              interval_fill_check, lambda_grid, mass_range, sweep, to_internal_mass)
from gapnls.solver import SolverConfig, half_space_dominance_check, verify_np_membership
from gapnls.spectral import SpectralGap


@pytest.fixture(scope="module")
def curve(interval_basis, interval_nl):
    return sweep(interval_basis, 1, interval_nl, SolverConfig(), samples=33)


def test_mass_conventions_round_trip():
    for conv in MASS_CONVENTIONS:
        assert from_internal_mass(to_internal_mass(3.7, conv), conv) == pytest.approx(3.7, rel=1e-15)
    assert to_internal_mass(3.0) == 1.5
    with pytest.raises(ValueError):
        to_internal_mass(1.0, "mass")


def test_geometric_grid_nests_under_doubling():
    g = SpectralGap(1, 1.0, 4.0)
    a = lambda_grid(g, 9)
    b = lambda_grid(g, 17)
    assert np.allclose(b[::2], a, rtol=0, atol=1e-14)
    assert np.all(np.diff(a) > 0) and a[0] > 1.0 and a[-1] < 4.0
    d = 4.0 - a
    assert np.allclose(d[1:] / d[:-1], d[1] / d[0])


def test_chebyshev_grid_inside():
    c = lambda_grid(SpectralGap(1, 1.0, 4.0), 9, spacing="chebyshev")
    assert np.all((c > 1) & (c < 4)) and np.all(np.diff(c) > 0)


def test_sweep_minimum_samples(interval_basis, interval_nl):
    with pytest.raises(ValueError, match="at least 8"):
        sweep(interval_basis, 1, interval_nl, samples=4)


def test_curve_structure(curve):
    assert len(curve) == 33 and not curve.holes and not curve.branch_flags
    assert np.all(np.diff(curve.actions) < 0)
    assert np.all(np.diff(curve.masses) < 0)
    assert np.all(curve.residuals <= 1e-8)


def test_every_sample_is_valid(curve):
    for s in curve.samples[::4]:
        st = s.state
        assert verify_np_membership(st.basis, st.coeffs, st.lam, 1, st.nl)
        assert half_space_dominance_check(st, probes=200)


def test_derivative_bounds(curve):
    ok = [derivative_bounds_check(curve, i) for i in range(1, len(curve) - 1)]
    assert all(ok)
    with pytest.raises(ValueError):
        derivative_bounds_check(curve, 0)


def test_mass_range(curve):
    lo, hi, g = mass_range(curve)
    assert lo == curve.masses.min() and hi == curve.masses.max()
    # the estimate only sees interior samples, so the slack is taken at the first of them
    assert g >= curve.masses[1] - 0.05 * curve.masses[1]
    assert g <= hi


def test_mass_range_refinement(curve, interval_basis, interval_nl):
    fine = sweep(interval_basis, 1, interval_nl, SolverConfig(), samples=65)
    _, hi, g33 = mass_range(curve)
    _, hi65, g65 = mass_range(fine)
    assert hi65 == pytest.approx(hi, rel=1e-9)  # nested grids share the first sample
    assert g65 >= g33 - 0.05 * hi
    assert hi - g65 < 0.6 * (hi - g33)  # the gap to mass_max closes under refinement


def test_mass_range_single_sample(curve):
    from gapnls.masscurve import MassCurve

    one = MassCurve(curve.gap, 1, curve.samples[:1])
    lo, hi, g = mass_range(one)
    assert lo == hi and g is None


def test_interval_fill(curve, interval_basis, interval_nl):
    assert interval_fill_check(curve, 6, 8, interval_basis, interval_nl)


def test_find_normalized_mid_range(curve, interval_basis, interval_nl):
    lo, hi, _ = mass_range(curve)
    target = 0.5 * (lo + hi)
    res = find_normalized(curve, target, interval_basis, interval_nl)
    assert abs(res.state.mass - target) <= 1e-6 * target
    assert res.solves <= 30


def test_find_normalized_existing_sample(curve, interval_basis, interval_nl):
    s = curve.samples[10]
    res = find_normalized(curve, s.mass, interval_basis, interval_nl)
    assert res.solves <= 1 and res.state.lam == pytest.approx(s.lam)


def test_target_outside(curve, interval_basis, interval_nl):
    with pytest.raises(TargetOutsideRange) as exc:
        find_normalized(curve, 1e9, interval_basis, interval_nl)
    lo, hi = exc.value.interval
    assert lo < hi < 1e9


def test_branch_flags_on_synthetic_jump(curve):
    from copy import copy

    fake = copy(curve)
    fake.samples = [copy(s) for s in curve.samples]
    fake.samples[16].mass += 5.0
    assert branch_switch_flags(fake)
    assert issubclass(BisectionStagnation, Exception)
