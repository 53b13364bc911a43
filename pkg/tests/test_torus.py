import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gapnls.spectral import SpectralGap
from gapnls.torus import (CutoffTooSmall, FourierMode, WeightData, action_upper_bound, divisor_count,
                          divisor_table, gap_chain, gap_record, l2_lower_bound, lattice_count,
                          lattice_count_upper, linf_tail_inequality_check, lp_constant, r2,
                          r2_divisor_bound_check, r2_sqrt_majorant_check, r2_table,
                          square_navier_eigenbasis, tail_sum_d, torus_eigenbasis, torus_modes)


def brute_r2(j):
    s = math.isqrt(j)
    return sum(1 for a in range(-s, s + 1) for b in range(-s, s + 1) if a * a + b * b == j)


def test_r2_examples():
    assert [r2(j) for j in (0, 1, 2, 3, 25)] == [1, 4, 4, 0, 12]
    assert [divisor_count(j) for j in (1, 2, 25)] == [1, 2, 3]
    assert r2_divisor_bound_check(25) and r2(25) == 4 * divisor_count(25)


@given(st.integers(0, 3000))
@settings(max_examples=200, deadline=None)
def test_r2_matches_brute_force(j):
    assert r2(j) == brute_r2(j)


def test_tables_agree_with_scalar_versions():
    t = r2_table(2000)
    d = divisor_table(2000)
    assert all(t[j] == r2(j) for j in range(0, 2001, 7))
    assert all(d[j] == divisor_count(j) for j in range(1, 2001, 7))


def test_gauss_circle_consistency():
    cum = np.cumsum(r2_table(5000))
    for J in (0, 1, 2, 5, 50, 999, 5000):
        assert cum[J] == lattice_count(J) <= lattice_count_upper(J)


def test_r2_sqrt_majorant():
    assert r2_sqrt_majorant_check(20000)


def test_modes_are_orthonormal_and_bounded(small_torus):
    assert small_torus.orthonormality_residual() <= 1e-12
    assert np.max(np.abs(small_torus.values)) <= 1 / math.pi + 1e-15
    assert FourierMode(0, 0).norm_factor == pytest.approx(1 / (2 * math.pi))


def test_torus_spectrum_start(small_torus):
    distinct = sorted(set(small_torus.eigenvalues.tolist()))
    # j = 6 is not a sum of two squares, so 36 is absent and 64 follows 25
    assert distinct[:6] == [0, 1, 4, 16, 25, 64]
    assert np.count_nonzero(small_torus.eigenvalues == 1) == r2(1) == 4


def test_mode_order_is_lexicographic_within_clusters():
    modes = torus_modes(25)
    keys = [(m.j, m.k1, m.k2) for m in modes]
    assert keys == sorted(keys)


def test_index_of_ell_fourth():
    lam = torus_eigenbasis(2, max_j=10).eigenvalues
    assert lam[9] == 16.0 and lam[8] == 4.0  # lambda_10 = 16, n_2 = 9


# n_ell and lambda_(n_ell) for ell = 2..6, from cumulative lattice counts
CHAIN = [(2, 9, 4), (3, 25, 64), (4, 45, 169), (5, 69, 400), (6, 109, 1156)]


def test_gap_chain_records():
    recs = gap_chain(6)
    assert [(r.ell, r.n_ell, r.lambda_n) for r in recs] == CHAIN
    for r in recs:
        assert r.lambda_upper == r.ell ** 4
        assert r.lambda_probe == (r.ell ** 2 - 1) ** 2
        assert r.lambda_n <= r.lambda_probe
        # the difference of the two squares is 2 ell^2 - 1
        assert r.gap_length == r.lambda_upper - r.lambda_probe == 2 * r.ell ** 2 - 1
        assert r.n_ell == lattice_count(r.ell ** 2 - 1)


def test_record_matches_basis():
    for ell in (2, 3, 4):
        rec = gap_record(ell)
        lam = torus_eigenbasis(ell).eigenvalues
        assert lam[rec.n_ell - 1] == rec.lambda_n and lam[rec.n_ell] == rec.lambda_upper


@pytest.mark.parametrize("ell", [2, 3, 4, 5, 6])
def test_tail_enclosures_overlap(ell):
    rec = gap_record(ell)
    a = tail_sum_d(rec.n_ell, rec.lambda_probe, 200)
    b = tail_sum_d(rec.n_ell, rec.lambda_probe, 400)
    assert a.value <= b.value <= a.upper
    assert max(a.value, b.value) <= min(a.upper, b.upper)


def test_tail_sum_direct_partial_sum():
    # ell = 2, lambda = 9: direct summation over 4 <= j <= 2000
    t = r2_table(2000)
    direct = sum(t[j] / (j * j - 9.0) for j in range(4, 2001))
    enc = tail_sum_d(9, 9.0, 2000)
    assert enc.value == pytest.approx(direct, rel=1e-13)
    assert enc.value <= tail_sum_d(9, 9.0, 4000).value <= enc.upper


def test_tail_sum_monotone_in_lambda():
    rec = gap_record(3)
    lams = np.linspace(rec.lambda_n, rec.lambda_upper - 1, 9)
    vals = [tail_sum_d(rec.n_ell, lam, 300).value for lam in lams]
    assert np.all(np.diff(vals) > 0)


def test_tail_sum_errors():
    with pytest.raises(ValueError):
        tail_sum_d(9, 9.0, 3)
    with pytest.raises(CutoffTooSmall):
        tail_sum_d(9, 9.0, 5)


def test_action_upper_bound_values():
    g = SpectralGap(1, 0.0, 100.0)
    cI = 1 / (16 * math.pi ** 2)
    assert action_upper_bound(4, cI, g, 75.0) == pytest.approx(625 * math.pi ** 2, rel=1e-14)
    assert action_upper_bound(4, cI, g, 100.0 - 1e-9) < 1e-12
    for p in (3.0, 4.0, 6.0):
        ratio = action_upper_bound(p, 1.0, g, 80.0) / action_upper_bound(p, 1.0, g, 90.0)
        assert ratio == pytest.approx(2 ** (p / (p - 2)), rel=1e-12)


def test_lp_constant_branches():
    assert lp_constant(3.0, 1.0, 1.0, 4 * math.pi ** 2) == pytest.approx(2 * math.pi)
    mu = 4 * math.pi ** 2
    assert lp_constant(4.0, 2.0, 0.5, mu) == lp_constant(4.0 + 0.0, 2.0, 0.5, mu) == 2.0
    assert lp_constant(4.0 + 1e-9, 2.0, 0.5, mu) == pytest.approx(2.0, rel=1e-7)


def test_l2_bound_branch_continuity():
    r = WeightData(1.0, 1.0, 4 * math.pi ** 2)
    a = l2_lower_bound(4.0, r, 1 / math.pi, 16.0, 9.0, 0.3)
    b = l2_lower_bound(4.0 + 1e-9, r, 1 / math.pi, 16.0, 9.0, 0.3)
    assert a == pytest.approx(b, rel=1e-6)


def test_l2_bound_chain_p4_increasing():
    r = WeightData(1.0, 1.0, 4 * math.pi ** 2)
    vals = []
    for rec in gap_chain(6):
        d = tail_sum_d(rec.n_ell, rec.lambda_probe, 400).upper
        vals.append(l2_lower_bound(4.0, r, 1 / math.pi, rec.lambda_upper, rec.lambda_probe, d))
    assert np.all(np.diff(vals) > 0)
    assert vals[0] == pytest.approx(2.516, abs=5e-3)


def test_linf_tail_inequality(small_torus, rng):
    n = 9
    for _ in range(20):
        v = np.zeros(small_torus.size)
        v[n:] = rng.standard_normal(small_torus.size - n)
        assert linf_tail_inequality_check(small_torus, v, n, 9.0)
    with pytest.raises(ValueError):
        linf_tail_inequality_check(small_torus, np.ones(small_torus.size), n, 9.0)


def test_square_navier_spectrum():
    b = square_navier_eigenbasis(50)
    expect = sorted((a * a + c * c) ** 2 for a in range(1, 8) for c in range(1, 8) if a * a + c * c <= 50)
    assert b.eigenvalues.tolist() == expect
    assert b.orthonormality_residual() <= 1e-12
    lap = square_navier_eigenbasis(50, laplacian=True)
    assert lap.eigenvalues[:3].tolist() == [2, 5, 5]


def test_brute_force_spectrum_to_1e4():
    modes = torus_modes(100)
    got = {}
    for m in modes:
        got[m.eigenvalue] = got.get(m.eigenvalue, 0) + 1
    for j in range(0, 101):
        assert got.get(j * j, 0) == brute_r2(j)
