"""
Gaps of the bilaplacian on the flat torus
=========================================

On S^1 x S^1 the eigenvalues of the bilaplacian are j^2 with multiplicity
r2(j), the number of ways to write j as a sum of two squares.  Between
(l^2 - 1)^2 and l^4 there is no eigenvalue, so these gaps grow like 2 l^2.
The tail sum d(n, lambda) can be enclosed rigorously, which turns into a lower
bound on the L2 norm of ground states in each gap.
"""
import numpy as np

from gapnls import PowerNonlinearity, sweep, torus_eigenbasis
from gapnls.torus import gap_chain, l2_lower_bound, r2_table, tail_sum_d

print("r2(0..25):", r2_table(25).tolist())

print(" l  n_l  lambda_n  probe  upper  length   d in [lo, hi]         L2 bound  sampled max")
for rec in gap_chain(5):
    d = tail_sum_d(rec.n_ell, rec.lambda_probe, 400)
    basis = torus_eigenbasis(rec.ell)
    nl = PowerNonlinearity.uniform(basis, 4.0)
    bound = l2_lower_bound(4.0, nl, basis.meta["C_inf"], rec.lambda_upper, rec.lambda_probe, d.upper)
    curve = sweep(basis, rec.n_ell, nl, samples=8)
    top = np.sqrt(2 * curve.masses.max())
    print(f"{rec.ell:2d} {rec.n_ell:4d} {rec.lambda_n:8d} {rec.lambda_probe:6d} {rec.lambda_upper:6d} "
          f"{rec.gap_length:6d}   [{d.value:.5f}, {d.upper:.5f}]   {bound:7.3f}  {top:9.3f}")
