"""
Ground states on an interval
============================

The Dirichlet Laplacian on (0, pi) has eigenvalues 1, 4, 9, ...  Inside the
first gap (1, 4) the cubic problem -u'' - lambda u = |u|^2 u has a ground
state of Nehari-Pankov type.  It changes sign, and restricted to the edge it
is a periodic orbit of the phase-plane ODE.
"""
import math

import numpy as np

from gapnls import MetricGraph, PowerNonlinearity, gap_at, graph_eigenbasis, outer_minimize
from gapnls.ode import OdeNonlinearity, gtilde_inverse, interior_sign_changes, ode_residual, period, sup_norm
from gapnls.solver import half_space_dominance_check, verify_np_membership
from gapnls.torus import action_upper_bound

basis = graph_eigenbasis(MetricGraph.interval(math.pi), 24, nodes_per_edge=257)
nl = PowerNonlinearity.uniform(basis, 4.0)
print("first eigenvalues:", np.round(basis.eigenvalues[:5], 10))

# %%
# Solve at three frequencies and check what a ground state should satisfy.
f = OdeNonlinearity.power(4.0)
for lam in (1.5, 2.5, 3.5):
    st = outer_minimize(basis, lam, 1, nl)
    ceiling = action_upper_bound(4.0, nl.c_I, gap_at(basis, 1), lam)
    print(f"lambda={lam}: c={st.action:.6f} (ceiling {ceiling:.4f})  mass={st.mass:.5f}  "
          f"residual={st.residual:.1e}  sign-changing={st.sign_changing}")
    print("   on the Nehari-Pankov set:", verify_np_membership(basis, st.coeffs, lam, 1, nl),
          "  half-space dominance:", half_space_dominance_check(st, probes=300))

    # %%
    # The same function seen by the ODE oracle: the residual of u'' + lambda u + u^3,
    # the sup-norm floor, and the period of the orbit with amplitude ||u||_inf.
    worst, top = ode_residual(st, f.f)
    M = sup_norm(st)
    tau = period(lam, f, M).tau
    z = interior_sign_changes(st)
    print(f"   ODE residual / sup = {worst / top:.1e};  sup {M:.4f} >= {gtilde_inverse(f.f, 4 - lam):.4f}")
    print(f"   {z} interior zero(s): (z+1) tau/2 = {(z + 1) * tau / 2:.6f} vs edge length {math.pi:.6f}")
