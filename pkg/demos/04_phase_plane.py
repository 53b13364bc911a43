"""
Phase-plane oracle
==================

On one edge a solution of -u'' = lambda u + f(u) is a periodic orbit.  Its
period follows from a turning-point integral, checked here against direct
time stepping.  For the cubic oscillator the period at lambda = 0 scales
exactly like 1/M.
"""
import math

from scipy.special import gamma

from gapnls.ode import OdeNonlinearity, find_s1, gtilde, m_of_M, period, shoot
from gapnls.problem import two_sided_power

cubic = OdeNonlinearity.power(4.0)
closed = math.sqrt(2) * gamma(0.25) * gamma(0.5) / gamma(0.75)
res = period(0.0, cubic, 1.0)
tr = shoot(0.0, cubic, 1.0)
print(f"tau(0, 1): quadrature {res.tau:.12f}, shooting {tr.tau:.12f}, closed form {closed:.12f}")
print(f"energy drift over the orbit {tr.energy_drift:.1e}")
for M in (0.5, 2.0, 8.0):
    print(f"M={M}: M tau(M) = {M * period(0.0, cubic, M).tau:.12f}")

# %%
# An asymmetric nonlinearity: the negative swing is shorter than the positive one.
f = two_sided_power(4.0, a_plus=1.0, a_minus=2.0)
for lam in (0.0, 1.0, 10.0):
    print(f"lambda={lam}: M=3 -> m={m_of_M(lam, f.F, 3.0):.10f}, tau={period(lam, f, 3.0).tau:.8f}")
print("gtilde(3) =", gtilde(f.f, 3.0))

# %%
# Large amplitudes force short periods: beyond s1 every orbit fits twice into pi/2.
s1 = find_s1(cubic, math.pi / 2)
print(f"s1 = {s1:.10f}; tau at s1 for lambda=0, 10, 100:",
      [round(period(lam, cubic, s1).tau, 6) for lam in (0.0, 10.0, 100.0)])
