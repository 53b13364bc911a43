"""Phase-plane oracle for ``-u'' = lambda u + f(u)`` on a single edge.

The equation is motion in the well ``V(u) = F(u) + lambda u^2 / 2``.  A
solution with maximum ``M`` oscillates between ``-m`` and ``M`` where
``V(-m) = V(M)``, and its period is ``2 * int_{-m}^{M} du / sqrt(2 (H - V))``.
The period integral is regularized at both turning points by ``u = M - t^2``
and ``u = -m + t^2``, which turns ``H - V(u)`` into ``t^2`` times an average
of ``V'`` and removes the inverse square root exactly.

Independently, :func:`shoot` integrates the Cauchy problem with a fourth
order symplectic scheme so the two period computations can be compared.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.integrate
import scipy.optimize
from numpy.polynomial import legendre

_GL_X, _GL_W = legendre.leggauss(24)


class AdmissibilityError(ValueError):
    """``f`` fails (f1) numerically."""


@dataclass(frozen=True, eq=False)
class OdeNonlinearity:
    """A nonlinearity ``f`` with antiderivative ``F`` and (f2) parameters.

    ``calibration=True`` skips the (f1) validator (e.g. ``f = 0`` to
    calibrate the integrator on the harmonic oscillator).
    """

    f: Callable
    F: Optional[Callable] = None
    kappa0: Optional[float] = None
    s0: Optional[float] = None
    odd: bool = False
    calibration: bool = False
    name: str = "f"

    def __post_init__(self):
        if self.F is None:
            f = self.f
            object.__setattr__(self, "F", lambda s: scipy.integrate.quad(f, 0.0, s, epsabs=0, epsrel=1e-13)[0])
        if self.kappa0 is not None and self.kappa0 < 1:
            raise ValueError("kappa0 must be at least 1")
        if not self.calibration:
            validate_f1(self.f)

    @classmethod
    def power(cls, p: float) -> "OdeNonlinearity":
        """``f(u) = |u|^(p-2) u``, odd, so ``kappa0 = 1`` for every ``s0``."""
        return cls(lambda u: np.abs(u) ** (p - 2.0) * u, lambda u: np.abs(u) ** p / p,
                   kappa0=1.0, s0=1.0, odd=True, name=f"|u|^{p - 2:g} u")

    def df(self, u):
        return self.f(u)


def validate_f1(f, s_min: float = 1e-6, s_max: float = 1e6, points: int = 400) -> None:
    """Numerical check of (f1): ``f(0) = 0``, ``f(s)/|s|`` increasing, right limits."""
    if f(0.0) != 0.0:
        raise AdmissibilityError("f(0) must vanish")
    s = np.logspace(np.log10(s_min), np.log10(s_max), points)
    grid = np.concatenate([-s[::-1], s])
    ratio = np.array([f(x) for x in grid]) / np.abs(grid)
    if np.any(np.diff(ratio) <= 0):
        k = int(np.argmax(np.diff(ratio) <= 0))
        raise AdmissibilityError(f"f(s)/|s| is not strictly increasing near s={grid[k]:.3g}")
    for sign in (-1.0, 1.0):
        tiny = abs(f(sign * 1e-12)) / 1e-12
        small = abs(f(sign * 1e-6)) / 1e-6
        if tiny > 0.5 * small:
            raise AdmissibilityError("f(s)/|s| does not tend to 0 at s = 0")
        big = sign * f(sign * s_max) / s_max
        if not big > 10.0 * abs(f(sign * 1.0)):
            raise AdmissibilityError("f(s)/|s| does not grow without bound")


def validate_f2(nl: OdeNonlinearity, kappa0: float, s0: float, s_max: float = 1e6, points: int = 200) -> bool:
    """``F(s/kappa0) <= F(-s) <= F(kappa0 s)`` on a log grid of ``[s0, s_max]``."""
    F = nl.F
    for s in np.logspace(np.log10(s0), np.log10(s_max), points):
        lo, mid, hi = F(s / kappa0), F(-s), F(kappa0 * s)
        tol = 1e-12 * abs(mid)
        if not (lo <= mid + tol and mid <= hi + tol):
            return False
    return True


def measure_kappa0(nl: OdeNonlinearity, s0: float, s_max: float = 1e6, points: int = 200) -> float:
    """Smallest ``kappa >= 1`` meeting (f2) on the log grid."""
    F = nl.F
    need = 1.0
    for s in np.logspace(np.log10(s0), np.log10(s_max), points):
        target = F(-s)
        if F(s) < target:  # F(kappa s) >= F(-s)
            k = scipy.optimize.brentq(lambda k: F(k * s) - target, 1.0, _expand(lambda k: F(k * s) - target))
            need = max(need, k)
        if F(s) > target:  # F(s / kappa) <= F(-s)
            k = scipy.optimize.brentq(lambda k: target - F(s / k), 1.0, _expand(lambda k: target - F(s / k)))
            need = max(need, k)
    return need


def _expand(g, start=2.0, limit=1e12):
    hi = start
    while g(hi) < 0:
        hi *= 2.0
        if hi > limit:
            raise AdmissibilityError("bracket expansion failed; F does not grow")
    return hi


def potential(lam: float, F: Callable, u) -> float:
    return F(u) + 0.5 * lam * u * u


def _check_lam(lam):
    if lam < 0:
        raise ValueError("the phase-plane analysis needs lambda >= 0")


def m_of_M(lam: float, F: Callable, M: float) -> float:
    """The ``m > 0`` with ``V(-m) = V(M)``, by bracketed root finding."""
    _check_lam(lam)
    if not M > 0:
        raise ValueError("M must be positive")
    H = potential(lam, F, M)
    g = lambda m: potential(lam, F, -m) - H  # noqa: E731
    lo, hi = 0.0, M
    while g(hi) < 0:
        lo, hi = hi, 2.0 * hi
        if hi > 1e12 * max(M, 1.0):
            raise AdmissibilityError("no left turning point: F is not coercive on (-inf, 0]")
    return scipy.optimize.brentq(g, lo, hi, xtol=1e-15 * M, rtol=4 * np.finfo(float).eps, maxiter=500)


@dataclass(frozen=True)
class PeriodResult:
    lam: float
    M: float
    m: float
    tau: float
    H: float
    error: float


def _half_period(dV, a, sign, quad_kw):
    """``int du / sqrt(2 (H - V))`` from the turning point ``a`` to 0.

    ``u = a - sign * t^2`` so ``H - V(u) = t^2 * A(t)`` with ``A`` the mean of
    ``sign * V'`` over the swept interval.
    """
    top = math.sqrt(abs(a))

    def integrand(t):
        if t == 0.0:
            avg = sign * dV(a)
        else:
            s = a - sign * t * t * (_GL_X + 1.0) / 2.0
            avg = sign * 0.5 * np.dot(_GL_W, dV(s))
        return math.sqrt(2.0) / math.sqrt(avg)

    return scipy.integrate.quad(integrand, 0.0, top, **quad_kw)


def period(lam: float, nl: OdeNonlinearity, M: float, epsrel: float = 1e-12) -> PeriodResult:
    """Period ``tau`` of the solution with maximum ``M`` (two regularized halves)."""
    _check_lam(lam)
    m = m_of_M(lam, nl.F, M)
    dV = lambda u: nl.f(u) + lam * u  # noqa: E731
    kw = dict(epsabs=0.0, epsrel=epsrel, limit=200)
    right, e1 = _half_period(dV, M, 1.0, kw)
    left, e2 = _half_period(dV, -m, -1.0, kw)
    tau = 2.0 * (right + left)
    err = 2.0 * (e1 + e2)
    if err > 1e-8 * tau:
        raise ArithmeticError(f"period quadrature error {err:.3g} exceeds 1e-8 * tau")
    return PeriodResult(lam, M, m, tau, potential(lam, nl.F, M), err)


# Yoshida's fourth order composition of the leapfrog step
_CBRT2 = 2.0 ** (1.0 / 3.0)
_Y1 = 1.0 / (2.0 - _CBRT2)
_Y0 = -_CBRT2 / (2.0 - _CBRT2)
_COEF = (_Y1, _Y0, _Y1)


@dataclass(eq=False)
class Trajectory:
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    tau: float  # from successive maxima
    minimum: float
    energy_drift: float
    maxima: list = field(default_factory=list)


def _hermite_root(t0, h, v0, v1, a0, a1):
    """Root in [t0, t0+h] of the cubic Hermite interpolant of v (v' = a)."""
    def H(s):
        h00 = 2 * s ** 3 - 3 * s ** 2 + 1
        h10 = s ** 3 - 2 * s ** 2 + s
        h01 = -2 * s ** 3 + 3 * s ** 2
        h11 = s ** 3 - s ** 2
        return h00 * v0 + h10 * h * a0 + h01 * v1 + h11 * h * a1
    s = scipy.optimize.brentq(H, 0.0, 1.0, xtol=1e-15)
    return t0 + s * h, s


def _hermite_value(s, h, u0, u1, v0, v1):
    h00 = 2 * s ** 3 - 3 * s ** 2 + 1
    h10 = s ** 3 - 2 * s ** 2 + s
    h01 = -2 * s ** 3 + 3 * s ** 2
    h11 = s ** 3 - s ** 2
    return h00 * u0 + h10 * h * v0 + h01 * u1 + h11 * h * v1


def shoot(lam: float, nl: OdeNonlinearity, M: float, steps_per_period: int = 4000,
          periods: float = 2.2, period_hint: Optional[float] = None) -> Trajectory:
    """Integrate ``u(0) = M, u'(0) = 0`` over about ``periods`` periods.

    The step is ``period_hint / steps_per_period``; without a hint the period
    is estimated from :func:`period` (or ``2 pi / sqrt(lam)`` for calibration
    inputs).  Extrema are located by Hermite interpolation between steps.
    """
    _check_lam(lam)
    if period_hint is None:
        if nl.calibration:
            period_hint = 2.0 * math.pi / math.sqrt(lam) if lam > 0 else 1.0
        else:
            period_hint = period(lam, nl, M).tau
    h = period_hint / steps_per_period
    n_steps = int(math.ceil(periods * steps_per_period))
    acc = lambda u: -(nl.f(u) + lam * u)  # noqa: E731
    u = np.empty(n_steps + 1)
    v = np.empty(n_steps + 1)
    u[0], v[0] = M, 0.0
    x, y = M, 0.0
    for k in range(1, n_steps + 1):
        for c in _COEF:
            x += 0.5 * c * h * y
            y += c * h * acc(x)
            x += 0.5 * c * h * y
        u[k], v[k] = x, y
    t = h * np.arange(n_steps + 1)
    energy = 0.5 * v * v + np.array([potential(lam, nl.F, x) for x in u])
    H0 = energy[0]
    drift = float(np.max(np.abs(energy - H0)) / max(abs(H0), np.finfo(float).tiny))

    a = acc(u)
    maxima = [0.0]
    minima = []
    for k in range(n_steps):
        if v[k] > 0 >= v[k + 1]:
            tk, _ = _hermite_root(t[k], h, v[k], v[k + 1], a[k], a[k + 1])
            maxima.append(tk)
        elif v[k] < 0 <= v[k + 1]:
            tk, s = _hermite_root(t[k], h, v[k], v[k + 1], a[k], a[k + 1])
            minima.append(_hermite_value(s, h, u[k], u[k + 1], v[k], v[k + 1]))
    if len(maxima) < 2:
        raise ArithmeticError("fewer than one full period integrated")
    tau = (maxima[-1] - maxima[0]) / (len(maxima) - 1)
    return Trajectory(t, u, v, tau, float(np.min(minima)) if minima else float(u.min()), drift, maxima)


def gtilde(f: Callable, t: float) -> float:
    """``max(f(t), -f(-t)) / t`` for ``t > 0``; zero at zero."""
    if t < 0:
        raise ValueError("gtilde is defined for t >= 0")
    if t == 0:
        return 0.0
    return max(f(t), -f(-t)) / t


def gtilde_inverse(f: Callable, y: float) -> float:
    """Inverse of :func:`gtilde` by monotone bracketing."""
    if y < 0:
        raise ValueError("y must be nonnegative")
    if y == 0:
        return 0.0
    hi = 1.0
    while gtilde(f, hi) < y:
        hi *= 2.0
        if hi > 1e300:
            raise AdmissibilityError("gtilde does not reach y")
    lo = hi / 2.0
    while lo > 1e-300 and gtilde(f, lo) > y:
        lo /= 2.0
    grid = np.linspace(lo, hi, 33)
    vals = np.array([gtilde(f, x) for x in grid])
    if np.any(np.diff(vals) <= 0):
        raise AdmissibilityError("gtilde is not increasing; f fails (f1)")
    return scipy.optimize.brentq(lambda x: gtilde(f, x) - y, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                                 maxiter=2000)


def period_majorant(nl: OdeNonlinearity, M: float, m: float) -> float:
    """``(pi / sqrt 2) (M / sqrt F(M) + m / sqrt F(-m))``, a bound on tau for every lambda >= 0."""
    return math.pi / math.sqrt(2.0) * (M / math.sqrt(nl.F(M)) + m / math.sqrt(nl.F(-m)))


def find_s1(nl: OdeNonlinearity, eps: float, ceiling: float = 1e6) -> float:
    """Smallest ``s`` with ``period_majorant(s, s) <= eps`` (doubling, then bisection).

    ``s / sqrt(F(+-s))`` decreases under (f1), so the majorant at ``(s, s)``
    bounds every ``tau`` with both amplitudes at least ``s``.
    """
    g = lambda s: period_majorant(nl, s, s) - eps  # noqa: E731
    s = 1e-3
    while g(s) > 0:
        s *= 2.0
        if s > ceiling:
            raise AdmissibilityError("period majorant does not fall below eps; F(M)/M^2 does not grow")
    if s <= 1e-3:
        return s
    return scipy.optimize.brentq(g, s / 2.0, s, xtol=1e-14 * s)


def linf_l2_constants(shortest_edge: float, nl: OdeNonlinearity):
    """``(R, gamma, s1)`` with ``R = kappa0 max(s0, s1)`` and ``gamma = sqrt(l) / (4 kappa0)``."""
    if nl.kappa0 is None or nl.s0 is None:
        raise ValueError("kappa0 and s0 must be supplied for this nonlinearity")
    s1 = find_s1(nl, shortest_edge / 2.0)
    R = nl.kappa0 * max(nl.s0, s1)
    gamma = math.sqrt(shortest_edge) / (4.0 * nl.kappa0)
    return R, gamma, s1


def kappa_comparison_check(lam: float, nl: OdeNonlinearity, M: float, rtol: float = 1e-12) -> Optional[bool]:
    """``min(m, M) >= max(m, M) / kappa0``; ``None`` when the precondition fails."""
    m = m_of_M(lam, nl.F, M)
    k = nl.kappa0
    if k is None or nl.s0 is None:
        raise ValueError("kappa0 and s0 must be supplied")
    if not (M >= k * nl.s0 or m >= k * nl.s0):
        return None
    return bool(min(m, M) >= max(m, M) / k * (1.0 - rtol))


def l2_window_integral(lam: float, nl: OdeNonlinearity, M: float, steps: int = 4000):
    """``(int_0^tau u^2, tau, m)`` from a shooting run aligned with one period."""
    res = period(lam, nl, M)
    traj = shoot(lam, nl, M, steps_per_period=steps, periods=1.1, period_hint=res.tau)
    val = scipy.integrate.simpson(traj.u[: steps + 1] ** 2, x=traj.t[: steps + 1])
    return float(val), res.tau, res.m


def l2_window_bound_check(lam: float, nl: OdeNonlinearity, M: float) -> bool:
    """``(tau/8) min(m, M)^2 <= int_0^tau u^2 <= tau max(m, M)^2``."""
    val, tau, m = l2_window_integral(lam, nl, M)
    return bool(tau / 8.0 * min(m, M) ** 2 <= val <= tau * max(m, M) ** 2)


def fd_weights(z: float, x, m: int) -> np.ndarray:
    """Finite difference weights for the ``m``-th derivative at ``z`` (Fornberg)."""
    x = np.asarray(x, dtype=float)
    n = x.size
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def second_derivative(u: np.ndarray, h: float, width: int = 7) -> np.ndarray:
    """Sixth order second differences of uniform samples.

    Centred ``width``-point stencils inside, one-sided ``width + 1``-point
    stencils at the first and last nodes.
    """
    n = u.size
    half = width // 2
    if n < width + 1:
        raise ValueError(f"need at least {width + 1} samples")
    central = fd_weights(0.0, np.arange(-half, half + 1), 2)
    d2 = np.empty(n)
    d2[half:n - half] = np.convolve(u, central[::-1], mode="valid")
    for i in range(half):
        w = fd_weights(float(i), np.arange(width + 1), 2)
        d2[i] = w @ u[: width + 1]
        d2[n - 1 - i] = w @ u[::-1][: width + 1]
    return d2 / (h * h)


def ode_residual(state, f: Callable, nodes: int = 64):
    """Pointwise ``|u'' + lambda u + f(u)|`` of a graph state at ``nodes`` per edge.

    Returns the maximum residual and ``||u||_inf`` over those nodes.
    """
    basis = state.basis
    pair = basis.meta["pair"]
    worst = 0.0
    top = 0.0
    for e, (_, _, length) in enumerate(pair.graph.edges):
        x = np.linspace(0.0, length, nodes)
        u = basis.evaluate(state.coeffs, (e, x))
        r = second_derivative(u, x[1] - x[0]) + state.lam * u + f(u)
        worst = max(worst, float(np.max(np.abs(r))))
        top = max(top, float(np.max(np.abs(u))))
    return worst, top


def sup_norm(state, samples_per_edge: int = 2001) -> float:
    """``||u||_inf`` of a graph state on a dense per-edge grid (or the quadrature grid)."""
    basis = state.basis
    vals = [np.max(np.abs(basis.synthesize(state.coeffs)))]
    if basis.backend == "graph" and basis.evaluate is not None:
        for e, (_, _, length) in enumerate(basis.meta["pair"].graph.edges):
            vals.append(np.max(np.abs(basis.evaluate(state.coeffs, (e, np.linspace(0, length, samples_per_edge))))))
    return float(max(vals))


def linf_lower_bound_check(state, upper: float, f: Callable, slack: float = 0.0) -> bool:
    """``||u||_inf >= gtilde^{-1}(upper - lambda) - slack`` (graph states)."""
    if state.basis.backend != "graph":
        raise ValueError("the sup-norm bound is checked on graph states only")
    return bool(sup_norm(state) >= gtilde_inverse(f, upper - state.lam) - slack)


def interior_sign_changes(state, samples_per_edge: int = 4001, rtol: float = 1e-6) -> int:
    basis = state.basis
    count = 0
    for e, (_, _, length) in enumerate(basis.meta["pair"].graph.edges):
        u = basis.evaluate(state.coeffs, (e, np.linspace(0, length, samples_per_edge)))
        u = u[np.abs(u) > rtol * np.max(np.abs(u))]
        count += int(np.count_nonzero(np.diff(np.sign(u)) != 0))
    return count
