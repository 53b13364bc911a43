"""Ground states of Nehari-Pankov type by nested inf-sup optimization.

For a direction ``w`` orthogonal to ``E_n`` (the span of the first ``n``
modes) the inner problem maximizes ``J_lambda`` over the half-space
``{s w + v : s > 0, v in E_n}``; its maximizer is unique.  The outer problem
minimizes the resulting value ``phi(w)`` over the unit sphere of ``E_n^perp``.
By the envelope identity the derivative of ``phi`` along a tangent ``dw`` is
``s * J'(u)[dw]`` at the inner maximizer ``u``.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.optimize

from .spectral import (
    EigenBasis,
    PowerNonlinearity,
    SpectralGap,
    action,
    action_gradient,
    action_hessian,
    gap_at,
    nonlinear_energy,
    q_lambda,
)

log = logging.getLogger(__name__)

ENDPOINT_MARGIN = 1e-6


class SolverError(RuntimeError):
    pass


class BoundaryCollapse(SolverError):
    pass


class NonConvergence(SolverError):
    pass


class DegenerateDirection(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    inner_tol: float = 1e-10
    outer_tol: float = 1e-8
    max_inner: int = 200
    max_outer: int = 400
    restarts: int = 3
    seed: int = 0
    tr_radius: float = 1.0
    truncation: Optional[int] = None
    polish: bool = True

    def __post_init__(self):
        if not (self.inner_tol > 0 and self.outer_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.max_inner < 1 or self.max_outer < 0:
            raise ValueError("iteration limits must be positive")


@dataclass(eq=False)
class HalfSpacePoint:
    s: float
    v: np.ndarray  # length n
    w: np.ndarray  # full length, zero below n
    value: float
    grad_norm: float
    iterations: int
    history: list = field(default_factory=list)

    @property
    def coeffs(self) -> np.ndarray:
        u = self.s * self.w
        u[: self.v.size] += self.v
        return u


@dataclass(eq=False)
class GroundState:
    coeffs: np.ndarray
    lam: float
    n: int
    action: float
    mass: float
    residual: float
    sign_changing: bool
    inner_iterations: int = 0
    outer_iterations: int = 0
    restarts: int = 1
    converged: bool = True
    basis: Optional[EigenBasis] = field(default=None, repr=False)
    nl: Optional[PowerNonlinearity] = field(default=None, repr=False)
    notes: list = field(default_factory=list)

    def samples(self) -> np.ndarray:
        return self.basis.synthesize(self.coeffs)

    @property
    def l2_norm(self) -> float:
        return float(np.sqrt(2.0 * self.mass))


def e_normalize(basis: EigenBasis, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    nrm = basis.e_norm(w)
    if nrm == 0:
        raise DegenerateDirection("zero direction")
    return w / nrm


def ray_scale_initial(basis: EigenBasis, w, lam: float, nl: PowerNonlinearity) -> float:
    """Maximizer ``(q(w) / (p I(w)))^(1/(p-2))`` of ``t -> J(t w)``."""
    q = q_lambda(basis, w, lam)
    if not q > 0:
        raise DegenerateDirection(f"q_lambda(w) = {q:.3g} is not positive")
    energy = nonlinear_energy(basis, w, nl)
    if not energy > 0:
        raise DegenerateDirection("I(w) vanishes on the quadrature grid")
    return float((q / (nl.p * energy)) ** (1.0 / (nl.p - 2.0)))


def _check_lambda(basis: EigenBasis, lam: float, n: int) -> SpectralGap:
    gap = gap_at(basis, n)
    if not gap.contains(lam, ENDPOINT_MARGIN):
        raise ValueError(
            f"lambda={lam} is not inside the gap ({gap.lower}, {gap.upper}) "
            f"by a relative margin {ENDPOINT_MARGIN}"
        )
    return gap


def _tr_step(H, g, radius):
    """Exact trust-region step for maximizing ``g.d + d.H.d/2``, ``|d| <= radius``."""
    B = -H
    evals, Q = np.linalg.eigh(B)
    gt = Q.T @ (-g)
    if evals[0] > 0:
        d = -gt / evals
        if np.linalg.norm(d) <= radius:
            return Q @ d
    lo = max(0.0, -evals[0]) + 1e-15 * max(1.0, abs(evals[-1]))

    def excess(mu):
        return np.linalg.norm(gt / (evals + mu)) - radius

    if excess(lo) < 0:
        # hard case: fill up along the lowest eigenvector
        d = -gt / (evals + lo)
        tail = np.sqrt(max(radius ** 2 - d @ d, 0.0))
        d[0] += tail if gt[0] <= 0 else -tail
        return Q @ d
    hi = lo + np.linalg.norm(gt) / radius + abs(evals[-1]) + 1.0
    mu = scipy.optimize.brentq(excess, lo, hi, xtol=1e-14, rtol=1e-12)
    return Q @ (-gt / (evals + mu))


def inner_maximize(basis: EigenBasis, w, lam: float, n: int, nl: PowerNonlinearity,
                   cfg: SolverConfig = SolverConfig(), start=None) -> HalfSpacePoint:
    """Unique maximizer of ``J_lambda`` on ``E_n + R^+ w``.

    Trust-region Newton in ``(v, sigma)`` with ``s = exp(sigma)``; steps are
    accepted only if they increase ``J``.  ``start`` may give ``(s, v)``.
    """
    _check_lambda(basis, lam, n)
    w = np.asarray(w, dtype=float).copy()
    if np.any(w[:n] != 0.0):
        raise ValueError("w must be orthogonal to E_n")
    w = e_normalize(basis, w)
    s0 = ray_scale_initial(basis, w, lam, nl)
    ray_value = action(basis, s0 * w, lam, nl)
    if n == 0:
        return HalfSpacePoint(s0, np.zeros(0), w, ray_value, 0.0, 0, [ray_value])

    Y = np.vstack([basis.values[:n], w @ basis.values])
    D = np.append(basis.eigenvalues[:n] - lam, q_lambda(basis, w, lam))
    scale = np.append(1.0 / np.sqrt(1.0 + basis.eigenvalues[:n]), 1.0)
    rw = basis.weights * nl.weight
    p = nl.p

    def evaluate(a):
        u = a @ Y
        au = np.abs(u)
        val = 0.5 * np.sum(D * a * a) - np.sum(rw * au ** p) / p
        grad = D * a - Y @ (rw * au ** (p - 2.0) * u)
        hess = -(Y * (rw * (p - 1.0) * au ** (p - 2.0))) @ Y.T
        hess[np.diag_indices_from(hess)] += D
        return val, grad, hess

    if start is None:
        a = np.zeros(n + 1)
        a[n] = s0
    else:
        a = np.append(np.asarray(start[1], dtype=float), float(start[0]))
        if not a[n] > 0:
            raise ValueError("start must have s > 0")
    val, grad, hess = evaluate(a)
    if start is not None and val < ray_value:
        a = np.zeros(n + 1)
        a[n] = s0
        val, grad, hess = evaluate(a)
    history = [val]
    radius = cfg.tr_radius * max(1.0, np.linalg.norm(a[:n]))
    for it in range(1, cfg.max_inner + 1):
        gnorm = float(np.linalg.norm(grad * scale))
        if gnorm <= cfg.inner_tol:
            return HalfSpacePoint(a[n], a[:n].copy(), w, val, gnorm, it - 1, history)
        s = a[n]
        # derivatives in (v, sigma)
        g_t = grad.copy()
        g_t[n] *= s
        H_t = hess.copy()
        H_t[n, :n] *= s
        H_t[:n, n] *= s
        H_t[n, n] = s * s * hess[n, n] + s * grad[n]
        d = _tr_step(H_t, g_t, radius)
        predicted = g_t @ d + 0.5 * d @ H_t @ d
        trial = a.copy()
        trial[:n] += d[:n]
        trial[n] = s * np.exp(d[n])
        t_val, t_grad, t_hess = evaluate(trial)
        actual = t_val - val
        rho = actual / predicted if predicted > 0 else (1.0 if actual >= 0 else -1.0)
        if actual >= 0 and rho > 1e-4:
            a, val, grad, hess = trial, t_val, t_grad, t_hess
            history.append(val)
            if rho > 0.75 and np.linalg.norm(d) > 0.8 * radius:
                radius *= 2.0
        else:
            radius *= 0.25
            if radius < 1e-14 * max(1.0, np.linalg.norm(a)):
                gnorm = float(np.linalg.norm(grad * scale))
                # the Newton gain may sit below the rounding of J itself
                d_full = np.linalg.lstsq(-H_t, g_t, rcond=None)[0]
                gain = g_t @ d_full + 0.5 * d_full @ H_t @ d_full
                if gnorm <= 100 * cfg.inner_tol or gain <= 1e-13 * max(1.0, abs(val)):
                    return HalfSpacePoint(a[n], a[:n].copy(), w, val, gnorm, it, history)
                raise NonConvergence(f"inner trust region collapsed at gradient {gnorm:.3g}")
        if a[n] < 1e-12 * s0:
            raise BoundaryCollapse("ray coordinate s -> 0; lambda may sit at the gap edge")
    gnorm = float(np.linalg.norm(grad * scale))
    raise NonConvergence(f"inner solve not converged after {cfg.max_inner} steps (gradient {gnorm:.3g})")


def residual(basis: EigenBasis, coeffs, lam: float, nl: PowerNonlinearity) -> float:
    """E'-norm of ``J'_lambda(u)``."""
    return basis.dual_norm(action_gradient(basis, coeffs, lam, nl))


def envelope_gradient(basis: EigenBasis, point: HalfSpacePoint, lam: float, nl: PowerNonlinearity) -> np.ndarray:
    """Coordinates of ``d phi`` at ``point.w``: ``s * J'(u)`` restricted to ``E_n^perp``."""
    g = action_gradient(basis, point.coeffs, lam, nl)
    g[: point.v.size] = 0.0
    return point.s * g


def _outer_metric(basis, lam, n):
    """``lambda_k - lambda`` on ``E_n^perp``: the quadratic part of ``J`` as a preconditioner."""
    m = basis.eigenvalues - lam
    m[:n] = 1.0
    return m


def _riemannian_grad(basis, w, dphi, n, m):
    """Gradient in the metric ``m`` projected onto the tangent space of the E-sphere."""
    r = dphi / m
    r[:n] = 0.0
    normal = (1.0 + basis.eigenvalues) * w / m
    normal[:n] = 0.0
    return r - (np.sum(m * normal * r) / np.sum(m * normal * normal)) * normal


def _descend(basis, w, lam, n, nl, cfg):
    e = _outer_metric(basis, lam, n)
    point = inner_maximize(basis, w, lam, n, nl, cfg)
    inner_total = point.iterations
    grad = _riemannian_grad(basis, point.w, envelope_gradient(basis, point, lam, nl), n, e)
    step = 1.0 / max(1.0, np.sqrt(np.sum(e * grad * grad)))
    prev = None
    outer = 0
    for outer in range(1, cfg.max_outer + 1):
        res = residual(basis, point.coeffs, lam, nl)
        if res <= cfg.outer_tol:
            break
        gsq = float(np.sum(e * grad * grad))
        if prev is not None:
            dw = point.w - prev[0]
            dg = grad - prev[1]
            sy = float(np.sum(e * dw * dg))
            if sy > 0:
                step = float(np.sum(e * dw * dw)) / sy
        t = step
        floor = 1e-14 * max(1.0, abs(point.value))
        trial = None
        for _ in range(40):
            if 1e-4 * t * gsq < floor:
                trial = None  # the requested decrease is below the rounding of J
                break
            trial_w = e_normalize(basis, point.w - t * grad)
            try:
                trial = inner_maximize(basis, trial_w, lam, n, nl, cfg,
                                       start=(point.s, point.v) if n else None)
            except (NonConvergence, BoundaryCollapse):
                t *= 0.5
                continue
            inner_total += trial.iterations
            if trial.value <= point.value - 1e-4 * t * gsq:
                break
            t *= 0.5
        else:
            trial = None
        if trial is None or trial.value > point.value:
            log.debug("outer line search stalled at residual %.3g", res)
            break
        prev = (point.w, grad)
        point = trial
        grad = _riemannian_grad(basis, point.w, envelope_gradient(basis, point, lam, nl), n, e)
        if np.sqrt(gsq) < 1e-15:
            break
    return point, outer, inner_total


def _newton_polish(basis, coeffs, lam, nl, tol, max_steps=30):
    c = np.array(coeffs, dtype=float)
    res = residual(basis, c, lam, nl)
    for _ in range(max_steps):
        if res <= tol:
            break
        g = action_gradient(basis, c, lam, nl)
        H = action_hessian(basis, c, lam, nl)
        # translations on the torus leave near-null directions; cut them off
        delta = scipy.linalg.lstsq(H, -g, cond=1e-8, lapack_driver="gelsy")[0]
        new = c + delta
        new_res = residual(basis, new, lam, nl)
        if not new_res < res:
            break
        c, res = new, new_res
    return c, res


def _finish(basis, coeffs, lam, n, nl, restarts, outer, inner):
    res = residual(basis, coeffs, lam, nl)
    return GroundState(
        coeffs=coeffs,
        lam=lam,
        n=n,
        action=action(basis, coeffs, lam, nl),
        mass=0.5 * float(coeffs @ coeffs),
        residual=res,
        sign_changing=classify_sign(basis.synthesize(coeffs)),
        inner_iterations=inner,
        outer_iterations=outer,
        restarts=restarts,
        basis=basis,
        nl=nl,
    )


def start_directions(basis: EigenBasis, n: int, restarts: int, seed: int, initial=()) -> list:
    """``zeta_(n+1)``, any supplied directions, then seeded random ones."""
    dirs = [basis.unit(n)]
    for c in initial:
        w = np.array(c, dtype=float)
        w[:n] = 0.0
        if basis.e_norm(w) > 0:
            dirs.append(w)
    rng = np.random.default_rng(seed)
    weight = 1.0 / np.sqrt(1.0 + basis.eigenvalues)
    for _ in range(restarts - 1):
        w = rng.standard_normal(basis.size) * weight
        w[:n] = 0.0
        dirs.append(w)
    return [e_normalize(basis, w) for w in dirs]


def outer_minimize(basis: EigenBasis, lam: float, n: int, nl: PowerNonlinearity,
                   cfg: SolverConfig = SolverConfig(), initial: Sequence = ()) -> GroundState:
    """Ground state at ``lam`` in the gap above mode ``n`` (best of the restarts).

    Global minimality over the sphere is not certified.  After the
    Riemannian descent a Newton polish on ``J'(u) = 0`` drives the residual to
    ``cfg.outer_tol``; it is accepted only if it leaves the action unchanged
    to within the descent accuracy.
    """
    if cfg.truncation is not None and cfg.truncation < basis.size:
        basis = basis.truncate(cfg.truncation)
    _check_lambda(basis, lam, n)
    best = None
    outer_total = inner_total = 0
    starts = start_directions(basis, n, cfg.restarts, cfg.seed, initial)
    for w in starts:
        try:
            point, outer, inner = _descend(basis, w, lam, n, nl, cfg)
        except (NonConvergence, BoundaryCollapse, DegenerateDirection) as exc:
            log.info("start discarded: %s", exc)
            continue
        outer_total += outer
        inner_total += inner
        if best is None or point.value < best.value - 1e-12 * abs(best.value):
            best = point
    if best is None:
        raise SolverError("no start direction produced a half-space maximizer")

    coeffs = best.coeffs
    notes = []
    if cfg.polish and residual(basis, coeffs, lam, nl) > cfg.outer_tol:
        polished, res = _newton_polish(basis, coeffs, lam, nl, cfg.outer_tol)
        before = best.value
        after = action(basis, polished, lam, nl)
        drift = abs(after - before)
        scale = residual(basis, coeffs, lam, nl) * basis.e_norm(coeffs)
        if drift <= max(10.0 * scale, 1e-9 * abs(before)) and np.any(polished[n:] != 0):
            coeffs = polished
        else:
            notes.append(f"Newton polish rejected (action drift {drift:.3g})")
    state = _finish(basis, coeffs, lam, n, nl, len(starts), outer_total, inner_total)
    state.notes.extend(notes)
    if state.residual > cfg.outer_tol:
        state.converged = False
        msg = f"residual {state.residual:.3g} above tolerance {cfg.outer_tol:.3g} at lambda={lam}"
        state.notes.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return state


def verify_np_membership(basis: EigenBasis, coeffs, lam: float, n: int, nl: PowerNonlinearity,
                         tol: float = 1e-5) -> bool:
    """``u`` is off ``E_n`` and ``J'(u)`` vanishes along ``zeta_1..zeta_n`` and ``u``."""
    c = np.asarray(coeffs, dtype=float)
    above = c.copy()
    above[:n] = 0.0
    if basis.e_norm(above) <= tol:
        return False
    g = action_gradient(basis, c, lam, nl)
    bound = tol * (1.0 + basis.e_norm(c))
    return bool(np.all(np.abs(g[:n]) <= bound) and abs(g @ c) <= bound)


def half_space_dominance_check(state: GroundState, probes: int = 1000, seed: int = 0,
                               atol: float = 1e-9) -> bool:
    """Sample ``(1+s) u + v`` around the state and compare actions.

    Half of the probes are spread over the E-ball of radius ``2 ||u||_E``,
    the other half at radii down to ``1e-4 ||u||_E`` to probe the vicinity.
    """
    basis, nl, lam, n = state.basis, state.nl, state.lam, state.n
    u = state.coeffs
    ref = action(basis, u, lam, nl)
    rng = np.random.default_rng(seed)
    radius = 2.0 * basis.e_norm(u)
    sqrt_e = np.sqrt(1.0 + basis.eigenvalues[:n])
    for k in range(probes):
        scale = radius * (rng.random() if k % 2 == 0 else 10.0 ** (-4.0 * rng.random()))
        direction = rng.standard_normal(n + 1)
        direction /= np.linalg.norm(direction)
        s = float(np.clip(direction[n] * scale / radius, -1.0 + 1e-12, None))
        v = np.zeros(basis.size)
        v[:n] = direction[:n] * scale / sqrt_e
        if action(basis, (1.0 + s) * u + v, lam, nl) > ref + atol:
            return False
    return True


def classify_sign(samples, rtol: float = 1e-6) -> bool:
    """True iff the sampled function takes both signs beyond ``rtol * sup``."""
    if isinstance(samples, GroundState):
        samples = samples.samples()
    u = np.asarray(samples, dtype=float)
    top = float(np.max(np.abs(u)))
    if top == 0:
        return False
    return bool(u.min() < -rtol * top and u.max() > rtol * top)


def positivity_radius(basis: EigenBasis, coeffs, lam: float, n: int, nl: PowerNonlinearity,
                      directions: int = 256, seed: int = 0, r0: float = 1.0) -> float:
    """Doubling search for ``R`` with ``J <= 0`` on sampled rays of ``E_n + R^+ u`` beyond ``R``.

    ``J(t y)`` changes sign once along each ray, so once it is nonpositive at
    ``t = R`` it stays so for larger ``t``.
    """
    rng = np.random.default_rng(seed)
    u = np.asarray(coeffs, dtype=float)
    ys = [e_normalize(basis, u)]
    if n:
        ys.append(e_normalize(basis, basis.unit(0)))
    for _ in range(directions):
        y = np.zeros(basis.size)
        y[:n] = rng.standard_normal(n) / np.sqrt(1.0 + basis.eigenvalues[:n])
        y += abs(rng.standard_normal()) * e_normalize(basis, u)
        ys.append(e_normalize(basis, y))
    R = r0
    for _ in range(200):
        if all(action(basis, R * y, lam, nl) <= 0.0 for y in ys):
            return R
        R *= 2.0
    raise SolverError("positivity radius search did not terminate")
