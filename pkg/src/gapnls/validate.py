"""Invariant suite run by ``gapnls validate``.

Each check returns ``True``/``False`` (or ``None`` when it does not apply
to the configured backend).  :func:`run_suite` collects them into a manifest
``{"checks": {name: "pass" | "fail" | "n/a"}, "all_pass": bool}``.
"""
from __future__ import annotations

import logging
import math
import time
import warnings

import numpy as np

from . import graphs, masscurve, ode, solver, spectral, torus
from .graphs import DIRICHLET, KIRCHHOFF, Delta, MetricGraph

log = logging.getLogger(__name__)


# -- eigenbasis core -----------------------------------------------------------

def check_orthonormality(basis, tol=1e-8):
    return basis.orthonormality_residual() <= tol


def check_q_homogeneity(basis, lam, rng, trials=5):
    for _ in range(trials):
        u = rng.standard_normal(basis.size) / np.sqrt(1.0 + basis.eigenvalues)
        t = rng.uniform(-5, 5)
        lhs, rhs = spectral.q_lambda(basis, t * u, lam), t * t * spectral.q_lambda(basis, u, lam)
        if abs(lhs - rhs) > 1e-12 * (abs(rhs) + 1e-300) + 1e-300:
            return False
    return True


def check_gradient_fd(basis, lam, nl, rng, trials=5, rtol=1e-5):
    """Central differences of the action along all coordinates, ``N <= 16``."""
    small = basis.truncate(min(16, basis.size), whole_clusters=False)
    for _ in range(trials):
        u = rng.standard_normal(small.size) / np.sqrt(1.0 + small.eigenvalues)
        g = spectral.action_gradient(small, u, lam, nl)
        h = 1e-6 * small.e_norm(u)
        fd = np.empty(small.size)
        for k in range(small.size):
            e = np.zeros(small.size)
            e[k] = h
            fd[k] = (spectral.action(small, u + e, lam, nl) - spectral.action(small, u - e, lam, nl)) / (2 * h)
        if np.linalg.norm(fd - g) > rtol * np.linalg.norm(g):
            return False
    return True


def check_energy_positive(basis, nl, rng, trials=5):
    return all(spectral.nonlinear_energy(basis, rng.standard_normal(basis.size), nl) > 0 for _ in range(trials))


def check_nehari_identity(state):
    basis, nl, u = state.basis, state.nl, state.coeffs
    I = spectral.nonlinear_energy(basis, u, nl)
    gI = spectral.nonlinear_gradient(basis, u, nl) @ u
    lhs = 0.5 * gI - I
    return lhs > 0 and abs(lhs - (0.5 - 1.0 / nl.p) * nl.p * I) <= 1e-10 * abs(lhs)


# -- metric graph --------------------------------------------------------------

def check_kirchhoff_flux(basis, modes=10):
    g = basis.meta["pair"].graph
    kv = [v for v in range(g.n_vertices) if g.condition(v) == KIRCHHOFF]
    for k in range(min(modes, basis.size)):
        c = basis.unit(k)
        scale = graphs.max_derivative(basis, c)
        for v in kv:
            if abs(graphs.vertex_flux(basis, c, v)) > 1e-3 * max(scale, 1e-300):
                return False
    return True


def check_delta_monotone(graph: MetricGraph, nodes, count=10):
    """Raise the strength at one non-Dirichlet vertex by 1."""
    free = [v for v in range(graph.n_vertices) if graph.condition(v) != DIRICHLET]
    if not free:
        return None
    v = free[0]
    cond = graph.condition(v)
    alpha = cond.alpha if isinstance(cond, Delta) else 0.0
    conds = {u: graph.condition(u) for u in range(graph.n_vertices)}
    conds[v] = Delta(alpha + 1.0)
    stiffer = MetricGraph(graph.n_vertices, graph.edges, conds)
    a = graphs.graph_eigenbasis(graph, count, nodes_per_edge=nodes).eigenvalues
    b = graphs.graph_eigenbasis(stiffer, count, nodes_per_edge=nodes).eigenvalues
    return bool(np.all(b >= a - 1e-9 * (1.0 + np.abs(a))))


def check_h_convergence(graph: MetricGraph, modes=10, coarse=33):
    """P2 eigenvalue errors against a high-order reference drop >= 8x when h halves."""
    ref = graphs.graph_eigenbasis(graph, modes, nodes_per_edge=129, degree=8).eigenvalues
    e1 = np.abs(graphs.graph_eigenbasis(graph, modes, nodes_per_edge=coarse, degree=2).eigenvalues - ref)
    e2 = np.abs(graphs.graph_eigenbasis(graph, modes, nodes_per_edge=2 * coarse - 1, degree=2).eigenvalues - ref)
    mask = e1 > 1e-9 * (1.0 + ref)
    return bool(np.all(e1[mask] >= 8.0 * e2[mask]))


def check_weyl(graph: MetricGraph, target=50, tol=0.05):
    L = graph.total_length
    count = target + 20
    basis = graphs.graph_eigenbasis(graph, count, nodes_per_edge=257)
    K = float(basis.eigenvalues[target - 1])
    return abs(graphs.weyl_ratio(basis, K, L) - 1.0) <= tol


# -- torus ---------------------------------------------------------------------

def brute_force_spectrum(limit: int) -> dict:
    """``{eigenvalue: multiplicity}`` of the torus bilaplacian up to ``limit``."""
    out = {}
    k = math.isqrt(math.isqrt(limit))
    for a in range(-k, k + 1):
        for b in range(-k, k + 1):
            ev = (a * a + b * b) ** 2
            if ev <= limit:
                out[ev] = out.get(ev, 0) + 1
    return out


def check_torus_exact(limit=10_000):
    modes = torus.torus_modes(math.isqrt(limit))
    got = {}
    for m in modes:
        if m.eigenvalue <= limit:
            got[m.eigenvalue] = got.get(m.eigenvalue, 0) + 1
    return got == brute_force_spectrum(limit)


def check_gauss_circle(J=10_000):
    cum = np.cumsum(torus.r2_table(J))
    return all(int(cum[j]) == torus.lattice_count(j) for j in (0, 1, 2, 10, 99, 1000, J))


def check_gap_chain(l_max):
    for rec in torus.gap_chain(l_max):
        if rec.lambda_upper - rec.lambda_probe != 2 * rec.ell ** 2 - 1 or rec.lambda_n > rec.lambda_probe:
            return False
    return True


def check_tail_enclosures(l_max, J=200):
    for rec in torus.gap_chain(l_max):
        a = torus.tail_sum_d(rec.n_ell, rec.lambda_probe, J)
        b = torus.tail_sum_d(rec.n_ell, rec.lambda_probe, 2 * J)
        if max(a.value, b.value) > min(a.upper, b.upper):
            return False
    return True


def check_square_navier(k_max_sq=50):
    basis = torus.square_navier_eigenbasis(k_max_sq)
    expect = sorted((a * a + b * b) ** 2 for a in range(1, 8) for b in range(1, 8) if a * a + b * b <= k_max_sq)
    return bool(np.array_equal(basis.eigenvalues, np.array(expect, dtype=float))
                and basis.orthonormality_residual() <= 1e-8)


def check_linf_tail(basis, n, lam, rng, trials=5):
    for _ in range(trials):
        v = np.zeros(basis.size)
        v[n:] = rng.standard_normal(basis.size - n)
        if not torus.linf_tail_inequality_check(basis, v, n, lam):
            return False
    return True


# -- solver and curves ---------------------------------------------------------

def pick_gap(basis, backend, l_max=None):
    if backend == "torus":
        return torus.gap_record(2).n_ell
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # the clipped top gap is never picked
        gaps = [g for g in spectral.find_gaps(basis) if g.index >= 1 and not g.clipped]
    if not gaps:
        raise ValueError("no spectral gap above the first eigenvalue in the truncated basis")
    return gaps[0].index


def check_inner_unique(basis, lam, n, nl, cfg, w, rng, starts=5):
    pts = []
    for _ in range(starts):
        s = math.exp(rng.uniform(-1, 1)) * solver.ray_scale_initial(basis, w, lam, nl)
        v = rng.standard_normal(n) * 0.1
        pts.append(solver.inner_maximize(basis, w, lam, n, nl, cfg, start=(s, v)).coeffs)
    return all(basis.e_norm(p - pts[0]) <= 1e-6 * max(1.0, basis.e_norm(pts[0])) for p in pts[1:])


def check_monotone_ascent(point):
    h = np.asarray(point.history)
    return bool(np.all(np.diff(h) >= -1e-12 * np.abs(h[1:])))


def check_envelope(basis, lam, n, nl, cfg, w, rng, trials=3, rtol=1e-4):
    point = solver.inner_maximize(basis, w, lam, n, nl, cfg)
    dphi = solver.envelope_gradient(basis, point, lam, nl)
    e = 1.0 + basis.eigenvalues
    for _ in range(trials):
        t = np.zeros(basis.size)
        t[n:] = rng.standard_normal(basis.size - n) / np.sqrt(e[n:])
        t -= np.sum(e * t * point.w) * point.w
        t /= basis.e_norm(t)
        h = 1e-5

        def phi(x):
            ww = solver.e_normalize(basis, point.w + x * t)
            return solver.inner_maximize(basis, ww, lam, n, nl, cfg, start=(point.s, point.v)).value

        fd = (phi(h) - phi(-h)) / (2 * h)
        exact = float(dphi @ t)
        if abs(fd - exact) > rtol * max(abs(exact), 1e-3 * np.linalg.norm(dphi)):
            return False
    return True


def run_suite(cfg, basis, nl, details=None) -> dict:
    rng = np.random.default_rng(cfg.seed)
    scfg = cfg.solver
    checks = {}
    details = details if details is not None else {}

    def record(name, fn, *a, **k):
        t0 = time.perf_counter()
        try:
            ok = fn(*a, **k)
        except Exception as exc:  # a crashing check is a failing check
            log.warning("check %s raised %s: %s", name, type(exc).__name__, exc)
            details[name] = f"{type(exc).__name__}: {exc}"
            ok = False
        checks[name] = "n/a" if ok is None else ("pass" if ok else "fail")
        log.info("%-32s %s (%.1fs)", name, checks[name], time.perf_counter() - t0)
        return ok

    n = pick_gap(basis, cfg.backend, cfg.l_max)
    gap = spectral.gap_at(basis, n)
    lam = 0.5 * (gap.lower + gap.upper)
    details["gap"] = {"n": n, "lower": gap.lower, "upper": gap.upper, "lambda": lam}

    record("core.orthonormality", check_orthonormality, basis)
    record("core.q_homogeneity", check_q_homogeneity, basis, lam, rng)
    record("core.gradient_fd", check_gradient_fd, basis, lam, nl, rng)
    record("core.energy_positive", check_energy_positive, basis, nl, rng)

    if cfg.backend == "graph":
        record("graph.kirchhoff_flux", check_kirchhoff_flux, basis)
        record("graph.delta_monotone", check_delta_monotone, cfg.graph, min(cfg.nodes_per_edge, 129))
        record("graph.h_convergence", check_h_convergence, cfg.graph)
        record("graph.weyl", check_weyl, cfg.graph)
    else:
        for name in ("graph.kirchhoff_flux", "graph.delta_monotone", "graph.h_convergence", "graph.weyl"):
            checks[name] = "n/a"
    if cfg.backend == "torus":
        record("torus.exactness", check_torus_exact)
        record("torus.gauss_circle", check_gauss_circle)
        record("torus.r2_divisor", lambda: all(torus.r2_divisor_bound_check(j) for j in range(1, 2001)))
        record("torus.gap_chain", check_gap_chain, cfg.l_max)
        record("torus.tail_enclosures", check_tail_enclosures, cfg.l_max)
        record("torus.square_navier", check_square_navier)
    else:
        for name in ("torus.exactness", "torus.gauss_circle", "torus.r2_divisor", "torus.gap_chain",
                     "torus.tail_enclosures", "torus.square_navier"):
            checks[name] = "n/a"
    record("torus.linf_tail", check_linf_tail, basis, n, lam, rng)

    state = None
    try:
        state = solver.outer_minimize(basis, lam, n, nl, scfg)
    except solver.SolverError as exc:
        details["solve"] = str(exc)
    if state is None:
        for name in ("solver.converged", "solver.positivity", "solver.np_membership", "solver.dominance",
                     "solver.boundedness", "core.nehari_identity"):
            checks[name] = "fail"
    else:
        details["state"] = {"action": state.action, "mass": state.mass, "residual": state.residual}
        record("solver.converged", lambda: state.converged)
        record("solver.positivity", lambda: state.action > 0 and state.mass > 0)
        record("solver.np_membership", solver.verify_np_membership, basis, state.coeffs, lam, n, nl)
        record("solver.dominance", solver.half_space_dominance_check, state, 1000, cfg.seed)
        record("solver.boundedness", lambda: state.basis.e_norm(state.coeffs)
               <= solver.positivity_radius(state.basis, state.coeffs, lam, n, nl, seed=cfg.seed))
        record("core.nehari_identity", check_nehari_identity, state)
    w = np.zeros(basis.size)
    w[n:] = rng.standard_normal(basis.size - n) / np.sqrt(1.0 + basis.eigenvalues[n:])
    w = solver.e_normalize(basis, w)
    record("solver.inner_unique", check_inner_unique, basis, lam, n, nl, scfg, w, rng)
    record("solver.monotone_ascent", lambda: check_monotone_ascent(solver.inner_maximize(basis, w, lam, n, nl, scfg)))
    record("solver.envelope", check_envelope, basis, lam, n, nl, scfg, w, rng)

    curve = None
    try:
        curve = masscurve.sweep(basis, n, nl, scfg, samples=int(cfg.sweep.get("samples", 33)),
                                spacing=cfg.sweep.get("spacing", "geometric"),
                                span=float(cfg.sweep.get("span", 0.05)))
    except (ValueError, solver.SolverError) as exc:
        details["sweep"] = str(exc)
    if curve is None or curve.holes:
        for name in ("mass.decreasing", "mass.derivative_bounds", "mass.interval_fill", "mass.samples_valid"):
            checks[name] = "fail"
    else:
        record("mass.decreasing", lambda: bool(np.all(np.diff(curve.actions) < 0)))
        record("mass.derivative_bounds", lambda: all(
            masscurve.derivative_bounds_check(curve, i) or (i in curve.branch_flags or i - 1 in curve.branch_flags)
            for i in range(1, len(curve) - 1)))
        lo, hi = int(np.argmin(curve.masses)), int(np.argmax(curve.masses))
        record("mass.interval_fill", masscurve.interval_fill_check, curve, min(lo, hi), max(lo, hi), basis, nl, scfg)
        record("mass.samples_valid", lambda: all(
            solver.verify_np_membership(s.state.basis, s.state.coeffs, s.lam, n, nl)
            and solver.half_space_dominance_check(s.state, 200, cfg.seed) for s in curve.samples))

    f_nl = ode.OdeNonlinearity.power(cfg.p)
    record("ode.two_oracle", check_two_oracle, cfg.p)
    record("ode.energy_amplitude", check_energy_amplitude, cfg.p)
    edge = cfg.graph.shortest_edge if cfg.backend == "graph" else math.pi
    record("ode.period_majorant", check_period_majorant, f_nl, edge)
    if cfg.backend == "graph" and state is not None:
        record("ode.cross_validation", check_cross_validation, state, f_nl, gap.upper)
    else:
        checks["ode.cross_validation"] = "n/a"
    return checks


def check_two_oracle(p, lams=(0.0, 1.0, 10.0), Ms=(0.5, 1.0, 4.0), rtol=1e-6):
    nl = ode.OdeNonlinearity.power(p)
    for lam in lams:
        for M in Ms:
            a = ode.period(lam, nl, M).tau
            b = ode.shoot(lam, nl, M, period_hint=a).tau
            if abs(a - b) > rtol * a:
                return False
    return True


def check_energy_amplitude(p, lam=1.0, M=1.0):
    nl = ode.OdeNonlinearity.power(p)
    res = ode.period(lam, nl, M)
    tr = ode.shoot(lam, nl, M, periods=2.2, period_hint=res.tau)
    return tr.energy_drift <= 1e-8 and abs(tr.minimum + res.m) <= 1e-8


def check_period_majorant(nl, edge, lams=(0.0, 1.0, 10.0, 100.0)):
    s1 = ode.find_s1(nl, edge / 2.0)
    return all(ode.period(lam, nl, M).tau <= edge / 2.0 for lam in lams for M in (s1, 2 * s1, 10 * s1))


def check_cross_validation(state, nl, upper):
    worst, top = ode.ode_residual(state, nl.f)
    ok = worst <= 1e-3 * top and ode.linf_lower_bound_check(state, upper, nl.f)
    edges = state.basis.meta["pair"].graph.edges
    if len(edges) == 1:
        M = ode.sup_norm(state)
        tau = ode.period(state.lam, nl, M).tau
        z = ode.interior_sign_changes(state)
        ok = ok and abs((z + 1) * tau / 2.0 - edges[0][2]) <= 1e-3 * edges[0][2]
    return ok


def manifest(cfg, checks, details=None) -> dict:
    return {
        "schema_version": 1,
        "backend": cfg.backend,
        "checks": dict(sorted(checks.items())),
        "all_pass": all(v != "fail" for v in checks.values()),
        "details": details or {},
    }
