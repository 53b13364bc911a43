"""``gapnls`` command line: spectrum, solve, sweep, normalize, oracle, validate.

Exit codes: 0 success, 2 configuration or input error, 3 solver failure
(or a failing validation manifest), 4 residual above tolerance (the state is
still written), 5 target mass outside the achieved range.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time

from . import __version__, fileio, masscurve, ode, solver, validate
from .fileio import ConfigError
from .graphs import TruncationClipError
from .problem import build_ode, build_problem
from .spectral import gap_at

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_RESIDUAL, EXIT_RANGE = 0, 2, 3, 4, 5

log = logging.getLogger("gapnls")


def _load(args):
    cfg = fileio.load_config(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.solver = type(cfg.solver)(**{**cfg.solver.__dict__, "seed": args.seed})
    if getattr(args, "mass_convention", None):
        cfg.mass_convention = args.mass_convention
    return cfg


def _gap(basis, n):
    if not 1 <= n < basis.size:
        raise ConfigError(f"gap index {n} outside 1..{basis.size - 1}")
    gap = gap_at(basis, n)
    if gap.length <= 0:
        raise ConfigError(f"no gap above mode {n}: lambda_{n} = lambda_{n + 1} = {gap.upper:g}")
    return gap


def _meta(path, cfg, started, **extra):
    fileio.write_meta(path, command=sys.argv[1:2], config=cfg.source, seed=cfg.seed,
                      runtime_seconds=time.perf_counter() - started, version=__version__, **extra)


def cmd_spectrum(args) -> int:
    t0 = time.perf_counter()
    cfg = _load(args)
    basis, _ = build_problem(cfg)
    fileio.write_csv(args.output, fileio.SPECTRUM_HEADER, fileio.spectrum_rows(basis.eigenvalues))
    _meta(args.output, cfg, t0, modes=basis.size)
    return EXIT_OK


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    cfg = _load(args)
    basis, nl = build_problem(cfg)
    gap = _gap(basis, args.gap)
    if not gap.lower < args.lam < gap.upper:
        raise ConfigError(f"lambda={args.lam:g} is outside the gap ({gap.lower:g}, {gap.upper:g}) above mode {args.gap}")
    state = solver.outer_minimize(basis, args.lam, args.gap, nl, cfg.solver)
    fileio.write_json(args.output, fileio.state_to_dict(state, cfg.mass_convention))
    _meta(args.output, cfg, t0, notes=state.notes)
    if state.residual > cfg.solver.outer_tol:
        print(f"residual {state.residual:.3e} exceeds tolerance {cfg.solver.outer_tol:.1e}; state written",
              file=sys.stderr)
        return EXIT_RESIDUAL
    return EXIT_OK


def _sweep(cfg, basis, nl, n, samples=None):
    sw = cfg.sweep
    return masscurve.sweep(basis, n, nl, cfg.solver, samples=int(samples or sw.get("samples", 33)),
                           spacing=sw.get("spacing", "geometric"), span=float(sw.get("span", 0.05)))


def cmd_sweep(args) -> int:
    t0 = time.perf_counter()
    cfg = _load(args)
    basis, nl = build_problem(cfg)
    _gap(basis, args.gap)
    curve = _sweep(cfg, basis, nl, args.gap, args.samples)
    fileio.write_csv(args.output, fileio.CURVE_HEADER, fileio.curve_rows(curve))
    _meta(args.output, cfg, t0, holes=curve.holes, branch_flags=curve.branch_flags)
    if curve.holes:
        print(f"{len(curve.holes)} samples failed; see the metadata sidecar", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_normalize(args) -> int:
    t0 = time.perf_counter()
    cfg = _load(args)
    basis, nl = build_problem(cfg)
    _gap(basis, args.gap)
    target = masscurve.to_internal_mass(args.mu, cfg.mass_convention)
    curve = _sweep(cfg, basis, nl, args.gap, args.samples)
    try:
        res = masscurve.find_normalized(curve, target, basis, nl, cfg.solver, rtol=args.rtol)
    except masscurve.TargetOutsideRange as exc:
        lo, hi = (masscurve.from_internal_mass(x, cfg.mass_convention) for x in exc.interval)
        print(f"target mass {args.mu:g} ({cfg.mass_convention}) outside the achieved interval "
              f"[{lo:.10g}, {hi:.10g}]", file=sys.stderr)
        return EXIT_RANGE
    doc = {
        "schema_version": fileio.SCHEMA_VERSION,
        "target_mass": args.mu,
        "target_internal": target,
        "mass_convention": cfg.mass_convention,
        "solves": res.solves,
        "state": fileio.state_to_dict(res.state, cfg.mass_convention),
        "trace": [{"lambda": l, "mass": m, "action": c} for l, m, c in res.trace],
    }
    fileio.write_json(args.output, doc)
    _meta(args.output, cfg, t0)
    return EXIT_OK


def oracle_report(cfg, what: str, lam: float, M: float) -> dict:
    nl = build_ode(cfg)
    res = ode.period(lam, nl, M)
    doc = {"schema_version": fileio.SCHEMA_VERSION, "lambda": lam, "M": M, "m": res.m, "tau": res.tau,
           "H": res.H, "nonlinearity": nl.name, "checks": {}}
    checks = doc["checks"]
    if what in ("shoot", "all"):
        tr = ode.shoot(lam, nl, M, period_hint=res.tau)
        doc.update(tau_shoot=tr.tau, energy_drift=tr.energy_drift, minimum=tr.minimum)
        checks["two_oracle"] = "pass" if abs(tr.tau - res.tau) <= 1e-6 * res.tau else "fail"
        checks["energy_drift"] = "pass" if tr.energy_drift <= 1e-8 else "fail"
    if what in ("gtilde", "all"):
        doc["gtilde"] = ode.gtilde(nl.f, M)
        doc["gtilde_inverse"] = ode.gtilde_inverse(nl.f, doc["gtilde"])
    if what in ("constants", "all"):
        edge = cfg.graph.shortest_edge if cfg.graph is not None else float(cfg.ode.get("edge_length", 3.141592653589793))
        R, gamma, s1 = ode.linf_l2_constants(edge, nl)
        doc.update(R=R, gamma=gamma, s1=s1, shortest_edge=edge)
    if what in ("checks", "all"):
        k = ode.kappa_comparison_check(lam, nl, M)
        checks["kappa_comparison"] = "n/a" if k is None else ("pass" if k else "fail")
        checks["l2_window"] = "pass" if ode.l2_window_bound_check(lam, nl, M) else "fail"
    return doc


def cmd_oracle(args) -> int:
    t0 = time.perf_counter()
    cfg = _load(args)
    try:
        doc = oracle_report(cfg, args.what, args.lam, args.M)
    except ode.AdmissibilityError as exc:
        raise ConfigError(f"nonlinearity rejected: {exc}") from exc
    fileio.write_json(args.output, doc)
    _meta(args.output, cfg, t0)
    return EXIT_SOLVER if "fail" in doc["checks"].values() else EXIT_OK


def cmd_validate(args) -> int:
    t0 = time.perf_counter()
    cfg = _load(args)
    basis, nl = build_problem(cfg)
    details = {}
    checks = validate.run_suite(cfg, basis, nl, details)
    doc = validate.manifest(cfg, checks, details)
    fileio.write_json(args.output, doc)
    _meta(args.output, cfg, t0)
    for name, verdict in doc["checks"].items():
        print(f"{verdict:5s} {name}", file=sys.stderr)
    return EXIT_OK if doc["all_pass"] else EXIT_SOLVER


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gapnls", description="Ground states in spectral gaps.")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, default_out):
        p.add_argument("config", help="YAML problem configuration")
        p.add_argument("-o", "--output", default=default_out, help="output path ('-' for stdout)")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.add_argument("--mass-convention", choices=masscurve.MASS_CONVENTIONS, default=None)

    p = sub.add_parser("spectrum", help="eigenvalues with cluster and gap table (CSV)")
    common(p, "spectrum.csv")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("solve", help="ground state at one lambda (JSON)")
    common(p, "state.json")
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--gap", type=int, required=True, help="n for the gap (lambda_n, lambda_(n+1))")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="mass-frequency curve across a gap (CSV)")
    common(p, "curve.csv")
    p.add_argument("--gap", type=int, required=True)
    p.add_argument("--samples", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("normalize", help="ground state with prescribed mass (JSON)")
    common(p, "normalized.json")
    p.add_argument("--gap", type=int, required=True)
    p.add_argument("--mu", type=float, required=True, help="target mass in the chosen convention")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--rtol", type=float, default=1e-6)
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("oracle", help="phase-plane period and amplitude report (JSON)")
    common(p, "oracle.json")
    p.add_argument("what", choices=("period", "shoot", "gtilde", "constants", "checks", "all"))
    p.add_argument("--lambda", dest="lam", type=float, default=0.0)
    p.add_argument("--M", type=float, default=1.0)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("validate", help="run the invariant suite and write a manifest (JSON)")
    common(p, "manifest.json")
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TruncationClipError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except solver.SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
