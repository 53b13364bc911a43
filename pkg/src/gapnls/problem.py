"""Turn a :class:`ProblemConfig` into a basis, a nonlinearity and an ODE ``f``."""
from __future__ import annotations

import numpy as np

from .graphs import graph_eigenbasis
from .ode import OdeNonlinearity
from .spectral import EigenBasis, PowerNonlinearity
from .torus import square_navier_eigenbasis, torus_eigenbasis

DEFAULT_GRAPH_MODES = 24


def build_basis(cfg) -> EigenBasis:
    if cfg.backend == "graph":
        count = cfg.truncation or DEFAULT_GRAPH_MODES
        return graph_eigenbasis(cfg.graph, count, nodes_per_edge=cfg.nodes_per_edge, degree=cfg.degree)
    if cfg.backend == "torus":
        basis = torus_eigenbasis(cfg.l_max)
    else:
        basis = square_navier_eigenbasis(cfg.l_max * cfg.l_max + cfg.l_max)
    if cfg.truncation is not None and cfg.truncation < basis.size:
        basis = basis.truncate(cfg.truncation)
    return basis


def build_nonlinearity(cfg, basis: EigenBasis) -> PowerNonlinearity:
    if isinstance(cfg.weight, str):
        return PowerNonlinearity.sampled(basis, cfg.p, np.loadtxt(cfg.weight))
    return PowerNonlinearity.uniform(basis, cfg.p, cfg.weight)


def build_problem(cfg):
    basis = build_basis(cfg)
    return basis, build_nonlinearity(cfg, basis)


def two_sided_power(p: float, a_plus: float = 1.0, a_minus: float = 1.0, s0: float = 1.0,
                    kappa0=None) -> OdeNonlinearity:
    """``f(t) = a_plus t^(p-1)`` for ``t >= 0`` and ``a_minus |t|^(p-2) t`` below.

    ``F(-s) = (a_minus / a_plus) F(s)``, so (f2) holds with
    ``kappa0 = max(a_plus/a_minus, a_minus/a_plus)^(1/p)`` unless given.
    """
    if a_plus <= 0 or a_minus <= 0:
        raise ValueError("coefficients must be positive")
    if kappa0 is None:
        kappa0 = max(a_plus / a_minus, a_minus / a_plus) ** (1.0 / p)

    def f(t):
        t = np.asarray(t, dtype=float)
        out = np.where(t >= 0, a_plus, a_minus) * np.abs(t) ** (p - 2.0) * t
        return out if out.ndim else float(out)

    def F(t):
        t = np.asarray(t, dtype=float)
        out = np.where(t >= 0, a_plus, a_minus) * np.abs(t) ** p / p
        return out if out.ndim else float(out)

    return OdeNonlinearity(f, F, kappa0=kappa0, s0=s0, odd=a_plus == a_minus,
                           name=f"{a_plus:g}|t|^{p - 2:g}t (+), {a_minus:g}|t|^{p - 2:g}t (-)")


def build_ode(cfg) -> OdeNonlinearity:
    spec = cfg.ode
    kind = spec.get("f", "power")
    p = float(spec.get("p", cfg.p))
    if kind == "power":
        return OdeNonlinearity.power(p)
    if kind == "two-sided":
        return two_sided_power(p, float(spec.get("a_plus", 1.0)), float(spec.get("a_minus", 1.0)),
                               float(spec.get("s0", 1.0)), spec.get("kappa0"))
    raise ValueError(f"unknown ode nonlinearity {kind!r} (power | two-sided)")
