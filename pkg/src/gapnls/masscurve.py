"""Mass-frequency curves across one spectral gap and normalized solutions.

A curve samples ``lambda -> (c_lambda, ||u||^2/2)`` for ground states ``u``.
The action is decreasing in ``lambda`` with one-sided derivatives bracketing
the mass, so the mass range of a gap is (nearly) an interval that bisection
in ``lambda`` can search for a prescribed mass.

Masses are stored as ``||u||^2 / 2`` throughout; :func:`to_internal_mass`
converts the conventions used at the command line.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .solver import GroundState, SolverConfig, SolverError, outer_minimize
from .spectral import EigenBasis, PowerNonlinearity, SpectralGap, gap_at

log = logging.getLogger(__name__)

MASS_CONVENTIONS = ("l2-squared", "l2", "half-l2-squared")


def to_internal_mass(mu: float, convention: str = "l2-squared") -> float:
    """Convert a user mass to ``||u||^2/2``."""
    if convention == "l2-squared":
        return mu / 2.0
    if convention == "l2":
        return mu * mu / 2.0
    if convention == "half-l2-squared":
        return mu
    raise ValueError(f"unknown mass convention {convention!r}; use one of {MASS_CONVENTIONS}")


def from_internal_mass(mass: float, convention: str = "l2-squared") -> float:
    if convention == "l2-squared":
        return 2.0 * mass
    if convention == "l2":
        return float(np.sqrt(2.0 * mass))
    if convention == "half-l2-squared":
        return mass
    raise ValueError(f"unknown mass convention {convention!r}; use one of {MASS_CONVENTIONS}")


@dataclass(eq=False)
class CurveSample:
    lam: float
    action: float
    mass: float
    residual: float
    sign_changing: bool
    state: Optional[GroundState] = field(default=None, repr=False)


@dataclass(eq=False)
class MassCurve:
    gap: SpectralGap
    n: int
    samples: list
    config: dict = field(default_factory=dict)
    branch_flags: list = field(default_factory=list)  # i: switch suspected between i and i+1
    holes: list = field(default_factory=list)  # (lambda, message) of failed solves

    def __len__(self):
        return len(self.samples)

    @property
    def lams(self) -> np.ndarray:
        return np.array([s.lam for s in self.samples])

    @property
    def actions(self) -> np.ndarray:
        return np.array([s.action for s in self.samples])

    @property
    def masses(self) -> np.ndarray:
        return np.array([s.mass for s in self.samples])

    @property
    def residuals(self) -> np.ndarray:
        return np.array([s.residual for s in self.samples])

    def max_jump(self) -> float:
        return float(np.max(np.abs(np.diff(self.actions)))) if len(self) > 1 else 0.0


def lambda_grid(gap: SpectralGap, samples: int, spacing: str = "geometric", span: float = 0.05,
                margin: float = 1e-4) -> np.ndarray:
    """Increasing sample points strictly inside the gap, denser at the right end.

    ``geometric``: distances to the upper end form a geometric sequence from
    ``(1 - margin) * length`` down to ``span`` times that, so neighbours
    differ by a fixed relative distance to the end.
    ``chebyshev``: Chebyshev-Gauss points of the gap (denser at both ends).
    Doubling a geometric grid (``2k - 1`` points) nests the old one.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    L = gap.length
    if spacing == "geometric":
        d0 = (1.0 - margin) * L
        if samples == 1:
            return np.array([gap.upper - d0 * np.sqrt(span)])
        d = d0 * span ** (np.arange(samples) / (samples - 1))
        return gap.upper - d
    if spacing == "chebyshev":
        theta = np.pi * (np.arange(samples) + 0.5) / samples
        return gap.lower + L * (1.0 - np.cos(theta)) / 2.0
    raise ValueError(f"unknown spacing {spacing!r}")


def _solve(basis, lam, n, nl, cfg, initial=()):
    try:
        return outer_minimize(basis, lam, n, nl, cfg, initial=initial), None
    except (SolverError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("NEHARI_THREADS", "1")))
    except ValueError:
        return 1


def sweep(basis: EigenBasis, n: int, nl: PowerNonlinearity, cfg: SolverConfig = SolverConfig(),
          samples: int = 33, spacing: str = "geometric", span: float = 0.05,
          lams=None, warm: bool = True) -> MassCurve:
    """Ground states along a lambda grid of the gap above mode ``n``.

    A first pass solves every sample from scratch (threaded with
    ``NEHARI_THREADS``); a second pass re-solves each sample warm-started from
    its neighbours and keeps the lower action.  Failed samples are recorded
    in ``holes`` rather than dropped silently.
    """
    if lams is None and samples < 8:
        raise ValueError("a sweep needs at least 8 samples")
    gap = gap_at(basis, n)
    grid = np.asarray(lams if lams is not None else lambda_grid(gap, samples, spacing, span), dtype=float)
    if np.any(np.diff(grid) <= 0):
        raise ValueError("lambda samples must be strictly increasing")

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        first = list(pool.map(lambda lam: _solve(basis, lam, n, nl, cfg), grid))
    states = [s for s, _ in first]
    holes = {float(lam): err for lam, (s, err) in zip(grid, first) if s is None}

    if warm:
        warm_cfg = replace(cfg, restarts=1)
        for sweep_order in (range(len(grid)), reversed(range(len(grid)))):
            for i in sweep_order:
                neighbours = [states[j].coeffs for j in (i - 1, i + 1)
                              if 0 <= j < len(grid) and states[j] is not None]
                if not neighbours:
                    continue
                st, err = _solve(basis, grid[i], n, nl, warm_cfg, initial=neighbours)
                if st is None:
                    continue
                if states[i] is None or st.action < states[i].action - 1e-12 * abs(st.action):
                    if states[i] is not None:
                        log.info("warm start lowered c at lambda=%.6g by %.3g",
                                 grid[i], states[i].action - st.action)
                    states[i] = st
                    holes.pop(float(grid[i]), None)

    curve_samples = [CurveSample(s.lam, s.action, s.mass, s.residual, s.sign_changing, s)
                     for s in states if s is not None]
    curve = MassCurve(gap, n, curve_samples,
                      config={"samples": len(grid), "spacing": spacing if lams is None else "explicit",
                              "span": span, "warm": warm},
                      holes=sorted(holes.items()))
    curve.branch_flags = branch_switch_flags(curve)
    for i in curve.branch_flags:
        log.warning("possible ground-state branch switch between lambda=%.6g and %.6g",
                    curve.samples[i].lam, curve.samples[i + 1].lam)
    for lam, err in curve.holes:
        log.warning("sample at lambda=%.6g failed: %s", lam, err)
    return curve


def branch_switch_flags(curve: MassCurve, factor: float = 5.0) -> list:
    """Indices ``i`` whose mass slope to ``i+1`` is an outlier (a jump in mass)."""
    if len(curve) < 3:
        return []
    slopes = np.abs(np.diff(curve.masses) / np.diff(curve.lams))
    ref = np.median(slopes)
    return [int(i) for i in np.flatnonzero(slopes > factor * ref + 1e-12)]


def derivative_bounds_check(curve: MassCurve, i: int, slack: Optional[float] = None,
                            rel_slack: float = 0.05) -> bool:
    """Backward and forward difference quotients of ``c`` dominate ``mass_i - slack``."""
    if not 0 < i < len(curve) - 1:
        raise ValueError("need an interior sample index")
    lam, c, m = curve.lams, curve.actions, curve.masses
    if slack is None:
        slack = rel_slack * m[i]
    back = (c[i - 1] - c[i]) / (lam[i] - lam[i - 1])
    fwd = (c[i] - c[i + 1]) / (lam[i + 1] - lam[i])
    return bool(back >= m[i] - slack and fwd >= m[i] - slack)


def mass_range(curve: MassCurve):
    """``(mass_min, mass_max, g_estimate)``; the estimate is a lower estimate of ``g_n``."""
    if len(curve) == 0:
        raise ValueError("empty curve")
    m = curve.masses
    estimate = None
    if len(curve) >= 3:
        lam, c = curve.lams, curve.actions
        fwd = (c[1:-1] - c[2:]) / (lam[2:] - lam[1:-1])
        estimate = float(np.max(fwd))
    return float(m.min()), float(m.max()), estimate


class TargetOutsideRange(ValueError):
    def __init__(self, target, lo, hi):
        super().__init__(f"target mass {target:.6g} outside the achieved interval [{lo:.6g}, {hi:.6g}]")
        self.target, self.interval = target, (lo, hi)


class BisectionStagnation(SolverError):
    pass


@dataclass(eq=False)
class NormalizedResult:
    state: GroundState
    solves: int
    trace: list  # (lambda, mass, action)


def find_normalized(curve: MassCurve, target: float, basis: EigenBasis, nl: PowerNonlinearity,
                    cfg: SolverConfig = SolverConfig(), rtol: float = 1e-6,
                    max_solves: int = 40) -> NormalizedResult:
    """Ground state with ``||u||^2/2 = target`` by bisection in ``lambda``.

    The bracket is the adjacent sample pair enclosing ``target`` with the
    smallest lambda-width.  Every step re-solves warm-started from both
    bracket ends and keeps the lower action.
    """
    lo, hi, _ = mass_range(curve)
    if not lo <= target <= hi:
        raise TargetOutsideRange(target, lo, hi)
    samples = curve.samples
    for s in samples:
        if abs(s.mass - target) <= rtol * target:
            return NormalizedResult(s.state, 0, [(s.lam, s.mass, s.action)])
    pairs = [(i, i + 1) for i in range(len(samples) - 1)
             if (samples[i].mass - target) * (samples[i + 1].mass - target) < 0]
    i, j = min(pairs, key=lambda ij: samples[ij[1]].lam - samples[ij[0]].lam)
    left, right = samples[i].state, samples[j].state
    warm_cfg = replace(cfg, restarts=1)
    trace = []
    for k in range(1, max_solves + 1):
        lam = 0.5 * (left.lam + right.lam)
        st = outer_minimize(basis, lam, curve.n, nl, warm_cfg, initial=(left.coeffs, right.coeffs))
        trace.append((lam, st.mass, st.action))
        if abs(st.mass - target) <= rtol * target:
            return NormalizedResult(st, k, trace)
        if (left.mass - target) * (st.mass - target) < 0:
            right = st
        else:
            left = st
        if right.lam - left.lam <= 1e-14 * (1.0 + abs(lam)):
            raise BisectionStagnation(
                f"mass jumps from {left.mass:.8g} to {right.mass:.8g} at lambda={lam:.12g}; "
                "possible ground-state branch switch"
            )
    raise BisectionStagnation(f"no mass within rtol={rtol} after {max_solves} solves")


def interval_fill_check(curve: MassCurve, i: int, j: int, basis: EigenBasis, nl: PowerNonlinearity,
                        cfg: SolverConfig = SolverConfig(), refinements: int = 4) -> bool:
    """Refining between samples ``i < j`` hits the middle of their mass interval.

    True if a sample with mass within ``0.1 * |m_j - m_i|`` of the midpoint
    appears after at most ``refinements`` bisections in lambda.
    """
    a, b = curve.samples[i], curve.samples[j]
    m_mid = 0.5 * (a.mass + b.mass)
    width = abs(b.mass - a.mass)
    warm_cfg = replace(cfg, restarts=1)
    left, right = a.state, b.state
    for _ in range(refinements):
        lam = 0.5 * (left.lam + right.lam)
        st = outer_minimize(basis, lam, curve.n, nl, warm_cfg, initial=(left.coeffs, right.coeffs))
        if abs(st.mass - m_mid) <= 0.1 * width:
            return True
        if (st.mass - m_mid) * (left.mass - m_mid) > 0:
            left = st
        else:
            right = st
    return False
