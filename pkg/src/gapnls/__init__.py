"""Ground states of nonlinear problems in spectral gaps.

Spectral bases (metric graphs, the flat torus), a Nehari-Pankov ground
state solver, mass-frequency curves, and a phase-plane ODE oracle.
"""
from .graphs import DIRICHLET, KIRCHHOFF, Delta, MetricGraph, assemble, eigenbasis, graph_eigenbasis
from .masscurve import MassCurve, find_normalized, mass_range, sweep
from .ode import OdeNonlinearity, period, shoot
from .solver import GroundState, SolverConfig, inner_maximize, outer_minimize
from .spectral import EigenBasis, PowerNonlinearity, SpectralGap, action, find_gaps, gap_at
from .torus import gap_chain, r2, tail_sum_d, torus_eigenbasis

__version__ = "0.1.0"

__all__ = [
    "DIRICHLET", "KIRCHHOFF", "Delta", "MetricGraph", "assemble", "eigenbasis", "graph_eigenbasis",
    "MassCurve", "find_normalized", "mass_range", "sweep",
    "OdeNonlinearity", "period", "shoot",
    "GroundState", "SolverConfig", "inner_maximize", "outer_minimize",
    "EigenBasis", "PowerNonlinearity", "SpectralGap", "action", "find_gaps", "gap_at",
    "gap_chain", "r2", "tail_sum_d", "torus_eigenbasis",
]
