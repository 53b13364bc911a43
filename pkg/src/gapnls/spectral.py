"""Truncated spectral representation of a nonnegative self-adjoint operator.

A function ``u`` is stored through its coefficients ``c`` in an orthonormal
eigenbasis ``zeta_1, ..., zeta_N`` of ``A``; all integrals are evaluated with
the quadrature that ships with the basis.  The quadratic part of the action is
diagonal in these coordinates, the nonlinear part is a weighted power integral.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

MERGE_RTOL = 1e-7


@dataclass(frozen=True, eq=False)
class EigenBasis:
    """Ordered eigenpairs of ``A`` sampled on a shared quadrature grid.

    Attributes
    ----------
    eigenvalues : (N,) array, nondecreasing
    values : (N, Q) array, ``values[k, q] = zeta_k(x_q)``
    weights : (Q,) quadrature weights, summing to the measure of the domain
    backend : one of ``"graph"``, ``"torus"``, ``"square-navier"``
    nodes : backend-specific description of the quadrature nodes
    evaluate : optional ``evaluate(coeffs, where)`` for off-grid evaluation
    """

    eigenvalues: np.ndarray
    values: np.ndarray
    weights: np.ndarray
    backend: str
    nodes: object = None
    evaluate: Optional[Callable] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        lam = np.asarray(self.eigenvalues, dtype=float)
        if lam.ndim != 1 or lam.size < 1:
            raise ValueError("need at least one eigenvalue")
        if np.any(np.diff(lam) < -1e-12 * (1 + np.abs(lam[1:]))):
            raise ValueError("eigenvalues must be nondecreasing")
        if lam[0] < -1e-9 * (1 + abs(lam[-1])):
            raise ValueError("operator must be nonnegative (lambda_1 >= 0)")
        if self.values.shape != (lam.size, self.weights.size):
            raise ValueError("values must have shape (N, Q)")

    @property
    def size(self) -> int:
        return self.eigenvalues.size

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    def synthesize(self, coeffs) -> np.ndarray:
        """Grid samples of ``sum_k c_k zeta_k``."""
        return np.asarray(coeffs, dtype=float) @ self.values

    def gram(self) -> np.ndarray:
        return (self.values * self.weights) @ self.values.T

    def orthonormality_residual(self) -> float:
        return float(np.max(np.abs(self.gram() - np.eye(self.size))))

    def h_norm(self, coeffs) -> float:
        return float(np.linalg.norm(coeffs))

    def e_norm(self, coeffs) -> float:
        c = np.asarray(coeffs, dtype=float)
        return float(np.sqrt(np.sum((1.0 + self.eigenvalues) * c * c)))

    def dual_norm(self, grad) -> float:
        """E'-norm of a coordinate gradient."""
        g = np.asarray(grad, dtype=float)
        return float(np.sqrt(np.sum(g * g / (1.0 + self.eigenvalues))))

    def unit(self, k: int) -> np.ndarray:
        c = np.zeros(self.size)
        c[k] = 1.0
        return c

    def truncate(self, n_modes: int, whole_clusters: bool = True) -> "EigenBasis":
        """Keep the first ``n_modes`` eigenpairs.

        With ``whole_clusters`` the cut is moved up to the end of the cluster
        containing mode ``n_modes`` so multiple eigenvalues are never split
        (unless that runs past the available modes).
        """
        m = int(min(max(n_modes, 1), self.size))
        if whole_clusters:
            lam = self.eigenvalues
            while m < self.size and _same_cluster(lam[m - 1], lam[m]):
                m += 1
        return self.restrict(np.arange(m))

    def restrict(self, indices) -> "EigenBasis":
        idx = np.asarray(indices, dtype=int)
        return EigenBasis(
            eigenvalues=self.eigenvalues[idx].copy(),
            values=self.values[idx].copy(),
            weights=self.weights,
            backend=self.backend,
            nodes=self.nodes,
            evaluate=_restricted_evaluator(self.evaluate, idx, self.size),
            meta=dict(self.meta),
        )


def _restricted_evaluator(evaluate, idx, n_full):
    if evaluate is None:
        return None

    def inner(coeffs, where):
        full = np.zeros(n_full)
        full[idx] = coeffs
        return evaluate(full, where)

    return inner


def _same_cluster(a: float, b: float) -> bool:
    return abs(b - a) <= MERGE_RTOL * (1.0 + abs(a))


@dataclass(frozen=True, eq=False)
class PowerNonlinearity:
    """``I(u) = (1/p) * integral of r |u|^p`` with ``r`` sampled on the grid."""

    p: float
    weight: np.ndarray
    measure: float

    def __post_init__(self):
        if not self.p > 2:
            raise ValueError(f"exponent must satisfy p > 2, got {self.p}")
        if not np.min(self.weight) > 0:
            raise ValueError("weight must have a positive essential infimum")

    @classmethod
    def uniform(cls, basis: EigenBasis, p: float, r: float = 1.0) -> "PowerNonlinearity":
        return cls(float(p), np.full(basis.weights.size, float(r)), basis.measure)

    @classmethod
    def sampled(cls, basis: EigenBasis, p: float, weight) -> "PowerNonlinearity":
        w = np.asarray(weight, dtype=float).ravel()
        if w.size != basis.weights.size:
            raise ValueError(
                f"weight has {w.size} samples, quadrature grid has {basis.weights.size}"
            )
        return cls(float(p), w, basis.measure)

    @property
    def r0(self) -> float:
        return float(np.min(self.weight))

    @property
    def r_max(self) -> float:
        return float(np.max(self.weight))

    @property
    def c_I(self) -> float:
        return self.r0 * self.measure ** ((2.0 - self.p) / 2.0) / self.p

    def density(self, u: np.ndarray) -> np.ndarray:
        """Pointwise ``f(u) = r |u|^{p-2} u``."""
        return self.weight * np.abs(u) ** (self.p - 2.0) * u


@dataclass(frozen=True)
class SpectralGap:
    """The open interval between the n-th and (n+1)-th eigenvalue."""

    index: int
    lower: float
    upper: float
    clipped: bool = False

    def __post_init__(self):
        if self.index < 0 or not self.lower < self.upper:
            raise ValueError(f"invalid gap {self}")

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def margin(self, lam: float) -> float:
        """Distance of ``lam`` to the nearer endpoint, relative to the length."""
        return min(lam - self.lower, self.upper - lam) / self.length

    def contains(self, lam: float, rel_margin: float = 0.0) -> bool:
        return self.margin(lam) > rel_margin


def gap_at(basis: EigenBasis, n: int) -> SpectralGap:
    """Gap ``(lambda_n, lambda_{n+1})`` of a basis (1-based ``lambda``)."""
    lam = basis.eigenvalues
    if not 0 <= n < basis.size:
        raise ValueError(f"gap index {n} outside truncation N={basis.size}")
    lower = 0.0 if n == 0 else float(lam[n - 1])
    upper = float(lam[n])
    if n > 0 and _same_cluster(lower, upper):
        raise ValueError(f"no gap at index {n}: lambda_n == lambda_(n+1) = {upper}")
    return SpectralGap(n, lower, upper)


def q_lambda(basis: EigenBasis, coeffs, lam: float) -> float:
    c = np.asarray(coeffs, dtype=float)
    return float(np.sum((basis.eigenvalues - lam) * c * c))


def nonlinear_energy(basis: EigenBasis, coeffs, nl: PowerNonlinearity) -> float:
    u = basis.synthesize(coeffs)
    return float(np.sum(basis.weights * nl.weight * np.abs(u) ** nl.p) / nl.p)


def nonlinear_gradient(basis: EigenBasis, coeffs, nl: PowerNonlinearity) -> np.ndarray:
    """Coordinates of ``I'(u)``: ``integral r |u|^{p-2} u zeta_k``."""
    u = basis.synthesize(coeffs)
    return basis.values @ (basis.weights * nl.density(u))


def action(basis: EigenBasis, coeffs, lam: float, nl: PowerNonlinearity) -> float:
    return 0.5 * q_lambda(basis, coeffs, lam) - nonlinear_energy(basis, coeffs, nl)


def action_gradient(basis: EigenBasis, coeffs, lam: float, nl: PowerNonlinearity) -> np.ndarray:
    c = np.asarray(coeffs, dtype=float)
    return (basis.eigenvalues - lam) * c - nonlinear_gradient(basis, c, nl)


def action_hessian(basis: EigenBasis, coeffs, lam: float, nl: PowerNonlinearity) -> np.ndarray:
    u = basis.synthesize(coeffs)
    curv = basis.weights * nl.weight * (nl.p - 1.0) * np.abs(u) ** (nl.p - 2.0)
    h = -(basis.values * curv) @ basis.values.T
    h[np.diag_indices_from(h)] += basis.eigenvalues - lam
    return h


def decompose(coeffs, n: int):
    """Split ``u`` into its part ``v`` in ``E_n`` and the remainder ``w``."""
    c = np.asarray(coeffs, dtype=float)
    if not 0 <= n <= c.size:
        raise ValueError(f"gap index {n} outside truncation N={c.size}")
    v = c.copy()
    v[n:] = 0.0
    w = c.copy()
    w[:n] = 0.0
    return v, w


def eigenvalue_clusters(eigenvalues) -> list[tuple[int, int]]:
    """Half-open index ranges of numerically equal eigenvalues."""
    lam = np.asarray(eigenvalues, dtype=float)
    clusters = []
    start = 0
    for k in range(1, lam.size + 1):
        if k == lam.size or not _same_cluster(lam[k - 1], lam[k]):
            clusters.append((start, k))
            start = k
    return clusters


def find_gaps(basis: EigenBasis, min_length: float = 0.0) -> list[SpectralGap]:
    """All maximal gaps longer than ``min_length``, lowest first.

    The gap whose upper endpoint is the last eigenvalue cluster of the
    truncation is marked ``clipped`` (its cluster may be incomplete).
    """
    if basis.size < 2:
        raise ValueError("need at least two eigenvalues")
    if min_length < 0:
        raise ValueError("min_length must be nonnegative")
    lam = basis.eigenvalues
    clusters = eigenvalue_clusters(lam)
    gaps = []
    if lam[0] > MERGE_RTOL and lam[0] > min_length:
        gaps.append(SpectralGap(0, 0.0, float(lam[0])))
    for (a0, a1), (b0, b1) in zip(clusters[:-1], clusters[1:]):
        lower, upper = float(lam[a1 - 1]), float(lam[b0])
        if upper - lower > max(min_length, MERGE_RTOL * (1 + abs(lower))):
            clipped = b1 == lam.size
            gaps.append(SpectralGap(a1, lower, upper, clipped))
    if gaps and gaps[-1].clipped:
        warnings.warn(
            f"gap {gaps[-1]} ends at the last retained eigenvalue; its upper "
            "cluster may be incomplete at this truncation",
            stacklevel=2,
        )
    return gaps
