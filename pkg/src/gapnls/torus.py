"""Bilaplacian on the flat torus, sums of two squares and the gap estimates.

Eigenfunctions of the bilaplacian on ``S^1 x S^1`` are the real Fourier
products ``psi_(k1,k2)`` with eigenvalue ``(k1^2 + k2^2)^2``, so the
multiplicity of ``j^2`` is the number ``r2(j)`` of ordered representations
``j = k1^2 + k2^2``.  Besides the basis this module carries the closed-form
bounds used to certify numerical ground states: the action ceiling, the
tail sum ``d(n, lambda)`` with a rigorous remainder, and the L2 lower bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .spectral import EigenBasis, SpectralGap

INV_PI = 1.0 / math.pi


# -- number theory -----------------------------------------------------------

def r2(j: int) -> int:
    """Ordered representations ``j = k1^2 + k2^2`` by enumeration over ``k1``."""
    j = int(j)
    if j < 0:
        raise ValueError("r2 is defined for j >= 0")
    count = 0
    for k1 in range(-math.isqrt(j), math.isqrt(j) + 1):
        rest = j - k1 * k1
        k2 = math.isqrt(rest)
        if k2 * k2 == rest:
            count += 1 if k2 == 0 else 2
    return count


def r2_table(J: int) -> np.ndarray:
    """``r2(0..J)`` by binning every lattice point of the disk of radius sqrt(J)."""
    s = math.isqrt(J)
    k = np.arange(-s, s + 1)
    j = (k[:, None] ** 2 + k[None, :] ** 2).ravel()
    return np.bincount(j[j <= J], minlength=J + 1)


def divisor_count(j: int) -> int:
    """Number of divisors of ``j >= 1`` by trial division."""
    if j < 1:
        raise ValueError("divisor_count needs j >= 1")
    count = 0
    for i in range(1, math.isqrt(j) + 1):
        if j % i == 0:
            count += 1 if i * i == j else 2
    return count


def divisor_table(J: int) -> np.ndarray:
    d = np.zeros(J + 1, dtype=np.int64)
    for i in range(1, J + 1):
        d[i::i] += 1
    return d


def r2_divisor_bound_check(j: int) -> bool:
    if j < 1:
        raise ValueError("need j >= 1")
    return r2(j) <= 4 * divisor_count(j)


def lattice_count(J: int) -> int:
    """``#{k in Z^2 : |k|^2 <= J}``, i.e. ``sum_{j <= J} r2(j)``."""
    if J < 0:
        return 0
    return sum(2 * math.isqrt(J - k * k) + 1 for k in range(-math.isqrt(J), math.isqrt(J) + 1))


def lattice_count_upper(x: float) -> float:
    """Area majorant ``pi (sqrt(x) + 1/sqrt(2))^2`` of the disk count."""
    return math.pi * (math.sqrt(x) + math.sqrt(0.5)) ** 2


# -- modes and bases ---------------------------------------------------------

def _gamma(k: int) -> float:
    return 1.0 / math.sqrt(2.0 * math.pi) if k == 0 else 1.0 / math.sqrt(math.pi)


@dataclass(frozen=True, order=True)
class FourierMode:
    k1: int
    k2: int

    @property
    def j(self) -> int:
        return self.k1 * self.k1 + self.k2 * self.k2

    @property
    def eigenvalue(self) -> int:
        return self.j * self.j

    @property
    def laplace_eigenvalue(self) -> int:
        return self.j

    @property
    def norm_factor(self) -> float:
        return _gamma(self.k1) * _gamma(self.k2)

    def __call__(self, x1, x2):
        a = np.sin(self.k1 * np.asarray(x1)) if self.k1 >= 1 else np.cos(self.k1 * np.asarray(x1))
        b = np.sin(self.k2 * np.asarray(x2)) if self.k2 >= 1 else np.cos(self.k2 * np.asarray(x2))
        return self.norm_factor * a * b


def torus_modes(max_j: int) -> list[FourierMode]:
    """Modes with ``k1^2 + k2^2 <= max_j``, by eigenvalue then ``(k1, k2)``."""
    s = math.isqrt(max_j)
    modes = [FourierMode(a, b) for a in range(-s, s + 1) for b in range(-s, s + 1) if a * a + b * b <= max_j]
    return sorted(modes, key=lambda m: (m.j, m.k1, m.k2))


def _grid_size(kmax: int, grid: Optional[int]) -> int:
    g = grid if grid is not None else 4 * kmax + 4  # exact for quartic integrands
    if g < 4 * kmax + 1:
        raise ValueError(f"grid {g} under-resolves quartic integrands of modes up to |k| = {kmax}")
    return g


def torus_eigenbasis(l_max: int, buffer: Optional[int] = None, grid: Optional[int] = None,
                     max_j: Optional[int] = None) -> EigenBasis:
    """Eigenbasis of the bilaplacian on the torus ``[0, 2 pi)^2``.

    All modes with ``k1^2 + k2^2 <= l_max^2 + buffer`` (default buffer
    ``l_max``) are kept, or ``<= max_j`` if given.  The quadrature is the
    uniform tensor trapezoid rule on a ``grid x grid`` periodic lattice.
    """
    if l_max < 2 and max_j is None:
        raise ValueError("l_max must be at least 2")
    if max_j is None:
        max_j = l_max * l_max + (l_max if buffer is None else buffer)
    modes = torus_modes(max_j)
    kmax = max(max(abs(m.k1), abs(m.k2)) for m in modes)
    g = _grid_size(kmax, grid)
    x = 2.0 * np.pi * np.arange(g) / g
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    values = np.stack([m(X1, X2).ravel() for m in modes])
    weights = np.full(g * g, (2.0 * np.pi / g) ** 2)
    lam = np.array([m.eigenvalue for m in modes], dtype=float)

    def evaluate(coeffs, where):
        x1, x2 = where
        return sum(c * m(x1, x2) for c, m in zip(coeffs, modes) if c != 0.0)

    return EigenBasis(lam, values, weights, "torus", nodes=(X1.ravel(), X2.ravel()),
                      evaluate=evaluate, meta={"modes": modes, "grid": g, "C_inf": INV_PI})


def square_navier_eigenbasis(k_max_sq: int, grid: Optional[int] = None, laplacian: bool = False) -> EigenBasis:
    """Sine modes ``(2/pi) sin(k1 x) sin(k2 y)`` on ``(0, pi)^2``, ``k_i >= 1``.

    Eigenvalues ``(k1^2 + k2^2)^2`` (bilaplacian with Navier conditions) or
    ``k1^2 + k2^2`` with ``laplacian=True``.  Midpoint quadrature.
    """
    s = math.isqrt(k_max_sq)
    pairs = sorted(
        ((a, b) for a in range(1, s + 1) for b in range(1, s + 1) if a * a + b * b <= k_max_sq),
        key=lambda ab: (ab[0] ** 2 + ab[1] ** 2, ab),
    )
    if not pairs:
        raise ValueError("k_max_sq must be at least 2")
    kmax = max(max(a, b) for a, b in pairs)
    g = _grid_size(kmax, grid)
    x = (np.arange(g) + 0.5) * np.pi / g
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    values = np.stack([(2.0 / np.pi) * np.sin(a * X1) * np.sin(b * X2) for a, b in pairs])
    values = values.reshape(len(pairs), -1)
    weights = np.full(g * g, (np.pi / g) ** 2)
    power = 1 if laplacian else 2
    lam = np.array([(a * a + b * b) ** power for a, b in pairs], dtype=float)

    def evaluate(coeffs, where):
        x1, x2 = where
        return sum(c * (2.0 / np.pi) * np.sin(a * np.asarray(x1)) * np.sin(b * np.asarray(x2))
                   for c, (a, b) in zip(coeffs, pairs) if c != 0.0)

    return EigenBasis(lam, values, weights, "square-navier", nodes=(X1.ravel(), X2.ravel()),
                      evaluate=evaluate, meta={"modes": pairs, "grid": g, "C_inf": 2.0 / np.pi})


# -- gap chain ---------------------------------------------------------------

@dataclass(frozen=True)
class GapChainRecord:
    ell: int
    lambda_upper: int
    lambda_probe: int
    gap_length: int  # upper - probe = 2 ell^2 - 1
    n_ell: int
    lambda_n: int

    def gap(self) -> SpectralGap:
        return SpectralGap(self.n_ell, float(self.lambda_n), float(self.lambda_upper))


def gap_record(ell: int) -> GapChainRecord:
    if ell < 2:
        raise ValueError("ell must be at least 2")
    below = ell * ell - 1
    table = r2_table(below)
    j_lower = int(np.flatnonzero(table)[-1])
    return GapChainRecord(
        ell=ell,
        lambda_upper=ell ** 4,
        lambda_probe=below ** 2,
        gap_length=ell ** 4 - below ** 2,
        n_ell=int(table.sum()),
        lambda_n=j_lower ** 2,
    )


def gap_chain(l_max: int) -> list[GapChainRecord]:
    return [gap_record(ell) for ell in range(2, l_max + 1)]


# -- tail sums and closed-form bounds ------------------------------------------

class TailSum(NamedTuple):
    value: float
    tail_bound: float

    @property
    def upper(self) -> float:
        return self.value + self.tail_bound


class CutoffTooSmall(ValueError):
    pass


def tail_sum_d(n: int, lam: float, J: int) -> TailSum:
    """Enclosure of ``d(n, lam) = sum_{k > n} 1/(lambda_k - lam)`` on the torus.

    ``value`` sums the modes with ``k1^2 + k2^2 <= J`` exactly.  For the rest,
    partial summation against the lattice count ``N(t) <= pi (sqrt t + 1/sqrt 2)^2``
    gives

        tail <= (N_hi(J) - N(J)) / (J^2 - lam)
                + pi / (1 - lam/J^2) * (1/J + (sqrt 2 / 3) J^(-3/2)).
    """
    if J * J <= 2 * lam:
        raise ValueError(f"cutoff J={J} needs J^2 > 2*lambda = {2 * lam}")
    table = r2_table(J)
    cum = np.cumsum(table)
    if n >= cum[-1]:
        raise CutoffTooSmall(f"cutoff J={J} holds only {cum[-1]} modes, n={n}")
    j0 = int(np.searchsorted(cum, n, side="right"))  # first j with N(j) > n
    if not lam < j0 * j0:
        raise ValueError(f"lambda={lam} is not below lambda_(n+1)={j0 * j0}")
    j = np.arange(j0, J + 1, dtype=float)
    counts = table[j0:].astype(float)
    counts[0] = cum[j0] - n
    value = float(np.sum(counts / (j * j - lam)))
    NJ = float(cum[-1])
    bound = (lattice_count_upper(J) - NJ) / (J * J - lam)
    bound += math.pi / (1.0 - lam / (J * J)) * (1.0 / J + math.sqrt(2.0) / 3.0 * J ** -1.5)
    if bound > value:
        raise CutoffTooSmall(f"tail bound {bound:.3g} exceeds the partial sum {value:.3g}; raise J")
    return TailSum(value, bound)


def r2_sqrt_majorant_check(J: int) -> bool:
    """``r2(j) <= 8 sqrt(j)`` for ``1 <= j <= J`` by enumeration."""
    t = r2_table(J)[1:]
    return bool(np.all(t <= 8.0 * np.sqrt(np.arange(1, J + 1))))


def action_upper_bound(p: float, c_I: float, gap: SpectralGap, lam: float) -> float:
    """Ceiling ``(p-2) / (2 c_I^(2/(p-2)) p^(p/(p-2))) * (upper - lam)^(p/(p-2))``."""
    if not p > 2 or not c_I > 0:
        raise ValueError("need p > 2 and c_I > 0")
    if not gap.lower <= lam < gap.upper:
        raise ValueError(f"lambda={lam} outside [{gap.lower}, {gap.upper})")
    e = p / (p - 2.0)
    return (p - 2.0) / (2.0 * c_I ** (2.0 / (p - 2.0)) * p ** e) * (gap.upper - lam) ** e


def lp_constant(p: float, r_max: float, r0: float, measure: float) -> float:
    """``C_p`` of the L2 lower bound, both exponent branches."""
    if p > 4:
        return r_max * r0 ** (-p * (p - 4.0) / (p - 2.0) ** 2) * measure ** ((p - 4.0) / (p - 2.0))
    return r_max * measure ** ((4.0 - p) / 2.0)


def l2_lower_bound(p: float, r_data, C_inf: float, upper: float, lam: float, d_value: float) -> float:
    """Lower bound on ``||u||_L2`` for ground states at ``lam`` below ``upper``.

    ``r_data`` supplies ``r_max``, ``r0`` and ``measure`` (a
    :class:`~gapnls.spectral.PowerNonlinearity` does).  Pass the upper end of
    a ``d`` enclosure to keep the bound certified.
    """
    if not lam < upper:
        raise ValueError("lambda must lie below the upper gap end")
    Cp = lp_constant(p, r_data.r_max, r_data.r0, r_data.measure)
    if p > 4:
        e = p * (p - 4.0) / (p - 2.0) ** 2
        return (C_inf ** 2 * Cp * (upper - lam) ** e * d_value) ** (-(p - 2.0) / 4.0)
    return (C_inf ** 2 * Cp * d_value) ** (-1.0 / (p - 2.0))


class WeightData(NamedTuple):
    r_max: float
    r0: float
    measure: float


def linf_tail_inequality_check(basis: EigenBasis, v, n: int, lam: float,
                               C_inf: Optional[float] = None, J: Optional[int] = None) -> bool:
    """``||v||_inf^2 <= C^2 d(n, lam) q_lam(v)`` for ``v`` above mode ``n``.

    On the torus ``d`` is the certified upper enclosure from :func:`tail_sum_d`;
    on other backends the finite sum over the retained modes is used, which is
    what Cauchy-Schwarz needs for a ``v`` in the truncated span.
    """
    c = np.asarray(v, dtype=float)
    if np.any(c[:n] != 0.0):
        raise ValueError("v must be supported on modes above n")
    lam_k = basis.eigenvalues
    if not lam < lam_k[n]:
        raise ValueError("lambda must lie below lambda_(n+1)")
    C = C_inf if C_inf is not None else basis.meta.get("C_inf")
    if C is None:
        raise ValueError("no uniform eigenfunction bound for this basis")
    if basis.backend == "torus":
        cutoff = J or max(64, int(math.isqrt(int(basis.eigenvalues[-1]))) * 4)
        d = tail_sum_d(n, lam, cutoff).upper
    else:
        d = float(np.sum(1.0 / (lam_k[n:] - lam)))
    q = float(np.sum((lam_k - lam) * c * c))
    lhs = float(np.max(np.abs(basis.synthesize(c)))) ** 2
    return lhs <= C * C * d * q * (1.0 + 1e-12)
