"""Laplacians on compact metric graphs.

Each edge is meshed with Lagrange elements on Gauss-Lobatto nodes.  Values at
vertices are shared between the incident edges (continuity), Dirichlet
vertices are eliminated, and a delta coupling adds ``alpha_v`` to the vertex
diagonal of the stiffness matrix.  Kirchhoff conditions are natural in the
weak form.  The generalized problem ``K x = lambda B x`` then yields an
:class:`~gapnls.spectral.EigenBasis` sampled at Gauss-Legendre nodes.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from numpy.polynomial import legendre

from .spectral import MERGE_RTOL, EigenBasis

KIRCHHOFF = "kirchhoff"
DIRICHLET = "dirichlet"


@dataclass(frozen=True)
class Delta:
    """delta coupling: sum of outgoing derivatives equals ``alpha * u(v)``."""

    alpha: float


Condition = Union[str, Delta]


class TruncationClipError(ValueError):
    pass


@dataclass(frozen=True)
class MetricGraph:
    n_vertices: int
    edges: tuple  # of (tail, head, length)
    conditions: dict = field(default_factory=dict)

    def __post_init__(self):
        edges = tuple((int(a), int(b), float(l)) for a, b, l in self.edges)
        object.__setattr__(self, "edges", edges)
        if self.n_vertices < 1 or not edges:
            raise ValueError("graph needs at least one vertex and one edge")
        for a, b, l in edges:
            if not (0 <= a < self.n_vertices and 0 <= b < self.n_vertices):
                raise ValueError(f"edge ({a}, {b}) references an unknown vertex")
            if not l > 0:
                raise ValueError(f"edge ({a}, {b}) has nonpositive length {l}")
        conds = {}
        for v, c in dict(self.conditions).items():
            v = int(v)
            if not 0 <= v < self.n_vertices:
                raise ValueError(f"condition for unknown vertex {v}")
            if isinstance(c, Delta):
                if c.alpha < 0:
                    raise ValueError("negative delta strengths make A indefinite")
            elif c not in (KIRCHHOFF, DIRICHLET):
                raise ValueError(f"unknown vertex condition {c!r}")
            conds[v] = c
        object.__setattr__(self, "conditions", conds)
        if not self._connected():
            raise ValueError("graph is not connected")

    def condition(self, v: int) -> Condition:
        return self.conditions.get(v, KIRCHHOFF)

    @property
    def total_length(self) -> float:
        return sum(l for _, _, l in self.edges)

    @property
    def shortest_edge(self) -> float:
        return min(l for _, _, l in self.edges)

    def _connected(self) -> bool:
        adj = {v: set() for v in range(self.n_vertices)}
        for a, b, _ in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        seen = {0}
        todo = deque([0])
        while todo:
            v = todo.popleft()
            for w in adj[v] - seen:
                seen.add(w)
                todo.append(w)
        return len(seen) == self.n_vertices

    @classmethod
    def interval(cls, length: float, left: Condition = DIRICHLET, right: Condition = DIRICHLET):
        return cls(2, ((0, 1, length),), {0: left, 1: right})

    @classmethod
    def star(cls, lengths, center: Condition = KIRCHHOFF, tips: Condition = DIRICHLET):
        edges = tuple((0, i + 1, l) for i, l in enumerate(lengths))
        conds = {0: center}
        conds.update({i + 1: tips for i in range(len(lengths))})
        return cls(len(lengths) + 1, edges, conds)


class _ReferenceElement:
    """Lagrange element of degree ``d`` on Gauss-Lobatto nodes of [-1, 1]."""

    def __init__(self, degree: int, n_quad: int):
        d = degree
        interior = legendre.Legendre.basis(d).deriv().roots() if d > 1 else np.array([])
        self.nodes = np.concatenate([[-1.0], np.sort(interior.real), [1.0]])
        self.degree = d
        vander = legendre.legvander(self.nodes, d)
        self._coef = np.linalg.inv(vander)  # column i: Legendre coefficients of shape i
        self.quad_x, self.quad_w = legendre.leggauss(n_quad)
        self.phi_q = self.shape(self.quad_x)
        self.dphi_q = self.shape_deriv(self.quad_x)
        self.mass = (self.phi_q * self.quad_w) @ self.phi_q.T
        self.stiff = (self.dphi_q * self.quad_w) @ self.dphi_q.T

    def shape(self, x) -> np.ndarray:
        """(d+1, len(x)) shape function values."""
        return (legendre.legvander(np.atleast_1d(x), self.degree) @ self._coef).T

    def shape_deriv(self, x) -> np.ndarray:
        dcoef = legendre.legder(self._coef, axis=0)
        return (legendre.legvander(np.atleast_1d(x), self.degree - 1) @ dcoef).T


@dataclass(eq=False)
class DiscreteOperatorPair:
    """Stiffness/mass pair of a meshed graph plus its degree-of-freedom map."""

    graph: MetricGraph
    K: sp.csr_matrix
    B: sp.csr_matrix
    degree: int
    elements_per_edge: tuple
    edge_dofs: list  # per edge: (n_el, d+1) global dof ids, -1 for eliminated
    vertex_dof: dict
    reference: _ReferenceElement

    @property
    def n_dofs(self) -> int:
        return self.K.shape[0]

    def _locate(self, edge: int, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        length = self.graph.edges[edge][2]
        n_el = self.elements_per_edge[edge]
        h = length / n_el
        el = np.clip((x / h).astype(int), 0, n_el - 1)
        xi = 2.0 * (x - el * h) / h - 1.0
        return el, xi, h

    def evaluate(self, dof_values, edge: int, x) -> np.ndarray:
        """Values of a finite element function (columns of ``dof_values``) on an edge."""
        vals = _padded(dof_values)
        el, xi, _ = self._locate(edge, x)
        out = []
        for e_i, xi_i in zip(el, xi):
            ids = self.edge_dofs[edge][e_i]
            out.append(self.reference.shape(xi_i)[:, 0] @ vals[ids])
        return np.array(out)

    def derivative(self, dof_values, edge: int, x) -> np.ndarray:
        vals = _padded(dof_values)
        el, xi, h = self._locate(edge, x)
        out = []
        for e_i, xi_i in zip(el, xi):
            ids = self.edge_dofs[edge][e_i]
            out.append((2.0 / h) * self.reference.shape_deriv(xi_i)[:, 0] @ vals[ids])
        return np.array(out)


def _padded(dof_values):
    # index -1 (eliminated Dirichlet dof) must read as zero
    v = np.asarray(dof_values, dtype=float)
    pad = np.zeros((1,) + v.shape[1:])
    return np.concatenate([v, pad], axis=0)


def assemble(graph: MetricGraph, nodes_per_edge: int = 64, degree: int = 8) -> DiscreteOperatorPair:
    """Galerkin pair ``(K, B)`` for ``-u''`` with the graph's vertex conditions.

    ``nodes_per_edge`` fixes the element count per edge as
    ``ceil((nodes_per_edge - 1) / degree)``; ``degree=2`` gives P2 elements.
    """
    if nodes_per_edge < 3:
        raise ValueError("nodes_per_edge must be at least 3")
    if degree < 1:
        raise ValueError("degree must be positive")
    ref = _ReferenceElement(degree, degree + 2)
    d = degree

    vertex_dof = {}
    next_dof = 0
    for v in range(graph.n_vertices):
        if graph.condition(v) != DIRICHLET:
            vertex_dof[v] = next_dof
            next_dof += 1

    n_el_all = []
    edge_dofs = []
    for tail, head, _ in graph.edges:
        n_el = max(1, -(-(nodes_per_edge - 1) // d))
        n_el_all.append(n_el)
        n_inner = n_el * d - 1
        chain = np.empty(n_el * d + 1, dtype=int)
        chain[0] = vertex_dof.get(tail, -1)
        chain[-1] = vertex_dof.get(head, -1)
        chain[1:-1] = np.arange(next_dof, next_dof + n_inner)
        next_dof += n_inner
        edge_dofs.append(np.stack([chain[i * d : i * d + d + 1] for i in range(n_el)]))

    rows, cols, kv, bv = [], [], [], []
    for (_, _, length), n_el, dofs in zip(graph.edges, n_el_all, edge_dofs):
        h = length / n_el
        k_loc = ref.stiff * (2.0 / h)
        b_loc = ref.mass * (h / 2.0)
        for ids in dofs:
            keep = ids >= 0
            ii = ids[keep]
            r, c = np.meshgrid(ii, ii, indexing="ij")
            rows.append(r.ravel())
            cols.append(c.ravel())
            kv.append(k_loc[np.ix_(keep, keep)].ravel())
            bv.append(b_loc[np.ix_(keep, keep)].ravel())
    for v, cond in graph.conditions.items():
        if isinstance(cond, Delta) and cond.alpha != 0.0:
            rows.append(np.array([vertex_dof[v]]))
            cols.append(np.array([vertex_dof[v]]))
            kv.append(np.array([cond.alpha]))
            bv.append(np.array([0.0]))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    shape = (next_dof, next_dof)
    K = sp.coo_matrix((np.concatenate(kv), (rows, cols)), shape=shape).tocsr()
    B = sp.coo_matrix((np.concatenate(bv), (rows, cols)), shape=shape).tocsr()
    return DiscreteOperatorPair(graph, K, B, d, tuple(n_el_all), edge_dofs, vertex_dof, ref)


def eigenbasis(pair: DiscreteOperatorPair, count: int, quad_points: Optional[int] = None) -> EigenBasis:
    """Lowest ``count`` eigenpairs, B-orthonormal, sampled at Gauss points.

    Every element carries ``quad_points`` Gauss-Legendre nodes (default
    ``2*degree + 1``, exact for quartic integrands in the element space).
    """
    if count < 1:
        raise ValueError("count must be positive")
    if count > 0.5 * pair.n_dofs:
        raise ValueError(
            f"resolution guard: {count} eigenpairs requested from {pair.n_dofs} "
            "degrees of freedom (at most half are trusted); refine the mesh"
        )
    K = pair.K.toarray()
    B = pair.B.toarray()
    lam, X = scipy.linalg.eigh(K, B, subset_by_index=[0, count - 1])

    nq = quad_points or 2 * pair.degree + 1
    gx, gw = legendre.leggauss(nq)
    phi = pair.reference.shape(gx)  # (d+1, nq)
    Xp = _padded(X)
    samples, weights, where = [], [], []
    for e, ((_, _, length), n_el, dofs) in enumerate(
        zip(pair.graph.edges, pair.elements_per_edge, pair.edge_dofs)
    ):
        h = length / n_el
        for i, ids in enumerate(dofs):
            samples.append(phi.T @ Xp[ids])  # (nq, count)
            weights.append(gw * h / 2.0)
            where.append(np.column_stack([np.full(nq, e), i * h + (gx + 1.0) * h / 2.0]))
    values = np.concatenate(samples).T
    weights = np.concatenate(weights)
    where = np.concatenate(where)

    # reproducible signs: first clearly nonzero sample positive
    for k in range(count):
        row = values[k]
        big = np.flatnonzero(np.abs(row) > 1e-8 * np.max(np.abs(row)))
        if big.size and row[big[0]] < 0:
            values[k] *= -1.0
            X[:, k] *= -1.0

    def evaluate(coeffs, at):
        edge, x = at
        return pair.evaluate(X @ np.asarray(coeffs, dtype=float), edge, x)

    lam = np.maximum.accumulate(lam)  # guard against last-ulp reordering
    return EigenBasis(
        eigenvalues=lam,
        values=values,
        weights=weights,
        backend="graph",
        nodes=where,
        evaluate=evaluate,
        # sampled sup of the retained eigenfunctions, the constant the
        # L-infinity tail inequality needs on the quadrature grid
        meta={"pair": pair, "vectors": X, "C_inf": float(np.max(np.abs(values)))},
    )


def graph_eigenbasis(graph: MetricGraph, count: int, nodes_per_edge: int = 64, degree: int = 8) -> EigenBasis:
    return eigenbasis(assemble(graph, nodes_per_edge, degree), count)


def counting_function(eigenvalues, K: float) -> int:
    lam = np.asarray(eigenvalues)
    return int(np.count_nonzero(lam <= K + MERGE_RTOL * (1.0 + abs(K))))


def weyl_ratio(basis: EigenBasis, K: float, total_length: float) -> float:
    """``N(K) / ((L/pi) sqrt(K))``."""
    if K > basis.eigenvalues[-1]:
        raise TruncationClipError(
            f"K={K} exceeds the largest retained eigenvalue {basis.eigenvalues[-1]:.6g}"
        )
    if not K > 0:
        raise ValueError("K must be positive")
    return counting_function(basis.eigenvalues, K) / (total_length / np.pi * np.sqrt(K))


def positive_eigenfunction_index(basis: EigenBasis, rtol: float = 1e-6) -> Optional[int]:
    """1-based index of the first eigenfunction of one sign, if any."""
    for k in range(basis.size):
        row = basis.values[k]
        if np.sum(basis.weights * row) < 0:
            row = -row
        if np.min(row) >= -rtol * np.max(np.abs(row)):
            return k + 1
    return None


def vertex_flux(basis: EigenBasis, coeffs, vertex: int, step: Optional[float] = None) -> float:
    """Sum of outgoing derivatives at ``vertex`` by one-sided 3-point stencils."""
    pair: DiscreteOperatorPair = basis.meta["pair"]
    X = basis.meta["vectors"]
    dof = X @ np.asarray(coeffs, dtype=float)
    graph = pair.graph
    if step is None:
        step = 1e-3 * min(l / n for (_, _, l), n in zip(graph.edges, pair.elements_per_edge))
    total = 0.0
    for e, (tail, head, length) in enumerate(graph.edges):
        for end, sign, x0 in ((tail, 1.0, 0.0), (head, -1.0, length)):
            if end != vertex:
                continue
            xs = x0 + sign * step * np.arange(3)
            u = pair.evaluate(dof, e, xs)
            total += (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * step)
    return total


def max_derivative(basis: EigenBasis, coeffs, samples_per_edge: int = 400) -> float:
    pair: DiscreteOperatorPair = basis.meta["pair"]
    dof = basis.meta["vectors"] @ np.asarray(coeffs, dtype=float)
    best = 0.0
    for e, (_, _, length) in enumerate(pair.graph.edges):
        x = np.linspace(0.0, length, samples_per_edge)
        best = max(best, float(np.max(np.abs(pair.derivative(dof, e, x)))))
    return best
