"""Weighted k-NN sample graphs and the gauge-fixed graph Poisson solve.

The graph stores one oriented edge (i -> j, i < j) per neighbor pair from the
symmetrized k-NN relation under Dist_M. The Laplacian L = B'WB is never
materialized: `laplacian_apply` is a single pass over edges, and
`solve_poisson` runs Jacobi-preconditioned CG restricted to the per-component
zero-mean gauge.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .metric import Metric


class PoissonSolveError(RuntimeError):
    """CG did not reach tolerance; carries the final residual and partial phi."""

    def __init__(self, message: str, residual: float, potential: "NodePotential"):
        super().__init__(message)
        self.residual = residual
        self.potential = potential


@dataclass
class SampleGraph:
    """Symmetrized k-NN graph over sample positions.

    edges[e] = (i, j) with i < j; weights[e] > 0; components labels nodes by
    connected component (labels are the minimal node index in the component).
    """

    positions: np.ndarray          # (N, d)
    edges: np.ndarray              # (E, 2) int, i < j
    weights: np.ndarray            # (E,)
    k: int
    components: np.ndarray         # (N,) int labels
    weight_scheme: str = "uniform"
    sigma: float | None = None     # resolved gaussian bandwidth, None for uniform
    _neighbors: list | None = field(default=None, repr=False, compare=False)

    @property
    def num_nodes(self) -> int:
        return self.positions.shape[0]

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def degree_weights(self) -> np.ndarray:
        """Weighted degree per node (the diagonal of L)."""
        deg = np.zeros(self.num_nodes)
        np.add.at(deg, self.edges[:, 0], self.weights)
        np.add.at(deg, self.edges[:, 1], self.weights)
        return deg

    def neighbor_lists(self) -> list:
        """Per-node list of (neighbor, edge index) pairs, built lazily."""
        if self._neighbors is None:
            nbrs: list = [[] for _ in range(self.num_nodes)]
            for e, (i, j) in enumerate(self.edges):
                nbrs[i].append((int(j), e))
                nbrs[j].append((int(i), e))
            self._neighbors = nbrs
        return self._neighbors

    def edge_index(self) -> dict:
        """(i, j) -> edge id with i < j."""
        return {(int(i), int(j)): e for e, (i, j) in enumerate(self.edges)}


@dataclass
class NodePotential:
    """Node potential with the per-component zero-mean gauge.

    `gauge` records the per-component means measured after centering; they are
    zero up to solver tolerance.
    """

    values: np.ndarray
    gauge: np.ndarray


def _knn_pairs(points_t: np.ndarray, k: int) -> np.ndarray:
    """Directed k-NN pairs by brute force, ties broken by node index."""
    n = points_t.shape[0]
    d2 = np.sum((points_t[:, None, :] - points_t[None, :, :]) ** 2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    idx = np.arange(n)
    pairs = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        # lexsort: primary key distance, secondary key node index
        order = np.lexsort((idx, d2[i]))
        pairs[i] = order[:k]
    return pairs


def _union_find_components(n: int, edges: np.ndarray) -> np.ndarray:
    parent = np.arange(n)

    def find(a: int) -> int:
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for i, j in edges:
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    labels = np.array([find(i) for i in range(n)])
    return labels


def build_knn_graph(
    points: np.ndarray,
    k: int,
    metric: Metric | None = None,
    weight_scheme: str = "uniform",
    sigma: float | None = None,
) -> SampleGraph:
    """Symmetrized k-NN graph under Dist_M with uniform or gaussian weights.

    gaussian: w_ij = exp(-Dist_M(x_i,x_j)^2 / sigma^2); sigma=None picks the
    median of all retained edge distances (weight 1 fallback if that median
    is zero, e.g. all points coincide).
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be an N x d array")
    n, dim = points.shape
    if n < 2:
        raise ValueError(f"need at least 2 points, got {n}")
    if not np.all(np.isfinite(points)):
        raise ValueError("points contain non-finite coordinates")
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must satisfy 1 <= k <= N-1, got k={k}, N={n}")
    if weight_scheme not in ("uniform", "gaussian"):
        raise ValueError(f"unknown weight scheme {weight_scheme!r}")
    metric = metric or Metric.identity(dim)

    points_t = metric.transform(points)
    pairs = _knn_pairs(points_t, k)
    src = np.repeat(np.arange(n), k)
    dst = pairs.reshape(-1)
    lo = np.minimum(src, dst)
    hi = np.maximum(src, dst)
    edges = np.unique(np.stack([lo, hi], axis=1), axis=0)

    dists = np.linalg.norm(points_t[edges[:, 1]] - points_t[edges[:, 0]], axis=1)
    if weight_scheme == "uniform":
        weights = np.ones(len(edges))
        resolved_sigma = None
    else:
        resolved_sigma = float(np.median(dists)) if sigma is None else float(sigma)
        if resolved_sigma <= 0.0:
            resolved_sigma = 1.0
        weights = np.exp(-((dists / resolved_sigma) ** 2))

    components = _union_find_components(n, edges)
    return SampleGraph(
        positions=points,
        edges=edges,
        weights=weights,
        k=k,
        components=components,
        weight_scheme=weight_scheme,
        sigma=resolved_sigma,
    )


def laplacian_apply(graph: SampleGraph, phi: np.ndarray) -> np.ndarray:
    """(L phi)_i = sum_{j ~ i} w_ij (phi_i - phi_j), one pass over edges."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != (graph.num_nodes,):
        raise ValueError(f"phi must have length {graph.num_nodes}, got {phi.shape}")
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    flux = graph.weights * (phi[i] - phi[j])
    out = np.zeros(graph.num_nodes)
    np.add.at(out, i, flux)
    np.add.at(out, j, -flux)
    return out


def _component_center(graph: SampleGraph, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Remove the per-component mean; returns (centered, means per component)."""
    out = v.copy()
    labels = np.unique(graph.components)
    means = np.empty(len(labels))
    for li, lab in enumerate(labels):
        mask = graph.components == lab
        means[li] = out[mask].mean()
        out[mask] -= means[li]
    return out, means


def solve_poisson(
    graph: SampleGraph,
    rhs: np.ndarray,
    tol: float = 1e-10,
    max_iter: int | None = None,
    strict: bool = True,
) -> NodePotential:
    """Solve L phi = rhs (per-component mean of rhs removed) by Jacobi-PCG.

    phi is re-centered to per-component zero mean after every iteration and at
    return. Convergence: ||L phi - rhs'||_2 <= tol * max(1, ||rhs'||_2).
    Raises PoissonSolveError past max_iter (default 10*N) unless strict=False.
    """
    rhs = np.asarray(rhs, dtype=float)
    n = graph.num_nodes
    if rhs.shape != (n,):
        raise ValueError(f"rhs must have length {n}, got {rhs.shape}")
    if max_iter is None:
        max_iter = 10 * n

    b, _ = _component_center(graph, rhs)
    target = tol * max(1.0, float(np.linalg.norm(b)))
    diag = graph.degree_weights()
    inv_diag = np.where(diag > 0, 1.0 / np.where(diag > 0, diag, 1.0), 1.0)

    phi = np.zeros(n)
    r = b.copy()
    res_norm = float(np.linalg.norm(r))
    if res_norm <= target:
        phi, gauge = _component_center(graph, phi)
        return NodePotential(values=phi, gauge=gauge)

    z = inv_diag * r
    p = z.copy()
    rz = float(np.dot(r, z))
    for _ in range(max_iter):
        lp = laplacian_apply(graph, p)
        plp = float(np.dot(p, lp))
        if plp <= 0.0:
            # p fell into ker L (possible through preconditioning round-off)
            p, _ = _component_center(graph, p)
            lp = laplacian_apply(graph, p)
            plp = float(np.dot(p, lp))
            if plp <= 0.0:
                break
        alpha = rz / plp
        phi += alpha * p
        r -= alpha * lp
        phi, _ = _component_center(graph, phi)
        res_norm = float(np.linalg.norm(r))
        if res_norm <= target:
            phi, gauge = _component_center(graph, phi)
            return NodePotential(values=phi, gauge=gauge)
        z = inv_diag * r
        rz_new = float(np.dot(r, z))
        p = z + (rz_new / rz) * p
        rz = rz_new

    phi, gauge = _component_center(graph, phi)
    pot = NodePotential(values=phi, gauge=gauge)
    if strict:
        raise PoissonSolveError(
            f"Poisson CG did not converge in {max_iter} iterations "
            f"(residual {res_norm:.3e}, target {target:.3e}); retry with a "
            f"larger max_iter",
            residual=res_norm,
            potential=pot,
        )
    return pot
