"""Edge-flow extraction and the discrete potential/cyclic projection.

Pipeline: sampled field values -> edge 1-form omega
(omega_e = <M*(F_i+F_j)/2, x_j - x_i>) -> weighted least squares
min_phi ||omega - B phi||_W^2 via the graph Poisson system L phi = B'W omega
-> potential flow B phi*, cyclic residual, energy split, and the NonPot ratio
||omega_cyc||_W^2 / (||omega||_W^2 + eps). Node and query directions are
recovered from phi* by ridge-regularized local least squares mapped through
M^{-1}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .graph import NodePotential, SampleGraph, solve_poisson
from .metric import Metric


@dataclass
class EdgeFlow:
    """One scalar per oriented edge of `graph`; reversing an edge negates it."""

    values: np.ndarray
    graph: SampleGraph

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.graph.num_edges,):
            raise ValueError(
                f"flow length {self.values.shape} does not match edge count "
                f"{self.graph.num_edges}"
            )

    def energy(self) -> float:
        """W-weighted squared norm ||omega||_W^2."""
        return float(np.sum(self.graph.weights * self.values**2))


@dataclass
class ProjectionResult:
    """Output of the discrete Hodge projection (potential + cyclic split)."""

    phi: NodePotential
    omega_pot: EdgeFlow
    omega_cyc: EdgeFlow
    energy_total: float
    energy_pot: float
    energy_cyc: float
    nonpot: float
    solver_residual: float


def edge_flow(
    graph: SampleGraph, field_values: np.ndarray, metric: Metric | None = None
) -> EdgeFlow:
    """Edge 1-form omega_e = <M * (F_i+F_j)/2, x_j - x_i> per oriented edge."""
    field_values = np.asarray(field_values, dtype=float)
    if field_values.shape != (graph.num_nodes, graph.dim):
        raise ValueError(
            f"field values must be {graph.num_nodes} x {graph.dim}, "
            f"got {field_values.shape}"
        )
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    mean_f = 0.5 * (field_values[i] + field_values[j])
    if metric is not None and not metric.is_identity:
        mean_f = metric.apply(mean_f)
    dx = graph.positions[j] - graph.positions[i]
    return EdgeFlow(values=np.sum(mean_f * dx, axis=1), graph=graph)


def gradient_flow(graph: SampleGraph, phi: np.ndarray) -> EdgeFlow:
    """B phi: edgewise phi_j - phi_i along the stored orientation."""
    phi = np.asarray(phi, dtype=float)
    return EdgeFlow(values=phi[graph.edges[:, 1]] - phi[graph.edges[:, 0]], graph=graph)


def divergence(graph: SampleGraph, omega: EdgeFlow) -> np.ndarray:
    """b = B'W omega: b_i = sum_{e into i} w_e omega_e - sum_{e out of i} w_e omega_e."""
    w_omega = graph.weights * omega.values
    b = np.zeros(graph.num_nodes)
    np.add.at(b, graph.edges[:, 1], w_omega)
    np.add.at(b, graph.edges[:, 0], -w_omega)
    return b


def project_flow(
    graph: SampleGraph,
    omega: EdgeFlow,
    eps: float = 1e-12,
    tol: float = 1e-10,
    max_iter: int | None = None,
    strict: bool = True,
) -> ProjectionResult:
    """Split omega into its closest gradient flow and the cyclic residual.

    Solves L phi* = B'W omega, sets omega_pot = B phi*, omega_cyc = omega -
    omega_pot, and NonPot = ||omega_cyc||_W^2 / (||omega||_W^2 + eps).
    strict=False returns the (inexact) split even if CG stalls.
    """
    if omega.graph is not graph:
        raise ValueError("edge flow is not bound to this graph")
    b = divergence(graph, omega)
    phi = solve_poisson(graph, b, tol=tol, max_iter=max_iter, strict=strict)
    omega_pot = gradient_flow(graph, phi.values)
    omega_cyc = EdgeFlow(values=omega.values - omega_pot.values, graph=graph)
    e_tot = omega.energy()
    e_pot = omega_pot.energy()
    e_cyc = omega_cyc.energy()
    residual = float(
        np.linalg.norm(b - divergence(graph, gradient_flow(graph, phi.values)))
    )
    return ProjectionResult(
        phi=phi,
        omega_pot=omega_pot,
        omega_cyc=omega_cyc,
        energy_total=e_tot,
        energy_pot=e_pot,
        energy_cyc=e_cyc,
        nonpot=e_cyc / (e_tot + eps),
        solver_residual=residual,
    )


def nonpot_ratio(result: ProjectionResult) -> float:
    """Fraction of edge-flow energy unexplained by any potential flow."""
    return result.nonpot


def cycle_circulation(graph: SampleGraph, omega: EdgeFlow, cycle) -> float:
    """Signed sum of omega along a closed node walk (first node == last)."""
    cycle = [int(c) for c in cycle]
    if len(cycle) < 2 or cycle[0] != cycle[-1]:
        raise ValueError("cycle must return to its start node")
    index = graph.edge_index()
    total = 0.0
    for a, b in zip(cycle[:-1], cycle[1:]):
        if (a, b) in index:
            total += omega.values[index[(a, b)]]
        elif (b, a) in index:
            total -= omega.values[index[(b, a)]]
        else:
            raise ValueError(f"no edge between nodes {a} and {b}")
    return float(total)


def _ridge_fit(
    rows: np.ndarray, targets: np.ndarray, weights: np.ndarray, ridge: float, dim: int
) -> np.ndarray:
    """h = (X'WX + ridge*I)^{-1} X'W y by dense Cholesky on the d x d system."""
    if rows.shape[0] == 0:
        return np.zeros(dim)
    xtw = rows.T * weights
    lhs = xtw @ rows + ridge * np.eye(dim)
    rhs = xtw @ targets
    return cho_solve(cho_factor(lhs, lower=True), rhs)


def lift_node_direction(
    graph: SampleGraph,
    phi: NodePotential,
    node: int,
    metric: Metric | None = None,
    ridge: float = 1e-4,
) -> np.ndarray:
    """Local gradient fit at a graph node, mapped through M^{-1}.

    Fits h minimizing sum_j w_ij (<h, x_j - x_i> - (phi_j - phi_i))^2 +
    ridge*||h||^2 over the node's neighbors, then returns g = M^{-1} h.
    """
    node = int(node)
    nbrs = graph.neighbor_lists()[node]
    if not nbrs:
        raise ValueError(f"node {node} has no neighbors")
    idx = np.array([j for j, _ in nbrs])
    eids = np.array([e for _, e in nbrs])
    rows = graph.positions[idx] - graph.positions[node]
    targets = phi.values[idx] - phi.values[node]
    h = _ridge_fit(rows, targets, graph.weights[eids], ridge, graph.dim)
    return h if metric is None or metric.is_identity else metric.solve(h)


def lift_query_direction(
    graph: SampleGraph,
    phi: NodePotential,
    query: np.ndarray,
    k_query: int,
    metric: Metric | None = None,
    ridge: float = 1e-4,
) -> np.ndarray:
    """Gradient fit at an arbitrary query point from its k nearest nodes.

    The unknown potential value at the query is eliminated by centering the
    fit on the weighted neighbor mean; a query coinciding with a node anchors
    on that node instead, which reduces exactly to lift_node_direction when
    the neighbor sets agree. Virtual edge weights follow the graph's scheme.
    """
    query = np.asarray(query, dtype=float)
    if query.shape != (graph.dim,):
        raise ValueError(f"query must have dimension {graph.dim}")
    metric = metric or Metric.identity(graph.dim)
    k_query = max(1, min(int(k_query), graph.num_nodes))

    diffs_t = metric.transform(graph.positions - query)
    d2 = np.sum(diffs_t**2, axis=1)
    order = np.lexsort((np.arange(graph.num_nodes), d2))
    nearest = order[:k_query]
    dists = np.sqrt(d2[nearest])

    if graph.weight_scheme == "gaussian" and graph.sigma:
        weights = np.exp(-((dists / graph.sigma) ** 2))
    else:
        weights = np.ones(len(nearest))

    if dists[0] < 1e-9:
        anchor = nearest[0]
        others = nearest[1:]
        rows = graph.positions[others] - graph.positions[anchor]
        targets = phi.values[others] - phi.values[anchor]
        h = _ridge_fit(rows, targets, weights[1:], ridge, graph.dim)
    else:
        pts = graph.positions[nearest]
        vals = phi.values[nearest]
        wsum = weights.sum()
        x_bar = (weights[:, None] * pts).sum(axis=0) / wsum
        phi_bar = float(np.dot(weights, vals) / wsum)
        h = _ridge_fit(pts - x_bar, vals - phi_bar, weights, ridge, graph.dim)
    return h if metric.is_identity else metric.solve(h)


def lift_all_directions(
    graph: SampleGraph,
    phi: NodePotential,
    metric: Metric | None = None,
    ridge: float = 1e-4,
) -> np.ndarray:
    """lift_node_direction at every node, stacked N x d."""
    return np.stack(
        [
            lift_node_direction(graph, phi, i, metric=metric, ridge=ridge)
            for i in range(graph.num_nodes)
        ]
    )
