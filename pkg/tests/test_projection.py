import numpy as np
import pytest

from hodgeflow import (
    EdgeFlow,
    Metric,
    NodePotential,
    build_knn_graph,
    cycle_circulation,
    edge_flow,
    gradient_flow,
    lift_node_direction,
    lift_query_direction,
    nonpot_ratio,
    project_flow,
)
from hodgeflow.projection import lift_all_directions


def triangle_graph():
    return build_knn_graph(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.9]]), k=2)


def random_graph(rng, n, k=6, d=3, weights="uniform"):
    return build_knn_graph(rng.normal(size=(n, d)), k=k, weight_scheme=weights)


def dense_projection_oracle(graph, omega):
    """Least squares min ||omega - B phi||_W by dense normal equations."""
    n, e = graph.num_nodes, graph.num_edges
    B = np.zeros((e, n))
    for row, (i, j) in enumerate(graph.edges):
        B[row, i] = -1.0
        B[row, j] = 1.0
    sw = np.sqrt(graph.weights)
    phi, *_ = np.linalg.lstsq(sw[:, None] * B, sw * omega.values, rcond=None)
    return B @ phi


class TestEdgeFlow:
    def test_constant_field_is_exact_gradient(self):
        rng = np.random.default_rng(0)
        g = random_graph(rng, 40)
        c = np.array([1.0, -2.0, 0.5])
        om = edge_flow(g, np.tile(c, (40, 1)))
        expected = (g.positions @ c)[g.edges[:, 1]] - (g.positions @ c)[g.edges[:, 0]]
        assert np.allclose(om.values, expected, atol=1e-12)

    def test_zero_field(self):
        rng = np.random.default_rng(1)
        g = random_graph(rng, 20)
        assert np.all(edge_flow(g, np.zeros((20, 3))).values == 0.0)

    def test_two_node_hand_value(self):
        g = build_knn_graph(np.array([[0.0, 0.0], [1.0, 0.0]]), k=1)
        om = edge_flow(g, np.array([[1.0, 0.0], [3.0, 0.0]]))
        assert om.values.tolist() == [2.0]

    def test_metric_weighting(self):
        g = build_knn_graph(np.array([[0.0, 0.0], [1.0, 0.0]]), k=1)
        m = Metric(2, np.diag([3.0, 1.0]))
        om = edge_flow(g, np.array([[1.0, 0.0], [3.0, 0.0]]), metric=m)
        assert om.values.tolist() == [6.0]

    def test_orientation_reversal_negates(self):
        rng = np.random.default_rng(2)
        g = random_graph(rng, 30)
        f = rng.normal(size=(30, 3))
        om = edge_flow(g, f)
        # recompute against the reversed orientation by hand
        i, j = g.edges[:, 0], g.edges[:, 1]
        rev = np.sum(0.5 * (f[i] + f[j]) * (g.positions[i] - g.positions[j]), axis=1)
        assert np.allclose(om.values, -rev, atol=1e-14)

    def test_shape_validation(self):
        rng = np.random.default_rng(3)
        g = random_graph(rng, 10)
        with pytest.raises(ValueError, match="field values"):
            edge_flow(g, np.zeros((10, 2)))
        with pytest.raises(ValueError, match="edge count"):
            EdgeFlow(values=np.zeros(3), graph=g)


class TestProjectFlow:
    def test_gradient_flow_has_no_residual(self):
        rng = np.random.default_rng(4)
        g = random_graph(rng, 60)
        om = gradient_flow(g, rng.normal(size=60))
        res = project_flow(g, om)
        assert res.nonpot <= 1e-8
        assert np.abs(res.omega_cyc.values).max() <= 1e-7

    def test_triangle_pure_cycle(self):
        g = triangle_graph()
        # oriented edges (0,1), (0,2), (1,2): cycle 0->1->2->0 with value 1 each
        om = EdgeFlow(values=np.array([1.0, -1.0, 1.0]), graph=g)
        res = project_flow(g, om)
        assert np.abs(res.omega_pot.values).max() <= 1e-12
        assert res.nonpot >= 1.0 - 1e-9

    def test_split_reconstructs_input(self):
        rng = np.random.default_rng(5)
        g = random_graph(rng, 50, weights="gaussian")
        om = EdgeFlow(values=rng.normal(size=g.num_edges), graph=g)
        res = project_flow(g, om)
        assert np.allclose(
            res.omega_pot.values + res.omega_cyc.values, om.values, atol=1e-14
        )

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(6)
        for n, k, weights in ((12, 3, "uniform"), (30, 4, "gaussian"), (50, 6, "uniform")):
            g = random_graph(rng, n, k=k, weights=weights)
            om = EdgeFlow(values=rng.normal(size=g.num_edges), graph=g)
            res = project_flow(g, om)
            oracle = dense_projection_oracle(g, om)
            assert np.abs(res.omega_pot.values - oracle).max() <= 1e-8

    def test_flow_bound_to_other_graph_rejected(self):
        rng = np.random.default_rng(7)
        g1, g2 = random_graph(rng, 20), random_graph(rng, 20)
        om = EdgeFlow(values=np.zeros(g1.num_edges), graph=g1)
        with pytest.raises(ValueError, match="bound"):
            project_flow(g2, om)


class TestNonPot:
    def test_zero_flow_returns_zero(self):
        g = triangle_graph()
        res = project_flow(g, EdgeFlow(values=np.zeros(3), graph=g))
        assert nonpot_ratio(res) == 0.0

    def test_bounds_on_random_flows(self):
        rng = np.random.default_rng(8)
        g = random_graph(rng, 40)
        for _ in range(200):
            om = EdgeFlow(values=rng.normal(size=g.num_edges), graph=g)
            val = project_flow(g, om).nonpot
            assert 0.0 <= val <= 1.0

    def test_monotone_in_cycle_scaling(self):
        rng = np.random.default_rng(9)
        g = random_graph(rng, 40)
        base = project_flow(g, EdgeFlow(values=rng.normal(size=g.num_edges), graph=g))
        prev = -1.0
        for s in (0.5, 1.0, 2.0, 4.0):
            om = EdgeFlow(base.omega_pot.values + s * base.omega_cyc.values, g)
            val = project_flow(g, om).nonpot
            assert val > prev
            prev = val


class TestCirculation:
    def test_gradient_flow_telescopes(self):
        rng = np.random.default_rng(10)
        g = random_graph(rng, 40, k=8)
        om = gradient_flow(g, rng.normal(size=40))
        nbrs = g.neighbor_lists()
        # find a 3-cycle
        cyc = None
        idx = g.edge_index()
        for i, j in g.edges:
            for l, _ in nbrs[i]:
                if l != j and ((min(l, int(j)), max(l, int(j))) in idx):
                    cyc = [int(i), int(j), int(l), int(i)]
                    break
            if cyc:
                break
        assert cyc is not None
        assert abs(cycle_circulation(g, om, cyc)) <= 1e-8

    def test_triangle_cycle_value(self):
        g = triangle_graph()
        om = EdgeFlow(values=np.array([1.0, -1.0, 1.0]), graph=g)
        assert cycle_circulation(g, om, [0, 1, 2, 0]) == 3.0
        assert cycle_circulation(g, om, [0, 2, 1, 0]) == -3.0

    def test_residual_carries_all_circulation(self):
        g = triangle_graph()
        rng = np.random.default_rng(11)
        om = EdgeFlow(values=rng.normal(size=3), graph=g)
        res = project_flow(g, om)
        full = cycle_circulation(g, om, [0, 1, 2, 0])
        cyc = cycle_circulation(g, res.omega_cyc, [0, 1, 2, 0])
        assert abs(full - cyc) <= 1e-8

    def test_missing_edge_and_open_walk_rejected(self):
        g = build_knn_graph(np.array([[0.0], [1.0], [2.0]]), k=1)
        om = EdgeFlow(values=np.zeros(2), graph=g)
        with pytest.raises(ValueError, match="no edge"):
            cycle_circulation(g, om, [0, 2, 0])
        with pytest.raises(ValueError, match="return"):
            cycle_circulation(g, om, [0, 1, 2])


class TestLifting:
    def test_linear_potential_recovery(self):
        rng = np.random.default_rng(12)
        g = random_graph(rng, 60, k=8)
        c = np.array([0.5, -1.0, 2.0])
        pot = NodePotential(values=g.positions @ c, gauge=np.zeros(1))
        h = lift_node_direction(g, pot, 0, ridge=1e-12)
        assert np.abs(h - c).max() <= 1e-6

    def test_single_neighbor_ridge_formula(self):
        g = build_knn_graph(np.array([[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]]), k=1)
        delta, gap, lam = 0.3, 0.5, 1e-4
        pot = NodePotential(values=np.array([0.0, delta]), gauge=np.zeros(1))
        h = lift_node_direction(g, pot, 0, ridge=lam)
        assert abs(h[0] - delta * gap / (gap**2 + lam)) <= 1e-12
        assert np.abs(h[1:]).max() == 0.0

    def test_metric_inverse_scaling(self):
        rng = np.random.default_rng(13)
        g = random_graph(rng, 50, k=8)
        c = np.array([1.0, 2.0, -1.0])
        pot = NodePotential(values=g.positions @ c, gauge=np.zeros(1))
        m = Metric(3, 2.0 * np.eye(3))
        h = lift_node_direction(g, pot, 0, metric=m, ridge=1e-12)
        assert np.abs(h - c / 2.0).max() <= 1e-6

    def test_query_at_node_matches_node_lift(self):
        rng = np.random.default_rng(14)
        g = random_graph(rng, 50, k=6)
        pot = NodePotential(values=rng.normal(size=50), gauge=np.zeros(1))
        node = 7
        nbrs = g.neighbor_lists()[node]
        h_node = lift_node_direction(g, pot, node, ridge=1e-4)
        h_query = lift_query_direction(
            g, pot, g.positions[node], k_query=len(nbrs) + 1, ridge=1e-4
        )
        # exact match requires the query's neighbor set to coincide with the
        # node's graph neighbors; verify, then compare
        d2 = np.sum((g.positions - g.positions[node]) ** 2, axis=1)
        nearest = set(np.argsort(d2)[1 : len(nbrs) + 1].tolist())
        if nearest == {j for j, _ in nbrs}:
            assert np.abs(h_node - h_query).max() <= 1e-9

    def test_query_linear_recovery_anywhere(self):
        rng = np.random.default_rng(15)
        g = random_graph(rng, 80, k=8)
        c = np.array([2.0, 0.0, -1.0])
        pot = NodePotential(values=g.positions @ c, gauge=np.zeros(1))
        for _ in range(5):
            q = rng.normal(size=3)
            h = lift_query_direction(g, pot, q, k_query=12, ridge=1e-12)
            assert np.abs(h - c).max() <= 1e-6

    def test_single_node_graph_zero_direction(self):
        g = build_knn_graph(np.array([[0.0, 0.0], [0.0, 0.0]]), k=1)
        pot = NodePotential(values=np.zeros(2), gauge=np.zeros(1))
        h = lift_query_direction(g, pot, np.array([5.0, 5.0]), k_query=1, ridge=1e-4)
        assert np.all(h == 0.0)


class TestProjectionInvariants:
    def test_discrete_orthogonality(self):
        rng = np.random.default_rng(16)
        for n in (50, 120, 200):
            g = random_graph(rng, n, k=6, weights="gaussian")
            om = EdgeFlow(values=rng.normal(size=g.num_edges), graph=g)
            res = project_flow(g, om)
            w = g.weights
            om_norm = np.sqrt(om.energy())
            for _ in range(50):
                psi = rng.normal(size=n)
                bpsi = gradient_flow(g, psi).values
                bpsi_norm = np.sqrt(np.sum(w * bpsi**2))
                viol = abs(np.sum(bpsi * w * res.omega_cyc.values))
                assert viol <= 1e-7 * bpsi_norm * om_norm

    def test_pythagorean_identity(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            g = random_graph(rng, 60, k=5)
            om = EdgeFlow(values=rng.normal(size=g.num_edges), graph=g)
            res = project_flow(g, om)
            gap = abs(res.energy_total - res.energy_pot - res.energy_cyc)
            assert gap <= 1e-6 * res.energy_total

    def test_metric_consistency_quadratic_exact(self):
        # trapezoid edge values are exact for quadratic potentials: the
        # strongest form of the O(h^2) consistency bound
        rng = np.random.default_rng(18)
        a = rng.normal(size=(3, 3))
        m = Metric(3, a @ a.T + np.eye(3))
        q = a.T @ a + 0.5 * np.eye(3)

        def phi(x):
            return -0.5 * x @ q @ x

        pts = rng.normal(size=(100, 3))
        g = build_knn_graph(pts, k=6, metric=m)
        grad = -(pts @ q)                       # rows grad phi(x_i)
        field = m.solve(grad)                   # metric gradient M^{-1} grad
        om = edge_flow(g, field, metric=m)
        dphi = np.array([phi(pts[j]) - phi(pts[i]) for i, j in g.edges])
        scale = np.abs(dphi).max()
        assert np.abs(om.values - dphi).max() <= 1e-12 * max(1.0, scale)

    def test_metric_consistency_halving_order(self):
        # non-quadratic potential: the error must shrink at least second
        # order under edge-length halving (observed: third order)
        rng = np.random.default_rng(19)

        def phi(x):
            return np.cos(x[0]) + x[1] ** 3 + np.exp(0.5 * x[2])

        def grad(x):
            return np.array([-np.sin(x[0]), 3 * x[1] ** 2, 0.5 * np.exp(0.5 * x[2])])

        base = rng.normal(size=(200, 3))
        errs = []
        for scale in (1.0, 0.5):
            pts = scale * base
            g = build_knn_graph(pts, k=6)
            om = edge_flow(g, np.stack([grad(p) for p in pts]))
            dphi = np.array([phi(pts[j]) - phi(pts[i]) for i, j in g.edges])
            lens = np.linalg.norm(pts[g.edges[:, 1]] - pts[g.edges[:, 0]], axis=1)
            errs.append(np.max(np.abs(om.values - dphi) / lens**2))
        # err ~ C * h^p with p >= 2 means the normalized ratio stays bounded;
        # require at least the claimed second order (ratio >= 4 * 0.7 on raw
        # errors corresponds to normalized ratio >= 0.7)
        raw_ratio = (errs[0] * 1.0**2) / (errs[1] * 0.5**2)
        assert raw_ratio >= 2.8

    def test_locally_linear_field_projects_to_symmetric_part(self):
        rng = np.random.default_rng(20)
        # moderate antisymmetric part: at k=12 the gradient subspace of the
        # k-NN graph absorbs ~17% of the skew amplitude, so the stated 0.1
        # Frobenius budget bounds the recovery for skews up to ~0.5
        b = np.array([[-1.0, 0.45, 0.15], [0.05, -0.6, 0.2], [0.25, -0.2, -1.1]])
        pts = rng.normal(size=(2000, 3))
        pts /= np.linalg.norm(pts, axis=1, keepdims=True)
        pts *= rng.uniform(0, 1, size=(2000, 1)) ** (1 / 3)
        g = build_knn_graph(pts, k=12)
        om = edge_flow(g, pts @ b.T)
        res = project_flow(g, om)
        dirs = lift_all_directions(g, res.phi, ridge=1e-6)
        coeff = np.linalg.lstsq(pts, dirs, rcond=None)[0].T
        sym = 0.5 * (b + b.T)
        assert np.linalg.norm(coeff - sym) <= 0.1
