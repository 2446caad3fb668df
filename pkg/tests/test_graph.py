import numpy as np
import pytest

from hodgeflow import (
    Metric,
    PoissonSolveError,
    build_knn_graph,
    laplacian_apply,
    solve_poisson,
)


def brute_force_knn(points, k, metric=None):
    """All-pairs k-NN oracle with index tie-breaks."""
    pts = metric.transform(points) if metric is not None else points
    n = len(pts)
    edges = set()
    for i in range(n):
        d2 = np.sum((pts - pts[i]) ** 2, axis=1)
        d2[i] = np.inf
        order = np.lexsort((np.arange(n), d2))[:k]
        for j in order:
            edges.add((min(i, int(j)), max(i, int(j))))
    return edges


class TestMetric:
    def test_identity_allocates_nothing(self):
        m = Metric.identity(3)
        assert m.is_identity and m.matrix is None and m.chol is None

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            Metric(2, np.array([[1.0, 0.5], [0.2, 1.0]]))

    def test_indefinite_rejected(self):
        with pytest.raises(ValueError, match="positive definite"):
            Metric(2, np.array([[1.0, 0.0], [0.0, -1.0]]))

    def test_solve_inverts_apply(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(4, 4))
        m = Metric(4, a @ a.T + np.eye(4))
        u = rng.normal(size=4)
        assert np.allclose(m.solve(m.apply(u)), u, atol=1e-12)

    def test_transform_matches_metric_distance(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(3, 3))
        m = Metric(3, a @ a.T + np.eye(3))
        x, y = rng.normal(size=3), rng.normal(size=3)
        direct = m.dist(x, y)
        via_transform = np.linalg.norm(m.transform(x[None]) - m.transform(y[None]))
        assert abs(direct - via_transform) < 1e-12


class TestBuildKnnGraph:
    def test_collinear_points(self):
        g = build_knn_graph(np.array([[0.0], [1.0], [2.0]]), k=1)
        assert g.edges.tolist() == [[0, 1], [1, 2]]
        assert np.all(g.weights == 1.0)
        assert len(np.unique(g.components)) == 1

    def test_two_far_clusters(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(5, 2))
        b = rng.normal(size=(5, 2)) + 100.0
        g = build_knn_graph(np.vstack([a, b]), k=2)
        assert len(np.unique(g.components)) == 2

    def test_cube_sample_connected_with_bounded_edges(self):
        rng = np.random.default_rng(3)
        pts = rng.uniform(-2, 2, size=(500, 3))
        g = build_knn_graph(pts, k=8)
        assert len(np.unique(g.components)) == 1
        oracle = brute_force_knn(pts, 8)
        assert set(map(tuple, g.edges.tolist())) == oracle
        assert 2000 <= g.num_edges <= 4000

    def test_symmetrization_matches_oracle(self):
        rng = np.random.default_rng(4)
        for n, k in ((30, 3), (100, 7)):
            pts = rng.normal(size=(n, 4))
            g = build_knn_graph(pts, k=k)
            assert set(map(tuple, g.edges.tolist())) == brute_force_knn(pts, k)

    def test_metric_changes_neighbors(self):
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.1], [5.0, 5.0]])
        m = Metric(2, np.diag([100.0, 1.0]))  # x-distances expensive
        g = build_knn_graph(pts, k=1, metric=m)
        assert [0, 2] in g.edges.tolist()
        oracle = brute_force_knn(pts, 1, metric=m)
        assert set(map(tuple, g.edges.tolist())) == oracle

    def test_gaussian_weights_auto_sigma(self):
        rng = np.random.default_rng(5)
        pts = rng.normal(size=(40, 2))
        g = build_knn_graph(pts, k=4, weight_scheme="gaussian")
        assert g.sigma is not None and g.sigma > 0
        assert np.all(g.weights > 0) and np.all(g.weights <= 1.0)
        dists = np.linalg.norm(pts[g.edges[:, 1]] - pts[g.edges[:, 0]], axis=1)
        assert np.allclose(g.weights, np.exp(-((dists / g.sigma) ** 2)), atol=1e-12)

    def test_duplicate_points_gaussian_weight_one(self):
        pts = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
        g = build_knn_graph(pts, k=1, weight_scheme="gaussian")
        assert np.all(g.weights == 1.0)

    def test_invalid_inputs(self):
        pts = np.zeros((3, 2))
        with pytest.raises(ValueError, match="k must satisfy"):
            build_knn_graph(pts, k=3)
        with pytest.raises(ValueError, match="non-finite"):
            build_knn_graph(np.array([[0.0, np.nan], [1.0, 1.0]]), k=1)
        with pytest.raises(ValueError, match="at least 2"):
            build_knn_graph(np.zeros((1, 2)), k=1)


def path_graph():
    return build_knn_graph(np.array([[0.0], [1.0], [2.0]]), k=1)


def triangle_graph():
    return build_knn_graph(np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 0.9]]), k=2)


class TestLaplacian:
    def test_path_linear_potential(self):
        out = laplacian_apply(path_graph(), np.array([0.0, 1.0, 2.0]))
        assert np.allclose(out, [-1.0, 0.0, 1.0], atol=1e-15)

    def test_constant_in_kernel(self):
        g = triangle_graph()
        assert np.all(laplacian_apply(g, np.full(3, 7.5)) == 0.0)

    def test_triangle_by_hand(self):
        out = laplacian_apply(triangle_graph(), np.array([1.0, 0.0, 0.0]))
        assert np.allclose(out, [2.0, -1.0, -1.0], atol=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            laplacian_apply(path_graph(), np.zeros(4))

    def test_symmetry_and_psd(self):
        rng = np.random.default_rng(6)
        g = build_knn_graph(rng.normal(size=(80, 3)), k=5, weight_scheme="gaussian")
        for _ in range(10):
            phi, psi = rng.normal(size=(2, 80))
            lphi = laplacian_apply(g, phi)
            scale = max(1.0, abs(phi @ lphi))
            assert abs(psi @ lphi - phi @ laplacian_apply(g, psi)) <= 1e-10 * scale
            assert phi @ lphi >= -1e-12


class TestSolvePoisson:
    def test_zero_rhs(self):
        pot = solve_poisson(path_graph(), np.zeros(3))
        assert np.all(pot.values == 0.0)

    def test_path_hand_solution(self):
        pot = solve_poisson(path_graph(), np.array([-1.0, 0.0, 1.0]))
        assert np.allclose(pot.values, [-1.0, 0.0, 1.0], atol=1e-10)
        assert np.allclose(pot.gauge, 0.0, atol=1e-12)

    def test_gauge_projection_idempotent(self):
        g = path_graph()
        a = solve_poisson(g, np.array([-1.0, 0.0, 1.0]))
        b = solve_poisson(g, np.array([-1.0, 0.0, 1.0]) + 13.7)
        assert np.allclose(a.values, b.values, atol=1e-9)

    def test_random_connected_graphs(self):
        rng = np.random.default_rng(7)
        for n in (40, 120, 200):
            g = build_knn_graph(rng.normal(size=(n, 3)), k=8)
            assert len(np.unique(g.components)) == 1
            rhs = rng.normal(size=n)
            rhs -= rhs.mean()
            pot = solve_poisson(g, rhs)
            assert np.linalg.norm(laplacian_apply(g, pot.values) - rhs) <= 1e-8
            assert abs(pot.values.mean()) <= 1e-10

    def test_disconnected_components_centered_separately(self):
        rng = np.random.default_rng(8)
        a = rng.normal(size=(20, 2))
        b = rng.normal(size=(20, 2)) + 50.0
        g = build_knn_graph(np.vstack([a, b]), k=3)
        rhs = rng.normal(size=40)
        pot = solve_poisson(g, rhs)
        for lab in np.unique(g.components):
            assert abs(pot.values[g.components == lab].mean()) <= 1e-10

    def test_nonconvergence_reports_residual(self):
        rng = np.random.default_rng(9)
        g = build_knn_graph(rng.normal(size=(100, 3)), k=6)
        rhs = rng.normal(size=100)
        rhs -= rhs.mean()
        with pytest.raises(PoissonSolveError) as err:
            solve_poisson(g, rhs, max_iter=1)
        assert err.value.residual > 0
        # retrying with a real budget succeeds
        pot = solve_poisson(g, rhs)
        assert np.linalg.norm(laplacian_apply(g, pot.values) - rhs) <= 1e-8
