import numpy as np
import pytest
from scipy.optimize import minimize

from hodgeflow import (
    RPS,
    DomainSpec,
    EdgeFlow,
    PotentialPlusSkew,
    QuadraticPotential,
    RunConfig,
    TheoryBoundParams,
    build_knn_graph,
    check_gap_bound,
    eval_field,
    gap_phi,
    gradient_flow,
    orthogonality_report,
    params_for_box,
    project_flow,
    run_dynamics,
    stampacchia_gap,
)
from hodgeflow.diagnostics import box_grad_bound, box_phi_max, box_phi_min


def skewed_quadratic(rho=0.25):
    base = QuadraticPotential(Q=np.array([[1.2, 0.2], [0.2, 0.8]]), c=np.array([0.3, -0.2]))
    return PotentialPlusSkew(base=base, S=np.array([[0.0, 1.0], [-1.0, 0.0]]), rho=rho)


class TestStampacchiaGap:
    def test_zero_operator(self):
        dom = DomainSpec.box([-1, -1], [1, 1])
        assert stampacchia_gap(np.zeros(2), np.zeros(2), dom) == 0.0

    def test_simplex_vertex_enumeration(self):
        dom = DomainSpec.simplex_product([3])
        gap = stampacchia_gap(np.array([1.0, 0.0, 0.0]), np.full(3, 1 / 3), dom)
        assert abs(gap - 1 / 3) <= 1e-15

    def test_rps_uniform_solves_vi(self):
        dom = DomainSpec.simplex_product([3, 3])
        u = np.full(6, 1 / 3)
        f_vi = -eval_field(RPS(), u)
        assert stampacchia_gap(f_vi, u, dom) <= 1e-9

    def test_unbounded_domain_rejected(self):
        with pytest.raises(ValueError, match="unbounded"):
            stampacchia_gap(np.ones(2), np.zeros(2), DomainSpec.unconstrained(2))

    def test_nonnegative_on_random_points(self):
        rng = np.random.default_rng(0)
        dom = DomainSpec.box(-np.ones(3), np.ones(3))
        for _ in range(100):
            f = rng.normal(size=3)
            x = np.clip(rng.uniform(-1, 1, 3), -1, 1)
            assert stampacchia_gap(f, x, dom) >= -1e-12

    def test_zero_gap_implies_vi_solution(self):
        dom = DomainSpec.simplex_product([3, 3])
        u = np.full(6, 1 / 3)
        f_vi = -eval_field(RPS(), u)
        assert stampacchia_gap(f_vi, u, dom) <= 1e-10
        rng = np.random.default_rng(1)
        for _ in range(100):
            x = np.concatenate([rng.dirichlet(np.ones(3)), rng.dirichlet(np.ones(3))])
            assert np.dot(f_vi, x - u) >= -1e-8


class TestGapPhi:
    def test_zero_gradient(self):
        dom = DomainSpec.box([-1], [1])
        assert gap_phi(np.zeros(1), np.zeros(1), dom) == 0.0

    def test_box_hand_value(self):
        dom = DomainSpec.box([-1, -1], [1, 1])
        val = gap_phi(np.array([2.0, -1.0]), np.zeros(2), dom)
        assert abs(val - 3.0) <= 1e-15

    def test_zero_at_constrained_maximizer(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(3, 3))
        field = QuadraticPotential(Q=a @ a.T + np.eye(3), c=np.array([2.0, 0.0, -2.0]))
        dom = DomainSpec.box(-np.ones(3), np.ones(3))
        x_star, _ = box_phi_max(field, dom)
        assert gap_phi(field.grad_potential(x_star), x_star, dom) <= 1e-8


class TestBoxConstants:
    def test_phi_max_matches_scipy(self):
        rng = np.random.default_rng(3)
        for _ in range(5):
            a = rng.normal(size=(4, 4))
            field = QuadraticPotential(Q=a @ a.T + 0.5 * np.eye(4), c=rng.uniform(-2, 2, 4))
            dom = DomainSpec.box(-np.ones(4), np.ones(4))
            _, phi_max = box_phi_max(field, dom)
            res = minimize(
                lambda x: -field.potential(x),
                np.zeros(4),
                bounds=[(-1, 1)] * 4,
                method="L-BFGS-B",
            )
            assert abs(phi_max - (-res.fun)) <= 1e-7

    def test_phi_min_and_grad_bound_at_vertices(self):
        rng = np.random.default_rng(4)
        a = rng.normal(size=(3, 3))
        field = QuadraticPotential(Q=a @ a.T + np.eye(3), c=rng.uniform(-0.5, 0.5, 3))
        dom = DomainSpec.box(-np.ones(3), np.ones(3))
        phi_min = box_phi_min(field, dom)
        g_max = box_grad_bound(field, dom)
        samples = rng.uniform(-1, 1, size=(2000, 3))
        assert all(field.potential(x) >= phi_min - 1e-12 for x in samples)
        assert all(
            np.linalg.norm(field.grad_potential(x)) <= g_max + 1e-12 for x in samples
        )

    def test_params_validation(self):
        with pytest.raises(ValueError, match="positive"):
            TheoryBoundParams(D=0.0, L=1.0, G=1.0, Phi_max=1.0, Phi_min=0.0)
        with pytest.raises(ValueError, match="Phi_max"):
            TheoryBoundParams(D=1.0, L=1.0, G=1.0, Phi_max=0.0, Phi_min=1.0)


class TestGapBounds:
    def test_converged_run_has_tiny_gap(self):
        field = QuadraticPotential(Q=np.eye(2), c=np.zeros(2))
        dom = DomainSpec.box(-np.ones(2), np.ones(2))
        params = params_for_box(field, dom, T=2000)
        cfg = RunConfig(steps=2000, eta=params.eta, mode="exact_potential", seed=0)
        traj = run_dynamics(field, dom, np.array([0.9, -0.9]), cfg)
        rep = check_gap_bound(traj, params, field, dom)
        assert rep.lhs <= 1e-8 and rep.holds

    def test_bound_holds_across_rho_and_t(self):
        dom = DomainSpec.box(-np.ones(2), np.ones(2))
        for rho in (0.0, 0.25, 0.5):
            field = skewed_quadratic(rho)
            assert abs(
                params_for_box(field, dom, T=1).eps_residual - rho * np.sqrt(2.0)
            ) <= 1e-12
            for t_steps in (10, 100, 1000):
                params = params_for_box(field, dom, T=t_steps)
                cfg = RunConfig(steps=t_steps, eta=params.eta, mode="exact_potential", seed=0)
                traj = run_dynamics(field, dom, np.array([0.9, -0.9]), cfg)
                rep = check_gap_bound(traj, params, field, dom)
                assert rep.holds, (rho, t_steps, rep)

    def test_inexact_bound_with_injected_noise(self):
        dom = DomainSpec.box(-np.ones(2), np.ones(2))
        field = skewed_quadratic(0.25)
        for t_steps in (10, 100, 1000):
            params = params_for_box(field, dom, T=t_steps, delta_bar=0.05)
            cfg = RunConfig(
                steps=t_steps, eta=params.eta, mode="exact_potential", seed=1,
                noise_delta=0.05,
            )
            traj = run_dynamics(field, dom, np.array([0.9, -0.9]), cfg)
            rep = check_gap_bound(traj, params, field, dom, inexact=True)
            assert rep.holds

    def test_residual_split_bound(self):
        rng = np.random.default_rng(5)
        field = skewed_quadratic(0.4)
        dom = DomainSpec.box(-np.ones(2), np.ones(2))
        d = dom.diameter()
        for _ in range(50):
            x = np.clip(rng.uniform(-1, 1, 2), -1, 1)
            gap = stampacchia_gap(-eval_field(field, x), x, dom)
            split = gap_phi(field.grad_potential(x), x, dom)
            assert gap <= split + d * np.linalg.norm(field.residual(x)) + 1e-9

    def test_gap_mapping_bound_along_trajectory(self):
        field = QuadraticPotential(Q=np.array([[2.0, 0.3], [0.3, 1.0]]), c=np.array([0.5, 0.5]))
        dom = DomainSpec.box(-np.ones(2), np.ones(2))
        params = params_for_box(field, dom, T=100)
        cfg = RunConfig(steps=100, eta=params.eta, mode="exact_potential", seed=2)
        traj = run_dynamics(field, dom, np.array([-0.9, 0.9]), cfg)
        for t in range(traj.steps):
            g_eta = (traj.iterates[t + 1] - traj.iterates[t]) / params.eta
            val = gap_phi(field.grad_potential(traj.iterates[t]), traj.iterates[t], dom)
            assert val <= (params.D + params.eta * params.G) * np.linalg.norm(g_eta) + 1e-9

    def test_eta_above_inverse_l_rejected(self):
        field = QuadraticPotential(Q=np.eye(2), c=np.zeros(2))
        dom = DomainSpec.box(-np.ones(2), np.ones(2))
        params = params_for_box(field, dom, eta=2.0, T=10)
        cfg = RunConfig(steps=10, eta=1.0, mode="exact_potential")
        traj = run_dynamics(field, dom, np.array([0.5, 0.5]), cfg)
        with pytest.raises(ValueError, match="1/L"):
            check_gap_bound(traj, params, field, dom)


class TestOrthogonalityReport:
    def test_gradient_flow_reports_zero(self):
        rng = np.random.default_rng(6)
        g = build_knn_graph(rng.normal(size=(60, 3)), k=6)
        om = gradient_flow(g, rng.normal(size=60))
        res = project_flow(g, om)
        assert orthogonality_report(res, g, trials=30) == 0.0

    def test_random_flow_small_violation(self):
        rng = np.random.default_rng(7)
        g = build_knn_graph(rng.normal(size=(80, 3)), k=6)
        om = EdgeFlow(values=rng.normal(size=g.num_edges), graph=g)
        res = project_flow(g, om)
        assert orthogonality_report(res, g, trials=50) <= 1e-7

    def test_unconverged_solver_detected(self):
        rng = np.random.default_rng(8)
        g = build_knn_graph(rng.normal(size=(80, 3)), k=6)
        om = EdgeFlow(values=rng.normal(size=g.num_edges), graph=g)
        res = project_flow(g, om, max_iter=1, strict=False)
        assert orthogonality_report(res, g, trials=50) > 1e-4
