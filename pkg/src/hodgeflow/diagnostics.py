"""Equilibrium-quality metrics and executable theory-bound checks.

Stampacchia gap and potential gap by exact linear maximization over boxes and
simplex products, the residual-augmented gap bounds (exact and inexact
projected ascent), and the residual-orthogonality certificate for a computed
projection. Constants (diameter, smoothness, gradient/residual bounds,
potential range) for quadratic fields on boxes are computed exactly: the
concave maximum by per-coordinate closed-form ascent, and vertex quantities
by enumeration.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .dynamics import DomainSpec, Trajectory, power_iteration_lmax
from .fields import Field, PotentialPlusSkew, QuadraticPotential, eval_field
from .graph import SampleGraph
from .projection import ProjectionResult, gradient_flow


@dataclass
class TheoryBoundParams:
    """Constants entering the Lyapunov and gap bounds."""

    D: float
    L: float
    G: float
    Phi_max: float
    Phi_min: float
    eps_residual: float = 0.0
    delta_bar: float = 0.0
    eta: float = 0.0
    T: int = 0

    def __post_init__(self):
        if min(self.D, self.L, self.G) <= 0:
            raise ValueError("D, L, G must be positive")
        if self.Phi_max < self.Phi_min:
            raise ValueError("Phi_max must be >= Phi_min")
        if self.eps_residual < 0 or self.delta_bar < 0:
            raise ValueError("residual and projection-error bounds must be >= 0")


def _linear_min(f: np.ndarray, domain: DomainSpec) -> float:
    """min over the domain of <f, x> (exact; the objective is linear)."""
    if domain.kind == "box":
        return float(np.sum(np.minimum(f * domain.lo, f * domain.hi)))
    if domain.kind == "simplex_product":
        total = 0.0
        start = 0
        for b in domain.blocks:
            total += float(np.min(f[start : start + b]))
            start += b
        return total
    raise ValueError("gap over an unbounded domain is undefined")


def stampacchia_gap(f_at_xbar: np.ndarray, xbar: np.ndarray, domain: DomainSpec) -> float:
    """Gap(xbar) = max_{x in X} <F(xbar), xbar - x> for the VI operator F."""
    f = np.asarray(f_at_xbar, dtype=float)
    xbar = np.asarray(xbar, dtype=float)
    return float(np.dot(f, xbar)) - _linear_min(f, domain)


def gap_phi(grad_phi: np.ndarray, x: np.ndarray, domain: DomainSpec) -> float:
    """Gap_Phi(x) = max_{u in X} <grad Phi(x), u - x> (ascent-direction gap)."""
    g = np.asarray(grad_phi, dtype=float)
    x = np.asarray(x, dtype=float)
    return -_linear_min(g, domain) - float(np.dot(g, x))


def gradient_mapping(traj: Trajectory) -> np.ndarray:
    """G_eta(x_t) = (x_{t+1} - x_t)/eta for every step of a constant-eta run."""
    if traj.eta <= 0:
        raise ValueError("trajectory carries no positive step size")
    return np.diff(traj.iterates, axis=0) / traj.eta


@dataclass
class GapBoundReport:
    lhs: float
    rhs: float
    holds: bool
    t_hat: int
    stationarity_term: float
    residual_term: float


def check_gap_bound(
    traj: Trajectory,
    params: TheoryBoundParams,
    field: Field,
    domain: DomainSpec,
    inexact: bool = False,
) -> GapBoundReport:
    """Evaluate both sides of the residual-augmented gap bound on a run.

    Selects x_hat = argmin_t ||G_eta(x_t)||, evaluates Gap(x_hat) for the VI
    operator F = -U (U the ascent field), and compares against
    (D + eta G) sqrt(2(Phi_max-Phi_min)/(T eta)) + D eps  (exact projection)
    or the inexact variant with the sqrt(4(...)/(T eta) + 4 delta^2) radical
    and D(eps + delta).
    """
    if not isinstance(field, (QuadraticPotential, PotentialPlusSkew)):
        raise ValueError("gap bound check needs a field with a known decomposition")
    eta, t_total = params.eta, params.T
    if eta <= 0 or t_total < 1:
        raise ValueError("params must carry the run's eta and T")
    if eta > (1.0 / params.L) * (1.0 + 1e-12):
        raise ValueError("bound requires eta <= 1/L")

    mapping = gradient_mapping(traj)[:t_total]
    norms = np.linalg.norm(mapping, axis=1)
    t_hat = int(np.argmin(norms))
    x_hat = traj.iterates[t_hat]

    f_vi = -eval_field(field, x_hat)
    lhs = stampacchia_gap(f_vi, x_hat, domain)

    rng_phi = params.Phi_max - params.Phi_min
    if inexact:
        radical = np.sqrt(4.0 * rng_phi / (t_total * eta) + 4.0 * params.delta_bar**2)
        stat = (params.D + eta * (params.G + params.delta_bar)) * radical
        resid = params.D * (params.eps_residual + params.delta_bar)
    else:
        stat = (params.D + eta * params.G) * np.sqrt(2.0 * rng_phi / (t_total * eta))
        resid = params.D * params.eps_residual
    rhs = float(stat + resid)
    return GapBoundReport(
        lhs=float(lhs),
        rhs=rhs,
        holds=bool(lhs <= rhs * (1.0 + 1e-9)),
        t_hat=t_hat,
        stationarity_term=float(stat),
        residual_term=float(resid),
    )


def orthogonality_report(
    result: ProjectionResult,
    graph: SampleGraph,
    trials: int,
    seed: int = 0,
) -> float:
    """Max normalized |(B psi)' W omega_cyc| over random psi (0 if omega_cyc ~ 0)."""
    if result.energy_cyc <= 1e-16 * max(result.energy_total, 1e-300):
        return 0.0
    rng = np.random.default_rng(seed)
    w = graph.weights
    cyc = result.omega_cyc.values
    cyc_norm = float(np.sqrt(result.energy_cyc))
    worst = 0.0
    for _ in range(trials):
        psi = rng.standard_normal(graph.num_nodes)
        bpsi = gradient_flow(graph, psi).values
        bpsi_norm = float(np.sqrt(np.sum(w * bpsi**2)))
        if bpsi_norm == 0.0:
            continue
        violation = abs(float(np.sum(bpsi * w * cyc))) / (bpsi_norm * cyc_norm)
        worst = max(worst, violation)
    return worst


def box_phi_max(field, domain: DomainSpec, tol: float = 1e-15, max_sweeps: int = 100000):
    """Exact maximizer of the concave quadratic on a box by coordinate ascent.

    Each coordinate update is the closed-form 1-d maximizer clipped to the box;
    the iteration converges to the unique global maximizer. Returns (x*, Phi*).
    """
    base = field.base if isinstance(field, PotentialPlusSkew) else field
    if domain.kind != "box":
        raise ValueError("potential range computed for box domains only")
    q, c = base.Q, base.c
    x = np.clip(c, domain.lo, domain.hi)
    for _ in range(max_sweeps):
        delta = 0.0
        for i in range(domain.dim):
            rest = q[i] @ (x - c) - q[i, i] * (x[i] - c[i])
            new = np.clip(c[i] - rest / q[i, i], domain.lo[i], domain.hi[i])
            delta = max(delta, abs(new - x[i]))
            x[i] = new
        if delta <= tol:
            break
    return x, base.potential(x)


def _box_vertices(domain: DomainSpec):
    for corner in itertools.product(*zip(domain.lo, domain.hi)):
        yield np.array(corner)


def box_phi_min(field, domain: DomainSpec) -> float:
    """Minimum of the concave quadratic over the box (attained at a vertex)."""
    base = field.base if isinstance(field, PotentialPlusSkew) else field
    return min(base.potential(v) for v in _box_vertices(domain))


def box_grad_bound(field, domain: DomainSpec) -> float:
    """G = max ||grad Phi|| over the box (convex norm maximum: at a vertex)."""
    base = field.base if isinstance(field, PotentialPlusSkew) else field
    return max(float(np.linalg.norm(base.grad_potential(v))) for v in _box_vertices(domain))


def box_residual_bound(field: PotentialPlusSkew, domain: DomainSpec) -> float:
    """eps = max ||rho S x|| over the box (at a vertex)."""
    return max(float(np.linalg.norm(field.residual(v))) for v in _box_vertices(domain))


def params_for_box(
    field,
    domain: DomainSpec,
    eta: float | None = None,
    T: int = 0,
    delta_bar: float = 0.0,
) -> TheoryBoundParams:
    """Assemble the exact theory constants for a (skewed) quadratic on a box.

    eta=None picks eta = 1/L with L = lambda_max(Q) from power iteration.
    """
    base = field.base if isinstance(field, PotentialPlusSkew) else field
    L = power_iteration_lmax(base.Q)
    _, phi_max = box_phi_max(field, domain)
    phi_min = box_phi_min(field, domain)
    eps = box_residual_bound(field, domain) if isinstance(field, PotentialPlusSkew) else 0.0
    return TheoryBoundParams(
        D=domain.diameter(),
        L=L,
        G=box_grad_bound(field, domain),
        Phi_max=phi_max,
        Phi_min=phi_min,
        eps_residual=eps,
        delta_bar=delta_bar,
        eta=(1.0 / L) if eta is None else eta,
        T=T,
    )
