"""Raw, projected, and exact-potential discrete-time dynamics with retractions.

x_{t+1} = Retr(x_t + eta_t * direction), where the direction is the raw field,
a graph-projected lifted direction, an amortized-net gradient, or the exact
potential gradient. Feasibility is enforced by Euclidean projection onto the
domain (identity / box clamp / sort-based exact simplex projection per block).

The projected modes keep a buffer of visited points topped up with retracted
Gaussian jitter around recent iterates (sigma = 0.25 x recent-window diameter,
floored at 1e-2) so the sample graph spans enough directions for lifting, and
refresh the projection every `refresh_rate` steps.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import neural
from .fields import Field, PotentialPlusSkew, QuadraticPotential, eval_field, eval_field_batch
from .graph import build_knn_graph
from .metric import Metric
from .projection import edge_flow, lift_query_direction, project_flow

MODES = ("raw", "graph_projected", "neural_projected", "exact_potential")
JITTER_FLOOR = 1e-2


@dataclass
class DomainSpec:
    """Feasible set: unconstrained, a box, or a product of simplices."""

    kind: str                      # "unconstrained" | "box" | "simplex_product"
    dim: int
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    blocks: tuple | None = None    # simplex block sizes, summing to dim

    def __post_init__(self):
        if self.kind not in ("unconstrained", "box", "simplex_product"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "box":
            self.lo = np.broadcast_to(np.asarray(self.lo, dtype=float), (self.dim,)).copy()
            self.hi = np.broadcast_to(np.asarray(self.hi, dtype=float), (self.dim,)).copy()
            if not np.all(self.lo < self.hi):
                raise ValueError("box requires lo < hi componentwise")
        elif self.kind == "simplex_product":
            self.blocks = tuple(int(b) for b in self.blocks)
            if sum(self.blocks) != self.dim or min(self.blocks) < 1:
                raise ValueError("simplex block sizes must be positive and sum to dim")

    @classmethod
    def unconstrained(cls, dim: int) -> "DomainSpec":
        return cls(kind="unconstrained", dim=dim)

    @classmethod
    def box(cls, lo, hi, dim: int | None = None) -> "DomainSpec":
        lo = np.atleast_1d(np.asarray(lo, dtype=float))
        dim = dim or len(lo)
        return cls(kind="box", dim=dim, lo=lo, hi=hi)

    @classmethod
    def simplex_product(cls, blocks) -> "DomainSpec":
        blocks = tuple(int(b) for b in blocks)
        return cls(kind="simplex_product", dim=sum(blocks), blocks=blocks)

    def diameter(self) -> float:
        if self.kind == "box":
            return float(np.linalg.norm(self.hi - self.lo))
        if self.kind == "simplex_product":
            # each simplex with >= 2 vertices has Euclidean diameter sqrt(2)
            return float(np.sqrt(sum(2.0 for b in self.blocks if b > 1)))
        raise ValueError("unconstrained domain has no finite diameter")

    def contains(self, x: np.ndarray, tol: float = 1e-9) -> bool:
        return bool(np.linalg.norm(retract(self, x) - x) <= tol)


def _project_simplex(y: np.ndarray) -> np.ndarray:
    """Exact Euclidean projection onto the probability simplex (sort-based)."""
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - 1.0
    j = np.arange(1, len(y) + 1)
    rho = np.nonzero(u - css / j > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(y - tau, 0.0)


def retract(domain: DomainSpec, y: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the domain."""
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("cannot retract a non-finite point")
    if domain.kind == "unconstrained":
        return y.copy()
    if domain.kind == "box":
        return np.clip(y, domain.lo, domain.hi)
    out = np.empty_like(y)
    start = 0
    for b in domain.blocks:
        out[start : start + b] = _project_simplex(y[start : start + b])
        start += b
    return out


@dataclass
class GraphProjParams:
    """Graph-projection knobs for the projected dynamics."""

    k: int = 8
    weight_scheme: str = "uniform"
    sigma: float | None = None
    ridge: float = 1e-4
    k_query: int | None = None     # defaults to 2k
    metric: Metric | None = None
    solver_tol: float = 1e-10


@dataclass
class RunConfig:
    steps: int
    eta: float = 0.05
    eta_schedule: str = "constant"  # "constant" | "inv_sqrt"
    refresh_rate: int = 8
    buffer_size: int = 256
    mode: str = "raw"
    seed: int = 0
    noise_delta: float = 0.0        # injected direction noise, exact mode only

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.refresh_rate < 1:
            raise ValueError("refresh_rate must be >= 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.eta_schedule not in ("constant", "inv_sqrt"):
            raise ValueError(f"unknown eta schedule {self.eta_schedule!r}")

    def eta_at(self, t: int) -> float:
        if self.eta_schedule == "constant":
            return self.eta
        return self.eta / np.sqrt(t + 1.0)


@dataclass
class Trajectory:
    """Iterates plus per-step diagnostics from a dynamics run."""

    iterates: np.ndarray           # (T+1, d)
    directions: np.ndarray         # (T, d): direction actually stepped along
    field_norm: np.ndarray         # (T,)
    proj_norm: np.ndarray          # (T,)
    nonpot: np.ndarray             # (T,), nan except at refresh steps
    phi_values: np.ndarray | None = None   # (T+1,) when a reference potential exists
    mode: str = "raw"
    eta: float = 0.0

    @property
    def steps(self) -> int:
        return self.directions.shape[0]


def orbit_diameter(traj: Trajectory, window: int) -> float:
    """Max pairwise distance among the last `window` iterates."""
    if window < 1 or window > traj.iterates.shape[0]:
        raise ValueError("window must be in [1, T+1]")
    pts = traj.iterates[-window:]
    d2 = np.sum((pts[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
    return float(np.sqrt(d2.max()))


def path_length(traj: Trajectory) -> float:
    return float(np.sum(np.linalg.norm(np.diff(traj.iterates, axis=0), axis=1)))


def _window_diameter(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=-1)
    return float(np.sqrt(d2.max()))


class _GraphProjector:
    """Rebuilds the sample graph + Poisson projection at each refresh."""

    def __init__(self, field: Field, domain: DomainSpec, params: GraphProjParams,
                 config: RunConfig, rng: np.random.Generator):
        self.field = field
        self.domain = domain
        self.params = params
        self.config = config
        self.rng = rng
        self.waypoints: deque = deque(maxlen=max(params.k + 1, config.buffer_size // 2))
        self.graph = None
        self.phi = None
        self.last_nonpot = np.nan
        self.sigma = JITTER_FLOOR
        self.lift_ridge = params.ridge

    def observe(self, x: np.ndarray) -> None:
        # waypoints stay spaced at half the jitter scale: a dense 1-d
        # trajectory filament would crowd jitter out of the fit neighborhoods
        # and make every flow look integrable along the thin tube
        if self.waypoints and np.linalg.norm(x - self.waypoints[-1]) <= 0.5 * self.sigma:
            return
        self.waypoints.append(x.copy())

    def _prune(self) -> list:
        """Re-space the waypoint ring at the current sigma, keeping coverage."""
        pts = list(self.waypoints)
        kept = [pts[0]]
        for p in pts[1:]:
            if np.linalg.norm(p - kept[-1]) > 0.5 * self.sigma:
                kept.append(p)
        self.waypoints.clear()
        self.waypoints.extend(kept)
        return kept

    def refresh(self) -> float:
        # region sigma tracks the extent of the kept window: jitter must give
        # the cloud full-dimensional thickness over the whole visited region
        # for the projection to see (and remove) the cyclic component there
        self.sigma = max(0.25 * _window_diameter(np.array(self.waypoints)), JITTER_FLOOR)
        pts = self._prune()
        history = np.array(pts)
        n_jitter = max(0, self.config.buffer_size - len(pts))
        if n_jitter:
            bases = history[self.rng.integers(0, len(history), size=n_jitter)]
            noise = self.rng.normal(scale=self.sigma, size=bases.shape)
            jitter = [retract(self.domain, p) for p in bases + noise]
            pts = pts + jitter
        points = np.array(pts)
        self.graph = build_knn_graph(
            points,
            self.params.k,
            metric=self.params.metric,
            weight_scheme=self.params.weight_scheme,
            sigma=self.params.sigma,
        )
        values = eval_field_batch(self.field, points)
        omega = edge_flow(self.graph, values, metric=self.params.metric)
        result = project_flow(self.graph, omega, tol=self.params.solver_tol)
        self.phi = result.phi
        self.last_nonpot = result.nonpot
        # ridge is calibrated for O(1) coordinates; keep it scale-relative so
        # small late-run sample clouds are not crushed toward zero
        i, j = self.graph.edges[:, 0], self.graph.edges[:, 1]
        med = float(np.median(np.linalg.norm(points[j] - points[i], axis=1)))
        self.lift_ridge = self.params.ridge * max(med, 1e-150) ** 2
        return result.nonpot

    def direction(self, x: np.ndarray) -> np.ndarray:
        k_query = self.params.k_query or 2 * self.params.k
        return lift_query_direction(
            self.graph, self.phi, x, k_query,
            metric=self.params.metric, ridge=self.lift_ridge,
        )


class _NeuralProjector:
    """Persistent potential net refit with K inner SGD steps per refresh."""

    def __init__(self, field: Field, domain: DomainSpec, params: neural.NeuralProjConfig,
                 config: RunConfig, rng: np.random.Generator,
                 metric: Metric | None = None):
        self.field = field
        self.domain = domain
        self.params = params
        self.config = config
        self.rng = rng
        self.metric = metric
        self.traj_buf: deque = deque(maxlen=config.buffer_size)
        self.net = None
        self.velocity = None
        self.last_nonpot = np.nan

    def observe(self, x: np.ndarray) -> None:
        self.traj_buf.append(x.copy())

    def refresh(self) -> float:
        pts = np.array(self.traj_buf)
        if self.net is None:
            self.net = neural.init_net(pts.shape[1], self.params)
            self.velocity = neural.new_velocity(self.net)
        size = min(self.params.batch, len(pts))
        sel = self.rng.integers(0, len(pts), size=size)
        batch_x = pts[sel]
        batch_f = eval_field_batch(self.field, batch_x)
        loss = neural.sgd_steps(
            self.net, self.metric, batch_x, batch_f, self.params, self.velocity,
            self.params.inner_steps,
        )
        # residual share of the batch field energy, the amortized NonPot analogue
        res = batch_f - neural.net_grad_x_batch(self.net, self.metric, batch_x)
        denom = float(np.sum(batch_f**2)) + 1e-12
        self.last_nonpot = float(np.sum(res**2)) / denom
        if not np.isfinite(loss):
            raise RuntimeError(f"neural projection diverged (loss={loss!r})")
        return self.last_nonpot

    def direction(self, x: np.ndarray) -> np.ndarray:
        return neural.net_grad_x(self.net, self.metric, x)


def _exact_gradient(field: Field):
    if isinstance(field, (QuadraticPotential, PotentialPlusSkew)):
        return field.grad_potential
    raise ValueError(
        "exact_potential mode needs a field with a known potential "
        "(QuadraticPotential or PotentialPlusSkew)"
    )


def run_dynamics(
    field: Field,
    domain: DomainSpec,
    x0: np.ndarray,
    config: RunConfig,
    proj_params: GraphProjParams | neural.NeuralProjConfig | None = None,
    reference_potential=None,
    post_step=None,
    refresh_hook=None,
) -> Trajectory:
    """Run T steps of the configured dynamics from a feasible x0.

    reference_potential: optional callable recording Phi(x_t) per iterate.
    post_step: optional callable applied to each new iterate (e.g. per-block
    logit centering in the CTDE toy); must map feasible points to feasible
    points.
    refresh_hook: optional callable (graph, phi, lift_ridge) -> None invoked
    after every graph-projection refresh, e.g. to score the lifted node
    directions against a known potential component.
    """
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (domain.dim,):
        raise ValueError(f"x0 must have dimension {domain.dim}")
    if not domain.contains(x0):
        raise ValueError("x0 is not feasible for the domain")

    rng = np.random.default_rng(config.seed)
    t_steps = config.steps
    iterates = np.empty((t_steps + 1, domain.dim))
    directions = np.empty((t_steps, domain.dim))
    field_norm = np.empty(t_steps)
    proj_norm = np.empty(t_steps)
    nonpot = np.full(t_steps, np.nan)
    phi_vals = np.empty(t_steps + 1) if reference_potential is not None else None

    projector = None
    if config.mode == "graph_projected":
        params = proj_params if isinstance(proj_params, GraphProjParams) else GraphProjParams()
        if config.buffer_size < params.k + 1:
            raise ValueError("buffer_size must be >= k+1 for projected modes")
        projector = _GraphProjector(field, domain, params, config, rng)
    elif config.mode == "neural_projected":
        params = (
            proj_params
            if isinstance(proj_params, neural.NeuralProjConfig)
            else neural.NeuralProjConfig()
        )
        projector = _NeuralProjector(field, domain, params, config, rng)
    exact_grad = _exact_gradient(field) if config.mode == "exact_potential" else None

    x = x0.copy()
    iterates[0] = x
    if phi_vals is not None:
        phi_vals[0] = reference_potential(x)

    for t in range(t_steps):
        f_val = eval_field(field, x)
        field_norm[t] = np.linalg.norm(f_val)
        if projector is not None:
            projector.observe(x)
            if t % config.refresh_rate == 0:
                nonpot[t] = projector.refresh()
                if refresh_hook is not None and isinstance(projector, _GraphProjector):
                    refresh_hook(projector.graph, projector.phi, projector.lift_ridge)
            direction = projector.direction(x)
        elif exact_grad is not None:
            direction = exact_grad(x)
            if config.noise_delta > 0.0:
                noise = rng.normal(size=domain.dim)
                norm = np.linalg.norm(noise)
                if norm > 0:
                    direction = direction + (config.noise_delta / norm) * noise
        else:
            direction = f_val
        directions[t] = direction
        proj_norm[t] = np.linalg.norm(direction)
        x = retract(domain, x + config.eta_at(t) * direction)
        if post_step is not None:
            x = post_step(x)
        iterates[t + 1] = x
        if phi_vals is not None:
            phi_vals[t + 1] = reference_potential(x)

    return Trajectory(
        iterates=iterates,
        directions=directions,
        field_norm=field_norm,
        proj_norm=proj_norm,
        nonpot=nonpot,
        phi_values=phi_vals,
        mode=config.mode,
        eta=config.eta,
    )


def rk4_trajectory(field: Field, x0: np.ndarray, dt: float, steps: int) -> np.ndarray:
    """Classical RK4 integration of xdot = F(x); returns (steps+1, d) iterates."""
    x = np.asarray(x0, dtype=float).copy()
    out = np.empty((steps + 1, x.shape[0]))
    out[0] = x
    for t in range(steps):
        k1 = eval_field(field, x)
        k2 = eval_field(field, x + 0.5 * dt * k1)
        k3 = eval_field(field, x + 0.5 * dt * k2)
        k4 = eval_field(field, x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        out[t + 1] = x
    return out


def power_iteration_lmax(Q: np.ndarray, tol: float = 1e-13, max_iter: int = 10000) -> float:
    """Largest eigenvalue of an SPD matrix by power iteration."""
    Q = np.asarray(Q, dtype=float)
    v = np.ones(Q.shape[0]) / np.sqrt(Q.shape[0])
    lam = 0.0
    for _ in range(max_iter):
        w = Q @ v
        lam_new = float(np.linalg.norm(w))
        v = w / lam_new
        if abs(lam_new - lam) <= tol * max(1.0, lam_new):
            return lam_new
        lam = lam_new
    return lam
