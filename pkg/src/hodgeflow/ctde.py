"""Two-agent matrix games with softmax policies and the stacked update field.

Each agent ascends its exact expected payoff through its own logits: the
stacked field is (J_softmax(th1)' A q, J_softmax(th2)' B' p) for payoff tables
A, B, with p = softmax(th1), q = softmax(th2). Identical-interest games make
this field a true gradient (one common potential); zero-sum games leave a
non-potential component carrying loop circulation. Training runs the shared
dynamics loop over unconstrained logits with per-block mean-centering to
remove softmax gauge drift.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import neural
from .dynamics import DomainSpec, GraphProjParams, RunConfig, Trajectory, run_dynamics
from .fields import Field


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


@dataclass
class MatrixGame:
    """Payoff tables for agents 1 (A, m x n) and 2 (B, m x n)."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.B = np.asarray(self.B, dtype=float)
        if self.A.shape != self.B.shape or self.A.ndim != 2:
            raise ValueError("payoff tables must share an m x n shape")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.B))):
            raise ValueError("payoff tables must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape

    @property
    def identical_interest(self) -> bool:
        return bool(np.array_equal(self.A, self.B))

    @classmethod
    def from_json(cls, text: str) -> "MatrixGame":
        """Load payoff tables from '{"A": [[...]], "B": [[...]]}'."""
        doc = json.loads(text)
        return cls(A=np.array(doc["A"], dtype=float), B=np.array(doc["B"], dtype=float))

    @classmethod
    def coordination(cls) -> "MatrixGame":
        eye = np.eye(2)
        return cls(A=eye, B=eye.copy())

    @classmethod
    def matching_pennies(cls) -> "MatrixGame":
        a = np.array([[1.0, -1.0], [-1.0, 1.0]])
        return cls(A=a, B=-a)


@dataclass
class LogitPolicyPair:
    theta1: np.ndarray
    theta2: np.ndarray

    def __post_init__(self):
        self.theta1 = np.asarray(self.theta1, dtype=float)
        self.theta2 = np.asarray(self.theta2, dtype=float)
        if not (np.all(np.isfinite(self.theta1)) and np.all(np.isfinite(self.theta2))):
            raise ValueError("logits must be finite")

    def distributions(self) -> tuple[np.ndarray, np.ndarray]:
        return softmax(self.theta1), softmax(self.theta2)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.theta1, self.theta2])


def stacked_field(game: MatrixGame, policies: LogitPolicyPair) -> np.ndarray:
    """Exact simultaneous-ascent field (d J1/d th1, d J2/d th2), stacked.

    d(p'Aq)/dth1 = (diag(p) - pp')(Aq) = p * (Aq - p'Aq), and symmetrically
    for agent 2 with B'p.
    """
    p, q = policies.distributions()
    u1 = game.A @ q
    u2 = game.B.T @ p
    g1 = p * (u1 - float(p @ u1))
    g2 = q * (u2 - float(q @ u2))
    return np.concatenate([g1, g2])


class StackedGameField(Field):
    """Field wrapper over stacked logits (theta1, theta2)."""

    def __init__(self, game: MatrixGame):
        self.game = game
        m, n = game.shape
        self.m, self.n = m, n
        self.dim = m + n

    def split(self, x: np.ndarray) -> LogitPolicyPair:
        return LogitPolicyPair(theta1=x[: self.m], theta2=x[self.m :])

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = self._check_x(x)
        return stacked_field(self.game, self.split(x))

    def payoffs(self, x: np.ndarray) -> tuple[float, float]:
        p, q = self.split(x).distributions()
        return float(p @ self.game.A @ q), float(p @ self.game.B @ q)

    def center_blocks(self, x: np.ndarray) -> np.ndarray:
        """Remove the per-block logit mean (softmax gauge)."""
        t1 = x[: self.m] - x[: self.m].mean()
        t2 = x[self.m :] - x[self.m :].mean()
        return np.concatenate([t1, t2])


@dataclass
class CtdeMetrics:
    payoff1: np.ndarray            # (T+1,)
    payoff2: np.ndarray            # (T+1,)
    nonpot_refresh: np.ndarray     # nonpot at refresh steps (nan elsewhere)


def ctde_train(
    game: MatrixGame,
    policies0: LogitPolicyPair,
    config: RunConfig,
    proj_params: GraphProjParams | neural.NeuralProjConfig | None = None,
) -> tuple[Trajectory, CtdeMetrics]:
    """Simultaneous (or projected) logit ascent on the stacked game field."""
    field = StackedGameField(game)
    domain = DomainSpec.unconstrained(field.dim)
    x0 = field.center_blocks(policies0.stacked())
    traj = run_dynamics(
        field, domain, x0, config, proj_params=proj_params,
        post_step=field.center_blocks,
    )
    pay = np.array([field.payoffs(x) for x in traj.iterates])
    metrics = CtdeMetrics(
        payoff1=pay[:, 0], payoff2=pay[:, 1], nonpot_refresh=traj.nonpot
    )
    return traj, metrics
