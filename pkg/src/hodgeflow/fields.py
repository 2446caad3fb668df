"""Evaluatable joint update fields and local Jacobian diagnostics.

The four mechanism testbeds (RPS on a simplex pair, a 2D contraction-plus-skew
field, a logistic 2x2 game in logits, a linear 3D field with known skew) plus
generic quadratic-potential / potential-plus-skew constructions and tabulated
sample lookup. `jacobian_split` separates a Jacobian into its symmetric and
antisymmetric parts and reports the antisymmetric (rotational) energy
||A||_F^2, the local integrability obstruction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RPS_PAYOFF = np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])
ROT2 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def _check_skew(s: np.ndarray, name: str = "S") -> np.ndarray:
    s = np.asarray(s, dtype=float)
    scale = max(1.0, float(np.abs(s).max()))
    if np.abs(s + s.T).max() > 1e-12 * scale:
        raise ValueError(f"{name} must be antisymmetric (S = -S^T to 1e-12)")
    return s


class Field:
    """Base class: subclasses provide .dim and evaluate(x) -> update direction."""

    dim: int

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _check_x(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected point of dimension {self.dim}, got {x.shape}")
        return x


@dataclass
class RPS(Field):
    """Two-player Rock-Paper-Scissors ascent field on Delta_3 x Delta_3.

    x = (p, q) stacked. Each player's payoff gradient is A q (resp. A p) for
    the win=+1/lose=-1/tie=0 payoff matrix, projected onto the simplex tangent
    space (subtract the mean) so the field never leaves the affine hull.
    """

    dim: int = 6

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = self._check_x(x)
        p, q = x[:3], x[3:]
        for block in (p, q):
            if abs(block.sum() - 1.0) > 1e-9 or block.min() < -1e-9:
                raise ValueError(f"point not on the simplex within 1e-9: {block}")
        gp = RPS_PAYOFF @ q
        gq = RPS_PAYOFF @ p
        return np.concatenate([gp - gp.mean(), gq - gq.mean()])


@dataclass
class BilinearSkew2D(Field):
    """U(z) = -contraction*z + rho*Jz with J = [[0,1],[-1,0]].

    contraction=0, rho=1 is the canonical pure-skew field F(u,v) = (v,-u).
    """

    rho: float = 1.0
    contraction: float = 1.0
    dim: int = 2

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = self._check_x(x)
        return -self.contraction * x + self.rho * (ROT2 @ x)


@dataclass
class Logistic2x2(Field):
    """Simultaneous logit-ascent field of a 2x2 mixed-strategy game.

    x = (a, b) are logits, p = sigmoid(a), q = sigmoid(b); the field is the
    exact gradient of each player's expected payoff with respect to its own
    logit. Default payoffs are Matching Pennies (predominantly cyclic field).
    """

    payoff_a: np.ndarray = field(
        default_factory=lambda: np.array([[1.0, -1.0], [-1.0, 1.0]])
    )
    payoff_b: np.ndarray = field(
        default_factory=lambda: np.array([[-1.0, 1.0], [1.0, -1.0]])
    )
    dim: int = 2

    def __post_init__(self):
        self.payoff_a = np.asarray(self.payoff_a, dtype=float)
        self.payoff_b = np.asarray(self.payoff_b, dtype=float)
        if self.payoff_a.shape != (2, 2) or self.payoff_b.shape != (2, 2):
            raise ValueError("payoff tables must be 2x2")

    def payoffs(self, x: np.ndarray) -> tuple[float, float]:
        """Closed-form expected payoffs (J1, J2) at logits x = (a, b)."""
        a, b = np.asarray(x, dtype=float)
        p = _sigmoid(a)
        q = _sigmoid(b)
        pv = np.array([p, 1.0 - p])
        qv = np.array([q, 1.0 - q])
        return float(pv @ self.payoff_a @ qv), float(pv @ self.payoff_b @ qv)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = self._check_x(x)
        a, b = x
        p = _sigmoid(a)
        q = _sigmoid(b)
        qv = np.array([q, 1.0 - q])
        pv = np.array([p, 1.0 - p])
        A, B = self.payoff_a, self.payoff_b
        dj1_da = p * (1.0 - p) * float((A[0] - A[1]) @ qv)
        dj2_db = q * (1.0 - q) * float(pv @ (B[:, 0] - B[:, 1]))
        return np.array([dj1_da, dj2_db])


@dataclass
class Linear3D(Field):
    """U(z) = -z + rho*Sz with a fixed 3x3 skew S; exact potential part is -z."""

    rho: float = 0.5
    S: np.ndarray = field(
        default_factory=lambda: np.array(
            [[0.0, 1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
        )
    )
    dim: int = 3

    def __post_init__(self):
        self.S = _check_skew(np.asarray(self.S, dtype=float))
        if self.S.shape != (3, 3):
            raise ValueError("S must be 3x3")

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = self._check_x(x)
        return -x + self.rho * (self.S @ x)


@dataclass
class QuadraticPotential(Field):
    """U(x) = -Q(x-c), the gradient of Phi(x) = -1/2 (x-c)'Q(x-c), Q SPD."""

    Q: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        self.Q = np.asarray(self.Q, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        d = self.c.shape[0]
        if self.Q.shape != (d, d):
            raise ValueError(f"Q must be {d}x{d}")
        scale = max(1.0, float(np.abs(self.Q).max()))
        if np.abs(self.Q - self.Q.T).max() > 1e-12 * scale:
            raise ValueError("Q must be symmetric")
        try:
            np.linalg.cholesky(self.Q)
        except np.linalg.LinAlgError as exc:
            raise ValueError("Q must be positive definite") from exc
        self.dim = d

    def potential(self, x: np.ndarray) -> float:
        dx = np.asarray(x, dtype=float) - self.c
        return float(-0.5 * dx @ self.Q @ dx)

    def grad_potential(self, x: np.ndarray) -> np.ndarray:
        return -self.Q @ (np.asarray(x, dtype=float) - self.c)

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = self._check_x(x)
        return self.grad_potential(x)


@dataclass
class PotentialPlusSkew(Field):
    """U(x) = base(x) + rho*Sx: concave-quadratic ascent plus a skew swirl."""

    base: QuadraticPotential
    S: np.ndarray
    rho: float = 0.0

    def __post_init__(self):
        self.S = _check_skew(np.asarray(self.S, dtype=float))
        if self.S.shape != (self.base.dim, self.base.dim):
            raise ValueError("S dimension must match the base potential")
        self.dim = self.base.dim

    def potential(self, x: np.ndarray) -> float:
        return self.base.potential(x)

    def grad_potential(self, x: np.ndarray) -> np.ndarray:
        return self.base.grad_potential(x)

    def residual(self, x: np.ndarray) -> np.ndarray:
        """Skew part rho*Sx (the non-potential component of the update field)."""
        return self.rho * (self.S @ np.asarray(x, dtype=float))

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = self._check_x(x)
        return self.base.grad_potential(x) + self.rho * (self.S @ x)


@dataclass
class Tabulated(Field):
    """Nearest-sample lookup field from (points, values) tables."""

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.points.shape != self.values.shape or self.points.ndim != 2:
            raise ValueError("points and values must be matching N x d arrays")
        self.dim = self.points.shape[1]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        x = self._check_x(x)
        idx = int(np.argmin(np.sum((self.points - x) ** 2, axis=1)))
        return self.values[idx].copy()


@dataclass
class JacobianSplit:
    """J = S_sym + A_anti with rot_energy = ||A_anti||_F^2."""

    J: np.ndarray
    S_sym: np.ndarray
    A_anti: np.ndarray
    rot_energy: float


def _sigmoid(z: float) -> float:
    return 1.0 / (1.0 + np.exp(-z))


def eval_field(spec: Field, x: np.ndarray) -> np.ndarray:
    """Evaluate the update field U(x)."""
    return spec.evaluate(x)


def eval_field_batch(spec: Field, xs: np.ndarray) -> np.ndarray:
    """Evaluate the field row-wise on an N x d array."""
    xs = np.asarray(xs, dtype=float)
    return np.stack([spec.evaluate(row) for row in xs])


def jacobian_fd(spec: Field, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference Jacobian J[i][j] = dU_i/dx_j."""
    if isinstance(spec, Tabulated):
        raise ValueError("tabulated fields are not differentiable")
    x = np.asarray(x, dtype=float)
    d = x.shape[0]
    J = np.empty((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        J[:, j] = (spec.evaluate(x + e) - spec.evaluate(x - e)) / (2.0 * h)
    return J


def jacobian_split(J: np.ndarray) -> JacobianSplit:
    """Exact symmetric/antisymmetric split of a square matrix."""
    J = np.asarray(J, dtype=float)
    if J.ndim != 2 or J.shape[0] != J.shape[1]:
        raise ValueError("J must be square")
    s = 0.5 * (J + J.T)
    a = 0.5 * (J - J.T)
    return JacobianSplit(J=J, S_sym=s, A_anti=a, rot_energy=float(np.sum(a * a)))
