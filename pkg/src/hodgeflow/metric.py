"""Constant SPD metric M defining <u,v>_M = u'Mv and Dist_M(x,y) = sqrt((x-y)'M(x-y)).

The Cholesky factor is computed once at construction; M^{-1} is only ever
applied through triangular solves against that factor.
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, solve_triangular


class Metric:
    """Euclidean (identity) or general SPD metric on R^d."""

    def __init__(self, dim: int, matrix: np.ndarray | None = None):
        if dim < 1:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = int(dim)
        if matrix is None:
            self.kind = "identity"
            self.matrix = None
            self.chol = None
            return
        m = np.asarray(matrix, dtype=float)
        if m.shape != (dim, dim):
            raise ValueError(f"metric matrix must be {dim}x{dim}, got {m.shape}")
        scale = max(1.0, float(np.abs(m).max()))
        if np.abs(m - m.T).max() > 1e-12 * scale:
            raise ValueError("metric matrix is not symmetric (1e-12 relative)")
        m = 0.5 * (m + m.T)
        try:
            chol = np.linalg.cholesky(m)
        except np.linalg.LinAlgError as exc:
            raise ValueError("metric matrix is not positive definite") from exc
        self.kind = "spd"
        self.matrix = m
        self.chol = chol  # lower triangular, m = chol @ chol.T

    @classmethod
    def identity(cls, dim: int) -> "Metric":
        return cls(dim)

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def apply(self, u: np.ndarray) -> np.ndarray:
        """M u (rows of u if 2-d)."""
        if self.is_identity:
            return np.asarray(u, dtype=float)
        u = np.asarray(u, dtype=float)
        return u @ self.matrix.T if u.ndim == 2 else self.matrix @ u

    def solve(self, u: np.ndarray) -> np.ndarray:
        """M^{-1} u via the cached Cholesky factor."""
        if self.is_identity:
            return np.asarray(u, dtype=float)
        u = np.asarray(u, dtype=float)
        if u.ndim == 2:
            return cho_solve((self.chol, True), u.T).T
        return cho_solve((self.chol, True), u)

    def inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.dot(u, self.apply(v)))

    def norm(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(0.0, self.inner(u, u))))

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map points so Euclidean distance equals Dist_M: y = chol.T @ x."""
        points = np.asarray(points, dtype=float)
        if self.is_identity:
            return points
        return points @ self.chol

    def dist(self, x: np.ndarray, y: np.ndarray) -> float:
        d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return self.norm(d)

    def solve_t(self, u: np.ndarray) -> np.ndarray:
        """chol^{-T} u, the half-inverse used by transform round trips."""
        if self.is_identity:
            return np.asarray(u, dtype=float)
        return solve_triangular(self.chol.T, np.asarray(u, dtype=float), lower=False)

    def __repr__(self) -> str:
        return f"Metric(dim={self.dim}, kind={self.kind!r})"
