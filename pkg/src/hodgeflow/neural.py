"""Amortized potential projection: fit a scalar potential net to a sampled field.

Phi(x) = sum_k a_k tanh(w_k'x + b_k) with the induced metric-gradient field
g(x) = M^{-1} sum_k a_k sech^2(w_k'x + b_k) w_k. The projection loss is

    (1/B) sum ||F(x) - g(x)||_M^2
    + lambda_gauge * (mean Phi)^2 + lambda_wd * ||theta||^2,

and both first derivatives (the field) and the loss gradient through the
input-gradient are closed form, so no autodiff framework is needed. Training
is plain minibatch SGD with momentum.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .metric import Metric


@dataclass
class PotentialNet:
    """One-hidden-layer tanh potential: Phi(x) = a . tanh(W1 x + b1)."""

    W1: np.ndarray                 # (H, d)
    b1: np.ndarray                 # (H,)
    a: np.ndarray                  # (H,)
    final_loss: float | None = None

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=float)
        self.b1 = np.asarray(self.b1, dtype=float)
        self.a = np.asarray(self.a, dtype=float)
        h, d = self.W1.shape
        if self.b1.shape != (h,) or self.a.shape != (h,):
            raise ValueError("parameter shapes are inconsistent")
        for arr in (self.W1, self.b1, self.a):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite network parameters")
        self.width = h
        self.dim = d

    def value(self, x: np.ndarray) -> float:
        u = self.W1 @ np.asarray(x, dtype=float) + self.b1
        return float(self.a @ np.tanh(u))

    def value_batch(self, xs: np.ndarray) -> np.ndarray:
        u = np.asarray(xs, dtype=float) @ self.W1.T + self.b1
        return np.tanh(u) @ self.a

    def grad_x_batch(self, xs: np.ndarray) -> np.ndarray:
        """Rows of grad_x Phi = sum_k a_k sech^2(u_k) w_k (no metric)."""
        u = np.asarray(xs, dtype=float) @ self.W1.T + self.b1
        s2 = 1.0 - np.tanh(u) ** 2
        return (s2 * self.a) @ self.W1

    def param_vector(self) -> np.ndarray:
        return np.concatenate([self.W1.ravel(), self.b1, self.a])

    def set_params(self, theta: np.ndarray) -> None:
        h, d = self.W1.shape
        self.W1 = theta[: h * d].reshape(h, d).copy()
        self.b1 = theta[h * d : h * d + h].copy()
        self.a = theta[h * d + h :].copy()

    def to_json(self) -> str:
        return json.dumps(
            {
                "width": self.width,
                "dim": self.dim,
                "W1": self.W1.ravel().tolist(),
                "b1": self.b1.tolist(),
                "a": self.a.tolist(),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PotentialNet":
        doc = json.loads(text)
        h, d = int(doc["width"]), int(doc["dim"])
        return cls(
            W1=np.array(doc["W1"], dtype=float).reshape(h, d),
            b1=np.array(doc["b1"], dtype=float),
            a=np.array(doc["a"], dtype=float),
        )


@dataclass
class NeuralProjConfig:
    width: int = 64
    lr: float = 1e-3
    inner_steps: int = 2
    lambda_gauge: float = 1e-2
    lambda_wd: float = 1e-5
    batch: int = 64
    epochs: int = 200
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if min(self.width, self.inner_steps, self.batch, self.epochs) < 1:
            raise ValueError("width, inner_steps, batch, and epochs must be >= 1")
        if min(self.lr, self.lambda_gauge, self.lambda_wd) <= 0:
            raise ValueError("lr, lambda_gauge, and lambda_wd must be positive")


def init_net(dim: int, config: NeuralProjConfig) -> PotentialNet:
    """Fan-in uniform init: W1 ~ U(+-1/sqrt(d)), b1 = 0, a ~ U(+-1/sqrt(H))."""
    rng = np.random.default_rng(config.seed)
    h = config.width
    return PotentialNet(
        W1=rng.uniform(-1.0 / np.sqrt(dim), 1.0 / np.sqrt(dim), size=(h, dim)),
        b1=np.zeros(h),
        a=rng.uniform(-1.0 / np.sqrt(h), 1.0 / np.sqrt(h), size=h),
    )


def net_grad_x(net: PotentialNet, metric: Metric | None, x: np.ndarray) -> np.ndarray:
    """g(x) = M^{-1} grad_x Phi(x), closed form."""
    x = np.asarray(x, dtype=float)
    h = net.grad_x_batch(x[None, :])[0]
    return h if metric is None or metric.is_identity else metric.solve(h)


def net_grad_x_batch(
    net: PotentialNet, metric: Metric | None, xs: np.ndarray
) -> np.ndarray:
    h = net.grad_x_batch(xs)
    return h if metric is None or metric.is_identity else metric.solve(h)


def proj_loss(
    net: PotentialNet,
    metric: Metric | None,
    batch_x: np.ndarray,
    batch_f: np.ndarray,
    config: NeuralProjConfig,
) -> float:
    batch_x = np.asarray(batch_x, dtype=float)
    batch_f = np.asarray(batch_f, dtype=float)
    if batch_x.shape[0] == 0:
        raise ValueError("batch must be nonempty")
    r = batch_f - net_grad_x_batch(net, metric, batch_x)
    mr = r if metric is None or metric.is_identity else metric.apply(r)
    fit = np.sum(r * mr) / batch_x.shape[0]
    gauge = np.mean(net.value_batch(batch_x))
    theta = net.param_vector()
    # numpy arithmetic throughout: divergence must surface as inf, not raise
    with np.errstate(over="ignore", invalid="ignore"):
        total = (
            fit
            + config.lambda_gauge * np.square(gauge)
            + config.lambda_wd * np.dot(theta, theta)
        )
    return float(total)


def proj_loss_grad(
    net: PotentialNet,
    metric: Metric | None,
    batch_x: np.ndarray,
    batch_f: np.ndarray,
    config: NeuralProjConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Exact (dW1, db1, da) of proj_loss.

    With u = W1 x + b1, t = tanh(u), s = sech^2(u), h = sum_k a_k s_k w_k and
    residual r = F - M^{-1}h, the fit term differentiates through r'M r; the
    M and M^{-1} cancel, leaving -2/B sum_x r' dh/dtheta.
    """
    batch_x = np.asarray(batch_x, dtype=float)
    batch_f = np.asarray(batch_f, dtype=float)
    n = batch_x.shape[0]
    if n == 0:
        raise ValueError("batch must be nonempty")

    u = batch_x @ net.W1.T + net.b1      # (B, H)
    t = np.tanh(u)
    s2 = 1.0 - t * t
    h = (s2 * net.a) @ net.W1            # (B, d)
    g = h if metric is None or metric.is_identity else metric.solve(h)
    r = batch_f - g                      # (B, d)

    wr = r @ net.W1.T                    # (B, H): w_k . r_n
    d_a = (-2.0 / n) * np.sum(s2 * wr, axis=0)
    tsw = t * s2 * wr
    d_b = (4.0 / n) * net.a * np.sum(tsw, axis=0)
    d_w = (-2.0 / n) * net.a[:, None] * (s2.T @ r - 2.0 * (tsw.T @ batch_x))

    m = float(np.mean(t @ net.a))
    coeff = 2.0 * config.lambda_gauge * m / n
    d_a += coeff * np.sum(t, axis=0)
    d_b += coeff * net.a * np.sum(s2, axis=0)
    d_w += coeff * net.a[:, None] * (s2.T @ batch_x)

    d_w += 2.0 * config.lambda_wd * net.W1
    d_b += 2.0 * config.lambda_wd * net.b1
    d_a += 2.0 * config.lambda_wd * net.a
    return d_w, d_b, d_a


def sgd_steps(
    net: PotentialNet,
    metric: Metric | None,
    batch_x: np.ndarray,
    batch_f: np.ndarray,
    config: NeuralProjConfig,
    velocity: dict,
    steps: int,
) -> float:
    """In-place momentum-SGD steps on one batch; returns the last loss."""
    loss = np.nan
    for _ in range(steps):
        d_w, d_b, d_a = proj_loss_grad(net, metric, batch_x, batch_f, config)
        velocity["W1"] = config.momentum * velocity["W1"] - config.lr * d_w
        velocity["b1"] = config.momentum * velocity["b1"] - config.lr * d_b
        velocity["a"] = config.momentum * velocity["a"] - config.lr * d_a
        net.W1 = net.W1 + velocity["W1"]
        net.b1 = net.b1 + velocity["b1"]
        net.a = net.a + velocity["a"]
        loss = proj_loss(net, metric, batch_x, batch_f, config)
    return float(loss)


def new_velocity(net: PotentialNet) -> dict:
    return {
        "W1": np.zeros_like(net.W1),
        "b1": np.zeros_like(net.b1),
        "a": np.zeros_like(net.a),
    }


def train_potential(
    samples_x: np.ndarray,
    samples_f: np.ndarray,
    metric: Metric | None,
    config: NeuralProjConfig,
    loss_history: list | None = None,
) -> PotentialNet:
    """Fit the potential net to (x, F) samples by minibatch momentum SGD.

    Runs config.epochs passes over shuffled minibatches of size config.batch,
    with config.inner_steps SGD steps per batch. Aborts on non-finite loss.
    """
    samples_x = np.asarray(samples_x, dtype=float)
    samples_f = np.asarray(samples_f, dtype=float)
    n = samples_x.shape[0]
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(config.seed)
    net = init_net(samples_x.shape[1], config)
    velocity = new_velocity(net)

    loss = np.nan
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.batch):
            sel = order[start : start + config.batch]
            loss = sgd_steps(
                net, metric, samples_x[sel], samples_f[sel], config, velocity,
                config.inner_steps,
            )
            if loss_history is not None:
                loss_history.append(loss)
        if not np.isfinite(loss):
            raise RuntimeError(
                f"training diverged at epoch {epoch}: loss={loss!r} "
                f"(lr={config.lr}, width={config.width})"
            )
    net.final_loss = float(loss)
    return net
