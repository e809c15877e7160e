"""Reference forecasters with exact input gradients.

Desk-scale stand-ins for heavyweight forecasting networks: a ridge-regularized
affine model solved in closed form and a single-hidden-layer tanh network
trained with Adam. Both evaluate batch rows one at a time so batched and
per-instance predictions agree bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .oracle import ForecastOracle
from .windows import WindowedInstance


class FitError(RuntimeError):
    """Raised when model fitting cannot proceed."""


class ReferenceLinearModel(ForecastOracle):
    """Affine map per output: prediction[o, tau] = <W[o, tau], past> + b[o, tau]."""

    has_exact_gradient = True

    def __init__(self, weights: np.ndarray, bias: np.ndarray):
        weights = np.asarray(weights, dtype=float)
        bias = np.asarray(bias, dtype=float)
        if weights.ndim != 4:
            raise ValueError("weights must have shape (outputs, horizon, J, L)")
        if bias.shape != weights.shape[:2]:
            raise ValueError("bias must have shape (outputs, horizon)")
        self.weights = weights
        self.bias = bias
        self.output_shape = weights.shape[:2]

    def predict(self, batch: list[WindowedInstance]) -> np.ndarray:
        O, H = self.output_shape
        flat_w = self.weights.reshape(O * H, -1)
        rows = []
        for inst in batch:
            rows.append(flat_w @ inst.past.reshape(-1) + self.bias.reshape(-1))
        return np.stack(rows).reshape(len(batch), O, H)

    def gradient(self, instance: WindowedInstance, o: int, tau: int) -> np.ndarray:
        O, H = self.output_shape
        if not (0 <= o < O and 0 <= tau < H):
            raise IndexError(f"output index ({o}, {tau}) out of range ({O}, {H})")
        return self.weights[o, tau].copy()


class ReferenceMLP(ForecastOracle):
    """One tanh hidden layer over the flattened past block; smooth everywhere."""

    has_exact_gradient = True

    def __init__(self, w1: np.ndarray, b1: np.ndarray, w2: np.ndarray,
                 b2: np.ndarray, output_shape: tuple[int, int]):
        self.w1 = np.asarray(w1, dtype=float)    # (hidden, J*L)
        self.b1 = np.asarray(b1, dtype=float)
        self.w2 = np.asarray(w2, dtype=float)    # (O*H, hidden)
        self.b2 = np.asarray(b2, dtype=float)
        self.output_shape = output_shape
        if self.w2.shape[0] != output_shape[0] * output_shape[1]:
            raise ValueError("w2 rows must equal outputs * horizon")

    def _forward(self, x: np.ndarray) -> np.ndarray:
        hidden = np.tanh(self.w1 @ x + self.b1)
        return self.w2 @ hidden + self.b2

    def predict(self, batch: list[WindowedInstance]) -> np.ndarray:
        rows = [self._forward(inst.past.reshape(-1)) for inst in batch]
        return np.stack(rows).reshape(len(batch), *self.output_shape)

    def gradient(self, instance: WindowedInstance, o: int, tau: int) -> np.ndarray:
        O, H = self.output_shape
        if not (0 <= o < O and 0 <= tau < H):
            raise IndexError(f"output index ({o}, {tau}) out of range ({O}, {H})")
        x = instance.past.reshape(-1)
        hidden = np.tanh(self.w1 @ x + self.b1)
        # d out_k / d x = w2[k] @ diag(1 - tanh^2) @ w1
        back = (self.w2[o * H + tau] * (1.0 - hidden ** 2)) @ self.w1
        return back.reshape(instance.past.shape)


def _design_matrix(train: list[WindowedInstance]) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([inst.past.reshape(-1) for inst in train])
    y = np.stack([inst.targets.reshape(-1) for inst in train])
    return X, y


def fit_linear(train: list[WindowedInstance], ridge: float = 1e-6,
               sample_weight: np.ndarray | None = None) -> tuple[ReferenceLinearModel, float]:
    """Closed-form ridge fit; returns (model, training MSE).

    Minimizes mean squared error plus ``ridge`` times the squared weight norm
    (bias unpenalized). A singular system with ridge=0 raises with advice.
    """
    if not train:
        raise FitError("fit_linear needs at least one instance")
    if ridge < 0:
        raise FitError("ridge must be >= 0")
    X, y = _design_matrix(train)
    n, d = X.shape
    w = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=float)
    wsum = w.sum()

    Xa = np.column_stack([X, np.ones(n)])
    A = (Xa * w[:, None]).T @ Xa / wsum
    rhs = (Xa * w[:, None]).T @ y / wsum
    penalty = np.eye(d + 1) * ridge
    penalty[d, d] = 0.0
    if ridge == 0.0 and np.linalg.matrix_rank(A) < d + 1:
        raise FitError("singular normal equations; refit with ridge > 0")
    try:
        theta = np.linalg.solve(A + penalty, rhs)
    except np.linalg.LinAlgError:
        raise FitError("singular normal equations; refit with ridge > 0") from None

    O, H = train[0].targets.shape
    J, L = train[0].past.shape
    weights = theta[:d].T.reshape(O, H, J, L)
    bias = theta[d].reshape(O, H)
    model = ReferenceLinearModel(weights, bias)
    residual = Xa @ theta - y
    loss = float((residual ** 2 * w[:, None]).sum() / (wsum * y.shape[1]))
    return model, loss


@dataclass(frozen=True)
class MLPConfig:
    hidden: int = 32
    learning_rate: float = 1e-2
    epochs: int = 500
    init_scale: float | None = None   # default: 1/sqrt(fan_in)


def fit_mlp(train: list[WindowedInstance], config: MLPConfig = MLPConfig(),
            seed: int = 0) -> tuple[ReferenceMLP, float]:
    """Full-batch Adam on a one-hidden-layer tanh net; returns (model, MSE).

    Deterministic given the seed. Raises if the loss goes non-finite,
    reporting the epoch.
    """
    if not train:
        raise FitError("fit_mlp needs at least one instance")
    X, y = _design_matrix(train)
    n, d = X.shape
    k = y.shape[1]
    O, H = train[0].targets.shape

    rng = np.random.default_rng(seed)
    scale1 = config.init_scale if config.init_scale is not None else 1.0 / np.sqrt(d)
    scale2 = config.init_scale if config.init_scale is not None else 1.0 / np.sqrt(config.hidden)
    params = {
        "w1": rng.normal(0.0, scale1, size=(config.hidden, d)),
        "b1": np.zeros(config.hidden),
        "w2": rng.normal(0.0, scale2, size=(k, config.hidden)),
        "b2": np.zeros(k),
    }
    m = {key: np.zeros_like(val) for key, val in params.items()}
    v = {key: np.zeros_like(val) for key, val in params.items()}
    beta1, beta2, adam_eps = 0.9, 0.999, 1e-8

    loss = np.inf
    for epoch in range(1, config.epochs + 1):
        z = X @ params["w1"].T + params["b1"]
        h = np.tanh(z)
        pred = h @ params["w2"].T + params["b2"]
        err = pred - y
        with np.errstate(over="ignore"):   # divergence shows up as inf loss
            loss = float((err ** 2).mean())
        if not np.isfinite(loss):
            raise FitError(f"training diverged at epoch {epoch}")

        scale = 2.0 / (n * k)
        grads = {
            "w2": scale * err.T @ h,
            "b2": scale * err.sum(axis=0),
        }
        dh = (err @ params["w2"]) * (1.0 - h ** 2)
        grads["w1"] = scale * dh.T @ X
        grads["b1"] = scale * dh.sum(axis=0)

        for key in params:
            m[key] = beta1 * m[key] + (1 - beta1) * grads[key]
            v[key] = beta2 * v[key] + (1 - beta2) * grads[key] ** 2
            m_hat = m[key] / (1 - beta1 ** epoch)
            v_hat = v[key] / (1 - beta2 ** epoch)
            params[key] -= config.learning_rate * m_hat / (np.sqrt(v_hat) + adam_eps)

    model = ReferenceMLP(params["w1"], params["b1"], params["w2"], params["b2"], (O, H))
    final = model.predict(train) - y.reshape(n, O, H)
    return model, float((final ** 2).mean())
