"""Black-box forecast oracle contract and finite-difference gradients.

Every attribution method talks to a model only through this interface:
a batch predict returning (B, outputs, horizon) and, when available, an
exact gradient of one output w.r.t. the lookback block. Models without
exact gradients are differentiated by central finite differences.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from .windows import WindowedInstance


class OracleError(RuntimeError):
    """Raised when an oracle breaks its shape or finiteness contract."""


class ForecastOracle(ABC):
    """Prediction interface consumed by all attribution methods.

    Implementations must be deterministic (identical inputs give identical
    outputs within a process) and must evaluate batch rows independently, so
    batching is exactly equivalent to per-instance calls.
    """

    #: (outputs, horizon) of every prediction
    output_shape: tuple[int, int]

    has_exact_gradient: bool = False

    @abstractmethod
    def predict(self, batch: list[WindowedInstance]) -> np.ndarray:
        """Forecasts of shape (len(batch), outputs, horizon)."""

    def gradient(self, instance: WindowedInstance, o: int, tau: int) -> np.ndarray:
        """d predict[o, tau] / d past, shape (J, L); exact-gradient models only."""
        raise NotImplementedError(f"{type(self).__name__} has no exact gradient; "
                                  "use finite_diff_gradient")

    def check_output(self, out: np.ndarray, batch_size: int) -> np.ndarray:
        out = np.asarray(out, dtype=float)
        expected = (batch_size, *self.output_shape)
        if out.shape != expected:
            raise OracleError(f"oracle returned shape {out.shape}, expected {expected}")
        return out


def predict(oracle: ForecastOracle, batch: list[WindowedInstance]) -> np.ndarray:
    """Batch predict with the shape contract enforced."""
    if not batch:
        raise ValueError("predict needs a non-empty batch")
    return oracle.check_output(oracle.predict(batch), len(batch))


def finite_diff_gradient_tensor(oracle: ForecastOracle, instance: WindowedInstance,
                                eps: float = 1e-4) -> np.ndarray:
    """Central-difference gradients for every output at once.

    Returns (outputs, horizon, J, L) using 2*J*L forward evaluations,
    submitted as one batch.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    J, L = instance.past.shape
    probes = []
    for j in range(J):
        for l in range(L):
            for sign in (+1.0, -1.0):
                past = instance.past.copy()
                past[j, l] += sign * eps
                probes.append(instance.with_past(past))
    outs = predict(oracle, probes)  # (2*J*L, O, H)
    if not np.isfinite(outs).all():
        bad = int(np.flatnonzero(~np.isfinite(outs).reshape(len(probes), -1).all(axis=1))[0])
        j, l = divmod(bad // 2, L)
        raise OracleError(f"non-finite oracle output while perturbing cell ({j}, {l})")
    plus = outs[0::2]
    minus = outs[1::2]
    grads = (plus - minus) / (2.0 * eps)          # (J*L, O, H)
    O, H = oracle.output_shape
    return grads.reshape(J, L, O, H).transpose(2, 3, 0, 1)


def finite_diff_gradient(oracle: ForecastOracle, instance: WindowedInstance,
                         o: int, tau: int, eps: float = 1e-4) -> np.ndarray:
    """Central-difference gradient of output (o, tau) w.r.t. the past block."""
    O, H = oracle.output_shape
    if not (0 <= o < O and 0 <= tau < H):
        raise IndexError(f"output index ({o}, {tau}) out of range for shape ({O}, {H})")
    return finite_diff_gradient_tensor(oracle, instance, eps)[o, tau]


def gradient_tensor(oracle: ForecastOracle, instance: WindowedInstance,
                    eps: float = 1e-4) -> np.ndarray:
    """All-output gradient (outputs, horizon, J, L), exact when the oracle has one."""
    if oracle.has_exact_gradient:
        O, H = oracle.output_shape
        out = np.empty((O, H, *instance.past.shape))
        for o in range(O):
            for tau in range(H):
                out[o, tau] = oracle.gradient(instance, o, tau)
        return out
    return finite_diff_gradient_tensor(oracle, instance, eps)
