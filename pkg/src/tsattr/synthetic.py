"""Synthetic panels with planted per-group influence, for end-to-end checks.

The target at day d is a fixed nonnegative-weighted sum of the group features
at day d - horizon (plus optional noise), so every valid window's targets are
an exact linear function of its own lookback cells whenever
lookback >= horizon. The planted l1-normalized weights are then the ground
truth share each group should receive from a faithful attribution pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel import FeatureSpec, TimeSeriesPanel


@dataclass
class SyntheticTruthTask:
    panel: TimeSeriesPanel
    group_features: tuple[str, ...]
    planted_weights: np.ndarray
    planted_shares: np.ndarray
    horizon: int
    noise: float
    seed: int


def generate_synthetic_truth(group_features: tuple[str, ...] | list[str],
                             entities: int, length: int, horizon: int,
                             planted_weights, noise: float = 0.0, seed: int = 0,
                             start: str = "2021-01-04",
                             nonlinearity: float = 0.0) -> SyntheticTruthTask:
    """Build a panel whose target is generated from known group weights.

    Group features are iid uniform on [0.5, 1.5], so every group has the same
    positive mean influence scale and masking to zero is always informative.
    The target at day d equals sum_j w_j * x[j, d - horizon]
    (+ nonlinearity * tanh of the same sum, + N(0, noise^2)). Weights must be
    nonnegative; their l1 normalization is the planted share vector.
    """
    weights = np.asarray(planted_weights, dtype=float)
    if weights.shape != (len(group_features),):
        raise ValueError("one planted weight per group feature required")
    if (weights < 0).any():
        raise ValueError("planted weights must be nonnegative")
    if weights.sum() == 0:
        raise ValueError("at least one planted weight must be positive")
    if noise < 0:
        raise ValueError("noise must be >= 0")

    rng = np.random.default_rng(seed)
    n_g = len(group_features)
    # draw `horizon` extra steps of history so early targets are defined
    x_full = rng.uniform(0.5, 1.5, size=(entities, n_g, length + horizon))
    signal = np.einsum("g,egt->et", weights, x_full[:, :, :length])
    target = signal.copy()
    if nonlinearity:
        target = target + nonlinearity * np.tanh(signal)
    if noise:
        target = target + rng.normal(0.0, noise, size=target.shape)

    features = [FeatureSpec(name, "dynamic") for name in group_features]
    features.append(FeatureSpec("target", "target"))
    values = np.concatenate([x_full[:, :, horizon:], target[:, None, :]], axis=1)
    mask = np.ones_like(values, dtype=bool)
    time_index = np.datetime64(start) + np.arange(length) * np.timedelta64(1, "D")
    panel = TimeSeriesPanel([f"e{i}" for i in range(entities)],
                            time_index.astype("datetime64[ns]"),
                            features, values, mask)
    return SyntheticTruthTask(
        panel=panel, group_features=tuple(group_features),
        planted_weights=weights, planted_shares=weights / weights.sum(),
        horizon=horizon, noise=noise, seed=seed)
