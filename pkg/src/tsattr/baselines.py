"""Counterfactual baselines used to mask lookback cells.

Three flavors: a fixed zero matrix (feature means, in standardized space),
independent Gaussian draws per cell, and bootstrap draws from the empirical
training distribution of each feature. All draws are deterministic given the
generator passed in.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .panel import TimeSeriesPanel


class BaselineError(ValueError):
    pass


@dataclass(frozen=True)
class Baseline:
    """Counterfactual source for masked cells.

    ``kind`` is one of zero / gaussian / bootstrap. Bootstrap baselines carry
    one pool of observed training values per lookback feature, in instance
    feature order.
    """

    kind: str
    mean: float = 0.0
    std: float = 1.0
    pools: tuple[np.ndarray, ...] | None = None
    feature_names: tuple[str, ...] | None = None

    def matrix(self, rng: np.random.Generator, n_features: int, length: int) -> np.ndarray:
        """Draw a (n_features, length) replacement block."""
        if self.kind == "zero":
            return np.zeros((n_features, length))
        if self.kind == "gaussian":
            return rng.normal(self.mean, self.std, size=(n_features, length))
        if self.kind == "bootstrap":
            if self.pools is None or len(self.pools) != n_features:
                raise BaselineError(
                    f"bootstrap baseline has {0 if self.pools is None else len(self.pools)} "
                    f"feature pools, instance has {n_features} features")
            out = np.empty((n_features, length))
            for j, pool in enumerate(self.pools):
                out[j] = pool[rng.integers(0, len(pool), size=length)]
            return out
        raise BaselineError(f"unknown baseline kind {self.kind!r}")


def zero_baseline() -> Baseline:
    return Baseline("zero")


def gaussian_baseline(mean: float = 0.0, std: float = 1.0) -> Baseline:
    if std < 0:
        raise BaselineError("std must be >= 0")
    return Baseline("gaussian", mean=mean, std=std)


def bootstrap_baseline(panel: TimeSeriesPanel, feature_names: tuple[str, ...]) -> Baseline:
    """Empirical per-feature pools from a training panel.

    ``feature_names`` fixes the pool order to the instance's lookback features;
    a name missing from the panel is an error.
    """
    pools = []
    for name in feature_names:
        try:
            j = panel.feature_index(name)
        except Exception:
            raise BaselineError(f"feature {name!r} not present in the training panel") from None
        vals = panel.values[:, j][panel.mask[:, j]].ravel()
        if len(vals) == 0:
            raise BaselineError(f"feature {name!r} has no observed training values")
        pools.append(vals.copy())
    return Baseline("bootstrap", pools=tuple(pools), feature_names=tuple(feature_names))
