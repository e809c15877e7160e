"""Local attribution methods for windowed forecast instances.

Every method produces one importance tensor of shape
(outputs, horizon, J, L) per instance: the relevance of each lookback cell
(feature j at position l) to each prediction. Perturbation methods store
absolute output changes and are nonnegative; gradient methods keep sign.
Known-future covariates ride along unchanged and are never perturbed.

Methods:

* feature_ablation            replace one cell with a fixed baseline
* feature_permutation         shuffle one cell across a batch of instances
* morris_sensitivity          mean absolute elementary effect over trajectories
* feature_occlusion           ablation with fresh Gaussian counterfactuals
* augmented_feature_occlusion ablation with bootstrap counterfactuals
* integrated_gradients        path integral of gradients from a baseline
* gradient_shap               expected gradient over jittered baselines
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import Baseline, bootstrap_baseline, gaussian_baseline, zero_baseline
from .oracle import ForecastOracle, gradient_tensor, predict
from .panel import TimeSeriesPanel
from .windows import WindowedInstance

PERTURBATION_METHODS = ("feature_ablation", "feature_permutation", "morris_sensitivity",
                        "feature_occlusion", "augmented_feature_occlusion")
GRADIENT_METHODS = ("integrated_gradients", "gradient_shap")
ALL_METHODS = PERTURBATION_METHODS + GRADIENT_METHODS


class AttributionError(RuntimeError):
    pass


@dataclass(frozen=True)
class AttributionTensor:
    """Importance values (outputs, horizon, J, L) for one instance."""

    method: str
    entity: str
    anchor: np.datetime64
    feature_names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 4:
            raise AttributionError(f"attribution tensor must be 4-d, got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise AttributionError("attribution tensor has non-finite entries")

    @property
    def lookback(self) -> int:
        return self.values.shape[3]


def _tensor(method: str, instance: WindowedInstance, values: np.ndarray) -> AttributionTensor:
    return AttributionTensor(method, instance.entity, instance.anchor,
                             instance.feature_names, np.asarray(values, dtype=float))


def _mask_one_cell_batch(instance: WindowedInstance, replacement: np.ndarray) -> list[WindowedInstance]:
    """One probe per cell, each with a single cell swapped for its replacement."""
    J, L = instance.past.shape
    probes = []
    for j in range(J):
        for l in range(L):
            past = instance.past.copy()
            past[j, l] = replacement[j, l]
            probes.append(instance.with_past(past))
    return probes


def _single_cell_masking(oracle: ForecastOracle, instance: WindowedInstance,
                         replacement: np.ndarray) -> np.ndarray:
    """|f(X) - f(X with cell (j,l) replaced)| for every cell; J*L+1 forwards."""
    J, L = instance.past.shape
    batch = [instance] + _mask_one_cell_batch(instance, replacement)
    outs = predict(oracle, batch)
    base, perturbed = outs[0], outs[1:]
    diffs = np.abs(base[None, :, :] - perturbed)       # (J*L, O, H)
    return diffs.reshape(J, L, *base.shape).transpose(2, 3, 0, 1)


def _whole_feature_masking(oracle: ForecastOracle, instance: WindowedInstance,
                           replacement: np.ndarray) -> np.ndarray:
    """Mask each feature at all lookback positions at once; J+1 forwards.

    The per-feature change is broadcast along the window so the tensor shape
    contract is unchanged; useful for whole-feature importance summaries.
    """
    J, L = instance.past.shape
    probes = [instance]
    for j in range(J):
        past = instance.past.copy()
        past[j, :] = replacement[j, :]
        probes.append(instance.with_past(past))
    outs = predict(oracle, probes)
    diffs = np.abs(outs[0][None, :, :] - outs[1:])     # (J, O, H)
    return np.repeat(diffs.transpose(1, 2, 0)[:, :, :, None], L, axis=3)


def _masking(oracle, instance, replacement, whole_features: bool) -> np.ndarray:
    if whole_features:
        return _whole_feature_masking(oracle, instance, replacement)
    return _single_cell_masking(oracle, instance, replacement)


def brute_force_relevance(oracle: ForecastOracle, instance: WindowedInstance,
                          cell: tuple[int, int], baseline_value: float) -> np.ndarray:
    """Literal two-forward-pass relevance of one cell, shape (outputs, horizon).

    Kept as the independent reference for the masking methods: it must match
    feature_ablation cell-for-cell, bitwise.
    """
    j, l = cell
    past = instance.past.copy()
    past[j, l] = baseline_value
    outs = predict(oracle, [instance, instance.with_past(past)])
    return np.abs(outs[0] - outs[1])


def feature_ablation(oracle: ForecastOracle, instance: WindowedInstance,
                     baseline: Baseline | None = None, seed: int = 0,
                     whole_features: bool = False) -> AttributionTensor:
    """Masking against a fixed baseline block (default zeros).

    Default granularity is one cell at a time; ``whole_features`` masks each
    feature across the entire window instead.
    """
    baseline = baseline or zero_baseline()
    rng = np.random.default_rng(seed)
    J, L = instance.past.shape
    replacement = baseline.matrix(rng, J, L)
    return _tensor("feature_ablation", instance,
                   _masking(oracle, instance, replacement, whole_features))


def feature_occlusion(oracle: ForecastOracle, instance: WindowedInstance,
                      mean: float = 0.0, std: float = 1.0, seed: int = 0,
                      whole_features: bool = False) -> AttributionTensor:
    """Masking with an independent Gaussian draw per cell."""
    rng = np.random.default_rng(seed)
    replacement = gaussian_baseline(mean, std).matrix(rng, *instance.past.shape)
    return _tensor("feature_occlusion", instance,
                   _masking(oracle, instance, replacement, whole_features))


def augmented_feature_occlusion(oracle: ForecastOracle, instance: WindowedInstance,
                                training: TimeSeriesPanel | Baseline, seed: int = 0,
                                whole_features: bool = False) -> AttributionTensor:
    """Masking with counterfactuals drawn from training values.

    Draws stay inside the observed distribution of each feature, avoiding the
    out-of-distribution probes a Gaussian baseline can produce.
    """
    baseline = training if isinstance(training, Baseline) else \
        bootstrap_baseline(training, instance.feature_names)
    rng = np.random.default_rng(seed)
    replacement = baseline.matrix(rng, *instance.past.shape)
    return _tensor("augmented_feature_occlusion", instance,
                   _masking(oracle, instance, replacement, whole_features))


def feature_permutation(oracle: ForecastOracle, instances: list[WindowedInstance],
                        seed: int = 0) -> list[AttributionTensor]:
    """Shuffle each cell across the batch and score the per-instance change.

    For every cell (j, l) a seeded permutation of the batch supplies each
    instance with another instance's value at that cell; the attribution is
    |original - shuffled| per output. Needs at least two instances.
    """
    B = len(instances)
    if B < 2:
        raise AttributionError("feature_permutation needs a batch of at least 2 instances")
    J, L = instances[0].past.shape
    rng = np.random.default_rng(seed)

    base = predict(oracle, instances)                     # (B, O, H)
    values = np.stack([inst.past for inst in instances])  # (B, J, L)
    diffs = np.empty((B, base.shape[1], base.shape[2], J, L))
    for j in range(J):
        for l in range(L):
            perm = rng.permutation(B)
            probes = []
            for i in range(B):
                past = instances[i].past.copy()
                past[j, l] = values[perm[i], j, l]
                probes.append(instances[i].with_past(past))
            shuffled = predict(oracle, probes)
            diffs[:, :, :, j, l] = np.abs(base - shuffled)
    return [_tensor("feature_permutation", inst, diffs[i]) for i, inst in enumerate(instances)]


@dataclass(frozen=True)
class MorrisConfig:
    """Elementary-effects sampling plan.

    ``bounds`` holds per-feature (low, high) sampling ranges, normally the
    training min/max; degenerate ranges are widened to +/-1 around the value.
    ``delta_fraction`` is the one-at-a-time step, as a fraction of each range;
    the default is the standard p/(2(p-1)) grid jump.
    """

    bounds: np.ndarray                 # (J, 2)
    trajectories: int = 10
    levels: int = 4
    delta_fraction: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.trajectories < 1:
            raise ValueError("trajectories must be >= 1")
        if self.levels < 2 or self.levels % 2:
            raise ValueError("levels must be an even integer >= 2")
        frac = self.fraction
        if not 0 < frac <= 1:
            raise ValueError("delta_fraction must be in (0, 1]")
        bounds = np.asarray(self.bounds, dtype=float)
        if bounds.ndim != 2 or bounds.shape[1] != 2:
            raise ValueError("bounds must have shape (J, 2)")
        if not np.isfinite(bounds).all():
            raise ValueError("bounds must be finite")
        degenerate = bounds[:, 0] >= bounds[:, 1]
        if degenerate.any():
            bounds = bounds.copy()
            mid = bounds[degenerate, 0]
            bounds[degenerate, 0] = mid - 1.0
            bounds[degenerate, 1] = mid + 1.0
        object.__setattr__(self, "bounds", bounds)

    @property
    def fraction(self) -> float:
        if self.delta_fraction is not None:
            return self.delta_fraction
        return self.levels / (2.0 * (self.levels - 1))

    @classmethod
    def from_panel(cls, panel: TimeSeriesPanel, feature_names: tuple[str, ...],
                   **kwargs) -> "MorrisConfig":
        bounds = np.empty((len(feature_names), 2))
        for j, name in enumerate(feature_names):
            vals = panel.values[:, panel.feature_index(name)]
            present = panel.mask[:, panel.feature_index(name)]
            pool = vals[present]
            if len(pool) == 0:
                raise AttributionError(f"feature {name!r} has no observed values for bounds")
            bounds[j] = (pool.min(), pool.max())
        return cls(bounds=bounds, **kwargs)


def morris_sensitivity(oracle: ForecastOracle, instance: WindowedInstance,
                       config: MorrisConfig) -> AttributionTensor:
    """Mean absolute elementary effect (mu*) per lookback cell.

    Treats the J*L cells as independent dimensions on a p-level grid over the
    per-feature bounds. Each trajectory starts at a random grid point and
    perturbs one cell at a time in seeded random order; the elementary effect
    is the output change divided by the signed step in input units, so for an
    affine model it equals the weight exactly. Costs
    trajectories * (J*L + 1) forward passes.
    """
    J, L = instance.past.shape
    if config.bounds.shape[0] != J:
        raise AttributionError(
            f"Morris bounds cover {config.bounds.shape[0]} features, instance has {J}")
    rng = np.random.default_rng(config.seed)
    p, r = config.levels, config.trajectories
    frac = config.fraction
    lo = np.repeat(config.bounds[:, 0], L)
    span = np.repeat(config.bounds[:, 1] - config.bounds[:, 0], L)
    n_cells = J * L
    grid = np.arange(p) / (p - 1)

    abs_effects = np.zeros((oracle.output_shape[0], oracle.output_shape[1], n_cells))
    for _ in range(r):
        levels = grid[rng.integers(0, p, size=n_cells)]
        order = rng.permutation(n_cells)
        # trajectory points are known upfront; evaluate them as one batch
        points = np.empty((n_cells + 1, n_cells))
        steps = np.empty(n_cells)
        current = levels.copy()
        points[0] = current
        for rank, cell in enumerate(order):
            direction = frac if current[cell] + frac <= 1.0 + 1e-12 else -frac
            current = current.copy()
            current[cell] += direction
            steps[rank] = direction
            points[rank + 1] = current
        probes = [instance.with_past((lo + pt * span).reshape(J, L)) for pt in points]
        outs = predict(oracle, probes)                   # (n_cells+1, O, H)
        for rank, cell in enumerate(order):
            ee = (outs[rank + 1] - outs[rank]) / (steps[rank] * span[cell])
            abs_effects[:, :, cell] += np.abs(ee)
    mu_star = (abs_effects / r).reshape(*oracle.output_shape, J, L)
    return _tensor("morris_sensitivity", instance, mu_star)


def integrated_gradients(oracle: ForecastOracle, instance: WindowedInstance,
                         baseline: np.ndarray | None = None, steps: int = 50,
                         eps: float = 1e-4) -> AttributionTensor:
    """Midpoint-rule path integral of gradients from a baseline to the input.

    phi[o, tau, j, l] = (x - x0)[j, l] * mean_s grad[o, tau, j, l] evaluated at
    x0 + (s - 0.5)/steps * (x - x0). Signed; for an affine model the integrand
    is constant and the result is exact for any step count. Oracles without
    exact gradients fall back to central finite differences with ``eps``.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    x0 = np.zeros_like(instance.past) if baseline is None else np.asarray(baseline, dtype=float)
    if x0.shape != instance.past.shape:
        raise AttributionError(f"baseline shape {x0.shape} != past shape {instance.past.shape}")
    delta = instance.past - x0
    O, H = oracle.output_shape
    total = np.zeros((O, H, *instance.past.shape))
    for s in range(1, steps + 1):
        point = x0 + ((s - 0.5) / steps) * delta
        grads = gradient_tensor(oracle, instance.with_past(point), eps=eps)
        if not np.isfinite(grads).all():
            raise AttributionError(f"non-finite gradient at path step {s}")
        total += grads
    phi = (total / steps) * delta[None, None, :, :]
    return _tensor("integrated_gradients", instance, phi)


def gradient_shap(oracle: ForecastOracle, instance: WindowedInstance,
                  baseline: Baseline | None = None, n_samples: int = 20,
                  noise: float = 0.1, seed: int = 0, eps: float = 1e-4) -> AttributionTensor:
    """Expected (input - baseline) * gradient over jittered path samples.

    Each sample draws a baseline block, a uniform interpolation point between
    it and the input, and optional Gaussian smoothing noise; the mean of
    (x - x0_s) * grad at those points estimates the attribution. Seeded and
    signed.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    baseline = baseline or gaussian_baseline()
    rng = np.random.default_rng(seed)
    J, L = instance.past.shape
    O, H = oracle.output_shape
    acc = np.zeros((O, H, J, L))
    for _ in range(n_samples):
        x0 = baseline.matrix(rng, J, L)
        u = rng.uniform()
        point = x0 + u * (instance.past - x0)
        if noise > 0:
            point = point + rng.normal(0.0, noise, size=(J, L))
        grads = gradient_tensor(oracle, instance.with_past(point), eps=eps)
        if not np.isfinite(grads).all():
            raise AttributionError("non-finite gradient in gradient_shap sample")
        acc += grads * (instance.past - x0)[None, None, :, :]
    return _tensor("gradient_shap", instance, acc / n_samples)
