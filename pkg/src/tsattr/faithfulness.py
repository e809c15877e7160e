"""Ground-truth-free evaluation: ranking, top-k masking, AOPCR.

For each prediction (output, horizon step) the attribution tensor induces a
relevance order over lookback cells. Masking the top k% and re-predicting
measures comprehensiveness (output should move a lot); masking everything
else measures sufficiency (output should move little). Averaging the change
over a set of k bins and horizon steps gives the area over the perturbation
curve for regression (AOPCR), reported under both absolute (MAE) and squared
(MSE) aggregation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .baselines import Baseline, zero_baseline
from .oracle import ForecastOracle, predict
from .attribution import AttributionTensor
from .windows import WindowedInstance

TIE_BREAK = "abs-desc, then feature index asc, then most recent position first"


@dataclass(frozen=True)
class RelevanceRanking:
    """Per-(output, step) orderings of flat cell indices j*L + l, best first."""

    entity: str
    anchor: object
    lookback: int
    order: np.ndarray          # int (outputs, horizon, J*L)
    tie_break: str = TIE_BREAK

    def cells(self, o: int, tau: int) -> np.ndarray:
        return self.order[o, tau]


def rank_cells(tensor: AttributionTensor) -> RelevanceRanking:
    """Sort cells by decreasing |value|; documented stable tie-breaking.

    Ties fall back to feature index ascending, then the more recent lookback
    position first, so rankings are reproducible for constant tensors.
    """
    O, H, J, L = tensor.values.shape
    j_idx = np.repeat(np.arange(J), L)
    l_idx = np.tile(np.arange(L), J)
    order = np.empty((O, H, J * L), dtype=int)
    for o in range(O):
        for tau in range(H):
            magnitude = np.abs(tensor.values[o, tau]).reshape(-1)
            # last lexsort key is the primary one
            order[o, tau] = np.lexsort((-l_idx, j_idx, -magnitude))
    return RelevanceRanking(tensor.entity, tensor.anchor, L, order)


@dataclass(frozen=True)
class MaskSpec:
    """How to mask: percentage of cells, top or complement, replacement source."""

    k_percent: float
    mode: str = "mask-top"
    baseline: Baseline = field(default_factory=zero_baseline)
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.k_percent <= 100:
            raise ValueError("k_percent must be in (0, 100]")
        if self.mode not in ("mask-top", "mask-complement"):
            raise ValueError(f"unknown mask mode {self.mode!r}")

    def cell_count(self, n_cells: int) -> int:
        return min(n_cells, max(1, math.ceil(self.k_percent / 100.0 * n_cells)))


def mask_instance(instance: WindowedInstance, cell_order: np.ndarray,
                  spec: MaskSpec) -> WindowedInstance:
    """Replace the selected cells of one ranking row with baseline values.

    mask-top replaces the top-k cells; mask-complement replaces every other
    cell. The original instance is left untouched.
    """
    J, L = instance.past.shape
    count = spec.cell_count(J * L)
    top = np.asarray(cell_order)[:count]
    selected = np.zeros(J * L, dtype=bool)
    selected[top] = True
    if spec.mode == "mask-complement":
        selected = ~selected

    rng = np.random.default_rng(spec.seed)
    replacement = spec.baseline.matrix(rng, J, L)
    past = instance.past.copy().reshape(-1)
    past[selected] = replacement.reshape(-1)[selected]
    return instance.with_past(past.reshape(J, L))


def _masked_changes(oracle: ForecastOracle, instance: WindowedInstance,
                    ranking: RelevanceRanking, spec: MaskSpec) -> np.ndarray:
    """|f(X) - f(masked)| per (output, step), each step masked by its own row."""
    O, H = oracle.output_shape
    probes = [instance]
    for o in range(O):
        for tau in range(H):
            probes.append(mask_instance(instance, ranking.cells(o, tau), spec))
    outs = predict(oracle, probes)
    base, masked = outs[0], outs[1:].reshape(O, H, O, H)
    changes = np.empty((O, H))
    for o in range(O):
        for tau in range(H):
            changes[o, tau] = abs(base[o, tau] - masked[o, tau, o, tau])
    return changes


def comprehensiveness(oracle: ForecastOracle, instance: WindowedInstance,
                      ranking: RelevanceRanking, k_percent: float,
                      baseline: Baseline | None = None, seed: int = 0) -> np.ndarray:
    """Output change after masking the top k% cells; higher means more faithful."""
    spec = MaskSpec(k_percent, "mask-top", baseline or zero_baseline(), seed)
    return _masked_changes(oracle, instance, ranking, spec)


def sufficiency(oracle: ForecastOracle, instance: WindowedInstance,
                ranking: RelevanceRanking, k_percent: float,
                baseline: Baseline | None = None, seed: int = 0) -> np.ndarray:
    """Output change after masking all but the top k% cells; lower is better."""
    spec = MaskSpec(k_percent, "mask-complement", baseline or zero_baseline(), seed)
    return _masked_changes(oracle, instance, ranking, spec)


@dataclass
class FaithfulnessEntry:
    method: str
    metric: str          # comprehensiveness | sufficiency
    aggregation: str     # MAE | MSE
    k_bins: tuple[float, ...]
    value: float
    per_instance: np.ndarray


@dataclass
class FaithfulnessReport:
    """AOPCR values per (method, metric, aggregation); squares are taken per
    step before averaging."""

    entries: list[FaithfulnessEntry] = field(default_factory=list)

    def value(self, method: str, metric: str, aggregation: str) -> float:
        for entry in self.entries:
            if (entry.method, entry.metric, entry.aggregation) == (method, metric, aggregation):
                return entry.value
        raise KeyError((method, metric, aggregation))


def aopcr(oracle: ForecastOracle, instances: list[WindowedInstance],
          tensors: list[AttributionTensor], k_bins: tuple[float, ...] = (5.0, 10.0),
          baseline: Baseline | None = None, seed: int = 0,
          method: str | None = None) -> FaithfulnessReport:
    """Area over the perturbation curve, averaged over k bins, steps, instances.

    For each instance and k: mask by the per-step ranking, re-predict, take
    the per-step change; MAE aggregates |change| and MSE aggregates change^2,
    both normalized by K * horizon * outputs, then averaged over instances.
    """
    if not instances:
        raise ValueError("aopcr needs at least one instance")
    if len(instances) != len(tensors):
        raise ValueError("one attribution tensor per instance required")
    if not k_bins:
        raise ValueError("k_bins must be non-empty")
    baseline = baseline or zero_baseline()
    name = method or tensors[0].method

    per_instance = {("comprehensiveness", "MAE"): [], ("comprehensiveness", "MSE"): [],
                    ("sufficiency", "MAE"): [], ("sufficiency", "MSE"): []}
    for inst, tensor in zip(instances, tensors):
        ranking = rank_cells(tensor)
        for metric, mode in (("comprehensiveness", "mask-top"),
                             ("sufficiency", "mask-complement")):
            changes = [
                _masked_changes(oracle, inst, ranking, MaskSpec(k, mode, baseline, seed))
                for k in k_bins]
            stacked = np.stack(changes)            # (K, O, H)
            per_instance[(metric, "MAE")].append(float(stacked.mean()))
            per_instance[(metric, "MSE")].append(float((stacked ** 2).mean()))

    report = FaithfulnessReport()
    for (metric, agg), vals in per_instance.items():
        arr = np.asarray(vals)
        report.entries.append(FaithfulnessEntry(
            method=name, metric=metric, aggregation=agg,
            k_bins=tuple(k_bins), value=float(arr.mean()), per_instance=arr))
    return report
