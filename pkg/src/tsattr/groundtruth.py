"""Attribution evaluation against per-group ground-truth sensitivity.

Attribution tensors are collapsed over the lookback window to one score per
(instance, horizon step, group feature), rolled up to the calendar periods of
the ground truth (each predicted day contributes to the period containing
it), l1-normalized per period, and compared to the normalized truth shares
with MAE, RMSE and NDCG.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .attribution import AttributionTensor
from .metrics import mae, ndcg, rmse
from .windows import WindowedInstance


class GroundTruthError(ValueError):
    pass


@dataclass
class GroupTruth:
    """Per-period nonnegative counts for a fixed list of groups."""

    period_starts: np.ndarray      # datetime64, sorted, uniform spacing assumed weekly
    groups: tuple[str, ...]
    counts: np.ndarray             # (n_periods, n_groups)

    def __post_init__(self):
        if self.counts.shape != (len(self.period_starts), len(self.groups)):
            raise GroundTruthError(f"counts shape {self.counts.shape} does not match "
                                   f"{len(self.period_starts)} periods x {len(self.groups)} groups")
        if (self.counts < 0).any():
            raise GroundTruthError("counts must be nonnegative")

    @property
    def shares(self) -> np.ndarray:
        return normalize_shares(self.counts, self.period_starts)


def load_group_truth(path: str | Path) -> GroupTruth:
    """CSV with columns week_start_date, group, cases."""
    frame = pd.read_csv(path)
    for col in ("week_start_date", "group", "cases"):
        if col not in frame.columns:
            raise GroundTruthError(f"truth file missing column {col!r}")
    frame["week_start_date"] = pd.to_datetime(frame["week_start_date"])
    periods = np.sort(frame["week_start_date"].unique())
    groups = tuple(sorted(frame["group"].astype(str).unique()))
    counts = np.zeros((len(periods), len(groups)))
    p_pos = {p: i for i, p in enumerate(periods)}
    g_pos = {g: i for i, g in enumerate(groups)}
    for _, row in frame.iterrows():
        counts[p_pos[row["week_start_date"].to_datetime64()], g_pos[str(row["group"])]] \
            += float(row["cases"])
    return GroupTruth(periods, groups, counts)


def aggregate_group_attribution(tensors: list[AttributionTensor],
                                group_features: tuple[str, ...]) -> np.ndarray:
    """Collapse |phi| over the lookback window for the chosen features.

    Returns (n_instances, horizon, n_groups). Defined for single-output
    tensors; signed tensors contribute their absolute values.
    """
    if not group_features:
        raise GroundTruthError("group_features must be non-empty")
    if not tensors:
        raise GroundTruthError("no attribution tensors given")
    for name in group_features:
        if name not in tensors[0].feature_names:
            raise GroundTruthError(f"unknown group feature {name!r}")
    idx = [tensors[0].feature_names.index(name) for name in group_features]

    out = np.empty((len(tensors), tensors[0].values.shape[1], len(group_features)))
    for i, tensor in enumerate(tensors):
        if tensor.values.shape[0] != 1:
            raise GroundTruthError("group aggregation expects single-output tensors")
        out[i] = np.abs(tensor.values[0][:, idx, :]).sum(axis=2)
    return out


def feature_importance_summary(tensors: list[AttributionTensor]) -> dict[str, float]:
    """Overall importance percentage per lookback feature.

    Averages |phi| over instances, horizon steps and window positions, then
    normalizes the per-feature means to percentages that sum to 100.
    """
    if not tensors:
        raise GroundTruthError("no attribution tensors given")
    names = tensors[0].feature_names
    totals = np.zeros(len(names))
    for tensor in tensors:
        if tensor.feature_names != names:
            raise GroundTruthError("tensors disagree on feature names")
        totals += np.abs(tensor.values).mean(axis=(0, 1, 3)).ravel()
    if totals.sum() == 0:
        raise GroundTruthError("all attributions are zero; no importance to normalize")
    pct = 100.0 * totals / totals.sum()
    return dict(zip(names, pct.tolist()))


def normalize_shares(scores: np.ndarray, period_labels=None) -> np.ndarray:
    """Divide each row by its l1 norm; an all-zero row is an error."""
    scores = np.asarray(scores, dtype=float)
    rows = np.atleast_2d(scores)
    sums = np.abs(rows).sum(axis=1)
    zero = np.flatnonzero(sums == 0)
    if len(zero):
        label = zero[0] if period_labels is None else period_labels[zero[0]]
        raise GroundTruthError(f"cannot normalize all-zero row for period {label}")
    shares = rows / sums[:, None]
    return shares.reshape(scores.shape)


def rollup_to_periods(scores: np.ndarray, instances: list[WindowedInstance],
                      period_starts: np.ndarray,
                      period_length: np.timedelta64 | None = None) -> np.ndarray:
    """Sum per-day scores into ground-truth periods, then l1-normalize rows.

    ``scores`` is (n_instances, horizon, n_groups); each predicted day
    anchor + (tau+1)*step lands in the period whose [start, start+length)
    window contains it. A predicted day outside every period is an error.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.ndim != 3 or scores.shape[0] != len(instances):
        raise GroundTruthError("scores must be (n_instances, horizon, n_groups)")
    period_starts = np.sort(np.asarray(period_starts))
    if period_length is None:
        period_length = (period_starts[1] - period_starts[0]) if len(period_starts) > 1 \
            else np.timedelta64(7, "D")

    sums = np.zeros((len(period_starts), scores.shape[2]))
    for i, inst in enumerate(instances):
        for tau, day in enumerate(inst.target_dates):
            pos = int(np.searchsorted(period_starts, day, side="right")) - 1
            if pos < 0 or day >= period_starts[pos] + period_length:
                raise GroundTruthError(f"predicted day {day} falls outside the "
                                       "ground-truth period calendar")
            sums[pos] += scores[i, tau]
    covered = sums.sum(axis=1) > 0
    shares = np.zeros_like(sums)
    shares[covered] = normalize_shares(sums[covered])
    return shares


@dataclass
class SensitivityComparison:
    """Predicted vs true normalized shares and their summary scores."""

    method: str
    periods: np.ndarray
    groups: tuple[str, ...]
    predicted: np.ndarray      # (n_periods, n_groups), rows sum to 1
    true: np.ndarray
    mae: float
    rmse: float
    ndcg: float


def compare_to_truth(method: str, tensors: list[AttributionTensor],
                     instances: list[WindowedInstance],
                     truth: GroupTruth) -> SensitivityComparison:
    """Full chain: aggregate, roll up to the truth calendar, normalize, score.

    Only periods actually covered by predictions enter the scores; NDCG is
    computed per period and averaged.
    """
    scores = aggregate_group_attribution(tensors, truth.groups)
    predicted = rollup_to_periods(scores, instances, truth.period_starts)
    covered = predicted.sum(axis=1) > 0
    if not covered.any():
        raise GroundTruthError("no ground-truth period is covered by any prediction")
    pred = predicted[covered]
    true = truth.shares[covered]
    ndcg_values = [ndcg(true[i], pred[i]) for i in range(len(pred))]
    return SensitivityComparison(
        method=method, periods=truth.period_starts[covered], groups=truth.groups,
        predicted=pred, true=true,
        mae=mae(pred, true), rmse=rmse(pred, true),
        ndcg=float(np.mean(ndcg_values)))
