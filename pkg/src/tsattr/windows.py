"""Sliding-window extraction: one forecasting instance per (entity, anchor).

An instance anchored at time t carries the lookback block of every feature
over [t-L+1, t] (static features broadcast along the window), the known-future
covariates over (t, t+H], and the target values over the same horizon.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .panel import PanelError, TimeSeriesPanel


@dataclass(frozen=True)
class WindowSpec:
    lookback: int        # L, steps of past input
    horizon: int         # number of future steps predicted per instance
    outputs: int = 1     # output series per step (panel windows always yield 1)

    def __post_init__(self):
        if self.lookback < 1 or self.horizon < 1 or self.outputs < 1:
            raise ValueError("lookback, horizon and outputs must all be >= 1")


@dataclass(frozen=True)
class WindowedInstance:
    """One forecasting instance.

    ``past`` has shape (J, L) with column l at absolute time
    anchor - (L-1) + l; ``known_future`` is (J_known, horizon) and ``targets``
    is (outputs, horizon) for steps anchor+1 .. anchor+horizon.
    """

    entity: str
    anchor: np.datetime64
    step: np.timedelta64
    feature_names: tuple[str, ...]
    known_future_names: tuple[str, ...]
    past: np.ndarray
    known_future: np.ndarray
    targets: np.ndarray

    @property
    def target_dates(self) -> np.ndarray:
        h = self.targets.shape[1]
        return self.anchor + self.step * np.arange(1, h + 1)

    def with_past(self, past: np.ndarray) -> "WindowedInstance":
        if past.shape != self.past.shape:
            raise ValueError(f"past shape {past.shape} != {self.past.shape}")
        return replace(self, past=np.asarray(past, dtype=float))


@dataclass
class WindowBatch:
    """make_windows result: the instances plus the skipped-anchor count."""

    instances: list[WindowedInstance]
    skipped: int


def make_windows(panel: TimeSeriesPanel, spec: WindowSpec) -> WindowBatch:
    """Extract every valid windowed instance from the panel's anchor range.

    An anchor is valid when the panel physically holds L past steps and
    ``horizon`` future steps around it; others are skipped and counted.
    Requires a fully interpolated panel (no missing cells).
    """
    if not panel.mask.all():
        raise PanelError("panel still has missing values; interpolate first")
    L, H = spec.lookback, spec.horizon
    T = len(panel.time_index)
    start, stop = panel.anchor_slice()

    names = tuple(panel.feature_names)
    known_idx = panel.roles("known_future")
    known_names = tuple(names[j] for j in known_idx)
    target_j = panel.feature_index(panel.target_name)

    instances: list[WindowedInstance] = []
    skipped = 0
    step = panel.step if T > 1 else np.timedelta64(1, "D")
    for e, entity in enumerate(panel.entities):
        for t in range(start, stop):
            if t - (L - 1) < 0 or t + H > T - 1:
                skipped += 1
                continue
            past = panel.values[e, :, t - L + 1:t + 1].copy()
            future = panel.values[e, known_idx, t + 1:t + H + 1].copy() if known_idx \
                else np.zeros((0, H))
            targets = panel.values[e, target_j, t + 1:t + H + 1].copy()[None, :]
            instances.append(WindowedInstance(
                entity=entity, anchor=panel.time_index[t], step=step,
                feature_names=names, known_future_names=known_names,
                past=past, known_future=future, targets=targets))
    return WindowBatch(instances, skipped)


def count_valid_anchors(panel: TimeSeriesPanel, spec: WindowSpec) -> int:
    """Analytic instance count per entity, for cross-checking make_windows."""
    T = len(panel.time_index)
    start, stop = panel.anchor_slice()
    lo = max(start, spec.lookback - 1)
    hi = min(stop, T - spec.horizon)
    return max(0, hi - lo)
