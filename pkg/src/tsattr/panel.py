"""Multi-entity time series panel: feature roles, CSV loading, calendar features.

A panel holds one value array indexed (entity, feature, time) plus a presence
mask. Feature roles determine how each series is treated downstream:

* ``static``       constant per entity, broadcast over the lookback window
* ``dynamic``      observed series, subject to outlier clipping
* ``known_future`` available for future steps too (calendar covariates)
* ``target``       the forecast target; its past is also a dynamic input
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

ROLES = ("static", "dynamic", "known_future", "target")

# calendar features that can be derived from the date axis
TIME_FEATURES = ("month", "day", "weekday", "hour")


class PanelError(ValueError):
    """Raised for schema or data problems while building a panel."""


@dataclass(frozen=True)
class FeatureSpec:
    """One feature column and its role."""

    name: str
    role: str

    def __post_init__(self):
        role = self.role.replace("-", "_")
        if role not in ROLES:
            raise PanelError(f"unknown role {self.role!r} for feature {self.name!r}; "
                             f"expected one of {ROLES}")
        object.__setattr__(self, "role", role)


def _check_schema(features: list[FeatureSpec]) -> None:
    names = [f.name for f in features]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise PanelError(f"duplicate feature names: {dup}")
    targets = [f.name for f in features if f.role == "target"]
    if len(targets) != 1:
        raise PanelError(f"schema must have exactly one target feature, got {targets}")


@dataclass
class TimeSeriesPanel:
    """Values of shape (n_entities, n_features, T) with a presence mask.

    ``anchor_start`` (inclusive) and ``anchor_stop`` (exclusive) mark the date
    range this panel owns for window anchoring; ``None`` means the full
    physical range. Chronological splits share physical history for lookback
    context but own disjoint anchor ranges.
    """

    entities: list[str]
    time_index: np.ndarray            # datetime64, strictly increasing, uniform step
    features: list[FeatureSpec]
    values: np.ndarray                # float64 (n_entities, n_features, T)
    mask: np.ndarray                  # bool, True where a value is present
    anchor_start: np.datetime64 | None = None
    anchor_stop: np.datetime64 | None = None
    warnings: list[str] = field(default_factory=list)

    def __post_init__(self):
        _check_schema(self.features)
        e, j, t = len(self.entities), len(self.features), len(self.time_index)
        if self.values.shape != (e, j, t):
            raise PanelError(f"values shape {self.values.shape} != ({e}, {j}, {t})")
        if self.mask.shape != self.values.shape:
            raise PanelError("mask shape must match values shape")
        if t > 1:
            steps = np.diff(self.time_index)
            if not (steps > np.timedelta64(0, "s")).all():
                raise PanelError("time index must be strictly increasing")
            if not (steps == steps[0]).all():
                raise PanelError("time index must have a uniform step")
        if not np.isfinite(self.values[self.mask]).all():
            raise PanelError("non-finite values where mask marks presence")

    @property
    def step(self) -> np.timedelta64:
        if len(self.time_index) < 2:
            raise PanelError("panel has fewer than 2 time steps; step undefined")
        return self.time_index[1] - self.time_index[0]

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def target_name(self) -> str:
        return next(f.name for f in self.features if f.role == "target")

    def feature_index(self, name: str) -> int:
        try:
            return self.feature_names.index(name)
        except ValueError:
            raise PanelError(f"unknown feature {name!r}") from None

    def roles(self, *roles: str) -> list[int]:
        """Indices of features whose role is in ``roles``."""
        return [i for i, f in enumerate(self.features) if f.role in roles]

    def anchor_slice(self) -> tuple[int, int]:
        """Anchor range as half-open index bounds (start, stop)."""
        start = 0 if self.anchor_start is None else int(
            np.searchsorted(self.time_index, self.anchor_start, side="left"))
        stop = len(self.time_index) if self.anchor_stop is None else int(
            np.searchsorted(self.time_index, self.anchor_stop, side="left"))
        return start, max(start, stop)

    def with_anchors(self, start: np.datetime64 | None,
                     stop: np.datetime64 | None) -> "TimeSeriesPanel":
        return replace(self, anchor_start=start, anchor_stop=stop)

    def copy(self) -> "TimeSeriesPanel":
        return replace(self, values=self.values.copy(), mask=self.mask.copy(),
                       warnings=list(self.warnings))


def _parse_dates(raw: pd.Series) -> np.ndarray:
    parsed = pd.to_datetime(raw, errors="coerce", format="ISO8601")
    bad = parsed.isna() & raw.notna()
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise PanelError(f"unparseable date {raw.iloc[row]!r} at data row {row + 1}")
    if parsed.isna().any():
        row = int(np.flatnonzero(parsed.isna().to_numpy())[0])
        raise PanelError(f"missing date at data row {row + 1}")
    return parsed.to_numpy()


def load_panel(path: str | Path, schema: list[FeatureSpec],
               entity_column: str = "entity", date_column: str = "date") -> TimeSeriesPanel:
    """Load a long-format CSV (one row per entity/date) into a panel.

    The file must carry ``entity_column``, ``date_column`` and one column per
    non-derived schema feature. Blank cells become masked-out values. Rows may
    arrive in any order; the panel is sorted by (entity, date). Dates absent
    from the file (holes in the uniform grid) are masked out entirely.
    """
    path = Path(path)
    if not path.exists():
        raise PanelError(f"panel file not found: {path}")
    _check_schema(schema)

    frame = pd.read_csv(path, float_precision="round_trip")
    required = [entity_column, date_column] + [
        f.name for f in schema if f.name not in TIME_FEATURES]
    for col in required:
        if col not in frame.columns:
            raise PanelError(f"missing required column {col!r} in {path.name}")

    dates = _parse_dates(frame[date_column])
    entity_ids = frame[entity_column].astype(str).to_numpy()
    entities = sorted(set(entity_ids))

    unique_dates = np.unique(dates)
    if len(unique_dates) > 1:
        step = np.diff(unique_dates).min()
        n_steps = (unique_dates[-1] - unique_dates[0]) // step
        time_index = unique_dates[0] + step * np.arange(int(n_steps) + 1)
        on_grid = np.isin(unique_dates, time_index)
        if not on_grid.all():
            off = pd.Timestamp(unique_dates[np.flatnonzero(~on_grid)[0]])
            raise PanelError(f"date {off} does not fall on the uniform {step} grid")
    else:
        time_index = unique_dates

    missing_time = [f.name for f in schema if f.name in TIME_FEATURES
                    and f.name not in frame.columns]

    n_e, n_j, n_t = len(entities), len(schema), len(time_index)
    values = np.zeros((n_e, n_j, n_t))
    mask = np.zeros((n_e, n_j, n_t), dtype=bool)

    e_pos = {e: i for i, e in enumerate(entities)}
    t_pos = {d: i for i, d in enumerate(time_index)}
    rows_e = np.array([e_pos[e] for e in entity_ids])
    rows_t = np.array([t_pos[d] for d in dates])
    if len(set(zip(rows_e.tolist(), rows_t.tolist()))) != len(frame):
        raise PanelError(f"duplicate (entity, date) rows in {path.name}")

    for j, spec in enumerate(schema):
        if spec.name in missing_time:
            continue  # derived later from the date axis
        col = pd.to_numeric(frame[spec.name], errors="coerce").to_numpy(dtype=float)
        present = np.isfinite(col)
        values[rows_e[present], j, rows_t[present]] = col[present]
        mask[rows_e[present], j, rows_t[present]] = True

    panel = TimeSeriesPanel(entities, time_index, list(schema), values, mask)
    if missing_time:
        panel = derive_time_features(panel, missing_time)
    _check_static(panel)
    return panel


def _check_static(panel: TimeSeriesPanel) -> None:
    for j in panel.roles("static"):
        for e in range(len(panel.entities)):
            present = panel.mask[e, j]
            vals = panel.values[e, j][present]
            if len(vals) > 1 and not (vals == vals[0]).all():
                raise PanelError(
                    f"static feature {panel.features[j].name!r} varies over time "
                    f"for entity {panel.entities[e]!r}")


def derive_time_features(panel: TimeSeriesPanel, names: list[str]) -> TimeSeriesPanel:
    """Fill calendar features (month, day, weekday, hour) from the date axis.

    Missing schema entries are appended as known-future features; existing
    entries are overwritten in place. Values are plain integers; they are
    standardized later along with everything else.
    """
    idx = pd.DatetimeIndex(panel.time_index)
    series = {
        "month": idx.month.to_numpy(dtype=float),
        "day": idx.day.to_numpy(dtype=float),
        "weekday": idx.weekday.to_numpy(dtype=float),
        "hour": idx.hour.to_numpy(dtype=float),
    }
    features = list(panel.features)
    values, mask = panel.values, panel.mask
    for name in names:
        if name not in series:
            raise PanelError(f"cannot derive time feature {name!r}; "
                             f"known: {sorted(series)}")
        row = np.broadcast_to(series[name], (len(panel.entities), len(panel.time_index)))
        if name in panel.feature_names:
            j = panel.feature_index(name)
            values = values.copy()
            mask = mask.copy()
        else:
            features.append(FeatureSpec(name, "known_future"))
            j = len(features) - 1
            values = np.concatenate([values, np.zeros_like(values[:, :1])], axis=1)
            mask = np.concatenate([mask, np.zeros_like(mask[:, :1])], axis=1)
        values[:, j, :] = row
        mask[:, j, :] = True
    return TimeSeriesPanel(panel.entities, panel.time_index, features, values, mask,
                           panel.anchor_start, panel.anchor_stop, list(panel.warnings))


def write_panel_csv(panel: TimeSeriesPanel, path: str | Path,
                    entity_column: str = "entity", date_column: str = "date") -> None:
    """Write a panel back to long-format CSV; masked-out cells become blanks."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        header = [entity_column, date_column] + panel.feature_names
        fh.write(",".join(header) + "\n")
        dates = pd.DatetimeIndex(panel.time_index)
        for e, entity in enumerate(panel.entities):
            for t in range(len(panel.time_index)):
                cells = [entity, dates[t].isoformat()]
                for j in range(len(panel.features)):
                    cells.append(repr(float(panel.values[e, j, t]))
                                 if panel.mask[e, j, t] else "")
                fh.write(",".join(cells) + "\n")
