"""Panel preprocessing: outlier clipping, interpolation, standardization, splits.

Clipping follows the IQR rule lower = Q1 - m*IQR, upper = Q3 + m*IQR with the
quartiles taken from a trailing weekly moving average of each series, so a
single spike cannot drag its own bounds. Clipped cells are marked missing and
refilled by the interpolation pass.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .panel import PanelError, TimeSeriesPanel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PreprocessConfig:
    iqr_multiplier: float = 7.5
    smoothing_window: int = 7   # steps of trailing moving average for the quartiles

    def __post_init__(self):
        if self.iqr_multiplier <= 0:
            raise ValueError("iqr_multiplier must be positive")
        if self.smoothing_window < 1:
            raise ValueError("smoothing_window must be >= 1")


@dataclass
class ClipBounds:
    """Per-series clip bounds keyed by (entity, feature name)."""

    bounds: dict[tuple[str, str], tuple[float, float]] = field(default_factory=dict)
    skipped: list[tuple[str, str]] = field(default_factory=list)


def trailing_mean(series: np.ndarray, present: np.ndarray, window: int) -> np.ndarray:
    """Trailing moving average over present values; NaN where the window is empty."""
    out = np.full(len(series), np.nan)
    for t in range(len(series)):
        lo = max(0, t - window + 1)
        seg = series[lo:t + 1][present[lo:t + 1]]
        if len(seg):
            out[t] = seg.mean()
    return out


def compute_clip_bounds(panel: TimeSeriesPanel, config: PreprocessConfig) -> ClipBounds:
    """IQR bounds per (entity, dynamic-or-target feature) from smoothed series."""
    result = ClipBounds()
    for j in panel.roles("dynamic", "target"):
        name = panel.features[j].name
        for e, entity in enumerate(panel.entities):
            present = panel.mask[e, j]
            if present.sum() < config.smoothing_window:
                result.skipped.append((entity, name))
                log.warning("clip skipped for %s/%s: %d points < window %d",
                            entity, name, int(present.sum()), config.smoothing_window)
                continue
            smoothed = trailing_mean(panel.values[e, j], present, config.smoothing_window)
            smoothed = smoothed[np.isfinite(smoothed)]
            q1, q3 = np.quantile(smoothed, [0.25, 0.75])  # linear-interpolation quantiles
            iqr = q3 - q1
            result.bounds[(entity, name)] = (q1 - config.iqr_multiplier * iqr,
                                             q3 + config.iqr_multiplier * iqr)
    return result


def clip_outliers(panel: TimeSeriesPanel, config: PreprocessConfig,
                  bounds: ClipBounds | None = None) -> TimeSeriesPanel:
    """Mark values outside the IQR bounds as missing.

    Only dynamic and target features are touched; static and known-future
    features pass through. Series shorter than the smoothing window are
    skipped (recorded in the panel warnings).
    """
    if bounds is None:
        bounds = compute_clip_bounds(panel, config)
    out = panel.copy()
    for j in panel.roles("dynamic", "target"):
        name = panel.features[j].name
        for e, entity in enumerate(panel.entities):
            key = (entity, name)
            if key not in bounds.bounds:
                continue
            lower, upper = bounds.bounds[key]
            series = out.values[e, j]
            outlier = out.mask[e, j] & ((series < lower) | (series > upper))
            out.mask[e, j][outlier] = False
            out.values[e, j][outlier] = 0.0
    out.warnings.extend(f"clip skipped for {e}/{f}: series shorter than window"
                        for e, f in bounds.skipped)
    return out


def interpolate_missing(panel: TimeSeriesPanel) -> TimeSeriesPanel:
    """Fill masked-out cells: linear inside, nearest value at the edges."""
    out = panel.copy()
    t_axis = np.arange(len(panel.time_index), dtype=float)
    for e in range(len(panel.entities)):
        for j in range(len(panel.features)):
            present = out.mask[e, j]
            if present.all():
                continue
            if not present.any():
                raise PanelError(
                    f"cannot interpolate all-missing series: entity "
                    f"{panel.entities[e]!r}, feature {panel.features[j].name!r}")
            # np.interp is linear between present points and clamps at the ends
            out.values[e, j] = np.interp(t_axis, t_axis[present],
                                         out.values[e, j][present])
            out.mask[e, j] = True
    return out


@dataclass
class FeatureStats:
    """Per-feature standardization statistics; std is 1 for constant features."""

    mean: dict[str, float]
    std: dict[str, float]


def standardize(panel: TimeSeriesPanel,
                stats: FeatureStats | None = None) -> tuple[TimeSeriesPanel, FeatureStats]:
    """Transform every feature to (x - mean) / std.

    Without ``stats`` the statistics come from this panel (training path);
    with ``stats`` they are applied as-is (validation/test path). Constant
    features keep std = 1 so the transform stays invertible.
    """
    if stats is None:
        mean, std = {}, {}
        for j, spec in enumerate(panel.features):
            cells = panel.values[:, j][panel.mask[:, j]]
            if len(cells) == 0:
                raise PanelError(f"no present values for feature {spec.name!r}")
            mean[spec.name] = float(cells.mean())
            s = float(cells.std())
            std[spec.name] = s if s > 0 else 1.0
        stats = FeatureStats(mean, std)

    out = panel.copy()
    for j, spec in enumerate(panel.features):
        if spec.name not in stats.mean:
            raise PanelError(f"stats missing feature {spec.name!r}")
        out.values[:, j] = (out.values[:, j] - stats.mean[spec.name]) / stats.std[spec.name]
    out.values[~out.mask] = 0.0
    return out, stats


def destandardize(panel: TimeSeriesPanel, stats: FeatureStats) -> TimeSeriesPanel:
    """Exact inverse of :func:`standardize` under the same stats."""
    out = panel.copy()
    for j, spec in enumerate(panel.features):
        out.values[:, j] = out.values[:, j] * stats.std[spec.name] + stats.mean[spec.name]
    out.values[~out.mask] = 0.0
    return out


def split_chronological(panel: TimeSeriesPanel, train_end, val_len: int,
                        test_len: int) -> tuple[TimeSeriesPanel, TimeSeriesPanel, TimeSeriesPanel]:
    """Split into train/val/test panels owning disjoint, contiguous anchor ranges.

    The train panel is physically truncated at ``train_end`` so training
    windows can never see later data. Validation and test panels keep the full
    physical history: their windows reach back for lookback context and
    forward for targets, but are anchored only inside their own date range.
    A zero-length split yields an empty anchor range, not an error.
    """
    if val_len < 0 or test_len < 0:
        raise ValueError("val_len and test_len must be >= 0")
    train_end = np.datetime64(train_end)
    hits = np.flatnonzero(panel.time_index == train_end)
    if len(hits) != 1:
        raise PanelError(f"train_end {train_end} is not on the panel time axis")
    idx = int(hits[0])
    needed = idx + val_len + test_len
    if needed > len(panel.time_index) - 1:
        raise PanelError(
            f"insufficient dates for split: need {needed + 1} steps, "
            f"panel has {len(panel.time_index)}")

    times, step = panel.time_index, panel.step
    train = replace(panel.copy(),
                    time_index=times[:idx + 1],
                    values=panel.values[:, :, :idx + 1].copy(),
                    mask=panel.mask[:, :, :idx + 1].copy(),
                    anchor_start=None, anchor_stop=None)
    val_lo = times[idx] + step
    val_hi = val_lo + val_len * step
    test_hi = val_hi + test_len * step
    val = panel.with_anchors(val_lo, val_hi)
    test = panel.with_anchors(val_hi, test_hi)
    return train, val, test


def split_anchor_counts(train: TimeSeriesPanel, val: TimeSeriesPanel,
                        test: TimeSeriesPanel) -> tuple[int, int, int]:
    counts = []
    for p in (train, val, test):
        start, stop = p.anchor_slice()
        counts.append(max(0, stop - start))
    return tuple(counts)


def write_stats_sidecar(path: str | Path, stats: FeatureStats,
                        bounds: ClipBounds | None = None,
                        extra: dict[str, str] | None = None) -> None:
    """Key-value sidecar with standardization stats and clip bounds."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for name in stats.mean:
        lines.append(f"stats.{name}.mean = {stats.mean[name]!r}")
        lines.append(f"stats.{name}.std = {stats.std[name]!r}")
    if bounds is not None:
        for (entity, feat), (lo, hi) in sorted(bounds.bounds.items()):
            lines.append(f"clip.{entity}.{feat} = {lo!r}, {hi!r}")
        for entity, feat in bounds.skipped:
            lines.append(f"clip_skipped.{entity}.{feat} = series shorter than window")
    for key, value in (extra or {}).items():
        lines.append(f"{key} = {value}")
    path.write_text("\n".join(lines) + "\n")


def read_stats_sidecar(path: str | Path) -> tuple[FeatureStats, dict[str, str]]:
    """Read the sidecar back; returns (stats, all other keys)."""
    mean, std, extra = {}, {}, {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key.startswith("stats.") and key.endswith(".mean"):
            mean[key[len("stats."):-len(".mean")]] = float(value)
        elif key.startswith("stats.") and key.endswith(".std"):
            std[key[len("stats."):-len(".std")]] = float(value)
        else:
            extra[key] = value
    return FeatureStats(mean, std), extra
