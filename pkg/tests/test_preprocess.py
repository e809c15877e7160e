import numpy as np
import pytest

from conftest import small_panel
from tsattr.panel import FeatureSpec, PanelError, TimeSeriesPanel
from tsattr.preprocess import (PreprocessConfig, clip_outliers, compute_clip_bounds,
                               destandardize, interpolate_missing, split_chronological,
                               split_anchor_counts, standardize, trailing_mean)
from tsattr.windows import WindowSpec, make_windows


def series_panel(values, role="dynamic", mask=None, entity="a"):
    """One entity, one target plus one `role` feature carrying `values`."""
    values = np.asarray(values, dtype=float)
    T = len(values)
    feats = [FeatureSpec("x", role), FeatureSpec("y", "target")]
    data = np.stack([values, np.zeros(T)])[None, :, :]
    m = np.ones_like(data, dtype=bool)
    if mask is not None:
        m[0, 0] = mask
    data = np.where(m, data, 0.0)
    time_index = (np.datetime64("2021-01-01") +
                  np.arange(T) * np.timedelta64(1, "D")).astype("datetime64[ns]")
    return TimeSeriesPanel([entity], time_index, feats, data, m)


# ---------------------------------------------------------------- clipping

def test_iqr_bounds_direct_substitution():
    # raw series whose quartiles are exactly Q1=10, Q3=20 (window=1 keeps it raw)
    vals = [10, 10, 10, 10, 20, 20, 20, 20, 90, 100]
    panel = series_panel(vals)
    config = PreprocessConfig(iqr_multiplier=7.5, smoothing_window=1)
    bounds = compute_clip_bounds(panel, config)
    lo, hi = bounds.bounds[("a", "x")]
    assert lo == pytest.approx(10 - 7.5 * 10)   # -65
    assert hi == pytest.approx(20 + 7.5 * 10)   # 95
    clipped = clip_outliers(panel, config, bounds)
    assert not clipped.mask[0, 0, -1]           # 100 > 95 dropped
    assert clipped.mask[0, 0, -2]               # 90 kept
    assert clipped.mask[0, 0, :-1].all()


def test_constant_series_nothing_clipped():
    panel = series_panel([5.0] * 12)
    clipped = clip_outliers(panel, PreprocessConfig())
    assert clipped.mask.all()
    np.testing.assert_array_equal(clipped.values, panel.values)


def test_spike_removed_against_brute_force():
    rng = np.random.default_rng(7)
    base = rng.normal(10.0, 1.0, size=60)
    spike_at = 33
    base[spike_at] += 50.0
    panel = series_panel(base)
    config = PreprocessConfig()

    # independent oracle: trailing 7-mean, type-7 quantiles, Eq bounds
    smoothed = np.array([base[max(0, t - 6):t + 1].mean() for t in range(60)])
    q1, q3 = np.quantile(smoothed, [0.25, 0.75])
    lo = q1 - 7.5 * (q3 - q1)
    hi = q3 + 7.5 * (q3 - q1)
    expected_drop = set(np.flatnonzero((base < lo) | (base > hi)).tolist())
    assert spike_at in expected_drop

    clipped = clip_outliers(panel, config)
    dropped = set(np.flatnonzero(~clipped.mask[0, 0]).tolist())
    assert dropped == expected_drop
    kept = clipped.mask[0, 0]
    np.testing.assert_array_equal(clipped.values[0, 0][kept], base[kept])


def test_short_series_skipped_with_warning():
    panel = series_panel([1.0, 2.0, 3.0])
    clipped = clip_outliers(panel, PreprocessConfig(smoothing_window=7))
    assert clipped.mask.all()
    assert any("shorter than window" in w for w in clipped.warnings)


def test_static_and_known_future_untouched():
    panel = small_panel(T=60, seed=1)
    panel.values[0, 0, :] = 4.0              # static stays as is
    panel.values[0, 1, 30] = 1e9             # dynamic outlier
    clipped = clip_outliers(panel, PreprocessConfig())
    assert clipped.mask[0, 0].all()
    assert not clipped.mask[0, 1, 30]


def test_trailing_mean_partial_windows():
    present = np.array([True, True, False, True])
    out = trailing_mean(np.array([2.0, 4.0, 9.0, 6.0]), present, window=3)
    np.testing.assert_allclose(out, [2.0, 3.0, 3.0, 5.0])


# ---------------------------------------------------------------- interpolation

def test_interpolate_midpoint():
    panel = series_panel([1.0, 0.0, 3.0], mask=[True, False, True])
    filled = interpolate_missing(panel)
    np.testing.assert_allclose(filled.values[0, 0], [1.0, 2.0, 3.0])
    assert filled.mask.all()


def test_interpolate_identity_when_complete():
    panel = small_panel()
    filled = interpolate_missing(panel)
    np.testing.assert_array_equal(filled.values, panel.values)


def test_interpolate_interior_and_edges():
    panel = series_panel([0.0, 4.0, 0.0, 0.0, 10.0, 0.0],
                         mask=[False, True, False, False, True, False])
    filled = interpolate_missing(panel)
    np.testing.assert_allclose(filled.values[0, 0], [4.0, 4.0, 6.0, 8.0, 10.0, 10.0])


def test_interpolate_all_missing_names_series():
    panel = series_panel([0.0, 0.0], mask=[False, False])
    with pytest.raises(PanelError, match="entity 'a', feature 'x'"):
        interpolate_missing(panel)


# ---------------------------------------------------------------- standardization

def test_standardize_centres_training_panel():
    panel = series_panel([1.0, 2.0, 3.0])
    out, stats = standardize(panel)
    assert out.values[0, 0].sum() == pytest.approx(0.0)
    assert stats.mean["x"] == pytest.approx(2.0)


def test_standardize_not_idempotent():
    panel = small_panel(seed=2)
    once, stats = standardize(panel)
    twice, _ = standardize(once, stats)
    assert not np.allclose(once.values, twice.values)


def test_val_split_standardized_with_train_stats_has_nonzero_mean():
    train = series_panel([1.0, 2.0, 3.0, 2.0, 1.0, 2.0])
    val = series_panel([10.0, 11.0, 12.0, 11.0, 10.0, 11.0])
    _, stats = standardize(train)
    val_std, _ = standardize(val, stats)
    assert abs(val_std.values[0, 0].mean()) > 1.0


def test_zero_std_feature_left_unscaled():
    panel = series_panel([7.0] * 5)
    out, stats = standardize(panel)
    assert stats.std["x"] == 1.0
    np.testing.assert_allclose(out.values[0, 0], 0.0)


def test_round_trip_within_1e12():
    panel = small_panel(T=40, seed=5)
    out, stats = standardize(panel)
    back = destandardize(out, stats)
    np.testing.assert_allclose(back.values, panel.values, rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------- splitting

def test_split_anchor_lengths_72_14_14():
    panel = small_panel(T=100, seed=3)
    train, val, test = split_chronological(panel, panel.time_index[71], 14, 14)
    assert split_anchor_counts(train, val, test) == (72, 14, 14)
    # anchors are pairwise disjoint and cover the full range
    t0, t1 = train.anchor_slice()
    assert (t0, t1) == (0, 72)
    assert val.anchor_slice() == (72, 86)
    assert test.anchor_slice() == (86, 100)


def test_split_zero_val_len_is_fine():
    panel = small_panel(T=50)
    train, val, test = split_chronological(panel, panel.time_index[39], 0, 10)
    assert split_anchor_counts(train, val, test) == (40, 0, 10)


def test_split_insufficient_dates():
    panel = small_panel(T=50)
    with pytest.raises(PanelError, match="insufficient dates"):
        split_chronological(panel, panel.time_index[39], 10, 10)


def test_split_train_physically_truncated():
    panel = small_panel(T=100)
    train, _, _ = split_chronological(panel, panel.time_index[71], 14, 14)
    assert len(train.time_index) == 72


def test_covid_like_val_split_yields_14_anchor_days():
    # lookback 14 / horizon 14: every one of the 14 validation anchors has
    # enough physical history and future, so each entity gets 14 val windows
    panel = small_panel(entities=("a",), T=100, seed=4)
    train, val, test = split_chronological(panel, panel.time_index[71], 14, 14)
    spec = WindowSpec(lookback=14, horizon=14)
    batch = make_windows(val, spec)
    assert len(batch.instances) == 14
    anchors = [inst.anchor for inst in batch.instances]
    assert anchors == list(val.time_index[72:86])
