import numpy as np
import pytest

from tsattr.panel import (FeatureSpec, PanelError, derive_time_features, load_panel,
                          write_panel_csv)

SCHEMA = [FeatureSpec("temp", "dynamic"), FeatureSpec("load", "target")]


def write_csv(path, rows, header="entity,date,temp,load"):
    path.write_text("\n".join([header] + rows) + "\n")
    return path


def test_load_small_panel(tmp_path):
    rows = [f"{e},2021-01-0{d},{10 * i + d},{100 * i + d}"
            for i, e in enumerate(["a", "b"]) for d in (1, 2, 3)]
    panel = load_panel(write_csv(tmp_path / "p.csv", rows), SCHEMA)
    assert panel.entities == ["a", "b"]
    assert len(panel.time_index) == 3
    assert panel.values.shape == (2, 2, 3)
    assert panel.mask.all()
    assert panel.values[1, 0, 2] == 13.0   # entity b, temp, day 3


def test_blank_cell_masks_exactly_that_cell(tmp_path):
    rows = ["a,2021-01-01,1.0,2.0", "a,2021-01-02,,3.0", "a,2021-01-03,5.0,6.0"]
    panel = load_panel(write_csv(tmp_path / "p.csv", rows), SCHEMA)
    missing = np.argwhere(~panel.mask)
    assert missing.tolist() == [[0, 0, 1]]


def test_shuffled_rows_match_sorted_load(tmp_path):
    rows = [f"{e},2021-01-0{d},{i + d},{i * d}"
            for i, e in enumerate(["a", "b"]) for d in (1, 2, 3)]
    sorted_panel = load_panel(write_csv(tmp_path / "sorted.csv", rows), SCHEMA)
    rng = np.random.default_rng(3)
    shuffled = [rows[i] for i in rng.permutation(len(rows))]
    shuffled_panel = load_panel(write_csv(tmp_path / "shuf.csv", shuffled), SCHEMA)
    assert shuffled_panel.entities == sorted_panel.entities
    np.testing.assert_array_equal(shuffled_panel.values, sorted_panel.values)
    np.testing.assert_array_equal(shuffled_panel.mask, sorted_panel.mask)


def test_missing_column_named(tmp_path):
    path = write_csv(tmp_path / "p.csv", ["a,2021-01-01,1.0"], header="entity,date,temp")
    with pytest.raises(PanelError, match="'load'"):
        load_panel(path, SCHEMA)


def test_unparseable_date_reports_row(tmp_path):
    rows = ["a,2021-01-01,1,2", "a,notadate,3,4"]
    with pytest.raises(PanelError, match="row 2"):
        load_panel(write_csv(tmp_path / "p.csv", rows), SCHEMA)


def test_duplicate_rows_rejected(tmp_path):
    rows = ["a,2021-01-01,1,2", "a,2021-01-01,3,4"]
    with pytest.raises(PanelError, match="duplicate"):
        load_panel(write_csv(tmp_path / "p.csv", rows), SCHEMA)


def test_schema_requires_single_target():
    from tsattr.panel import _check_schema
    with pytest.raises(PanelError, match="target"):
        _check_schema([FeatureSpec("a", "dynamic")])
    with pytest.raises(PanelError, match="duplicate"):
        _check_schema([FeatureSpec("a", "dynamic"), FeatureSpec("a", "target")])


def test_role_aliases_dash_and_underscore():
    assert FeatureSpec("m", "known-future").role == "known_future"
    with pytest.raises(PanelError, match="unknown role"):
        FeatureSpec("m", "futuristic")


def test_static_feature_must_be_constant(tmp_path):
    schema = [FeatureSpec("age", "static"), FeatureSpec("y", "target")]
    rows = ["a,2021-01-01,1,2", "a,2021-01-02,9,3"]
    with pytest.raises(PanelError, match="static feature 'age'"):
        load_panel(write_csv(tmp_path / "p.csv", rows, "entity,date,age,y"), schema)


def test_derive_time_features_from_dates(tmp_path):
    schema = [FeatureSpec("y", "target"), FeatureSpec("month", "known_future"),
              FeatureSpec("weekday", "known_future")]
    rows = ["a,2021-02-01,1", "a,2021-02-02,2"]  # Mon, Tue
    panel = load_panel(write_csv(tmp_path / "p.csv", rows, "entity,date,y"), schema)
    month = panel.values[0, panel.feature_index("month")]
    weekday = panel.values[0, panel.feature_index("weekday")]
    np.testing.assert_array_equal(month, [2.0, 2.0])
    np.testing.assert_array_equal(weekday, [0.0, 1.0])
    assert panel.mask.all()


def test_derive_unknown_time_feature_rejected(tmp_path):
    from conftest import small_panel
    with pytest.raises(PanelError, match="cannot derive"):
        derive_time_features(small_panel(), ["fortnight"])


def test_gap_dates_become_masked(tmp_path):
    rows = ["a,2021-01-01,1,2", "a,2021-01-02,3,4", "a,2021-01-04,5,6"]
    panel = load_panel(write_csv(tmp_path / "p.csv", rows), SCHEMA)
    assert len(panel.time_index) == 4          # 1-day grid inferred from min gap
    assert not panel.mask[0, :, 2].any()       # Jan 3 absent from the file
    assert panel.mask[0, :, 3].all()


def test_csv_round_trip(tmp_path):
    from conftest import small_panel
    panel = small_panel()
    path = tmp_path / "out.csv"
    write_panel_csv(panel, path)
    again = load_panel(path, panel.features)
    np.testing.assert_array_equal(again.values, panel.values)
    assert again.entities == panel.entities
