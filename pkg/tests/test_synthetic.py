import numpy as np
import pytest

from tsattr.attribution import MorrisConfig, feature_ablation, morris_sensitivity
from tsattr.groundtruth import GroupTruth, compare_to_truth
from tsattr.models import fit_linear
from tsattr.synthetic import generate_synthetic_truth
from tsattr.windows import WindowSpec, make_windows

GROUPS = ("ga", "gb", "gc", "gd")
WEIGHTS = np.array([0.45, 0.3, 0.15, 0.1])


def build_task(noise=0.0, seed=0, entities=4, length=80):
    return generate_synthetic_truth(GROUPS, entities=entities, length=length,
                                    horizon=5, planted_weights=WEIGHTS,
                                    noise=noise, seed=seed)


def weekly_calendar_for(instances):
    days = np.concatenate([inst.target_dates for inst in instances])
    start = days.min()
    n = int((days.max() - start) // np.timedelta64(7, "D")) + 1
    return start + 7 * np.arange(n) * np.timedelta64(1, "D")


def truth_for(task, instances):
    calendar = weekly_calendar_for(instances)
    counts = np.tile(task.planted_shares * 1000.0, (len(calendar), 1))
    return GroupTruth(calendar, task.group_features, counts)


def test_same_seed_identical_panel():
    a, b = build_task(seed=5), build_task(seed=5)
    np.testing.assert_array_equal(a.panel.values, b.panel.values)
    c = build_task(seed=6)
    assert not np.array_equal(a.panel.values, c.panel.values)


def test_planted_shares_are_normalized_weights():
    task = build_task()
    np.testing.assert_allclose(task.planted_shares, WEIGHTS / WEIGHTS.sum())


def test_targets_follow_planted_map_exactly():
    task = build_task(noise=0.0)
    batch = make_windows(task.panel, WindowSpec(lookback=7, horizon=5))
    inst = batch.instances[10]
    # target at step tau is the weighted group sum at lookback offset tau - horizon
    for tau in range(5):
        l = 7 - 1 + (tau + 1) - 5
        expected = float(WEIGHTS @ inst.past[:4, l])
        assert inst.targets[0, tau] == pytest.approx(expected, rel=1e-12)


def test_sigma_zero_morris_shares_match_planted_within_1e3():
    task = build_task(noise=0.0)
    batch = make_windows(task.panel, WindowSpec(lookback=7, horizon=5))
    model, loss = fit_linear(batch.instances, ridge=1e-8)
    assert loss < 1e-12

    config = MorrisConfig.from_panel(task.panel, batch.instances[0].feature_names,
                                     trajectories=4, seed=1)
    tensors = [morris_sensitivity(model, inst, config) for inst in batch.instances[:40]]
    comparison = compare_to_truth("morris_sensitivity", tensors, batch.instances[:40],
                                  truth_for(task, batch.instances[:40]))
    assert comparison.mae < 1e-3
    assert comparison.ndcg == pytest.approx(1.0)


def test_sigma_zero_ablation_recovers_shares():
    task = build_task(noise=0.0, entities=8, length=120)
    batch = make_windows(task.panel, WindowSpec(lookback=7, horizon=5))
    model, _ = fit_linear(batch.instances, ridge=1e-8)
    tensors = [feature_ablation(model, inst) for inst in batch.instances]
    comparison = compare_to_truth("feature_ablation", tensors, batch.instances,
                                  truth_for(task, batch.instances))
    assert comparison.mae < 0.01
    assert comparison.ndcg >= 0.95


def test_zero_weight_group_gets_negligible_share():
    # |phi| aggregation rectifies noise-fitted coefficients, so the dead group
    # keeps a small share proportional to the fit noise; stay well above it
    weights = np.array([0.5, 0.3, 0.2, 0.0])
    task = generate_synthetic_truth(GROUPS, entities=8, length=120, horizon=5,
                                    planted_weights=weights, noise=0.02, seed=2)
    batch = make_windows(task.panel, WindowSpec(lookback=7, horizon=5))
    model, _ = fit_linear(batch.instances, ridge=1e-6)
    tensors = [feature_ablation(model, inst) for inst in batch.instances]
    comparison = compare_to_truth("feature_ablation", tensors, batch.instances,
                                  truth_for(task, batch.instances))
    dead = task.group_features.index("gd")
    live_min = comparison.predicted[:, :dead].min()
    assert comparison.predicted[:, dead].max() < 0.02
    assert comparison.predicted[:, dead].max() < live_min / 5


def test_validation_errors():
    with pytest.raises(ValueError, match="nonnegative"):
        generate_synthetic_truth(GROUPS, 2, 30, 3, [-1, 1, 1, 1])
    with pytest.raises(ValueError, match="per group"):
        generate_synthetic_truth(GROUPS, 2, 30, 3, [1.0])
    with pytest.raises(ValueError, match="noise"):
        generate_synthetic_truth(GROUPS, 2, 30, 3, WEIGHTS, noise=-0.1)
