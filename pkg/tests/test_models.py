import numpy as np
import pytest
from dataclasses import replace

from conftest import ConstantOracle, make_instance, random_linear
from tsattr.models import (FitError, MLPConfig, ReferenceLinearModel, ReferenceMLP,
                           fit_linear, fit_mlp)
from tsattr.oracle import (OracleError, finite_diff_gradient, finite_diff_gradient_tensor,
                           gradient_tensor, predict)


# ---------------------------------------------------------------- predict

def test_linear_zero_input_returns_bias():
    model = random_linear(J=2, L=3, horizon=2, seed=1)
    inst = make_instance(J=2, L=3, past=np.zeros((2, 3)))
    np.testing.assert_array_equal(predict(model, [inst])[0], model.bias)


def test_batch_of_identical_instances_identical_rows():
    model = random_linear(seed=2)
    inst = make_instance(seed=3)
    out = predict(model, [inst, inst])
    np.testing.assert_array_equal(out[0], out[1])


def test_all_ones_sums_weights():
    model = ReferenceLinearModel(np.ones((1, 2, 2, 3)), np.zeros((1, 2)))
    inst = make_instance(J=2, L=3, past=np.ones((2, 3)))
    np.testing.assert_allclose(predict(model, [inst])[0], 6.0)


def test_batch_equals_loop_bitwise():
    for model in (random_linear(J=3, L=4, horizon=3, seed=5),
                  fit_mlp([make_instance(J=3, L=4, horizon=3, seed=s) for s in range(4)],
                          MLPConfig(hidden=8, epochs=30))[0]):
        batch = [make_instance(J=3, L=4, horizon=3, seed=10 + s) for s in range(6)]
        together = predict(model, batch)
        for i, inst in enumerate(batch):
            np.testing.assert_array_equal(together[i], predict(model, [inst])[0])


def test_empty_batch_rejected(linear_model):
    with pytest.raises(ValueError, match="non-empty"):
        predict(linear_model, [])


def test_shape_contract_enforced():
    class Broken(ConstantOracle):
        def predict(self, batch):
            return np.zeros((len(batch), 5, 5))

    with pytest.raises(OracleError, match="shape"):
        predict(Broken(outputs=1, horizon=2), [make_instance()])


# ---------------------------------------------------------------- gradients

def test_linear_gradient_is_weight_slice():
    model = random_linear(J=2, L=3, horizon=2, seed=4)
    inst = make_instance(seed=6)
    for tau in range(2):
        np.testing.assert_array_equal(model.gradient(inst, 0, tau), model.weights[0, tau])


def test_mlp_gradient_varies_with_input():
    mlp, _ = fit_mlp([make_instance(seed=s) for s in range(3)], MLPConfig(hidden=6, epochs=20))
    g1 = mlp.gradient(make_instance(seed=11), 0, 0)
    g2 = mlp.gradient(make_instance(seed=12), 0, 0)
    assert not np.allclose(g1, g2)


def test_mlp_gradient_matches_finite_differences():
    mlp, _ = fit_mlp([make_instance(J=3, L=4, seed=s) for s in range(4)],
                     MLPConfig(hidden=8, epochs=50))
    for seed in range(5):
        inst = make_instance(J=3, L=4, seed=100 + seed)
        exact = gradient_tensor(mlp, inst)
        approx = finite_diff_gradient_tensor(mlp, inst, eps=1e-5)
        denom = np.maximum(np.abs(exact), 1e-8)
        assert (np.abs(exact - approx) / denom).max() < 1e-4


def test_finite_diff_exact_for_linear():
    model = random_linear(J=2, L=2, horizon=1, seed=8)
    inst = make_instance(J=2, L=2, horizon=1, seed=9)
    fd = finite_diff_gradient(model, inst, 0, 0, eps=0.25)
    np.testing.assert_allclose(fd, model.weights[0, 0], rtol=1e-9, atol=1e-9)


def test_finite_diff_quadratic_single_cell():
    class Quadratic(ConstantOracle):
        def predict(self, batch):
            return np.array([[[inst.past[0, 0] ** 2]] for inst in batch])

    oracle = Quadratic(outputs=1, horizon=1)
    inst = make_instance(J=1, L=1, horizon=1, past=[[3.0]])
    fd = finite_diff_gradient(oracle, inst, 0, 0, eps=1e-4)
    assert fd[0, 0] == pytest.approx(6.0, abs=1e-6)


def test_finite_diff_second_order_convergence():
    mlp, _ = fit_mlp([make_instance(seed=s) for s in range(3)], MLPConfig(hidden=6, epochs=40))
    inst = make_instance(seed=55)
    exact = gradient_tensor(mlp, inst)
    err = lambda eps: np.abs(finite_diff_gradient_tensor(mlp, inst, eps=eps) - exact).max()
    ratio = err(2e-2) / err(1e-2)
    assert 3.0 < ratio < 5.0


def test_finite_diff_rejects_bad_eps(linear_model):
    with pytest.raises(ValueError, match="eps"):
        finite_diff_gradient(linear_model, make_instance(), 0, 0, eps=0.0)


def test_gradient_index_bounds(linear_model):
    with pytest.raises(IndexError):
        linear_model.gradient(make_instance(), 0, 99)
    with pytest.raises(IndexError):
        finite_diff_gradient(linear_model, make_instance(), 5, 0)


# ---------------------------------------------------------------- fitting

def _instances_from_map(model: ReferenceLinearModel, n, J, L, horizon, seed=0, noise=0.0):
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        inst = make_instance(J=J, L=L, horizon=horizon, seed=rng.integers(1 << 30))
        target = model.predict([inst])[0]
        if noise:
            target = target + rng.normal(0, noise, size=target.shape)
        out.append(replace(inst, targets=target))
    return out


def test_fit_linear_recovers_known_map():
    truth = random_linear(J=2, L=3, horizon=2, seed=21)
    train = _instances_from_map(truth, 80, 2, 3, 2, seed=1)
    model, loss = fit_linear(train, ridge=1e-8)
    np.testing.assert_allclose(model.weights, truth.weights, atol=1e-4)
    np.testing.assert_allclose(model.bias, truth.bias, atol=1e-4)
    assert loss < 1e-10


def test_fit_linear_zero_targets_gives_zero_model():
    train = [make_instance(seed=s) for s in range(10)]
    train = [replace(t, targets=np.zeros_like(t.targets)) for t in train]
    model, _ = fit_linear(train, ridge=0.1)
    np.testing.assert_allclose(model.weights, 0.0, atol=1e-12)
    np.testing.assert_allclose(model.bias, 0.0, atol=1e-12)


def test_fit_linear_duplicates_equal_weighted_fit():
    truth = random_linear(J=2, L=2, horizon=1, seed=30)
    base = _instances_from_map(truth, 12, 2, 2, 1, seed=2, noise=0.3)
    doubled = base + base[:4]
    weights = np.ones(12)
    weights[:4] = 2.0
    a, _ = fit_linear(doubled, ridge=1e-6)
    b, _ = fit_linear(base, ridge=1e-6, sample_weight=weights)
    np.testing.assert_allclose(a.weights, b.weights, rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(a.bias, b.bias, rtol=1e-9, atol=1e-12)


def test_fit_linear_singular_advises_ridge():
    train = [make_instance(J=3, L=3, seed=s) for s in range(2)]  # 2 rows, 10 unknowns
    with pytest.raises(FitError, match="ridge > 0"):
        fit_linear(train, ridge=0.0)


def test_fit_mlp_deterministic():
    train = [make_instance(seed=s) for s in range(5)]
    m1, l1 = fit_mlp(train, MLPConfig(hidden=5, epochs=25), seed=3)
    m2, l2 = fit_mlp(train, MLPConfig(hidden=5, epochs=25), seed=3)
    np.testing.assert_array_equal(m1.w1, m2.w1)
    np.testing.assert_array_equal(m1.w2, m2.w2)
    assert l1 == l2


def test_fit_mlp_near_linear_on_linear_data():
    truth = random_linear(J=2, L=2, horizon=1, seed=40)
    train = _instances_from_map(truth, 60, 2, 2, 1, seed=4, noise=0.05)
    _, linear_loss = fit_linear(train, ridge=1e-8)
    _, mlp_loss = fit_mlp(train, MLPConfig(hidden=16, epochs=3000, learning_rate=5e-3), seed=0)
    assert mlp_loss <= linear_loss * 1.1 + 1e-6


def test_fit_mlp_beats_linear_on_xor():
    rng = np.random.default_rng(5)
    train = []
    for _ in range(120):
        past = rng.choice([-1.0, 1.0], size=(2, 1))
        target = np.array([[past[0, 0] * past[1, 0]]])
        inst = make_instance(J=2, L=1, horizon=1, past=past)
        train.append(replace(inst, targets=target))
    _, linear_loss = fit_linear(train, ridge=1e-8)
    _, mlp_loss = fit_mlp(train, MLPConfig(hidden=16, epochs=2000, learning_rate=1e-2), seed=1)
    assert mlp_loss < 0.5 * linear_loss


def test_fit_mlp_divergence_reports_epoch():
    train = [make_instance(seed=s) for s in range(5)]
    with pytest.raises(FitError, match="epoch"):
        fit_mlp(train, MLPConfig(hidden=4, epochs=10, learning_rate=1e200), seed=0)
