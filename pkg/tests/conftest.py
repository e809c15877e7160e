"""Shared fixtures: tiny panels, reference instances, and degenerate oracles."""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from tsattr.models import MLPConfig, ReferenceLinearModel, fit_mlp
from tsattr.oracle import ForecastOracle
from tsattr.panel import FeatureSpec, TimeSeriesPanel
from tsattr.windows import WindowedInstance


def make_instance(J=2, L=3, horizon=2, known=0, seed=0, entity="e0",
                  anchor="2021-06-20", past=None) -> WindowedInstance:
    rng = np.random.default_rng(seed)
    past = rng.normal(size=(J, L)) if past is None else np.asarray(past, dtype=float)
    return WindowedInstance(
        entity=entity, anchor=np.datetime64(anchor), step=np.timedelta64(1, "D"),
        feature_names=tuple(f"f{j}" for j in range(past.shape[0])),
        known_future_names=tuple(f"k{j}" for j in range(known)),
        past=past,
        known_future=rng.normal(size=(known, horizon)),
        targets=rng.normal(size=(1, horizon)))


def random_linear(J=2, L=3, outputs=1, horizon=2, seed=0,
                  distinct=False) -> ReferenceLinearModel:
    rng = np.random.default_rng(seed)
    if distinct:
        # distinct |W| magnitudes so rankings are unambiguous
        mags = 1.0 + np.arange(outputs * horizon * J * L, dtype=float)
        signs = rng.choice([-1.0, 1.0], size=mags.shape)
        w = (mags * signs).reshape(outputs, horizon, J, L)
        rng.shuffle(w.reshape(-1))
    else:
        w = rng.normal(size=(outputs, horizon, J, L))
    b = rng.normal(size=(outputs, horizon))
    return ReferenceLinearModel(w, b)


def trained_reference_mlp(J=2, L=3, horizon=2, seed=0):
    """MLP fitted to a smooth low-amplitude nonlinear teacher.

    Weights stay moderate, which keeps the path-integral quadrature error of
    attribution checks far below their tolerances.
    """
    rng = np.random.default_rng(seed)
    teacher = rng.normal(0.0, 0.3, size=(horizon, J * L))
    train = []
    for s in range(12):
        inst = make_instance(J=J, L=L, horizon=horizon, seed=1000 * seed + s)
        y = (0.4 * np.tanh(teacher @ inst.past.reshape(-1))).reshape(1, horizon)
        train.append(replace(inst, targets=y))
    model, _ = fit_mlp(train, MLPConfig(hidden=8, epochs=300, learning_rate=5e-3,
                                        init_scale=0.15), seed=seed)
    return model


class ConstantOracle(ForecastOracle):
    """Ignores its input entirely; gradient is exactly zero."""

    has_exact_gradient = True

    def __init__(self, value=3.5, outputs=1, horizon=2):
        self.value = value
        self.output_shape = (outputs, horizon)

    def predict(self, batch):
        return np.full((len(batch), *self.output_shape), self.value)

    def gradient(self, instance, o, tau):
        return np.zeros_like(instance.past)


class RecordingOracle(ForecastOracle):
    """Wraps an oracle and logs every past block it evaluates."""

    def __init__(self, inner: ForecastOracle):
        self.inner = inner
        self.output_shape = inner.output_shape
        self.has_exact_gradient = inner.has_exact_gradient
        self.seen: list[np.ndarray] = []

    def predict(self, batch):
        self.seen.extend(inst.past.copy() for inst in batch)
        return self.inner.predict(batch)

    def gradient(self, instance, o, tau):
        return self.inner.gradient(instance, o, tau)


def small_panel(entities=("a", "b"), T=10, seed=0, roles=None) -> TimeSeriesPanel:
    """Panel with one static, one dynamic, one target feature by default."""
    roles = roles or [("s0", "static"), ("d0", "dynamic"), ("y", "target")]
    rng = np.random.default_rng(seed)
    features = [FeatureSpec(n, r) for n, r in roles]
    values = rng.normal(size=(len(entities), len(features), T))
    for j, f in enumerate(features):
        if f.role == "static":
            values[:, j, :] = values[:, j, :1]
    time_index = (np.datetime64("2021-01-01") +
                  np.arange(T) * np.timedelta64(1, "D")).astype("datetime64[ns]")
    return TimeSeriesPanel(list(entities), time_index, features, values,
                           np.ones_like(values, dtype=bool))


@pytest.fixture
def linear_model():
    return random_linear()


@pytest.fixture
def constant_oracle():
    return ConstantOracle()
