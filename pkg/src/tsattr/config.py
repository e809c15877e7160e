"""Declarative run configuration: one flat key = value file.

Lines are ``key = value`` with ``#`` comments. Feature roles are declared as
``feature.<name> = <role>``; list values are comma separated. Unknown keys are
rejected so typos fail loudly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .panel import ROLES, FeatureSpec

KNOWN_KEYS = {
    "data.panel", "data.entity_column", "data.date_column", "data.truth",
    "derived_time_features",
    "window.lookback", "window.horizon",
    "preprocess.iqr_multiplier", "preprocess.smoothing_window",
    "split.train_end", "split.val_len", "split.test_len",
    "model.kind", "model.ridge", "model.hidden", "model.learning_rate",
    "model.epochs", "model.endpoint",
    "methods", "interpret.split",
    "morris.trajectories", "morris.levels",
    "ig.steps", "gs.samples", "gs.noise", "permutation.batch",
    "k_bins", "evaluate.baseline", "groups",
    "seed", "workers", "output",
}

MODEL_KINDS = ("linear", "mlp", "external")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    panel_path: str = ""
    entity_column: str = "entity"
    date_column: str = "date"
    truth_path: str | None = None
    schema: list[FeatureSpec] = field(default_factory=list)
    derived_time_features: list[str] = field(default_factory=list)
    lookback: int = 14
    horizon: int = 14
    iqr_multiplier: float = 7.5
    smoothing_window: int = 7
    train_end: str = ""
    val_len: int = 14
    test_len: int = 14
    model_kind: str = "linear"
    ridge: float = 1e-6
    hidden: int = 32
    learning_rate: float = 1e-2
    epochs: int = 500
    endpoint: str | None = None
    methods: list[str] = field(default_factory=list)
    interpret_split: str = "test"
    morris_trajectories: int = 10
    morris_levels: int = 4
    ig_steps: int = 50
    gs_samples: int = 20
    gs_noise: float = 0.1
    permutation_batch: int = 32
    k_bins: tuple[float, ...] = (5.0, 10.0)
    evaluate_baseline: str = "method-default"
    groups: tuple[str, ...] = ()
    seed: int = 7
    workers: int = 0
    output: str = "run"

    def validate(self) -> None:
        if not self.panel_path:
            raise ConfigError("data.panel is required")
        if not self.schema:
            raise ConfigError("at least one feature.<name> = <role> entry is required")
        targets = [f for f in self.schema if f.role == "target"]
        if len(targets) != 1:
            raise ConfigError("exactly one feature must have role target")
        if self.model_kind not in MODEL_KINDS:
            raise ConfigError(f"model.kind must be one of {MODEL_KINDS}")
        if self.model_kind == "external" and not self.endpoint:
            raise ConfigError("model.endpoint is required for model.kind = external")
        if self.interpret_split not in ("train", "val", "test"):
            raise ConfigError("interpret.split must be train, val or test")
        from .attribution import ALL_METHODS
        for m in self.methods:
            if m not in ALL_METHODS:
                raise ConfigError(f"unknown method {m!r}; known: {sorted(ALL_METHODS)}")
        if self.evaluate_baseline not in ("method-default", "zero", "gaussian", "bootstrap"):
            raise ConfigError("evaluate.baseline must be method-default, zero, "
                              "gaussian or bootstrap")


def parse_kv_file(path: str | Path) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in entries:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        entries[key] = value.strip()
    return entries


def _csv_list(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def parse_config(path: str | Path) -> RunConfig:
    entries = parse_kv_file(path)
    config = RunConfig()
    for key, value in entries.items():
        if key.startswith("feature."):
            name = key[len("feature."):]
            config.schema.append(FeatureSpec(name, value))
            continue
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            _apply(config, key, value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for {key}: {value!r} ({exc})") from None
    config.validate()
    return config


def _apply(config: RunConfig, key: str, value: str) -> None:
    simple = {
        "data.panel": ("panel_path", str),
        "data.entity_column": ("entity_column", str),
        "data.date_column": ("date_column", str),
        "data.truth": ("truth_path", str),
        "window.lookback": ("lookback", int),
        "window.horizon": ("horizon", int),
        "preprocess.iqr_multiplier": ("iqr_multiplier", float),
        "preprocess.smoothing_window": ("smoothing_window", int),
        "split.train_end": ("train_end", str),
        "split.val_len": ("val_len", int),
        "split.test_len": ("test_len", int),
        "model.kind": ("model_kind", str),
        "model.ridge": ("ridge", float),
        "model.hidden": ("hidden", int),
        "model.learning_rate": ("learning_rate", float),
        "model.epochs": ("epochs", int),
        "model.endpoint": ("endpoint", str),
        "interpret.split": ("interpret_split", str),
        "morris.trajectories": ("morris_trajectories", int),
        "morris.levels": ("morris_levels", int),
        "ig.steps": ("ig_steps", int),
        "gs.samples": ("gs_samples", int),
        "gs.noise": ("gs_noise", float),
        "permutation.batch": ("permutation_batch", int),
        "evaluate.baseline": ("evaluate_baseline", str),
        "seed": ("seed", int),
        "workers": ("workers", int),
        "output": ("output", str),
    }
    if key in simple:
        attr, cast = simple[key]
        setattr(config, attr, cast(value))
    elif key == "derived_time_features":
        config.derived_time_features = _csv_list(value)
    elif key == "methods":
        config.methods = _csv_list(value)
    elif key == "k_bins":
        config.k_bins = tuple(float(v) for v in _csv_list(value))
    elif key == "groups":
        config.groups = tuple(_csv_list(value))
    else:  # pragma: no cover - KNOWN_KEYS and handlers kept in sync
        raise ConfigError(f"unhandled key {key}")
