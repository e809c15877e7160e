"""Command-line pipeline: preprocess, interpret, evaluate, report.

Each stage reads the same config file, writes deterministic artifacts into the
run directory, and records digests plus timings in the manifest. Exit codes:
0 success, 1 validation/configuration problem, 2 runtime or protocol failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .attribution import (ALL_METHODS, AttributionTensor, augmented_feature_occlusion,
                          feature_ablation, feature_occlusion, feature_permutation,
                          gradient_shap, integrated_gradients, morris_sensitivity,
                          MorrisConfig)
from .baselines import bootstrap_baseline, gaussian_baseline, zero_baseline
from .config import ConfigError, RunConfig, parse_config
from .faithfulness import aopcr
from .groundtruth import GroundTruthError, compare_to_truth, load_group_truth
from .manifest import RunManifest, StageTimer
from .models import FitError, MLPConfig, fit_linear, fit_mlp
from .oracle import OracleError
from .panel import PanelError, load_panel, write_panel_csv, TimeSeriesPanel, FeatureSpec
from .preprocess import (PreprocessConfig, clip_outliers, compute_clip_bounds,
                         interpolate_missing, read_stats_sidecar, split_chronological,
                         standardize, write_stats_sidecar)
from .windows import WindowSpec, make_windows
from .wire import ExternalModelHandle, ProtocolError, WireShape

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 1, 2

VALIDATION_ERRORS = (ConfigError, PanelError, GroundTruthError, FileNotFoundError)
RUNTIME_ERRORS = (ProtocolError, OracleError, FitError)


# ------------------------------------------------------------------ helpers

def _out(config: RunConfig) -> Path:
    return Path(config.output)


def _full_schema(config: RunConfig) -> list[FeatureSpec]:
    schema = list(config.schema)
    names = {f.name for f in schema}
    for name in config.derived_time_features:
        if name not in names:
            schema.append(FeatureSpec(name, "known_future"))
    return schema


def _stable_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _snapshot_config(manifest: RunManifest, config: RunConfig) -> None:
    """Resolved config values into the manifest, one key per field."""
    from dataclasses import fields
    for f in fields(config):
        value = getattr(config, f.name)
        if f.name == "schema":
            value = ", ".join(f"{s.name}:{s.role}" for s in value)
        elif isinstance(value, (list, tuple)):
            value = ", ".join(str(v) for v in value)
        manifest.set(f"config.{f.name}", value)


def _split_meta_keys(name: str, panel: TimeSeriesPanel) -> dict[str, str]:
    meta = {}
    if panel.anchor_start is not None:
        meta[f"split.{name}.anchor_start"] = np.datetime_as_string(panel.anchor_start)
        meta[f"split.{name}.anchor_stop"] = np.datetime_as_string(panel.anchor_stop)
    return meta


def _load_processed(config: RunConfig):
    """Panels for train/val/test plus standardization stats, as preprocessed."""
    base = _out(config) / "preprocessed"
    schema = _full_schema(config)
    panels = {}
    stats, extra = read_stats_sidecar(base / "stats.txt")
    for name in ("train", "val", "test"):
        path = base / f"{name}.csv"
        if not path.exists():
            raise ConfigError(f"missing preprocessed artifact {path}; run preprocess first")
        panel = load_panel(path, schema, config.entity_column, config.date_column)
        lo = extra.get(f"split.{name}.anchor_start")
        hi = extra.get(f"split.{name}.anchor_stop")
        if lo and hi:
            panel = panel.with_anchors(np.datetime64(lo), np.datetime64(hi))
        panels[name] = panel
    return panels, stats


def _build_oracle(config: RunConfig, train_instances, j_count: int, known_count: int):
    if config.model_kind == "linear":
        model, loss = fit_linear(train_instances, ridge=config.ridge)
        return model, f"linear ridge={config.ridge} train_mse={loss:.6g}"
    if config.model_kind == "mlp":
        model, loss = fit_mlp(
            train_instances,
            MLPConfig(hidden=config.hidden, learning_rate=config.learning_rate,
                      epochs=config.epochs),
            seed=config.seed)
        return model, f"mlp hidden={config.hidden} train_mse={loss:.6g}"
    shape = WireShape(j_count, config.lookback, config.horizon, 1, known_count)
    handle = ExternalModelHandle(config.endpoint, shape)
    handle.connect()
    return handle, f"external endpoint={config.endpoint}"


def _fmt(x: float) -> str:
    return repr(float(x))


# ------------------------------------------------------------------ preprocess

def cmd_preprocess(config: RunConfig, config_path: str) -> int:
    out = _out(config)
    manifest = RunManifest(out / "manifest.txt")
    manifest.set("engine.version", __version__)
    manifest.record_config(config_path)
    _snapshot_config(manifest, config)
    manifest.record_digest("input", config.panel_path)

    with StageTimer(manifest, "preprocess"):
        panel = load_panel(config.panel_path, _full_schema(config),
                           config.entity_column, config.date_column)
        prep = PreprocessConfig(config.iqr_multiplier, config.smoothing_window)
        bounds = compute_clip_bounds(panel, prep)
        panel = clip_outliers(panel, prep, bounds)
        panel = interpolate_missing(panel)
        train, val, test = split_chronological(panel, config.train_end,
                                               config.val_len, config.test_len)
        train, stats = standardize(train)
        val, _ = standardize(val, stats)
        test, _ = standardize(test, stats)

        base = out / "preprocessed"
        extra = {"engine.version": __version__}
        for name, split in (("train", train), ("val", val), ("test", test)):
            write_panel_csv(split, base / f"{name}.csv",
                            config.entity_column, config.date_column)
            extra.update(_split_meta_keys(name, split))
        write_stats_sidecar(base / "stats.txt", stats, bounds, extra)

    for name in ("train.csv", "val.csv", "test.csv", "stats.txt"):
        manifest.record_digest("preprocessed", out / "preprocessed" / name)
    manifest.write()
    print(f"preprocess: wrote 3 split panels + stats under {out / 'preprocessed'}")
    return EXIT_OK


# ------------------------------------------------------------------ interpret

def write_attribution_csv(path: Path, tensors: list[AttributionTensor]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["entity", "anchor_date", "method", "o", "tau",
                         "feature", "lookback_position", "value"])
        for t in tensors:
            O, H, J, L = t.values.shape
            anchor = np.datetime_as_string(np.datetime64(t.anchor, "s"))
            for o in range(O):
                for tau in range(H):
                    for j in range(J):
                        for l in range(L):
                            writer.writerow([t.entity, anchor, t.method, o, tau,
                                             t.feature_names[j], l - L,
                                             _fmt(t.values[o, tau, j, l])])


def read_attribution_csv(path: Path) -> list[AttributionTensor]:
    cells: dict[tuple[str, str], dict] = {}
    feature_order: dict[tuple[str, str], list[str]] = {}
    method = None
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                key = (row["entity"], row["anchor_date"])
                method = row["method"]
                entry = cells.setdefault(key, {})
                order = feature_order.setdefault(key, [])
                if row["feature"] not in order:
                    order.append(row["feature"])
                entry[(int(row["o"]), int(row["tau"]), row["feature"],
                       int(row["lookback_position"]))] = float(row["value"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"{path}:{lineno}: corrupted attribution row ({exc})")
    tensors = []
    for key, entry in cells.items():
        order = feature_order[key]
        O = max(k[0] for k in entry) + 1
        H = max(k[1] for k in entry) + 1
        L = -min(k[3] for k in entry)
        values = np.zeros((O, H, len(order), L))
        for (o, tau, feat, pos), val in entry.items():
            values[o, tau, order.index(feat), pos + L] = val
        tensors.append(AttributionTensor(method, key[0], np.datetime64(key[1]),
                                         tuple(order), values))
    return tensors


def _run_method(method: str, oracle, instances, config: RunConfig, train_panel):
    names = instances[0].feature_names
    method_id = ALL_METHODS.index(method)
    workers = 1 if config.model_kind == "external" else (config.workers or os.cpu_count() or 1)

    def parallel(fn):
        if workers == 1:
            return [fn(i) for i in range(len(instances))]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, range(len(instances))))

    if method == "feature_ablation":
        return parallel(lambda i: feature_ablation(oracle, instances[i]))
    if method == "feature_occlusion":
        return parallel(lambda i: feature_occlusion(
            oracle, instances[i], seed=_stable_seed(config.seed, method_id, i)))
    if method == "augmented_feature_occlusion":
        pools = bootstrap_baseline(train_panel, names)
        return parallel(lambda i: augmented_feature_occlusion(
            oracle, instances[i], pools, seed=_stable_seed(config.seed, method_id, i)))
    if method == "morris_sensitivity":
        morris = MorrisConfig.from_panel(train_panel, names,
                                         trajectories=config.morris_trajectories,
                                         levels=config.morris_levels, seed=config.seed)
        return parallel(lambda i: morris_sensitivity(oracle, instances[i], morris))
    if method == "integrated_gradients":
        return parallel(lambda i: integrated_gradients(oracle, instances[i],
                                                       steps=config.ig_steps))
    if method == "gradient_shap":
        return parallel(lambda i: gradient_shap(
            oracle, instances[i], n_samples=config.gs_samples, noise=config.gs_noise,
            seed=_stable_seed(config.seed, method_id, i)))
    if method == "feature_permutation":
        tensors = []
        size = max(2, config.permutation_batch)
        start = 0
        batch_index = 0
        while start < len(instances):
            stop = min(len(instances), start + size)
            if len(instances) - stop == 1:      # avoid a trailing singleton batch
                stop = len(instances)
            chunk = instances[start:stop]
            if len(chunk) < 2:
                raise ConfigError("feature_permutation needs at least 2 instances")
            tensors.extend(feature_permutation(
                oracle, chunk, seed=_stable_seed(config.seed, method_id, batch_index)))
            start = stop
            batch_index += 1
        return tensors
    raise ConfigError(f"unknown method {method!r}")


def cmd_interpret(config: RunConfig, config_path: str) -> int:
    if not config.methods:
        raise ConfigError("methods list is empty; nothing to interpret")
    out = _out(config)
    manifest = RunManifest(out / "manifest.txt")
    manifest.set("engine.version", __version__)
    manifest.record_config(config_path)
    _snapshot_config(manifest, config)

    panels, _ = _load_processed(config)
    spec = WindowSpec(config.lookback, config.horizon)
    train_batch = make_windows(panels["train"], spec)
    target_batch = make_windows(panels[config.interpret_split], spec)
    if not target_batch.instances:
        raise ConfigError(f"no valid windows in split {config.interpret_split!r}")
    manifest.set("interpret.instances", len(target_batch.instances))
    manifest.set("interpret.skipped_anchors", target_batch.skipped)

    inst0 = target_batch.instances[0]
    oracle, describe = _build_oracle(config, train_batch.instances,
                                     inst0.past.shape[0], inst0.known_future.shape[0])
    manifest.set("interpret.model", describe)

    try:
        for method in config.methods:
            with StageTimer(manifest, f"interpret.{method}"):
                tensors = _run_method(method, oracle, target_batch.instances,
                                      config, panels["train"])
            path = out / "attributions" / f"{method}.csv"
            write_attribution_csv(path, tensors)
            manifest.record_digest("attributions", path)
            print(f"interpret: {method} -> {path}")
    finally:
        if hasattr(oracle, "close"):
            oracle.close()
    manifest.write()
    return EXIT_OK


# ------------------------------------------------------------------ evaluate

METHOD_MASK_BASELINE = {
    "feature_ablation": "zero",
    "feature_permutation": "zero",
    "morris_sensitivity": "zero",
    "integrated_gradients": "zero",
    "feature_occlusion": "gaussian",
    "gradient_shap": "gaussian",
    "augmented_feature_occlusion": "bootstrap",
}


def _mask_baseline(kind: str, train_panel, feature_names):
    if kind == "zero":
        return zero_baseline()
    if kind == "gaussian":
        return gaussian_baseline()
    if kind == "bootstrap":
        return bootstrap_baseline(train_panel, feature_names)
    raise ConfigError(f"unknown baseline kind {kind!r}")


def cmd_evaluate(config: RunConfig, config_path: str) -> int:
    if not config.methods:
        raise ConfigError("methods list is empty; nothing to evaluate")
    out = _out(config)
    manifest = RunManifest(out / "manifest.txt")
    manifest.set("engine.version", __version__)
    manifest.record_config(config_path)
    _snapshot_config(manifest, config)
    # conventions the numbers in the reports assume
    manifest.set("evaluate.mse_aggregation", "squared per step before averaging")
    manifest.set("evaluate.ndcg_gain", "linear relevance, discount 1/log2(pos+1)")
    manifest.set("evaluate.rollup", "day membership, normalized after full aggregation")

    panels, _ = _load_processed(config)
    spec = WindowSpec(config.lookback, config.horizon)
    train_batch = make_windows(panels["train"], spec)
    target_batch = make_windows(panels[config.interpret_split], spec)
    instances = target_batch.instances
    by_key = {(inst.entity, np.datetime_as_string(np.datetime64(inst.anchor, "s"))): inst
              for inst in instances}

    inst0 = instances[0]
    oracle, _ = _build_oracle(config, train_batch.instances,
                              inst0.past.shape[0], inst0.known_future.shape[0])

    faith_rows, per_instance_rows, comparison_rows, summary_rows = [], [], [], []
    importance_rows = []
    truth = None
    if config.groups:
        if not config.truth_path:
            raise ConfigError("group evaluation requested (groups set) but data.truth "
                              "is not configured")
        truth = load_group_truth(config.truth_path)
        missing = [g for g in config.groups if g not in truth.groups]
        if missing:
            raise ConfigError(f"groups not present in truth file: {missing}")

    try:
        with StageTimer(manifest, "evaluate"):
            for method in config.methods:
                path = out / "attributions" / f"{method}.csv"
                if not path.exists():
                    raise ConfigError(f"missing attribution file for method {method!r}: {path}")
                tensors = read_attribution_csv(path)
                aligned, insts = [], []
                for t in tensors:
                    key = (t.entity, np.datetime_as_string(np.datetime64(t.anchor, "s")))
                    if key not in by_key:
                        raise ConfigError(f"attribution instance {key} has no window "
                                          f"in split {config.interpret_split!r}")
                    aligned.append(t)
                    insts.append(by_key[key])

                from .groundtruth import feature_importance_summary
                for feature, pct in feature_importance_summary(aligned).items():
                    importance_rows.append([method, feature, _fmt(pct)])

                kind = config.evaluate_baseline
                if kind == "method-default":
                    kind = METHOD_MASK_BASELINE[method]
                baseline = _mask_baseline(kind, panels["train"], inst0.feature_names)
                report = aopcr(oracle, insts, aligned, k_bins=config.k_bins,
                               baseline=baseline, seed=config.seed, method=method)
                for entry in sorted(report.entries, key=lambda e: (e.metric, e.aggregation)):
                    faith_rows.append([entry.method, entry.metric, entry.aggregation,
                                       "|".join(str(k) for k in entry.k_bins),
                                       _fmt(entry.value)])
                    for inst, value in zip(insts, entry.per_instance):
                        per_instance_rows.append([
                            entry.method, entry.metric, entry.aggregation, inst.entity,
                            np.datetime_as_string(np.datetime64(inst.anchor, "s")),
                            _fmt(value)])

                if truth is not None:
                    comparison = compare_to_truth(method, aligned, insts, truth)
                    for p, period in enumerate(comparison.periods):
                        for g, group in enumerate(comparison.groups):
                            comparison_rows.append([
                                method, np.datetime_as_string(np.datetime64(period, "D")),
                                group, _fmt(comparison.predicted[p, g]),
                                _fmt(comparison.true[p, g])])
                    summary_rows.append([method, _fmt(comparison.mae),
                                         _fmt(comparison.rmse), _fmt(comparison.ndcg)])
    finally:
        if hasattr(oracle, "close"):
            oracle.close()

    eval_dir = out / "evaluation"
    eval_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(eval_dir / "faithfulness.csv",
               ["method", "metric", "aggregation", "k_bins", "value"], faith_rows)
    _write_csv(eval_dir / "faithfulness_per_instance.csv",
               ["method", "metric", "aggregation", "entity", "anchor_date", "value"],
               per_instance_rows)
    _write_csv(eval_dir / "feature_importance.csv",
               ["method", "feature", "importance_pct"], importance_rows)
    manifest.record_digest("evaluation", eval_dir / "faithfulness.csv")
    manifest.record_digest("evaluation", eval_dir / "faithfulness_per_instance.csv")
    manifest.record_digest("evaluation", eval_dir / "feature_importance.csv")
    if truth is not None:
        _write_csv(eval_dir / "group_comparison.csv",
                   ["method", "period", "group", "predicted_share", "true_share"],
                   comparison_rows)
        _write_csv(eval_dir / "group_summary.csv",
                   ["method", "mae", "rmse", "ndcg"], summary_rows)
        manifest.record_digest("evaluation", eval_dir / "group_comparison.csv")
        manifest.record_digest("evaluation", eval_dir / "group_summary.csv")
    manifest.write()
    print(f"evaluate: wrote reports under {eval_dir}")
    return EXIT_OK


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


# ------------------------------------------------------------------ report

def _read_csv_table(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}:1: empty CSV")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ConfigError(f"{path}:{lineno}: expected {len(header)} columns, "
                                  f"got {len(row)}")
            rows.append(row)
    return header, rows


def _format_table(header: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h)
              for i, h in enumerate(header)]
    def line(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [line(header), line(["-" * w for w in widths])]
    out.extend(line(r) for r in rows)
    return "\n".join(out)


def cmd_report(run_dir: str) -> int:
    run = Path(run_dir)
    if not run.exists():
        raise ConfigError(f"run directory {run} does not exist")
    sections = []
    gaps = []
    for title, rel, digits in (("Faithfulness (AOPCR)", "evaluation/faithfulness.csv", 6),
                               ("Feature importance (%)", "evaluation/feature_importance.csv", 4),
                               ("Ground-truth comparison", "evaluation/group_summary.csv", 4)):
        path = run / rel
        if not path.exists():
            gaps.append(f"{title}: missing ({rel} not found)")
            continue
        header, rows = _read_csv_table(path)
        rows = [[_round(c, digits) for c in row] for row in rows]
        sections.append(f"## {title}\n\n{_format_table(header, rows)}")
    manifest_path = run / "manifest.txt"
    if manifest_path.exists():
        timings = [line for line in manifest_path.read_text().splitlines()
                   if line.startswith("timing.")]
        if timings:
            sections.append("## Stage timings\n\n" + "\n".join(timings))
    else:
        gaps.append("manifest.txt missing")
    if gaps:
        sections.append("## Gaps\n\n" + "\n".join(f"- {g}" for g in gaps))

    text = f"# Run report: {run}\n\n" + "\n\n".join(sections) + "\n"
    (run / "report.txt").write_text(text)
    if manifest_path.exists():
        manifest = RunManifest(manifest_path)
        manifest.record_digest("report", run / "report.txt")
        manifest.write()
    print(text)
    return EXIT_OK


def _round(cell: str, digits: int) -> str:
    try:
        return f"{float(cell):.{digits}g}"
    except ValueError:
        return cell


# ------------------------------------------------------------------ entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tsattr",
        description="Attribution and evaluation pipeline for windowed forecasters")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("preprocess", "interpret", "evaluate"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--output", default=None)
    p = sub.add_parser("report")
    p.add_argument("run_dir", nargs="?", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--output", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            run_dir = args.run_dir or args.output
            if run_dir is None and args.config:
                run_dir = parse_config(args.config).output
            if run_dir is None:
                raise ConfigError("report needs a run directory (positional, --output "
                                  "or --config)")
            return cmd_report(run_dir)

        config = parse_config(args.config)
        if args.seed is not None:
            config.seed = args.seed
        if args.workers is not None:
            config.workers = args.workers
        if args.output is not None:
            config.output = args.output
        if args.command == "preprocess":
            return cmd_preprocess(config, args.config)
        if args.command == "interpret":
            return cmd_interpret(config, args.config)
        return cmd_evaluate(config, args.config)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except RUNTIME_ERRORS as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
