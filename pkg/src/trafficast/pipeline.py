"""End-to-end pipeline orchestration and variant comparison.

Stage order follows the detection algorithm: ingest, forward-fill, EMD
denoising, empirical-rule outlier handling on the denoised series, lag
selection, chronological windowing and split, training, prediction,
metrics. Every stage writes its artifact (CSV/JSON plus a rendered PNG
where a figure makes sense) into the run directory, and a manifest of
content hashes makes any nondeterminism across repeat runs visible.
"""

from __future__ import annotations

import configparser
import contextlib
import csv
import hashlib
import json
import math
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import emd, lagsel, metrics, outlier, plots, seqmodels
from .errors import ConfigError, TrafficastError
from .outlier import MitigationMode
from .seqmodels import Architecture, ModelSpec
from .series import (
    TrafficSeries,
    acf,
    forward_fill,
    ingest_counters,
    read_bps_csv,
    read_counter_csv,
    write_acf_csv,
    write_series_csv,
)

SEED_ENV_VAR = "TRAFFICAST_SEED"
_ACF_LAGS = 48


class StageFailure(TrafficastError):
    """A pipeline stage failed; carries the stage name and the cause."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    input_path: str | None = None
    output_dir: str = "runs/out"
    input_format: str = "bps"  # "bps" or "counter"
    interval: int = 300
    divide_by_interval: bool = True
    denoise: bool = True
    outliers: bool = True
    mitigation_mode: MitigationMode = MitigationMode.NEIGHBOR
    k_min: int = 2
    k_max: int = 24
    knn_window: int = 13
    lags: int | None = None  # explicit lag count; None = ARIMA grid search
    p_min: int = 2
    p_max: int = 24
    q_min: int = 2
    q_max: int = 24
    d: int = 1
    architecture: Architecture = Architecture.LSTM
    hidden_size: int = 64
    epochs: int = 50
    batch_size: int = 32
    learning_rate: float = 1e-3
    train_frac: float = 0.70
    seed: int = 42

    def __post_init__(self):
        if not 0 < self.train_frac < 1:
            raise ConfigError(f"train_frac must be in (0,1), got {self.train_frac}")
        if self.k_min < 2 or self.k_max < self.k_min:
            raise ConfigError(f"invalid K range [{self.k_min}, {self.k_max}]")
        if self.input_format not in ("bps", "counter"):
            raise ConfigError(f"unknown input format {self.input_format!r}")

    def model_spec(self, architecture: Architecture | None = None) -> ModelSpec:
        return ModelSpec(
            architecture=architecture or self.architecture,
            hidden_size=self.hidden_size,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            seed=self.seed,
        )


_BOOL_KEYS = {"divide_by_interval", "denoise", "outliers"}
_INT_KEYS = {
    "interval", "k_min", "k_max", "knn_window", "lags",
    "p_min", "p_max", "q_min", "q_max", "d",
    "hidden_size", "epochs", "batch_size", "seed",
}
_FLOAT_KEYS = {"learning_rate", "train_frac"}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if key in _BOOL_KEYS:
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key == "architecture":
        return Architecture(raw.lower())
    if key == "mitigation_mode":
        return MitigationMode(raw.lower())
    return raw


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Config from an INI-style ``key = value`` file plus overrides.

    Precedence: file < explicit overrides < TRAFFICAST_SEED env variable.
    A bare key=value file (no section header) is accepted.
    """
    values: dict = {}
    if path is not None:
        text = Path(path).read_text()
        if not text.lstrip().startswith("["):
            text = "[trafficast]\n" + text
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(f"cannot parse config {path}: {exc}") from exc
        for section in parser.sections():
            for key, raw in parser.items(section):
                values[key] = raw
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})

    known = {f.name for f in fields(PipelineConfig)}
    kwargs = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[key] = _coerce(key, raw) if isinstance(raw, str) else raw
    config = PipelineConfig(**kwargs)

    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed is not None:
        try:
            config = replace(config, seed=int(env_seed))
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer") from exc
    return config


# ---------------------------------------------------------------------------
# Artifact helpers
# ---------------------------------------------------------------------------


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir: Path, exclude: tuple[str, ...] = ("manifest.json",)) -> Path:
    """Hash every artifact under the run directory into manifest.json."""
    entries = {}
    for path in sorted(out_dir.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(out_dir).as_posix()
        if rel in exclude:
            continue
        entries[rel] = {"sha256": _sha256(path), "bytes": path.stat().st_size}
    manifest = out_dir / "manifest.json"
    _write_json(manifest, {"artifacts": entries})
    return manifest


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_predictions_csv(path: Path, timestamps, actual, predicted) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "actual", "predicted"])
        for t, a, p in zip(timestamps, actual, predicted):
            writer.writerow([f"{t:.0f}", repr(float(a)), repr(float(p))])


def write_decomposition_csv(path: Path, timestamps, original, result: emd.EmdResult,
                            denoised) -> None:
    header = ["t", "original"]
    header += [f"imf_{i + 1}" for i in range(result.n_imfs)]
    header += ["residue", "avg_imf", "denoised"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, t in enumerate(timestamps):
            row = [f"{t:.0f}", repr(float(original[i]))]
            row += [repr(float(result.imfs[j, i])) for j in range(result.n_imfs)]
            row += [
                repr(float(result.residue[i])),
                repr(float(result.avg_imf[i])),
                repr(float(denoised[i])),
            ]
            writer.writerow(row)


def write_lag_ranking_csv(path: Path, ranked: list[lagsel.GridEntry]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["rank", "p", "d", "q", "aic", "converged"])
        for rank, entry in enumerate(ranked, start=1):
            aic_repr = "inf" if math.isinf(entry.aic) else repr(entry.aic)
            writer.writerow(
                [rank, entry.order.p, entry.order.d, entry.order.q,
                 aic_repr, str(entry.converged).lower()]
            )


def write_outlier_report(path: Path, report: outlier.OutlierReport) -> None:
    payload = {
        "mean": report.bounds.mean,
        "std_dev": report.bounds.std_dev,
        "upper": report.bounds.upper,
        "lower": report.bounds.lower,
        "flagged_indices": [int(i) for i in report.flagged],
        "flagged_count": int(report.flagged.size),
        "best_k": int(report.best_k),
        "k_rmse": {str(k): v for k, v in sorted(report.k_rmse_table.items())},
    }
    _write_json(path, payload)


# ---------------------------------------------------------------------------
# Pipeline stages
# ---------------------------------------------------------------------------


@dataclass
class RunArtifacts:
    out_dir: Path
    lag_count: int
    report: metrics.MetricReport
    best_k: int | None = None
    denoise_passthrough: bool = False
    files: list[str] = field(default_factory=list)


def load_input(config: PipelineConfig) -> TrafficSeries:
    if config.input_path is None:
        raise ConfigError("no input path configured")
    if config.input_format == "counter":
        records = read_counter_csv(config.input_path)
        return ingest_counters(records, config.interval, config.divide_by_interval)
    return read_bps_csv(config.input_path, config.interval)


@contextlib.contextmanager
def _stage(name: str):
    try:
        yield
    except StageFailure:
        raise
    except Exception as exc:
        raise StageFailure(name, exc) from exc


def select_lags(values: np.ndarray, config: PipelineConfig) -> tuple[int, list[lagsel.GridEntry]]:
    if config.lags is not None:
        return config.lags, []
    ranked = lagsel.grid_search(
        values, (config.p_min, config.p_max), (config.q_min, config.q_max), config.d
    )
    return lagsel.select_lag_count(ranked), ranked


def train_and_eval(
    working: TrafficSeries,
    lag_count: int,
    spec: ModelSpec,
    train_frac: float,
    eval_targets: np.ndarray | None = None,
):
    """Window, split, normalize on train statistics, train, predict.

    Returns (model, test predictions in bps, actuals in bps, test target
    positions in the series). ``eval_targets`` swaps in an alternative
    actual vector aligned to the full series (used to score against a
    clean reference when one exists).
    """

    ds = seqmodels.make_windows(working, lag_count)
    train_ds, test_ds = seqmodels.split(ds, train_frac)
    lo = float(min(train_ds.inputs.min(), train_ds.targets.min()))
    hi = float(max(train_ds.inputs.max(), train_ds.targets.max()))
    if hi == lo:
        hi = lo + 1.0  # constant training series still trains (flat windows)

    def norm(a):
        return (a - lo) / (hi - lo)

    def denorm(a):
        return a * (hi - lo) + lo

    train_n = seqmodels.WindowedDataset(
        norm(train_ds.inputs), norm(train_ds.targets), lag_count
    )
    test_n = seqmodels.WindowedDataset(
        norm(test_ds.inputs), norm(test_ds.targets), lag_count
    )
    model = seqmodels.train(train_n, spec)
    predicted = denorm(seqmodels.predict(model, test_n))
    positions = lag_count + train_ds.samples + np.arange(test_ds.samples)
    if eval_targets is not None:
        actual = np.asarray(eval_targets)[positions]
    else:
        actual = test_ds.targets
    return model, predicted, actual, positions


def run_pipeline(config: PipelineConfig, series: TrafficSeries | None = None) -> RunArtifacts:
    """Execute every configured stage and write all artifacts.

    Any stage error raises StageFailure naming the stage; artifacts
    produced by earlier stages stay on disk.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    with _stage("ingest"):
        raw = series if series is not None else load_input(config)

    with _stage("forward_fill"):
        filled = forward_fill(raw)
        write_series_csv(out / "filled.csv", filled)

    with _stage("acf"):
        max_lag = min(_ACF_LAGS, len(filled) - 1)
        correlations = acf(filled, max_lag)
        write_acf_csv(out / "acf.csv", correlations)
        plots.plot_acf(out / "acf.png", correlations)

    working = filled
    denoise_passthrough = False
    if config.denoise:
        with _stage("denoise"):
            result = emd.denoise(filled.values)
            denoise_passthrough = result.passthrough
            working = filled.with_values(result.denoised)
            write_series_csv(out / "denoised.csv", working)
            if result.emd is not None:
                write_decomposition_csv(
                    out / "decomposition.csv", filled.timestamps, filled.values,
                    result.emd, result.denoised,
                )
            plots.plot_series_overlay(
                out / "denoised.png", filled.timestamps,
                {"original": filled.values, "denoised": result.denoised,
                 "noise": result.noise},
                "EMD denoising",
            )

    best_k = None
    if config.outliers:
        with _stage("outliers"):
            report = outlier.analyze(
                working, (config.k_min, config.k_max),
                config.knn_window, config.mitigation_mode,
            )
            best_k = report.best_k
            write_outlier_report(out / "outlier_report.json", report)
            write_series_csv(out / "mitigated.csv", report.mitigated)
            plots.plot_outliers(
                out / "outliers.png", working.timestamps, working.values,
                report.flagged, report.bounds.upper, report.bounds.lower,
                report.bounds.mean,
            )
            plots.plot_k_rmse(out / "k_rmse.png", report.k_rmse_table, report.best_k)
            working = report.mitigated

    with _stage("select_lags"):
        lag_count, ranked = select_lags(working.values, config)
        if ranked:
            write_lag_ranking_csv(out / "lag_ranking.csv", ranked)

    with _stage("train"):
        spec = config.model_spec()
        model, predicted, actual, positions = train_and_eval(
            working, lag_count, spec, config.train_frac
        )
        seqmodels.save_model(out / "model.ckpt", model)

    with _stage("evaluate"):
        report_metrics = metrics.report(actual, predicted)
        timestamps = working.timestamps[positions]
        write_predictions_csv(out / "predictions.csv", timestamps, actual, predicted)
        plots.plot_predictions(
            out / "predictions.png", timestamps, actual, predicted,
            f"Actual vs predicted ({spec.architecture.value})",
        )
        _write_json(out / "run_report.json", {
            "architecture": spec.architecture.value,
            "hidden_size": spec.hidden_size,
            "epochs": spec.epochs,
            "batch_size": spec.batch_size,
            "learning_rate": spec.learning_rate,
            "seed": spec.seed,
            "train_frac": config.train_frac,
            "lag_count": lag_count,
            "denoise": config.denoise,
            "outliers": config.outliers,
            "mitigation_mode": config.mitigation_mode.value,
            "best_k": best_k,
            "denoise_passthrough": denoise_passthrough,
            "final_train_loss": model.loss_history[-1],
            "units": {"rmse": "bps", "mae": "bps", "mape": "percent"},
            "metrics": {
                "rmse": report_metrics.rmse,
                "mae": report_metrics.mae,
                "mape": report_metrics.mape,
                "accuracy": report_metrics.accuracy,
                "n": report_metrics.n,
            },
        })

    manifest = write_manifest(out)
    files = sorted(
        p.relative_to(out).as_posix() for p in out.rglob("*") if p.is_file()
    )
    return RunArtifacts(
        out_dir=out,
        lag_count=lag_count,
        report=report_metrics,
        best_k=best_k,
        denoise_passthrough=denoise_passthrough,
        files=files,
    )


VARIANTS = ("baseline", "knn", "knn_emd")


def _variant_series(filled: TrafficSeries, variant: str, config: PipelineConfig) -> TrafficSeries:
    if variant == "baseline":
        return filled
    working = filled
    if variant == "knn_emd":
        result = emd.denoise(filled.values)
        working = filled.with_values(result.denoised)
    report = outlier.analyze(
        working, (config.k_min, config.k_max), config.knn_window, config.mitigation_mode
    )
    return report.mitigated


def compare_variants(
    config: PipelineConfig,
    architectures: list[Architecture] | None = None,
    series: TrafficSeries | None = None,
    clean_reference: TrafficSeries | None = None,
) -> list[dict]:
    """Run {baseline, knn, knn_emd} x architectures with a shared seed/split.

    When a clean reference series is supplied (synthetic corpora), every
    variant is scored against the same clean test targets; otherwise each
    variant is scored against its own processed test targets. Emits the
    comparison CSV, JSON, and figures into the output directory.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    if architectures is None:
        architectures = list(Architecture)

    with _stage("ingest"):
        raw = series if series is not None else load_input(config)
        filled = forward_fill(raw)
        if clean_reference is not None and len(clean_reference) != len(filled):
            raise ConfigError("clean reference length differs from input series")

    with _stage("select_lags"):
        lag_count, ranked = select_lags(filled.values, config)
        if ranked:
            write_lag_ranking_csv(out / "lag_ranking.csv", ranked)

    variant_series = {}
    with _stage("preprocess"):
        for variant in VARIANTS:
            variant_series[variant] = _variant_series(filled, variant, config)

    rows: list[dict] = []
    eval_targets = clean_reference.values if clean_reference is not None else None
    for architecture in architectures:
        for variant in VARIANTS:
            with _stage(f"train[{architecture.value}/{variant}]"):
                spec = config.model_spec(architecture)
                _, predicted, actual, _ = train_and_eval(
                    variant_series[variant], lag_count, spec,
                    config.train_frac, eval_targets,
                )
                rep = metrics.report(actual, predicted)
                rows.append({
                    "model": architecture.value,
                    "variant": variant,
                    "rmse": rep.rmse,
                    "mae": rep.mae,
                    "mape": rep.mape,
                    "accuracy": rep.accuracy,
                })

    for row in rows:
        if row["variant"] == "baseline":
            row["error_reduction_pct"] = None
            continue
        base = next(
            r for r in rows
            if r["model"] == row["model"] and r["variant"] == "baseline"
        )
        row["error_reduction_pct"] = metrics.error_reduction(base["mape"], row["mape"])

    with open(out / "comparison.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["model", "variant", "rmse", "mae", "mape", "accuracy", "error_reduction_pct"]
        )
        for row in rows:
            reduction = row["error_reduction_pct"]
            writer.writerow([
                row["model"], row["variant"], repr(row["rmse"]), repr(row["mae"]),
                repr(row["mape"]), repr(row["accuracy"]),
                "" if reduction is None else repr(reduction),
            ])
    _write_json(out / "comparison.json", {
        "lag_count": lag_count,
        "seed": config.seed,
        "scored_against": "clean_reference" if clean_reference is not None else "processed_series",
        "units": {"rmse": "bps", "mae": "bps", "mape": "percent"},
        "rows": rows,
    })
    plots.plot_variant_mape(out / "comparison_mape.png", rows)
    plots.plot_error_reduction(out / "error_reduction.png", rows)
    write_manifest(out)
    return rows
