"""Command-line interface.

Subcommands mirror the pipeline stages so each step can run standalone:
``synth``, ``ingest``, ``decompose``, ``outliers``, ``select-lags``,
``train``, ``evaluate``, plus the orchestrated ``pipeline`` and
``compare``. Exit codes: 0 success, 2 configuration error, 3 data error,
4 training divergence.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import emd, lagsel, metrics, outlier, pipeline, plots, seqmodels, synth
from .errors import ConfigError, TrafficastError, TrainingDiverged
from .outlier import MitigationMode
from .pipeline import PipelineConfig, StageFailure, load_config
from .seqmodels import Architecture, ModelSpec
from .series import (
    acf,
    forward_fill,
    ingest_counters,
    read_bps_csv,
    read_counter_csv,
    write_acf_csv,
    write_series_csv,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DIVERGED = 4


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_series(path, fmt: str, interval: int, divide: bool = True):
    if fmt == "counter":
        return ingest_counters(read_counter_csv(path), interval, divide)
    return read_bps_csv(path, interval)


def _add_input_args(p, default_format="bps"):
    p.add_argument("--input", required=True, help="input series CSV")
    p.add_argument("--format", choices=["bps", "counter"], default=default_format,
                   help="input CSV schema (default: %(default)s)")
    p.add_argument("--interval", type=int, default=300,
                   help="sampling interval in seconds (default: %(default)s)")


def cmd_synth(args) -> int:
    out = _out_dir(args)
    spec = synth.SynthSpec(
        n=args.n, interval=args.interval, base_level=args.base_level,
        daily_amplitude=args.daily_amplitude, noise_sigma=args.noise_sigma,
        spike_count=args.spike_count, spike_magnitude=args.spike_magnitude,
        seed=args.seed,
    )
    result = synth.generate(spec)
    write_series_csv(out / "series.csv", result.noisy)
    with open(out / "ground_truth.json", "w") as fh:
        json.dump({
            "spec": {
                "n": spec.n, "interval": spec.interval,
                "base_level": spec.base_level,
                "daily_amplitude": spec.daily_amplitude,
                "weekly_amplitude": spec.weekly_amplitude,
                "noise_sigma": spec.noise_sigma,
                "spike_count": spec.spike_count,
                "spike_magnitude": spec.spike_magnitude,
                "seed": spec.seed,
            },
            "clean": [float(v) for v in result.clean.values],
            "spike_indices": [int(i) for i in result.spike_indices],
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    write_series_csv(out / "clean.csv", result.clean)
    plots.plot_series_overlay(
        out / "synth.png", result.noisy.timestamps,
        {"noisy": result.noisy.values, "clean": result.clean.values},
        "Synthetic traffic",
    )
    print(f"wrote {out / 'series.csv'} ({spec.n} samples, "
          f"{result.spike_indices.size} spikes)")
    return EXIT_OK


def cmd_ingest(args) -> int:
    out = _out_dir(args)
    s = _load_series(args.input, args.format, args.interval,
                     not args.no_interval_divide)
    filled = forward_fill(s)
    write_series_csv(out / "series.csv", filled)
    if args.acf_lags:
        correlations = acf(filled, min(args.acf_lags, len(filled) - 1))
        write_acf_csv(out / "acf.csv", correlations)
        plots.plot_acf(out / "acf.png", correlations)
    print(f"wrote {out / 'series.csv'} ({len(filled)} samples)")
    return EXIT_OK


def cmd_decompose(args) -> int:
    out = _out_dir(args)
    s = forward_fill(_load_series(args.input, args.format, args.interval))
    result = emd.decompose(s.values)
    denoised = s.values - result.avg_imf
    pipeline.write_decomposition_csv(
        out / "decomposition.csv", s.timestamps, s.values, result, denoised
    )
    plots.plot_decomposition(
        out / "decomposition.png", s.timestamps, s.values,
        [result.imfs[i] for i in range(result.n_imfs)], result.residue,
    )
    plots.plot_series_overlay(
        out / "denoised.png", s.timestamps,
        {"original": s.values, "denoised": denoised, "noise": result.avg_imf},
        "EMD denoising",
    )
    print(f"wrote {out / 'decomposition.csv'} ({result.n_imfs} IMFs)")
    return EXIT_OK


def cmd_outliers(args) -> int:
    out = _out_dir(args)
    s = forward_fill(_load_series(args.input, args.format, args.interval))
    report = outlier.analyze(
        s, (args.k_min, args.k_max), args.window, MitigationMode(args.mode)
    )
    pipeline.write_outlier_report(out / "outlier_report.json", report)
    write_series_csv(out / "mitigated.csv", report.mitigated)
    plots.plot_outliers(
        out / "outliers.png", s.timestamps, s.values, report.flagged,
        report.bounds.upper, report.bounds.lower, report.bounds.mean,
    )
    plots.plot_k_rmse(out / "k_rmse.png", report.k_rmse_table, report.best_k)
    print(f"flagged {report.flagged.size} outliers, best K = {report.best_k}")
    return EXIT_OK


def cmd_select_lags(args) -> int:
    out = _out_dir(args)
    s = forward_fill(_load_series(args.input, args.format, args.interval))
    ranked = lagsel.grid_search(
        s.values, (args.p_min, args.p_max), (args.q_min, args.q_max), args.d
    )
    pipeline.write_lag_ranking_csv(out / "lag_ranking.csv", ranked)
    lag_count = lagsel.select_lag_count(ranked)
    print(f"selected {lag_count} lagged features "
          f"(best order {ranked[0].order.p},{ranked[0].order.d},{ranked[0].order.q})")
    return EXIT_OK


def _model_spec_from_args(args) -> ModelSpec:
    return ModelSpec(
        architecture=Architecture(args.arch),
        hidden_size=args.hidden_size,
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        seed=args.seed,
    )


def cmd_train(args) -> int:
    out = _out_dir(args)
    s = forward_fill(_load_series(args.input, args.format, args.interval))
    spec = _model_spec_from_args(args)
    model, predicted, actual, positions = pipeline.train_and_eval(
        s, args.lags, spec, args.train_frac
    )
    seqmodels.save_model(out / "model.ckpt", model)
    rep = metrics.report(actual, predicted)
    with open(out / "run_report.json", "w") as fh:
        json.dump({
            "architecture": spec.architecture.value,
            "hidden_size": spec.hidden_size,
            "epochs": spec.epochs,
            "batch_size": spec.batch_size,
            "learning_rate": spec.learning_rate,
            "seed": spec.seed,
            "lag_count": args.lags,
            "train_frac": args.train_frac,
            "final_train_loss": model.loss_history[-1],
            "units": {"rmse": "bps", "mae": "bps", "mape": "percent"},
            "metrics": {"rmse": rep.rmse, "mae": rep.mae, "mape": rep.mape,
                        "accuracy": rep.accuracy, "n": rep.n},
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"trained {spec.architecture.value}: test MAPE {rep.mape:.3f}% "
          f"-> {out / 'model.ckpt'}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    model = seqmodels.load_model(args.model)
    s = forward_fill(_load_series(args.input, args.format, args.interval))
    ds = seqmodels.make_windows(s, model.p)
    train_ds, test_ds = seqmodels.split(ds, args.train_frac)
    lo = float(min(train_ds.inputs.min(), train_ds.targets.min()))
    hi = float(max(train_ds.inputs.max(), train_ds.targets.max()))
    if hi == lo:
        hi = lo + 1.0
    test_n = seqmodels.WindowedDataset(
        (test_ds.inputs - lo) / (hi - lo), (test_ds.targets - lo) / (hi - lo), model.p
    )
    predicted = seqmodels.predict(model, test_n) * (hi - lo) + lo
    rep = metrics.report(test_ds.targets, predicted)
    positions = model.p + train_ds.samples + np.arange(test_ds.samples)
    timestamps = s.timestamps[positions]
    pipeline.write_predictions_csv(
        out / "predictions.csv", timestamps, test_ds.targets, predicted
    )
    plots.plot_predictions(
        out / "predictions.png", timestamps, test_ds.targets, predicted,
        f"Actual vs predicted ({model.spec.architecture.value})",
    )
    with open(out / "metrics.json", "w") as fh:
        json.dump({
            "units": {"rmse": "bps", "mae": "bps", "mape": "percent"},
            "rmse": rep.rmse, "mae": rep.mae, "mape": rep.mape,
            "accuracy": rep.accuracy, "n": rep.n,
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"MAPE {rep.mape:.3f}%  RMSE {rep.rmse:.3e} bps  ({rep.n} points)")
    return EXIT_OK


_PIPELINE_OVERRIDE_KEYS = (
    "input_path", "output_dir", "input_format", "interval", "denoise",
    "outliers", "mitigation_mode", "k_min", "k_max", "knn_window", "lags",
    "p_min", "p_max", "q_min", "q_max", "d", "architecture", "hidden_size",
    "epochs", "batch_size", "learning_rate", "train_frac", "seed",
)


def _pipeline_config(args) -> PipelineConfig:
    overrides = {}
    for key in _PIPELINE_OVERRIDE_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            overrides[key] = value
    return load_config(args.config, overrides)


def cmd_pipeline(args) -> int:
    config = _pipeline_config(args)
    artifacts = pipeline.run_pipeline(config)
    rep = artifacts.report
    print(f"pipeline complete: lags={artifacts.lag_count} best_k={artifacts.best_k} "
          f"MAPE={rep.mape:.3f}% -> {artifacts.out_dir / 'manifest.json'}")
    return EXIT_OK


def cmd_compare(args) -> int:
    config = _pipeline_config(args)
    architectures = None
    if args.architectures:
        architectures = [Architecture(a.strip()) for a in args.architectures.split(",")]
    clean = None
    if args.ground_truth:
        clean = read_bps_csv(args.ground_truth, config.interval)
    rows = pipeline.compare_variants(config, architectures, clean_reference=clean)
    for row in rows:
        reduction = row["error_reduction_pct"]
        suffix = "" if reduction is None else f"  ({reduction:+.1f}% vs baseline)"
        print(f"{row['model']:>18s} {row['variant']:<8s} MAPE {row['mape']:7.3f}%{suffix}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trafficast",
        description="Traffic volume forecasting: denoise, mitigate outliers, "
                    "select lags, train sequence models, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic traffic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=8352)
    p.add_argument("--interval", type=int, default=300)
    p.add_argument("--base-level", type=float, default=1.0e10)
    p.add_argument("--daily-amplitude", type=float, default=2.0e9)
    p.add_argument("--noise-sigma", type=float, default=2.0e9)
    p.add_argument("--spike-count", type=int, default=43)
    p.add_argument("--spike-magnitude", type=float, default=6.0)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="convert counters/bps CSV to a filled series")
    _add_input_args(p, default_format="counter")
    p.add_argument("--no-interval-divide", action="store_true",
                   help="keep the literal bits-per-interval product instead of "
                        "dividing by the interval length")
    p.add_argument("--acf-lags", type=int, default=0,
                   help="also write the ACF for this many lags")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("decompose", help="EMD decomposition and denoising CSV")
    _add_input_args(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("outliers", help="empirical-rule detection + KNN mitigation")
    _add_input_args(p)
    p.add_argument("--k-min", type=int, default=2)
    p.add_argument("--k-max", type=int, default=24)
    p.add_argument("--window", type=int, default=13)
    p.add_argument("--mode", choices=[m.value for m in MitigationMode],
                   default=MitigationMode.NEIGHBOR.value)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_outliers)

    p = sub.add_parser("select-lags", help="ARIMA grid search + AIC ranking")
    _add_input_args(p)
    p.add_argument("--p-min", type=int, default=2)
    p.add_argument("--p-max", type=int, default=24)
    p.add_argument("--q-min", type=int, default=2)
    p.add_argument("--q-max", type=int, default=24)
    p.add_argument("-d", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_select_lags)

    p = sub.add_parser("train", help="train one model on a prepared series")
    _add_input_args(p)
    p.add_argument("--arch", choices=[a.value for a in Architecture],
                   default=Architecture.LSTM.value)
    p.add_argument("--lags", type=int, default=13)
    p.add_argument("--hidden-size", type=int, default=64)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--learning-rate", type=float, default=1e-3)
    p.add_argument("--train-frac", type=float, default=0.70)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on a series")
    _add_input_args(p)
    p.add_argument("--model", required=True, help="checkpoint path")
    p.add_argument("--train-frac", type=float, default=0.70)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    for name, func, help_text in (
        ("pipeline", cmd_pipeline, "run every stage end to end"),
        ("compare", cmd_compare, "run baseline/knn/knn_emd variants"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", default=None, help="INI-style key=value file")
        p.add_argument("--input", dest="input_path", help="input series CSV")
        p.add_argument("--out", dest="output_dir", help="artifact directory")
        p.add_argument("--format", dest="input_format", choices=["bps", "counter"],
                       help="input CSV schema")
        p.add_argument("--interval", type=int, help="sampling interval (s)")
        p.add_argument("--no-denoise", dest="denoise", action="store_false",
                       default=None, help="skip the EMD denoising stage")
        p.add_argument("--no-outliers", dest="outliers", action="store_false",
                       default=None, help="skip outlier detection/mitigation")
        p.add_argument("--mitigation-mode", dest="mitigation_mode",
                       choices=[m.value for m in MitigationMode],
                       help="outlier replacement rule")
        p.add_argument("--k-min", dest="k_min", type=int, help="smallest K tried")
        p.add_argument("--k-max", dest="k_max", type=int, help="largest K tried")
        p.add_argument("--knn-window", dest="knn_window", type=int,
                       help="lagged-window width for KNN features")
        p.add_argument("--lags", type=int,
                       help="fixed lag count (omit to run the ARIMA grid)")
        p.add_argument("--p-min", dest="p_min", type=int, help="AR grid lower bound")
        p.add_argument("--p-max", dest="p_max", type=int, help="AR grid upper bound")
        p.add_argument("--q-min", dest="q_min", type=int, help="MA grid lower bound")
        p.add_argument("--q-max", dest="q_max", type=int, help="MA grid upper bound")
        p.add_argument("-d", type=int, help="differencing order")
        p.add_argument("--arch", dest="architecture",
                       choices=[a.value for a in Architecture],
                       help="model architecture")
        p.add_argument("--hidden-size", dest="hidden_size", type=int,
                       help="recurrent state width")
        p.add_argument("--epochs", type=int, help="training epochs")
        p.add_argument("--batch-size", dest="batch_size", type=int,
                       help="minibatch size")
        p.add_argument("--learning-rate", dest="learning_rate", type=float,
                       help="Adam step size")
        p.add_argument("--train-frac", dest="train_frac", type=float,
                       help="chronological train fraction")
        p.add_argument("--seed", type=int,
                       help=f"RNG seed (env {pipeline.SEED_ENV_VAR} overrides)")
        if name == "compare":
            p.add_argument("--architectures",
                           help="comma-separated subset (default: all five)")
            p.add_argument("--ground-truth",
                           help="clean-series CSV for scoring against a known "
                                "reference")
        p.set_defaults(func=func)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        if isinstance(exc.cause, TrainingDiverged):
            return EXIT_DIVERGED
        if isinstance(exc.cause, ConfigError):
            return EXIT_CONFIG
        return EXIT_DATA
    except TrainingDiverged as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (TrafficastError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
