"""Figure rendering for pipeline reports.

Every report path writes PNG files next to its CSV artifacts. Rendering is
deterministic: fixed figure sizes, no timestamps in metadata, stable
ordering of series.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

_FIGSIZE = (10, 4)
_DPI = 110
_PNG_METADATA = {"Software": "trafficast"}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata=_PNG_METADATA)
    plt.close(fig)


def plot_series_overlay(path, timestamps, layers: dict[str, np.ndarray], title: str,
                        ylabel: str = "traffic (bps)") -> None:
    """Overlay of named series on one time axis (original vs denoised etc.)."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for label, values in layers.items():
        ax.plot(timestamps, values, label=label, linewidth=0.8)
    ax.set_xlabel("time (s)")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, path)


def plot_decomposition(path, timestamps, original, imfs, residue) -> None:
    """Stacked panels: signal, each IMF, residue."""
    rows = 2 + len(imfs)
    fig, axes = plt.subplots(rows, 1, figsize=(10, 1.4 * rows), sharex=True)
    axes[0].plot(timestamps, original, linewidth=0.7)
    axes[0].set_ylabel("signal")
    for i, imf in enumerate(imfs):
        axes[1 + i].plot(timestamps, imf, linewidth=0.7)
        axes[1 + i].set_ylabel(f"imf {i + 1}")
    axes[-1].plot(timestamps, residue, linewidth=0.7, color="tab:red")
    axes[-1].set_ylabel("residue")
    axes[-1].set_xlabel("time (s)")
    _save(fig, path)


def plot_outliers(path, timestamps, values, flagged, upper, lower, mean) -> None:
    """Series with empirical-rule bounds and flagged points highlighted."""
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(timestamps, values, linewidth=0.7, label="traffic")
    ax.axhline(mean, color="tab:green", linewidth=0.8, label="mean")
    ax.axhline(upper, color="tab:red", linewidth=0.8, linestyle="--", label="mean ± 3σ")
    ax.axhline(lower, color="tab:red", linewidth=0.8, linestyle="--")
    flagged = np.asarray(flagged, dtype=int)
    if flagged.size:
        ax.scatter(np.asarray(timestamps)[flagged], np.asarray(values)[flagged],
                   color="tab:red", s=14, zorder=3, label="outliers")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("traffic (bps)")
    ax.set_title("Empirical-rule outliers")
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, path)


def plot_acf(path, correlations) -> None:
    corr = np.asarray(correlations)
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.bar(np.arange(corr.size), corr, width=0.6)
    ax.axhline(0.0, color="black", linewidth=0.6)
    ax.set_xlabel("lag")
    ax.set_ylabel("autocorrelation")
    ax.set_title("Sample ACF")
    _save(fig, path)


def plot_k_rmse(path, table: dict[int, float], best_k: int) -> None:
    ks = sorted(table)
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(ks, [table[k] for k in ks], marker="o", markersize=3)
    ax.axvline(best_k, color="tab:red", linewidth=0.8, linestyle="--",
               label=f"best K = {best_k}")
    ax.set_xlabel("K")
    ax.set_ylabel("next-step RMSE (bps)")
    ax.set_title("KNN regressor error by neighbor count")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_predictions(path, timestamps, actual, predicted, title: str) -> None:
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    ax.plot(timestamps, actual, linewidth=0.8, label="actual")
    ax.plot(timestamps, predicted, linewidth=0.8, label="predicted")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("traffic (bps)")
    ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, path)


def plot_variant_mape(path, rows: list[dict]) -> None:
    """Grouped bars of MAPE per architecture and variant."""
    models = sorted({r["model"] for r in rows})
    variants = ["baseline", "knn", "knn_emd"]
    present = [v for v in variants if any(r["variant"] == v for r in rows)]
    width = 0.8 / max(1, len(present))
    x = np.arange(len(models))
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for j, variant in enumerate(present):
        vals = []
        for m in models:
            match = [r for r in rows if r["model"] == m and r["variant"] == variant]
            vals.append(match[0]["mape"] if match else np.nan)
        ax.bar(x + j * width, vals, width, label=variant)
    ax.set_xticks(x + width * (len(present) - 1) / 2)
    ax.set_xticklabels(models, rotation=20, fontsize=8)
    ax.set_ylabel("MAPE (%)")
    ax.set_title("Prediction error by architecture and preprocessing variant")
    ax.legend(fontsize=8)
    _save(fig, path)


def plot_error_reduction(path, rows: list[dict]) -> None:
    """Error reduction (%) vs the baseline variant, per architecture."""
    reductions = [r for r in rows if r["variant"] != "baseline"
                  and r.get("error_reduction_pct") is not None]
    if not reductions:
        return
    models = sorted({r["model"] for r in reductions})
    variants = sorted({r["variant"] for r in reductions})
    width = 0.8 / len(variants)
    x = np.arange(len(models))
    fig, ax = plt.subplots(figsize=_FIGSIZE)
    for j, variant in enumerate(variants):
        vals = []
        for m in models:
            match = [r for r in reductions if r["model"] == m and r["variant"] == variant]
            vals.append(match[0]["error_reduction_pct"] if match else np.nan)
        ax.bar(x + j * width, vals, width, label=variant)
    ax.axhline(0.0, color="black", linewidth=0.6)
    ax.set_xticks(x + width * (len(variants) - 1) / 2)
    ax.set_xticklabels(models, rotation=20, fontsize=8)
    ax.set_ylabel("MAPE reduction vs baseline (%)")
    ax.set_title("Error reduction from outlier and noise handling")
    ax.legend(fontsize=8)
    _save(fig, path)
