"""Traffic volume forecasting toolkit.

Pipeline stages: counter ingestion -> forward fill -> EMD denoising ->
empirical-rule outlier detection with KNN mitigation -> ARIMA/AIC lag
selection -> recurrent sequence models -> evaluation and reporting.
"""

from .emd import DenoiseResult, EmdResult, SiftConfig, decompose, denoise, snr_db
from .lagsel import ArimaFit, ArimaOrder, fit_arima, grid_search, select_lag_count
from .metrics import MetricReport, error_reduction, mae, mape, report, rmse
from .outlier import EmpiricalBounds, MitigationMode, OutlierReport, detect, mitigate, optimize_k
from .pipeline import PipelineConfig, compare_variants, load_config, run_pipeline
from .seqmodels import Architecture, FittedModel, ModelSpec, make_windows, predict, split, train
from .series import CounterRecord, TrafficSeries, acf, forward_fill, ingest_counters, minmax_normalize
from .synth import SynthSpec, generate

__version__ = "0.1.0"

__all__ = [
    "Architecture",
    "ArimaFit",
    "ArimaOrder",
    "CounterRecord",
    "DenoiseResult",
    "EmdResult",
    "EmpiricalBounds",
    "FittedModel",
    "MetricReport",
    "MitigationMode",
    "ModelSpec",
    "OutlierReport",
    "PipelineConfig",
    "SiftConfig",
    "SynthSpec",
    "TrafficSeries",
    "acf",
    "compare_variants",
    "decompose",
    "denoise",
    "detect",
    "error_reduction",
    "fit_arima",
    "forward_fill",
    "generate",
    "grid_search",
    "ingest_counters",
    "load_config",
    "mae",
    "make_windows",
    "mape",
    "minmax_normalize",
    "mitigate",
    "optimize_k",
    "predict",
    "report",
    "rmse",
    "run_pipeline",
    "select_lag_count",
    "snr_db",
    "split",
    "train",
]
