import csv
import json

import numpy as np
import pytest

from trafficast import cli, pipeline, synth
from trafficast.errors import ConfigError
from trafficast.pipeline import PipelineConfig, load_config
from trafficast.series import write_series_csv


@pytest.fixture
def small_corpus(tmp_path):
    """A compact synthetic corpus on disk: noisy series + clean reference."""
    spec = synth.SynthSpec(
        n=700, base_level=1.0e10, daily_amplitude=2.0e9, noise_sigma=1.5e9,
        spike_count=8, spike_magnitude=8.0, seed=11,
    )
    result = synth.generate(spec)
    noisy_path = tmp_path / "series.csv"
    clean_path = tmp_path / "clean.csv"
    write_series_csv(noisy_path, result.noisy)
    write_series_csv(clean_path, result.clean)
    return noisy_path, clean_path, result


FAST = dict(
    lags=6, epochs=2, hidden_size=8, knn_window=6, k_max=8,
    architecture="rnn",
)


def fast_config(input_path, out_dir, **extra):
    overrides = {"input_path": str(input_path), "output_dir": str(out_dir)}
    overrides.update({k: v for k, v in FAST.items()})
    overrides.update(extra)
    return load_config(None, overrides)


class TestConfig:
    def test_ini_file_with_overrides(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "input = data.csv\nseed = 7\nepochs = 9\ndenoise = false\n"
            "mitigation_mode = preceding\n".replace("input =", "input_path =")
        )
        config = load_config(cfg, {"epochs": 3})
        assert config.input_path == "data.csv"
        assert config.seed == 7
        assert config.epochs == 3  # override wins over file
        assert config.denoise is False
        assert config.mitigation_mode.value == "preceding"

    def test_sectioned_file_accepted(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("[trafficast]\nseed = 12\n")
        assert load_config(cfg).seed == 12

    def test_unknown_key_rejected(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("bogus_key = 1\n")
        with pytest.raises(ConfigError):
            load_config(cfg)

    def test_env_seed_overrides(self, tmp_path, monkeypatch):
        monkeypatch.setenv(pipeline.SEED_ENV_VAR, "4321")
        config = load_config(None, {"seed": 5})
        assert config.seed == 4321

    def test_bad_env_seed(self, monkeypatch):
        monkeypatch.setenv(pipeline.SEED_ENV_VAR, "not-a-number")
        with pytest.raises(ConfigError):
            load_config(None)

    def test_invalid_train_frac(self):
        with pytest.raises(ConfigError):
            PipelineConfig(train_frac=1.5)

    def test_invalid_k_range(self):
        with pytest.raises(ConfigError):
            PipelineConfig(k_min=1, k_max=3)


class TestRunPipeline:
    def test_artifacts_and_stage_order(self, small_corpus, tmp_path):
        noisy_path, _, _ = small_corpus
        out = tmp_path / "run"
        config = fast_config(noisy_path, out)
        artifacts = pipeline.run_pipeline(config)
        expected = {
            "filled.csv", "acf.csv", "acf.png", "denoised.csv", "denoised.png",
            "decomposition.csv", "outlier_report.json", "mitigated.csv",
            "outliers.png", "k_rmse.png", "model.ckpt", "predictions.csv",
            "predictions.png", "run_report.json", "manifest.json",
        }
        assert expected.issubset(set(artifacts.files))
        report = json.loads((out / "run_report.json").read_text())
        assert report["metrics"]["mape"] == pytest.approx(artifacts.report.mape)
        assert report["units"]["rmse"] == "bps"

    def test_manifest_byte_identical_across_runs(self, small_corpus, tmp_path):
        noisy_path, _, _ = small_corpus
        a = tmp_path / "a"
        b = tmp_path / "b"
        pipeline.run_pipeline(fast_config(noisy_path, a))
        pipeline.run_pipeline(fast_config(noisy_path, b))
        assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()

    def test_manifest_covers_all_artifacts(self, small_corpus, tmp_path):
        noisy_path, _, _ = small_corpus
        out = tmp_path / "run"
        pipeline.run_pipeline(fast_config(noisy_path, out))
        manifest = json.loads((out / "manifest.json").read_text())
        on_disk = {
            p.relative_to(out).as_posix()
            for p in out.rglob("*") if p.is_file() and p.name != "manifest.json"
        }
        assert set(manifest["artifacts"]) == on_disk

    def test_stages_can_be_disabled(self, small_corpus, tmp_path):
        noisy_path, _, _ = small_corpus
        out = tmp_path / "baseline"
        config = fast_config(noisy_path, out, denoise=False, outliers=False)
        artifacts = pipeline.run_pipeline(config)
        assert artifacts.best_k is None
        assert "denoised.csv" not in artifacts.files
        assert "mitigated.csv" not in artifacts.files

    def test_stage_failure_names_stage(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("timestamp,bps\n0,\n300,2e9\n")  # leading gap
        config = fast_config(bad, tmp_path / "out")
        with pytest.raises(pipeline.StageFailure) as err:
            pipeline.run_pipeline(config)
        assert err.value.stage == "forward_fill"
        # artifacts from earlier stages are retained
        assert not (tmp_path / "out" / "filled.csv").exists()

    def test_arima_lag_selection_stage(self, small_corpus, tmp_path):
        noisy_path, _, _ = small_corpus
        out = tmp_path / "auto"
        config = fast_config(
            noisy_path, out, lags=None, p_min=1, p_max=3, q_min=0, q_max=1, d=1,
        )
        artifacts = pipeline.run_pipeline(config)
        assert 1 <= artifacts.lag_count <= 3
        rows = list(csv.DictReader(open(out / "lag_ranking.csv")))
        assert rows[0]["rank"] == "1"
        aics = [float(r["aic"]) for r in rows if r["converged"] == "true"]
        assert aics == sorted(aics)


class TestCompareVariants:
    def test_three_by_two_table(self, small_corpus, tmp_path):
        noisy_path, clean_path, _ = small_corpus
        out = tmp_path / "cmp"
        config = fast_config(noisy_path, out)
        from trafficast.seqmodels import Architecture
        from trafficast.series import read_bps_csv

        rows = pipeline.compare_variants(
            config, [Architecture.RNN, Architecture.GRU],
            clean_reference=read_bps_csv(clean_path),
        )
        assert len(rows) == 6
        variants = {(r["model"], r["variant"]) for r in rows}
        assert ("rnn", "baseline") in variants and ("gru", "knn_emd") in variants
        for row in rows:
            if row["variant"] == "baseline":
                assert row["error_reduction_pct"] is None
            else:
                base = next(
                    r["mape"] for r in rows
                    if r["model"] == row["model"] and r["variant"] == "baseline"
                )
                expected = 100.0 * (base - row["mape"]) / base
                assert row["error_reduction_pct"] == pytest.approx(expected)
        with open(out / "comparison.csv") as fh:
            header = fh.readline().strip()
        assert header == "model,variant,rmse,mae,mape,accuracy,error_reduction_pct"
        assert (out / "comparison_mape.png").exists()

    def test_identical_runs_identical_metrics(self, small_corpus, tmp_path):
        noisy_path, _, _ = small_corpus
        from trafficast.seqmodels import Architecture

        rows_a = pipeline.compare_variants(
            fast_config(noisy_path, tmp_path / "c1"), [Architecture.RNN]
        )
        rows_b = pipeline.compare_variants(
            fast_config(noisy_path, tmp_path / "c2"), [Architecture.RNN]
        )
        assert rows_a == rows_b


class TestCli:
    def test_synth_then_pipeline_exit_codes(self, tmp_path):
        synth_dir = tmp_path / "synth"
        rc = cli.main([
            "synth", "--out", str(synth_dir), "--n", "650", "--seed", "3",
            "--spike-count", "6", "--spike-magnitude", "8",
        ])
        assert rc == 0
        run_dir = tmp_path / "run"
        rc = cli.main([
            "pipeline", "--input", str(synth_dir / "series.csv"),
            "--out", str(run_dir), "--lags", "6", "--epochs", "1",
            "--hidden-size", "6", "--knn-window", "6", "--k-max", "6",
            "--arch", "rnn",
        ])
        assert rc == 0
        assert (run_dir / "manifest.json").exists()

    def test_missing_input_is_data_error(self, tmp_path):
        rc = cli.main([
            "pipeline", "--input", str(tmp_path / "nope.csv"),
            "--out", str(tmp_path / "o"),
        ])
        assert rc == cli.EXIT_DATA

    def test_divergence_maps_to_exit_four(self, tmp_path, monkeypatch):
        from trafficast.errors import TrainingDiverged

        def explode(config):
            raise pipeline.StageFailure("train", TrainingDiverged("loss became nan"))

        monkeypatch.setattr(pipeline, "run_pipeline", explode)
        rc = cli.main([
            "pipeline", "--input", "whatever.csv", "--out", str(tmp_path / "o"),
        ])
        assert rc == cli.EXIT_DIVERGED

    def test_bad_config_is_config_error(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("nonsense = 1\n")
        rc = cli.main(["pipeline", "--config", str(cfg), "--out", str(tmp_path / "o")])
        assert rc == cli.EXIT_CONFIG

    def test_unknown_flag_rejected(self, capsys):
        with pytest.raises(SystemExit) as err:
            cli.main(["pipeline", "--frobnicate"])
        assert err.value.code == 2

    def test_ingest_counter_mode(self, tmp_path):
        src = tmp_path / "counters.csv"
        rows = ["timestamp,counter"]
        counter = 0
        rng = np.random.default_rng(0)
        for i in range(40):
            counter += 37_500_000_000 + (int(rng.integers(0, 10_000_000)) if i else 0)
            rows.append(f"{i * 300},{counter}")
        src.write_text("\n".join(rows) + "\n")
        out = tmp_path / "ingested"
        rc = cli.main([
            "ingest", "--input", str(src), "--format", "counter",
            "--out", str(out), "--acf-lags", "10",
        ])
        assert rc == 0
        data = list(csv.DictReader(open(out / "series.csv")))
        assert float(data[0]["bps"]) == pytest.approx(1.0e9, rel=1e-3)
        assert (out / "acf.csv").exists()

    def test_ingest_no_interval_divide(self, tmp_path):
        src = tmp_path / "counters.csv"
        src.write_text("timestamp,counter\n0,0\n300,37500000000\n")
        out = tmp_path / "literal"
        rc = cli.main([
            "ingest", "--input", str(src), "--format", "counter",
            "--no-interval-divide", "--out", str(out),
        ])
        assert rc == 0
        data = list(csv.DictReader(open(out / "series.csv")))
        assert float(data[0]["bps"]) == pytest.approx(3.0e11)

    def test_decompose_csv_schema(self, tmp_path, small_corpus):
        noisy_path, _, _ = small_corpus
        out = tmp_path / "emd"
        rc = cli.main(["decompose", "--input", str(noisy_path), "--out", str(out)])
        assert rc == 0
        with open(out / "decomposition.csv") as fh:
            header = fh.readline().strip().split(",")
        assert header[:2] == ["t", "original"]
        assert header[-3:] == ["residue", "avg_imf", "denoised"]
        assert header[2].startswith("imf_")

    def test_outliers_report_schema(self, tmp_path, small_corpus):
        noisy_path, _, result = small_corpus
        out = tmp_path / "outl"
        rc = cli.main([
            "outliers", "--input", str(noisy_path), "--out", str(out),
            "--k-max", "8", "--window", "6",
        ])
        assert rc == 0
        report = json.loads((out / "outlier_report.json").read_text())
        for key in ("mean", "std_dev", "upper", "lower", "flagged_indices",
                    "best_k", "k_rmse"):
            assert key in report
        assert set(report["flagged_indices"]) >= set(
            int(i) for i in result.spike_indices
        ) - set()  # spikes at 8 sigma all detected on this corpus

    def test_train_evaluate_round_trip(self, tmp_path, small_corpus):
        noisy_path, _, _ = small_corpus
        train_dir = tmp_path / "t"
        rc = cli.main([
            "train", "--input", str(noisy_path), "--out", str(train_dir),
            "--arch", "gru", "--lags", "5", "--epochs", "1",
            "--hidden-size", "6",
        ])
        assert rc == 0
        eval_dir = tmp_path / "e"
        rc = cli.main([
            "evaluate", "--input", str(noisy_path),
            "--model", str(train_dir / "model.ckpt"), "--out", str(eval_dir),
        ])
        assert rc == 0
        train_metrics = json.loads((train_dir / "run_report.json").read_text())
        eval_metrics = json.loads((eval_dir / "metrics.json").read_text())
        assert eval_metrics["mape"] == pytest.approx(
            train_metrics["metrics"]["mape"]
        )

    def test_compare_with_ground_truth(self, tmp_path, small_corpus):
        noisy_path, clean_path, _ = small_corpus
        out = tmp_path / "cmp"
        rc = cli.main([
            "compare", "--input", str(noisy_path), "--out", str(out),
            "--architectures", "rnn", "--lags", "5", "--epochs", "1",
            "--hidden-size", "6", "--knn-window", "6", "--k-max", "6",
            "--ground-truth", str(clean_path),
        ])
        assert rc == 0
        rows = list(csv.DictReader(open(out / "comparison.csv")))
        assert [r["variant"] for r in rows] == ["baseline", "knn", "knn_emd"]
        meta = json.loads((out / "comparison.json").read_text())
        assert meta["scored_against"] == "clean_reference"
