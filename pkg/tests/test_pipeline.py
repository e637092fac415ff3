"""
Tests for the study pipeline.
"""
import json
import os
import tempfile

import numpy as np
import pandas as pd
import pytest

from uqsurro.core.config import CONFIG_DIR, config_from_dict, load_config
from uqsurro.core.models import LayerSpec
from uqsurro.core.pipeline import MANIFEST, PREDICTIONS, UQ_SUMMARY, Pipeline
from uqsurro.exceptions import CompatibilityError, ConfigurationError, StorageError, TrainingDivergenceError
from uqsurro.nn.net import init_mlp, save_model
from uqsurro.uq.metrics import REPORT_COLUMNS


GAP_DE = {
    "name": "gap_de",
    "problem": "synth_gap",
    "method": "de",
    "seed": 5,
    "design": {"samples": 40},
    "architecture": [{"width": 8, "activation": "tanh"}, {"width": 2, "activation": "linear"}],
    "training": {"learning_rate": 0.01, "epochs": 5, "batch_size": 10, "split": [0.7, 0.1, 0.2]},
    "method_params": {"M": 2},
}

GAP_MCD = {
    "name": "gap_mcd",
    "problem": "synth_gap",
    "method": "mcd",
    "seed": 5,
    "design": {"samples": 40},
    "architecture": [{"width": 8, "activation": "relu"}, {"width": 1, "activation": "linear"}],
    "training": {"learning_rate": 0.01, "epochs": 5, "batch_size": 10, "split": [0.7, 0.1, 0.2]},
    "method_params": {"p_drop": 0.2, "T": 10},
}

FGR_MCD = {
    "name": "fgr_mcd",
    "problem": "synth_fgr",
    "method": "mcd",
    "seed": 3,
    "design": {"samples": 30, "iterations": 5, "time_points": 20},
    "architecture": [{"width": 8, "activation": "relu"}, {"width": 1, "activation": "linear"}],
    "training": {"learning_rate": 0.01, "epochs": 3, "batch_size": 10, "split": [0.7, 0.1, 0.2]},
    "method_params": {"p_drop": 0.2, "T": 10},
    "pca": {"enabled": True, "threshold": 0.99, "n_samples": 50},
}


@pytest.fixture
def temp_dir():
    """Create a temporary directory for run outputs."""
    with tempfile.TemporaryDirectory() as temp_dir:
        yield temp_dir


def pipeline_for(raw, run_dir, force=False):
    return Pipeline(config_from_dict(raw, output_dir=run_dir), force=force)


def read_bytes(path):
    with open(path, "rb") as f:
        return f.read()


def reduced_void_config(method):
    """Shipped void study with its overrides, on a smaller design and fewer epochs."""
    with open(os.path.join(CONFIG_DIR, f"trace_{method}.json")) as f:
        raw = json.load(f)
    raw["design"] = {"bc_cases": 20, "samples": 10, "iterations": 10}
    raw["training"]["epochs"] = 200
    return raw


class TestGapRuns:
    """Test cases for full runs on the one-dimensional gap problem."""

    def test_ensemble_run(self, temp_dir):
        """Test every stage writes its artifacts and the manifest records them."""
        run_dir = os.path.join(temp_dir, "de")
        pipeline = pipeline_for(GAP_DE, run_dir)
        summary = pipeline.run()

        assert [entry["response"] for entry in summary] == ["y"]
        for relative in ("data/dataset.csv", "data/design.csv", "models/y/manifest.json",
                         "models/y/member_0.json", "models/y/member_1.json", "models/y/scaler.json",
                         "models/y/train_log.csv", PREDICTIONS, UQ_SUMMARY, "uq/gap_profile.csv",
                         "report/error_bars.csv", "report/summary.csv", "logs/uqsurro.log"):
            assert os.path.isfile(os.path.join(run_dir, relative)), relative

        manifest = pipeline.manifest()
        assert manifest["name"] == "gap_de"
        assert list(manifest["stages"]) == ["generate", "train", "uq", "report"]
        assert manifest["stages"]["train"]["partition"] == {"train": 28, "val": 4, "test": 8}
        assert "report/summary.csv" in manifest["stages"]["report"]["digests"]

    def test_prediction_table(self, temp_dir):
        """Test one row per test case with ordered intervals."""
        run_dir = os.path.join(temp_dir, "de")
        pipeline_for(GAP_DE, run_dir).run()
        table = pd.read_csv(os.path.join(run_dir, PREDICTIONS))

        assert list(table.columns) == REPORT_COLUMNS
        assert len(table) == 8
        assert (table["method"] == "de").all()
        assert (table["std"] > 0).all()
        assert (table["ci95_lo"] <= table["ci68_lo"]).all()
        assert (table["ci68_hi"] <= table["ci95_hi"]).all()

    def test_summary_document(self, temp_dir):
        """Test the summary names the method and carries the gap profile."""
        run_dir = os.path.join(temp_dir, "mcd")
        pipeline = pipeline_for(GAP_MCD, run_dir)
        pipeline.run()
        document = pipeline.storage.read_json(UQ_SUMMARY)

        assert document["method"] == "mcd"
        assert document["T"] == 10
        assert document["M"] is None
        assert document["test_cases"] == 8
        assert set(document["gap"]) == {"support_mean_std", "gap_mean_std"}
        assert document["gap"]["gap_mean_std"] > 0

    def test_same_seed_same_report(self, temp_dir):
        """Test two runs with the same seed write byte-identical tables."""
        first, second = os.path.join(temp_dir, "a"), os.path.join(temp_dir, "b")
        pipeline_for(GAP_DE, first).run()
        pipeline_for(GAP_DE, second).run()

        for relative in (PREDICTIONS, "report/error_bars.csv", "report/summary.csv", "data/dataset.csv"):
            assert read_bytes(os.path.join(first, relative)) == read_bytes(os.path.join(second, relative))

    def test_different_seed_different_data(self, temp_dir):
        """Test the master seed reaches the data generator."""
        first, second = os.path.join(temp_dir, "a"), os.path.join(temp_dir, "b")
        pipeline_for(GAP_DE, first).generate()
        pipeline_for(dict(GAP_DE, seed=6), second).generate()

        assert read_bytes(os.path.join(first, "data/dataset.csv")) != \
            read_bytes(os.path.join(second, "data/dataset.csv"))

    def test_stages_rerun_alone(self, temp_dir):
        """Test re-running uq on its own reproduces its table."""
        run_dir = os.path.join(temp_dir, "de")
        pipeline_for(GAP_DE, run_dir).run()
        before = read_bytes(os.path.join(run_dir, PREDICTIONS))
        pipeline_for(GAP_DE, run_dir).uq()

        assert read_bytes(os.path.join(run_dir, PREDICTIONS)) == before

    def test_comparison_table(self, temp_dir):
        """Test the report compares several runs."""
        de_dir, mcd_dir = os.path.join(temp_dir, "de"), os.path.join(temp_dir, "mcd")
        pipeline_for(GAP_MCD, mcd_dir).run()
        pipeline_for(GAP_DE, de_dir).run(compare=[mcd_dir])
        comparison = pd.read_csv(os.path.join(de_dir, "report/comparison.csv"))

        assert comparison["run"].tolist() == ["gap_de", "gap_mcd"]
        assert comparison["method"].tolist() == ["de", "mcd"]


class TestCurveRun:
    """Test cases for a curve-valued run with PCA."""

    def test_curve_run(self, temp_dir):
        """Test PC scores are trained and bands are propagated back to curves."""
        run_dir = os.path.join(temp_dir, "fgr")
        pipeline = pipeline_for(FGR_MCD, run_dir)
        summary = pipeline.run()
        manifest = pipeline.manifest()

        p_star = manifest["pca"]["p_star"]
        assert manifest["pca"]["p"] == 20
        assert manifest["pca"]["explained_fraction"] >= 0.99
        assert manifest["responses"] == [f"pc_{k + 1}" for k in range(p_star)]
        assert [entry["response"] for entry in summary] == manifest["responses"]

        curves = pd.read_csv(os.path.join(run_dir, "uq/curves.csv"))
        assert len(curves) == 6 * 20
        assert (curves["std"] >= 0).all()
        assert (curves["closed_std"] >= 0).all()
        for relative in ("data/time_grid.csv", "pca/pca.json", "pca/variance.csv", "pca/scores.csv",
                         "report/variance_decay.csv", "report/curve_bands.csv"):
            assert os.path.isfile(os.path.join(run_dir, relative)), relative

    def test_pca_disabled(self, temp_dir):
        """Test the PCA stage refuses a run without PCA."""
        pipeline = pipeline_for(GAP_DE, os.path.join(temp_dir, "de"))
        pipeline.generate()
        with pytest.raises(ConfigurationError) as info:
            pipeline.fit_pca()
        assert info.value.key == "pca.enabled"


class TestRunDirectory:
    """Test cases for run directory handling."""

    def test_refuse_non_empty(self, temp_dir):
        """Test generate refuses a used run directory unless forced."""
        run_dir = os.path.join(temp_dir, "de")
        pipeline_for(GAP_DE, run_dir).generate()

        with pytest.raises(StorageError):
            pipeline_for(GAP_DE, run_dir).generate()
        manifest = pipeline_for(GAP_DE, run_dir, force=True).generate()
        assert list(manifest["stages"]) == ["generate"]

    def test_force_clears_stale_stages(self, temp_dir):
        """Test forcing removes artifacts of earlier stages."""
        run_dir = os.path.join(temp_dir, "de")
        pipeline_for(GAP_DE, run_dir).run()
        pipeline_for(GAP_DE, run_dir, force=True).generate()

        assert not os.path.exists(os.path.join(run_dir, PREDICTIONS))
        assert not os.path.exists(os.path.join(run_dir, "models"))

    def test_missing_manifest(self, temp_dir):
        """Test stages after generate need the manifest."""
        with pytest.raises(StorageError) as info:
            pipeline_for(GAP_DE, os.path.join(temp_dir, "empty")).train()
        assert MANIFEST in str(info.value)

    def test_report_lists_missing_artifacts(self, temp_dir):
        """Test report on an incomplete run names what is missing."""
        run_dir = os.path.join(temp_dir, "de")
        pipeline = pipeline_for(GAP_DE, run_dir)
        pipeline.generate()
        with pytest.raises(StorageError) as info:
            pipeline.report()
        assert PREDICTIONS in str(info.value)
        assert UQ_SUMMARY in str(info.value)

    def test_incompatible_model(self, temp_dir):
        """Test uq rejects a model built for a different input dimension."""
        run_dir = os.path.join(temp_dir, "mcd")
        pipeline = pipeline_for(GAP_MCD, run_dir)
        pipeline.generate()
        pipeline.train()
        foreign = init_mlp(3, [LayerSpec(8, "relu"), LayerSpec(1, "linear")], 0)
        save_model(pipeline.storage, "models/y/model.json", foreign)

        with pytest.raises(CompatibilityError) as info:
            pipeline.uq()
        assert info.value.exit_code == 3


class TestCalibration:
    """Test cases for the shipped desk-scale calibration studies."""

    @pytest.mark.parametrize("method", ["mcd", "de", "bnn"])
    def test_gap_coverage(self, temp_dir, method):
        """Test 95% coverage on the gap problem lies in [0.85, 1]."""
        config = load_config(f"gap_{method}", output_dir=os.path.join(temp_dir, method))
        summary = Pipeline(config).run()

        assert [entry["response"] for entry in summary] == ["y"]
        assert summary[0]["cases"] == 20
        assert 0.85 <= summary[0]["coverage95"] <= 1.0

    @pytest.mark.parametrize("method", ["mcd", "bnn"])
    def test_gap_is_more_uncertain_than_support(self, temp_dir, method):
        """Test the mean std inside (-0.3, 0.3) exceeds the mean std over the training support."""
        config = load_config(f"gap_{method}", output_dir=os.path.join(temp_dir, method))
        pipeline = Pipeline(config)
        pipeline.run()
        gap = pipeline.storage.read_json(UQ_SUMMARY)["gap"]

        assert gap["gap_mean_std"] > gap["support_mean_std"]

    @pytest.mark.parametrize("method", ["mcd", "de", "bnn"])
    def test_curve_coverage(self, temp_dir, method):
        """Test 95% coverage of every retained PC score lies in [0.85, 1]."""
        config = load_config(f"fgr_{method}", output_dir=os.path.join(temp_dir, method))
        summary = Pipeline(config).run()

        assert summary
        for entry in summary:
            assert 0.85 <= entry["coverage95"] <= 1.0, entry["response"]


class TestVoidRuns:
    """Test cases for the many-to-one void fraction study."""

    @pytest.mark.parametrize("method", ["mcd", "de", "bnn"])
    def test_no_divergence(self, temp_dir, method):
        """Test every void output trains and reports finite error and std."""
        run_dir = os.path.join(temp_dir, method)
        try:
            summary = pipeline_for(reduced_void_config(method), run_dir).run()
        except TrainingDivergenceError as e:
            pytest.fail(f"{method} diverged: {e}")

        assert [entry["response"] for entry in summary] == ["VoidF1", "VoidF2", "VoidF3", "VoidF4"]
        for entry in summary:
            assert entry["cases"] == 30
            assert np.isfinite(entry["rmse"])
            assert np.isfinite(entry["mean_std"]) and entry["mean_std"] > 0

    def test_top_output_is_better_determined(self, temp_dir):
        """Test the ensemble is less uncertain at the top elevation than at the bottom."""
        summary = pipeline_for(reduced_void_config("de"), os.path.join(temp_dir, "de")).run()
        by_response = {entry["response"]: entry for entry in summary}

        assert by_response["VoidF4"]["mean_std"] < by_response["VoidF1"]["mean_std"]
