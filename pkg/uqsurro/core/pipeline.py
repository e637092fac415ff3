"""
Study pipeline: generate -> pca -> train -> uq -> report.

Every stage reads and writes a fixed run layout:

    manifest.json   run description and per-stage artifact digests
    data/           design, dataset and (for curves) the time grid
    pca/            PCA artifact, variance decay and PC scores
    models/<resp>/  trained model(s), scaler and training log per response
    uq/             per-case predictions, curve bands and summary
    report/         tidy tables for plotting
    logs/           run log

Stages draw randomness from labelled substreams of the master seed, so any
stage can be re-run on its own with identical results.
"""
import os
import shutil
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd

from .. import __version__
from ..data.dataset import Dataset, Scaler, load_dataset, split, standardize, write_dataset
from ..data.design import crossed_design, maximin_lhs
from ..data.oracles import (
    FGR_SCHEMA,
    ORACLE_VERSION,
    VOID_BC_SCHEMA,
    VOID_MULTIPLIER_SCHEMA,
    VOID_OUTPUTS,
    fgr_output_names,
    fgr_time_grid,
    gap_grid,
    synth_fgr,
    synth_gap,
    synth_voidfraction,
)
from ..exceptions import CompatibilityError, ConfigurationError, StorageError, TrainingDivergenceError
from ..logger import configure_logging, get_logger, log_audit
from ..nn.net import init_mlp, load_model, save_model, train
from ..nn.objectives import make_objective
from ..uq.bnn import PriorSpec, bnn_predict, load_bnn, save_bnn, train_bnn
from ..uq.ensemble import ensemble_predict, load_ensemble, save_ensemble, train_ensemble
from ..uq.mcd import mcd_predict
from ..uq.metrics import REPORT_COLUMNS, summarize
from .config import RunConfig
from .models import PredictiveDistribution
from .pca import PcaModel, fit_pca, project_many, propagate_uncertainty, variance_table
from .seeding import SeedStream
from .storage import ArtifactStorage


MANIFEST = "manifest.json"
DATASET = "data/dataset.csv"
DESIGN = "data/design.csv"
TIME_GRID = "data/time_grid.csv"
PCA_MODEL = "pca/pca.json"
PCA_VARIANCE = "pca/variance.csv"
PCA_SCORES = "pca/scores.csv"
PREDICTIONS = "uq/predictions.csv"
UQ_SUMMARY = "uq/summary.json"
CURVES = "uq/curves.csv"
GAP_PROFILE = "uq/gap_profile.csv"
STAGE_DIRS = ("data", "pca", "models", "uq", "report")
COVERAGE_RANGE = (0.85, 1.0)


def _model_dir(response: str) -> str:
    return f"models/{response}"


class Pipeline:
    """
    Runs the study stages for one configuration inside one run directory.
    """

    def __init__(self, config: RunConfig, run_dir: Optional[str] = None, force: bool = False):
        """
        Initialize the pipeline.

        Args:
            config: Validated run configuration
            run_dir: Run directory (defaults to the configuration's output_dir)
            force: Allow generating into a non-empty run directory
        """
        self.config = config
        self.run_dir = run_dir or config.output_dir
        self.force = force
        self.storage = ArtifactStorage(self.run_dir)
        self.seeds = SeedStream(config.seed)

    # -- bookkeeping -----------------------------------------------------

    def _start_logging(self) -> None:
        configure_logging(self.storage.path("logs"))

    def manifest(self) -> dict:
        self.storage.require([MANIFEST])
        return self.storage.read_json(MANIFEST)

    def _record_stage(self, manifest: dict, stage: str, written: Sequence[str], **details) -> None:
        relatives = [os.path.relpath(path, self.run_dir) for path in written]
        manifest.setdefault("stages", {})[stage] = dict(details, digests=self.storage.digests(relatives))
        self.storage.write_json(MANIFEST, manifest)

    def _load_data(self, manifest: dict) -> Dataset:
        self.storage.require([DATASET])
        return load_dataset(self.storage.path(DATASET), manifest["data"]["inputs"], manifest["data"]["outputs"])

    def _load_pca(self) -> PcaModel:
        self.storage.require([PCA_MODEL])
        return PcaModel.from_dict(self.storage.read_json(PCA_MODEL))

    def _training_targets(self, manifest: dict) -> Dataset:
        """Dataset whose outputs are the trained responses (PC scores when PCA is on)."""
        data = self._load_data(manifest)
        if manifest.get("pca", {}).get("enabled"):
            model = self._load_pca()
            names = [f"pc_{k + 1}" for k in range(model.p_star)]
            data = data.with_outputs(project_many(model, data.outputs), names)
        return split(data, self.config.training.split, self.seeds.generator("split"))

    # -- generate --------------------------------------------------------

    def _refuse_existing(self) -> None:
        if os.path.isdir(self.run_dir) and os.listdir(self.run_dir):
            if not self.force:
                raise StorageError(
                    f"Run directory {self.run_dir} is not empty; use --force to overwrite", operation="refuse")
            for name in STAGE_DIRS:
                shutil.rmtree(self.storage.path(name), ignore_errors=True)
            if self.storage.exists(MANIFEST):
                os.remove(self.storage.path(MANIFEST))

    def _synthesize(self) -> Dict:
        cfg, design = self.config, self.config.design
        time_grid = None
        if cfg.problem == "synth_fgr":
            X = maximin_lhs(design.samples, FGR_SCHEMA, design.iterations, self.seeds.generator("design"))
            time_grid = fgr_time_grid(design.time_points)
            data = Dataset(X, synth_fgr(X, time_grid), FGR_SCHEMA.names, list(fgr_output_names(len(time_grid))),
                           bounds=FGR_SCHEMA.bounds)
        elif cfg.problem == "synth_void":
            cases = maximin_lhs(design.bc_cases, VOID_BC_SCHEMA, design.iterations, self.seeds.generator("design:bc"))
            X = crossed_design(cases, design.samples, VOID_MULTIPLIER_SCHEMA, design.iterations,
                               self.seeds.generator("design"))
            names = VOID_BC_SCHEMA.names + VOID_MULTIPLIER_SCHEMA.names
            data = Dataset(X, synth_voidfraction(X), names, list(VOID_OUTPUTS))
        elif cfg.problem == "synth_gap":
            data = synth_gap(design.samples, self.seeds.generator("design"), noise=design.noise)
        else:
            data = load_dataset(cfg.data.path, cfg.data.inputs, cfg.data.outputs)
        return {"data": data, "time_grid": time_grid}

    def generate(self) -> dict:
        """
        Generate (or ingest) the dataset and start the run manifest.

        Returns:
            The run manifest

        Raises:
            StorageError: If the run directory is not empty and force is off
        """
        self._refuse_existing()
        self._start_logging()
        generated = self._synthesize()
        data = generated["data"]
        written = [
            self.storage.write_frame(DESIGN, pd.DataFrame(data.inputs, columns=data.input_names)),
            write_dataset(self.storage.path(DATASET), data),
        ]
        if generated["time_grid"] is not None:
            written.append(self.storage.write_frame(TIME_GRID, pd.DataFrame({"time": generated["time_grid"]})))

        manifest = {
            "name": self.config.name,
            "package_version": __version__,
            "oracle_version": ORACLE_VERSION,
            "problem": self.config.problem,
            "method": self.config.method,
            "seed": self.config.seed,
            "config": self.config.to_dict(),
            "data": {"inputs": data.input_names, "outputs": data.output_names, "rows": data.n_rows},
            "pca": {"enabled": bool(self.config.pca.enabled)},
            "responses": data.output_names,
        }
        self._record_stage(manifest, "generate", written, rows=data.n_rows)
        log_audit("GENERATE", {"problem": self.config.problem, "rows": data.n_rows,
                               "inputs": len(data.input_names), "outputs": len(data.output_names)})
        return manifest

    # -- pca -------------------------------------------------------------

    def fit_pca(self) -> PcaModel:
        """
        Fit PCA to the curve outputs and write the artifact, variance table and scores.

        Raises:
            ConfigurationError: If PCA is disabled or the outputs are not curves
        """
        if not self.config.pca.enabled:
            raise ConfigurationError("is false; enable PCA to reduce curve outputs", key="pca.enabled")
        self._start_logging()
        manifest = self.manifest()
        data = self._load_data(manifest)
        if data.outputs.shape[1] < 2:
            raise ConfigurationError("PCA needs curve-valued outputs", key="pca.enabled")
        model = fit_pca(data.outputs.T, self.config.pca.threshold)
        names = [f"pc_{k + 1}" for k in range(model.p_star)]
        scores = pd.DataFrame(project_many(model, data.outputs), columns=names)
        scores.insert(0, "case_id", np.arange(data.n_rows))
        written = [
            self.storage.write_json(PCA_MODEL, model.to_dict()),
            self.storage.write_frame(PCA_VARIANCE, variance_table(model)),
            self.storage.write_frame(PCA_SCORES, scores),
        ]
        manifest["pca"] = {"enabled": True, "p": model.p, "p_star": model.p_star,
                           "explained_fraction": model.explained_fraction,
                           "threshold": model.threshold}
        manifest["responses"] = names
        self._record_stage(manifest, "pca", written, p_star=model.p_star)
        return model

    # -- train -----------------------------------------------------------

    def _fit_response(self, data: Dataset, response: str) -> List[str]:
        cfg = self.config
        params = cfg.method_params
        tcfg = cfg.train_config_for(response)
        layers = cfg.layers_for(response)
        prepared, scaler = standardize(data.select_output(response), outputs=cfg.standardize_outputs,
                                       inputs=cfg.standardize_inputs)
        directory = _model_dir(response)
        written = [self.storage.write_json(f"{directory}/scaler.json", scaler.to_dict())]
        if cfg.method == "mcd":
            initial = init_mlp(prepared.inputs.shape[1], layers, self.seeds.seed(f"init:{response}"))
            objective = make_objective("mse", l2_lambda=tcfg.l2_lambda, p_drop=params.p_drop)
            model, log = train(initial, prepared, tcfg, objective, self.seeds.generator(f"train:{response}"),
                               p_drop=params.p_drop, scaling=params.scaling)
            written.append(save_model(self.storage, f"{directory}/model.json", model))
            logs = [log]
        elif cfg.method == "de":
            ensemble = train_ensemble(prepared, layers, tcfg, params.M, self.seeds.generator(f"init:{response}"),
                                      workers=cfg.workers)
            written.extend(save_ensemble(self.storage, directory, ensemble))
            logs = ensemble.logs
        else:
            bnn, log = train_bnn(prepared, layers, tcfg, PriorSpec.from_dict(params.prior),
                                 self.seeds.generator(f"init:{response}"), n_mc=params.n_mc)
            written.append(save_bnn(self.storage, f"{directory}/bnn.json", bnn))
            logs = [log]
        frames = []
        for index, log in enumerate(logs):
            frame = log.to_frame()
            frame.insert(0, "member", index)
            frames.append(frame)
        written.append(self.storage.write_frame(f"{directory}/train_log.csv", pd.concat(frames, ignore_index=True)))
        log_audit("TRAIN_MODEL", {"method": cfg.method, "response": response, "epochs": tcfg.epochs,
                                  "learning_rate": tcfg.learning_rate,
                                  "final_loss": float(logs[0].train_loss[-1])})
        return written

    def train(self) -> List[str]:
        """
        Train one model (or ensemble) per response.

        Returns:
            Names of the trained responses

        Raises:
            TrainingDivergenceError: Labelled with method and response
        """
        self._start_logging()
        manifest = self.manifest()
        data = self._training_targets(manifest)
        written = []
        for response in data.output_names:
            try:
                written.extend(self._fit_response(data, response))
            except TrainingDivergenceError as e:
                raise e.with_context(f"{self.config.method}/{response}")
        self._record_stage(manifest, "train", written, responses=data.output_names,
                           partition=data.partition_sizes())
        return data.output_names

    # -- uq --------------------------------------------------------------

    def _load_predictor(self, response: str, input_dim: int):
        directory = _model_dir(response)
        method = self.config.method
        if method == "mcd":
            self.storage.require([f"{directory}/model.json", f"{directory}/scaler.json"])
            artifact = load_model(self.storage, f"{directory}/model.json")
            found = artifact.input_dim
        elif method == "de":
            self.storage.require([f"{directory}/manifest.json", f"{directory}/scaler.json"])
            artifact = load_ensemble(self.storage, directory)
            found = artifact.members[0].input_dim
        else:
            self.storage.require([f"{directory}/bnn.json", f"{directory}/scaler.json"])
            artifact = load_bnn(self.storage, f"{directory}/bnn.json")
            found = artifact.input_dim
        if found != input_dim:
            raise CompatibilityError(
                f"Model for '{response}' expects {found} inputs but the dataset has {input_dim}")
        scaler = Scaler.from_dict(self.storage.read_json(f"{directory}/scaler.json"))
        return artifact, scaler

    def _predict(self, artifact, x: np.ndarray, rng: np.random.Generator) -> PredictiveDistribution:
        params = self.config.method_params
        if self.config.method == "mcd":
            return mcd_predict(artifact, x, params.T, p_drop=params.predict_p_drop, rng=rng)
        if self.config.method == "de":
            return ensemble_predict(artifact, x)
        return bnn_predict(artifact, x, params.T, rng=rng)

    def _predict_scaled(self, artifact, scaler: Scaler, x: np.ndarray,
                        rng: np.random.Generator) -> PredictiveDistribution:
        shift, scale = scaler.output_affine(0)
        return self._predict(artifact, scaler.transform_inputs(x), rng).rescaled(shift, scale)

    def uq(self) -> List[dict]:
        """
        Predict every test case, propagate PC-score uncertainty to curves, and
        write the per-case table and summary.

        Returns:
            Summary rows, one per response

        Raises:
            CompatibilityError: If a model does not fit the dataset
        """
        self._start_logging()
        manifest = self.manifest()
        data = self._training_targets(manifest)
        test_rows = data.partition_indices("test")
        predictors = {r: self._load_predictor(r, data.inputs.shape[1]) for r in data.output_names}

        rows, samples, flags = [], [], set()
        distributions = {}
        for case in test_rows:
            case = int(case)
            for column, response in enumerate(data.output_names):
                artifact, scaler = predictors[response]
                dist = self._predict_scaled(artifact, scaler, data.inputs[case],
                                            self.seeds.generator(f"uq:{case}:{response}"))
                distributions[(case, response)] = dist
                flags.update(dist.flags)
                lo68, hi68 = dist.ci(0.6827)
                lo95, hi95 = dist.ci(0.95)
                rows.append([case, response, self.config.method, dist.mean[0], dist.std[0],
                             lo68[0], hi68[0], lo95[0], hi95[0], data.outputs[case, column]])
                if dist.samples is not None:
                    samples.extend([case, response, index, value]
                                   for index, value in enumerate(dist.samples[:, 0]))
        table = pd.DataFrame(rows, columns=REPORT_COLUMNS)
        written = [
            self.storage.write_frame(PREDICTIONS, table),
            self.storage.write_rows("uq/samples.csv", ["case_id", "response", "sample", "value"], samples),
        ]
        log_audit("UQ_CASE", {"method": self.config.method, "cases": int(test_rows.size),
                              "responses": data.output_names})

        if manifest.get("pca", {}).get("enabled"):
            written.append(self._write_curves(manifest, data, test_rows, distributions))
        gap = None
        if self.config.problem == "synth_gap":
            gap = self._gap_profile(predictors[data.output_names[0]])
            written.append(self.storage.path(GAP_PROFILE))

        summary = summarize(table)
        for entry in summary:
            if not COVERAGE_RANGE[0] <= entry["coverage95"] <= COVERAGE_RANGE[1]:
                get_logger().warning("95%% coverage of %s/%s is %.3f, outside [%.2f, %.2f]",
                                     entry["method"], entry["response"], entry["coverage95"], *COVERAGE_RANGE)
        document = {
            "method": self.config.method,
            "T": self.config.method_params.T if self.config.method != "de" else None,
            "M": self.config.method_params.M if self.config.method == "de" else None,
            "test_cases": int(test_rows.size),
            "flags": sorted(flags),
            "responses": summary,
        }
        if gap is not None:
            document["gap"] = gap
        written.append(self.storage.write_json(UQ_SUMMARY, document))
        self._record_stage(manifest, "uq", written, test_cases=int(test_rows.size))
        return summary

    def _write_curves(self, manifest: dict, data: Dataset, test_rows: np.ndarray, distributions: dict) -> str:
        model = self._load_pca()
        curves = self._load_data(manifest).outputs
        grid = (self.storage.read_frame(TIME_GRID)["time"].to_numpy() if self.storage.exists(TIME_GRID)
                else np.arange(model.p, dtype=float))
        pcfg = self.config.pca
        frames = []
        for case in test_rows:
            case = int(case)
            dists = [distributions[(case, r)] for r in data.output_names]
            means = np.array([d.mean[0] for d in dists])
            variances = np.array([d.variance[0] for d in dists])
            band = propagate_uncertainty(model, means, variances, pcfg.n_samples,
                                         self.seeds.generator(f"uq:{case}:curve"), mode=pcfg.mode)
            closed = propagate_uncertainty(model, means, variances, mode="closed")
            frames.append(pd.DataFrame({
                "case_id": case,
                "time_index": np.arange(model.p),
                "time": grid,
                "mean": band.mean,
                "std": band.std,
                "closed_mean": closed.mean,
                "closed_std": closed.std,
                "reference": curves[case],
            }))
        return self.storage.write_frame(CURVES, pd.concat(frames, ignore_index=True))

    def _gap_profile(self, predictor) -> dict:
        artifact, scaler = predictor
        support, gap = gap_grid()
        rows = []
        for region, X in (("support", support), ("gap", gap)):
            for index, x in enumerate(X):
                dist = self._predict_scaled(artifact, scaler, x, self.seeds.generator(f"uq:{region}:{index}"))
                rows.append([region, float(x[0]), dist.mean[0], dist.std[0]])
        frame = pd.DataFrame(rows, columns=["region", "x", "mean", "std"])
        self.storage.write_frame(GAP_PROFILE, frame)
        by_region = frame.groupby("region")["std"].mean()
        return {"support_mean_std": float(by_region["support"]), "gap_mean_std": float(by_region["gap"])}

    # -- report ----------------------------------------------------------

    def report(self, compare: Sequence[str] = ()) -> List[str]:
        """
        Write plot-ready tables; with compare runs, also a method comparison.

        Args:
            compare: Other run directories to include in the comparison table

        Returns:
            Paths written

        Raises:
            StorageError: Listing missing artifacts of an incomplete run
        """
        manifest = self.manifest()
        required = [DATASET, PREDICTIONS, UQ_SUMMARY]
        if manifest.get("pca", {}).get("enabled"):
            required += [PCA_MODEL, PCA_VARIANCE, CURVES]
        self.storage.require(required)
        self._start_logging()

        predictions = self.storage.read_frame(PREDICTIONS)
        written = [
            self.storage.write_frame("report/error_bars.csv", predictions),
            self.storage.write_frame("report/summary.csv", pd.DataFrame(summarize(predictions))),
        ]
        if manifest.get("pca", {}).get("enabled"):
            written.append(self.storage.write_frame("report/variance_decay.csv",
                                                    self.storage.read_frame(PCA_VARIANCE)))
            written.append(self.storage.write_frame("report/curve_bands.csv", self.storage.read_frame(CURVES)))
        if compare:
            written.append(self.storage.write_frame("report/comparison.csv", self._comparison(manifest, compare)))
        log_audit("REPORT", {"run": self.config.name, "tables": len(written), "compared": len(compare)})
        self._record_stage(manifest, "report", written)
        return written

    def _comparison(self, manifest: dict, compare: Sequence[str]) -> pd.DataFrame:
        frames = []
        for run_dir in [self.run_dir, *compare]:
            storage = ArtifactStorage(run_dir)
            storage.require([MANIFEST, PREDICTIONS])
            name = storage.read_json(MANIFEST).get("name", os.path.basename(os.path.normpath(run_dir)))
            summary = pd.DataFrame(summarize(storage.read_frame(PREDICTIONS)))
            summary.insert(0, "run", name)
            frames.append(summary)
        return pd.concat(frames, ignore_index=True)

    # -- all -------------------------------------------------------------

    def run(self, compare: Sequence[str] = ()) -> List[dict]:
        """Run every stage in order; PCA only when enabled."""
        self.generate()
        if self.config.pca.enabled:
            self.fit_pca()
        self.train()
        summary = self.uq()
        self.report(compare)
        return summary
