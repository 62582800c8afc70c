"""
Simulation Studies for medboot
Runs every method on the same simulated datasets, under fixed or mixture
nulls or along a power curve, and writes plot-ready CSV tables
"""

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import mlflow
import numpy as np
import pandas as pd

from src.api.analysis import run_method
from src.api.models import AbConfig, SimSpec
from src.exceptions import InvalidConfig, MedbootError
from src.models.resampling import derive_seed, derive_substream, ks_uniform_distance, parallel_map
from src.simulation.generators import MIXTURE_NULLS, generate, uniform

logger = logging.getLogger(__name__)

NULL_LABELS = ("H01", "H02", "H03")
GLM_THRESHOLDS = {"glm1": (1.9, 1.9), "glm2": (1.9, 3.3)}
DEFAULT_PRODUCTS = {200: 0.04, 500: 0.015}

# substream indices under a replicate's seed
_DATA_STREAM = 0
_NULL_STREAM = 1


@dataclass
class SimulationReport:
    """Long-format records, per-method summary and run bookkeeping"""
    records: pd.DataFrame
    summary: pd.DataFrame
    spec: SimSpec
    runtime: float
    failures: int = 0
    power: Optional[pd.DataFrame] = None
    failure_log: List[Dict] = field(default_factory=list)


def _decision_columns(omega_grid) -> List[str]:
    return [f"reject@{w:g}" for w in omega_grid]


class SimulationRunner:
    """
    Monte-Carlo runner for one SimSpec
    """

    def __init__(self, spec: SimSpec, config: Optional[Dict] = None):
        """
        Args:
            spec: study specification
            config: project configuration (simulation and mlflow sections are used)
        """
        self.spec = spec
        self.config = config or {}
        self.stats = {}
        self.report: Optional[SimulationReport] = None

    def method_config(self, method: str) -> AbConfig:
        """Per-method settings; GLM methods default to their per-coefficient thresholds"""
        config = self.spec.config_for(method)
        if (method.startswith("glm") and method not in self.spec.method_configs
                and config.lam_alpha is None and config.lam_beta is None and method.endswith("-ab")):
            lam_alpha, lam_beta = GLM_THRESHOLDS[method.split("-")[0]]
            config = config.model_copy(update={"lam_alpha": lam_alpha, "lam_beta": lam_beta})
        return config

    def _pick_null(self, rep_seed: int) -> int:
        """Index of the mixture null for a replicate, from its dedicated substream"""
        u = uniform(derive_substream(rep_seed, _NULL_STREAM), 1)[0]
        cumulative = np.cumsum(self.spec.mixture_probabilities())
        return int(min(np.searchsorted(cumulative, u, side="right"), len(cumulative) - 1))

    def _coefficients(self, pair: Tuple[float, float]):
        if self.spec.scenario == "multi":
            j = self.spec.n_mediators
            return np.full(j, float(pair[0])), np.full(j, float(pair[1]))
        return float(pair[0]), float(pair[1])

    def run_replicate(self, rep_seed: int, coefficients=None) -> Tuple[List[Dict], List[Dict]]:
        """
        Generate one dataset and run every method on it

        Args:
            rep_seed: replicate seed; data and method seeds derive from it
            coefficients: optional (alpha_S, beta_M) overriding the spec

        Returns:
            Tuple of (records, failures)
        """
        spec = self.spec
        extra = {}
        if coefficients is None and spec.null_mode == "mixture":
            which = self._pick_null(rep_seed)
            coefficients = self._coefficients(MIXTURE_NULLS[which])
            extra["null"] = NULL_LABELS[which]

        dataset = generate(spec, derive_substream(rep_seed, _DATA_STREAM), coefficients)
        records, failures = [], []
        for k, method in enumerate(spec.methods):
            config = self.method_config(method).with_bootstrap(seed=derive_seed(rep_seed, k), workers=1)
            try:
                result = run_method(dataset, method, config, spec.query)
            except MedbootError as e:
                failures.append({"method": method, "error": type(e).__name__, "message": str(e)})
                continue
            record = {"method": method, "p_value": result.p_value, "estimate": result.estimate, **extra}
            for w in config.omega_grid:
                key = f"{w:g}"
                record[f"reject@{key}"] = result.decisions.get(key, result.p_value < w)
            records.append(record)
        return records, failures

    def _run_reps(self, seed_path: Tuple[int, ...], coefficients=None):
        spec = self.spec

        def one(rep: int):
            return self.run_replicate(derive_seed(spec.seed, *seed_path, rep), coefficients)

        outputs = parallel_map(one, range(spec.reps), spec.workers)
        records, failures = [], []
        for rep, (rep_records, rep_failures) in enumerate(outputs):
            records.extend(dict(r, rep=rep) for r in rep_records)
            failures.extend(dict(f, rep=rep) for f in rep_failures)
        return records, failures

    def summarize(self, records: pd.DataFrame) -> pd.DataFrame:
        """Rejection rate per (method, omega) and KS distance of each method's p-values"""
        rows = []
        for method in self.spec.methods:
            subset = records[records["method"] == method] if len(records) else records
            omega_grid = self.method_config(method).omega_grid
            ks = ks_uniform_distance(subset["p_value"]) if len(subset) else float("nan")
            for w in omega_grid:
                column = f"reject@{w:g}"
                rate = float(subset[column].astype(float).mean()) if len(subset) else float("nan")
                rows.append({
                    "method": method,
                    "omega": w,
                    "rejection_rate": rate,
                    "ks_distance": ks,
                    "n_valid": len(subset),
                })
        return pd.DataFrame(rows, columns=["method", "omega", "rejection_rate", "ks_distance", "n_valid"])

    def run_null_study(self) -> SimulationReport:
        """
        Fixed or mixture null study; every method sees the same dataset per replicate

        Returns:
            SimulationReport
        """
        spec = self.spec
        logger.info("=" * 60)
        logger.info(f"NULL STUDY: {spec.scenario}, n={spec.n}, reps={spec.reps}, mode={spec.null_mode}")
        logger.info("=" * 60)

        start = time.time()
        records, failures = self._run_reps(())
        frame = self._records_frame(records)
        summary = self.summarize(frame)
        runtime = time.time() - start

        self.report = SimulationReport(
            records=frame, summary=summary, spec=spec, runtime=runtime,
            failures=len(failures), failure_log=failures,
        )
        self._update_stats(summary, runtime, len(failures))
        logger.info(f"Null study finished in {runtime:.1f}s with {len(failures)} failed method run(s)")
        return self.report

    def power_grid(self) -> Tuple[str, List[Tuple[float, float, float]]]:
        """
        (setting, [(grid value, alpha_S, beta_M), ...])

        Setting I uses signal_grid with alpha_S = beta_M = signal. Setting II keeps
        alpha_S * beta_M at `product` and varies the ratio alpha_S / beta_M.
        """
        spec = self.spec
        if spec.ratio_grid:
            product = spec.product if spec.product is not None else DEFAULT_PRODUCTS.get(spec.n)
            if product is None:
                raise InvalidConfig(f"No default product for n={spec.n}; set 'product'")
            if product < 0 or any(r <= 0 for r in spec.ratio_grid):
                raise InvalidConfig("product must be non-negative and ratios positive")
            return "ratio", [(r, math.sqrt(product * r), math.sqrt(product / r)) for r in spec.ratio_grid]
        if spec.signal_grid:
            return "signal", [(g, g, g) for g in spec.signal_grid]
        raise InvalidConfig("A power study needs signal_grid or ratio_grid")

    def run_power_study(self, omega: float = 0.05) -> SimulationReport:
        """
        Rejection rate at `omega` along the signal or ratio grid

        Returns:
            SimulationReport with the power table filled in
        """
        spec = self.spec
        setting, grid = self.power_grid()
        logger.info("=" * 60)
        logger.info(f"POWER STUDY ({setting}): {spec.scenario}, n={spec.n}, reps={spec.reps}, points={len(grid)}")
        logger.info("=" * 60)

        start = time.time()
        all_records, all_failures, power_rows = [], [], []
        for g, (value, alpha_s, beta_m) in enumerate(grid):
            records, failures = self._run_reps((g,), self._coefficients((alpha_s, beta_m)))
            frame = self._records_frame(records)
            frame["signal"] = value
            all_records.append(frame)
            all_failures.extend(dict(f, signal=value) for f in failures)
            for method in spec.methods:
                subset = frame[frame["method"] == method]
                column = f"reject@{omega:g}"
                if column in subset:
                    power = float(subset[column].astype(float).mean()) if len(subset) else float("nan")
                else:
                    power = float((subset["p_value"] < omega).mean()) if len(subset) else float("nan")
                power_rows.append({"signal": value, "alpha_s": alpha_s, "beta_m": beta_m,
                                   "method": method, "power": power})
            logger.info(f"  {setting}={value:g}: " + ", ".join(
                f"{r['method']}={r['power']:.3f}" for r in power_rows[-len(spec.methods):]
            ))

        records = pd.concat(all_records, ignore_index=True)
        power = pd.DataFrame(power_rows, columns=["signal", "alpha_s", "beta_m", "method", "power"])
        runtime = time.time() - start
        self.report = SimulationReport(
            records=records, summary=self.summarize(records), spec=spec, runtime=runtime,
            failures=len(all_failures), power=power, failure_log=all_failures,
        )
        self._update_stats(self.report.summary, runtime, len(all_failures))
        return self.report

    def _records_frame(self, records: List[Dict]) -> pd.DataFrame:
        columns = ["rep", "method", "p_value", "estimate"]
        if self.spec.null_mode == "mixture":
            columns.append("null")
        decision_columns = sorted({c for r in records for c in r if c.startswith("reject@")})
        frame = pd.DataFrame(records, columns=columns + decision_columns)
        order = {m: i for i, m in enumerate(self.spec.methods)}
        frame["_order"] = frame["method"].map(order)
        return frame.sort_values(["rep", "_order"], kind="mergesort").drop(columns="_order").reset_index(drop=True)

    def _update_stats(self, summary: pd.DataFrame, runtime: float, failures: int):
        self.stats["runtime_seconds"] = runtime
        self.stats["failures"] = failures
        for row in summary.itertuples(index=False):
            self.stats[f"rejection_rate_{row.method}_{row.omega:g}"] = row.rejection_rate
            self.stats[f"ks_distance_{row.method}"] = row.ks_distance

    def save_results(self, output_dir: Optional[str] = None) -> Dict[str, Path]:
        """
        Write pvalues_long.csv, summary.csv and (power studies) power.csv

        Args:
            output_dir: target directory; defaults to simulation.output_dir in config

        Returns:
            Mapping of table name to written path
        """
        if self.report is None:
            raise InvalidConfig("Run a study before saving results")
        output_dir = Path(output_dir or self.config.get("simulation", {}).get("output_dir", "results/simulation"))
        output_dir.mkdir(parents=True, exist_ok=True)

        paths = {}
        long_columns = [c for c in ("rep", "signal", "null", "method", "p_value", "estimate")
                        if c in self.report.records.columns]
        paths["pvalues_long"] = output_dir / "pvalues_long.csv"
        self.report.records[long_columns].to_csv(paths["pvalues_long"], index=False)
        paths["summary"] = output_dir / "summary.csv"
        self.report.summary[["method", "omega", "rejection_rate", "ks_distance"]].to_csv(
            paths["summary"], index=False
        )
        if self.report.power is not None:
            paths["power"] = output_dir / "power.csv"
            self.report.power.to_csv(paths["power"], index=False)

        for name, path in paths.items():
            logger.info(f"Saved {name} to {path}")
        return paths

    def log_to_mlflow(self, experiment_name: Optional[str] = None, artifacts: Optional[Dict[str, Path]] = None):
        """
        Log study parameters, rejection rates and KS distances to MLflow

        Args:
            experiment_name: MLflow experiment name
            artifacts: CSV files to attach
        """
        experiment_name = experiment_name or self.config.get("mlflow", {}).get(
            "experiment_name", "medboot-simulations"
        )
        logger.info("Logging to MLflow...")
        mlflow.set_experiment(experiment_name)

        with mlflow.start_run():
            mlflow.log_params({
                "scenario": self.spec.scenario,
                "n": self.spec.n,
                "reps": self.spec.reps,
                "seed": self.spec.seed,
                "null_mode": self.spec.null_mode,
                "methods": ",".join(self.spec.methods),
                "bootstrap_b": self.spec.ab_config.bootstrap.b,
                "lam": self.spec.ab_config.lam,
            })
            mlflow.log_metrics({
                k.replace("@", "_"): float(v) for k, v in self.stats.items()
                if isinstance(v, (int, float)) and not (isinstance(v, float) and math.isnan(v))
            })
            for path in (artifacts or {}).values():
                mlflow.log_artifact(str(path))
            logger.info("✅ Logged to MLflow successfully!")

    def run_pipeline(self, study: str = "null", output_dir: Optional[str] = None,
                     use_mlflow: bool = False) -> Dict:
        """
        Run a study, save its tables and optionally log to MLflow

        Args:
            study: "null" or "power"
            output_dir: CSV directory
            use_mlflow: log the run to MLflow

        Returns:
            Dictionary with run statistics
        """
        if study == "power":
            self.run_power_study()
        elif study == "null":
            self.run_null_study()
        else:
            raise InvalidConfig(f"Unknown study '{study}', expected null or power")

        paths = self.save_results(output_dir)
        if use_mlflow:
            try:
                self.log_to_mlflow(artifacts=paths)
            except Exception as e:
                logger.warning(f"Could not log to MLflow: {e}")
                logger.warning("Continuing without MLflow logging...")
        return self.stats
