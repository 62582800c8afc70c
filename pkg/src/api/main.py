"""
medboot Command-Line Interface

Subcommands:
- run: one mediation test on a CSV file
- screen: two-step screening with BH selection
- simulate: Monte-Carlo null or power study from a JSON spec
- tune: double-bootstrap lambda selection
- confirm: confirmatory double-bootstrap pattern analysis

Every command prints a JSON report on stdout. Exit codes: 0 success,
2 input error, 3 numerical failure, 4 degenerate resampling.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

import mlflow
import pandas as pd
from pydantic import ValidationError

from src import __version__
from src.api.analysis import build_report, run_method, screen_then_joint
from src.api.models import METHOD_TAGS, SINGLE_MEDIATOR_METHODS, AbConfig, NieQuery, SimSpec
from src.config import load_config, setup_logging
from src.data_processing.dataset import ColumnRoleMap, parse_dataset_csv
from src.exceptions import InputError, InvalidConfig, MedbootError, exit_code_for
from src.models.multi_ab import individual_within_multi_test
from src.models.tuning import DB_METHODS, TuningCriteria, confirmatory_analysis, select_lambda
from src.simulation.studies import SimulationRunner

logger = logging.getLogger(__name__)

AB_CONFIG_KEYS = ("lam", "lam_alpha", "lam_beta", "b_alpha", "b_beta", "omega_grid")


def _float_list(value: str) -> List[float]:
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {value!r}") from e


def _name_list(value: str) -> List[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def _load_json(path: str) -> Dict:
    path = Path(path)
    if not path.exists():
        raise InvalidConfig(f"Config file not found: {path}")
    try:
        with open(path, "r") as f:
            payload = json.load(f)
    except json.JSONDecodeError as e:
        raise InvalidConfig(f"{path} is not valid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise InvalidConfig(f"{path} must contain a JSON object")
    return payload


def _add_data_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--data", required=True, help="CSV file with a header row")
    parser.add_argument("--exposure", required=True, help="Exposure column")
    parser.add_argument("--mediators", required=True, type=_name_list, help="Comma-separated mediator columns")
    parser.add_argument("--outcome", required=True, help="Outcome column")
    parser.add_argument("--covariates", type=_name_list, default=[], help="Comma-separated covariate columns")


def _add_bootstrap_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--B", type=int, dest="b", help="Bootstrap replicates")
    parser.add_argument("--lambda", type=float, dest="lam", help="Tuning constant lambda")
    parser.add_argument("--seed", type=int, help="Master seed")
    parser.add_argument("--scheme", choices=["pairs", "projected"], help="Resampling scheme")
    parser.add_argument("--workers", type=int, help="Thread count (results do not depend on it)")
    parser.add_argument("--ab-config", help="JSON file with AbConfig fields")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="medboot", description="Adaptive bootstrap tests for mediation effects")
    parser.add_argument("--version", action="version", version=f"medboot {__version__}")
    parser.add_argument("--config", help="Project YAML config (default configs/config.yaml)")
    parser.add_argument("--log-level", help="Logging level (default from config)")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run = subparsers.add_parser("run", help="Run one mediation test")
    _add_data_arguments(run)
    _add_bootstrap_arguments(run)
    run.add_argument("--method", required=True, choices=METHOD_TAGS)
    run.add_argument("--target", help="Mediator tested with the others adjusted for (multi-mediator data)")
    run.add_argument("--s", type=float, default=1.0, help="Exposure level s (glm methods)")
    run.add_argument("--s-star", type=float, default=0.0, dest="s_star", help="Reference level s* (glm methods)")
    run.add_argument("--at-x", type=_float_list, dest="at_x",
                     help="Covariate row incl. intercept, e.g. 1,0 (glm methods)")
    run.add_argument("--dump-distribution", dest="dump_distribution", help="CSV path for the bootstrap draws")
    run.add_argument("--csv", help="Directory for results.csv and distribution.csv")

    screen = subparsers.add_parser("screen", help="Screen mediators, then test the retained set jointly")
    _add_data_arguments(screen)
    _add_bootstrap_arguments(screen)
    screen.add_argument("--method", choices=SINGLE_MEDIATOR_METHODS, help="Test used in both steps")
    screen.add_argument("--screen-fraction", type=float, dest="screen_fraction")
    screen.add_argument("--split-fraction", type=float, dest="split_fraction",
                        help="Share of rows for step 1; 1 disables splitting")
    screen.add_argument("--fdr-q", type=float, dest="fdr_q")

    simulate = subparsers.add_parser("simulate", help="Monte-Carlo null or power study")
    simulate.add_argument("--spec", required=True, help="JSON file with SimSpec fields")
    simulate.add_argument("--study", choices=["null", "power"], default="null")
    simulate.add_argument("--output-dir", dest="output_dir", help="Directory for the CSV tables")
    simulate.add_argument("--mlflow", action="store_true", help="Log the run to MLflow")

    for name, help_text in (("tune", "Select lambda by double bootstrap"),
                            ("confirm", "Confirmatory double-bootstrap patterns")):
        sub = subparsers.add_parser(name, help=help_text)
        _add_data_arguments(sub)
        _add_bootstrap_arguments(sub)
        sub.add_argument("--db-method", choices=list(DB_METHODS), default="poc", dest="db_method")
        sub.add_argument("--b-outer", type=int, dest="b_outer")
        sub.add_argument("--b-inner", type=int, dest="b_inner")
        sub.add_argument("--csv", help="Directory for the p-value samples")
        sub.add_argument("--mlflow", action="store_true", help="Log the run to MLflow")
        if name == "tune":
            sub.add_argument("--grid", type=_float_list, help="Ascending lambda grid, e.g. 0,1,2,3,4,5")

    return parser


def resolve_ab_config(args: argparse.Namespace, project_config: Dict) -> AbConfig:
    """
    YAML defaults, then the optional JSON file, then command-line flags
    """
    adaptive = project_config.get("adaptive", {}) or {}
    payload = {k: adaptive[k] for k in AB_CONFIG_KEYS if k in adaptive}
    payload["bootstrap"] = dict(project_config.get("bootstrap", {}) or {})

    if getattr(args, "ab_config", None):
        override = _load_json(args.ab_config)
        bootstrap_override = override.pop("bootstrap", {}) or {}
        payload.update(override)
        payload["bootstrap"].update(bootstrap_override)

    flags = {"b": args.b, "seed": args.seed, "scheme": args.scheme, "workers": args.workers}
    payload["bootstrap"].update({k: v for k, v in flags.items() if v is not None})
    if args.lam is not None:
        payload["lam"] = args.lam
    return AbConfig.model_validate(payload)


def _role_map(args: argparse.Namespace) -> ColumnRoleMap:
    return ColumnRoleMap(
        exposure=args.exposure,
        mediators=tuple(args.mediators),
        outcome=args.outcome,
        covariates=tuple(args.covariates),
    )


def cmd_run(args: argparse.Namespace, project_config: Dict):
    start = time.time()
    config = resolve_ab_config(args, project_config)
    dataset = parse_dataset_csv(args.data, _role_map(args))
    logistic = project_config.get("logistic", {}) or {}

    distribution = None
    if args.target is not None:
        if args.method not in SINGLE_MEDIATOR_METHODS:
            raise InputError(f"--target needs a single-mediator method, got {args.method}")
        result = individual_within_multi_test(dataset, args.target, config, args.method)
    else:
        query = NieQuery(s=args.s, s_star=args.s_star, x=args.at_x)
        result, distribution = run_method(
            dataset, args.method, config, query, return_distribution=True,
            max_iter=int(logistic.get("max_iter", 100)), tol=float(logistic.get("tol", 1e-8)),
        )

    if args.dump_distribution:
        if distribution is None:
            logger.warning(f"{result.method} has no bootstrap distribution to dump")
        else:
            distribution.to_csv(args.dump_distribution)
    details = {"data": str(args.data), "csv": _write_results([result], distribution, args.csv)}
    return build_report("run", [result], config, start, details=details)


def _write_results(results, distribution, csv_dir: Optional[str]) -> Dict[str, str]:
    if not csv_dir:
        return {}
    out = Path(csv_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"results": str(out / "results.csv")}
    pd.DataFrame([r.to_record() for r in results]).to_csv(paths["results"], index=False)
    logger.info(f"Saved {len(results)} result row(s) to {paths['results']}")
    if distribution is not None:
        paths["distribution"] = str(out / "distribution.csv")
        distribution.to_csv(paths["distribution"])
    return paths


def cmd_screen(args: argparse.Namespace, project_config: Dict):
    screening = project_config.get("screening", {}) or {}
    config = resolve_ab_config(args, project_config)
    dataset = parse_dataset_csv(args.data, _role_map(args))
    split_fraction = args.split_fraction if args.split_fraction is not None else screening.get("split_fraction")
    return screen_then_joint(
        dataset,
        method=args.method or screening.get("method", "poc-ab"),
        screen_fraction=args.screen_fraction or float(screening.get("screen_fraction", 0.1)),
        fdr_q=args.fdr_q if args.fdr_q is not None else float(screening.get("fdr_q", 0.1)),
        config=config,
        split_fraction=split_fraction,
    )


def cmd_simulate(args: argparse.Namespace, project_config: Dict):
    start = time.time()
    payload = _load_json(args.spec)
    default_reps = (project_config.get("simulation", {}) or {}).get("reps")
    if "reps" not in payload and default_reps is not None:
        payload["reps"] = int(default_reps)
    spec = SimSpec.model_validate(payload)
    runner = SimulationRunner(spec, project_config)
    use_mlflow = args.mlflow or bool(project_config.get("mlflow", {}).get("enabled", False))
    stats = runner.run_pipeline(args.study, args.output_dir, use_mlflow)

    report = runner.report
    details = {
        "study": args.study,
        "spec": spec.model_dump(),
        "summary": report.summary.to_dict(orient="records"),
        "failures": report.failures,
        "runtime_seconds": stats.get("runtime_seconds", 0.0),
    }
    if report.power is not None:
        details["power"] = report.power.to_dict(orient="records")
    return build_report("simulate", [], spec.ab_config, start, details=details)


def _tuning_settings(args: argparse.Namespace, project_config: Dict):
    tuning = project_config.get("tuning", {}) or {}
    b_outer = args.b_outer or int(tuning.get("b_outer", 500))
    b_inner = args.b_inner or int(tuning.get("b_inner", 500))
    return tuning, b_outer, b_inner, TuningCriteria.from_config(tuning)


def _write_samples(samples: Dict, csv_dir: Optional[str]) -> Dict[str, str]:
    if not csv_dir:
        return {}
    out = Path(csv_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, sample in samples.items():
        path = out / f"pvalues_{name.replace('@', '_lam')}.csv"
        sample.to_frame().to_csv(path, index=False)
        paths[name] = str(path)
        logger.info(f"Saved {sample.size} p-values to {path}")
    return paths


def _log_tuning_to_mlflow(project_config: Dict, params: Dict, metrics: Dict, artifacts: Dict[str, str]):
    experiment_name = project_config.get("mlflow", {}).get("experiment_name", "medboot-simulations")
    try:
        mlflow.set_experiment(experiment_name)
        with mlflow.start_run():
            mlflow.log_params(params)
            mlflow.log_metrics(metrics)
            for path in artifacts.values():
                mlflow.log_artifact(path)
        logger.info("✅ Logged to MLflow successfully!")
    except Exception as e:
        logger.warning(f"Could not log to MLflow: {e}")
        logger.warning("Continuing without MLflow logging...")


def _single_mediator(dataset):
    if dataset.n_mediators != 1:
        raise InputError("Double-bootstrap commands take exactly one mediator")
    return dataset


def cmd_tune(args: argparse.Namespace, project_config: Dict):
    start = time.time()
    config = resolve_ab_config(args, project_config)
    tuning, b_outer, b_inner, criteria = _tuning_settings(args, project_config)
    dataset = _single_mediator(parse_dataset_csv(args.data, _role_map(args)))
    grid = args.grid or tuning.get("grid", [0, 1, 2, 3, 4, 5])

    selection = select_lambda(
        dataset, grid, b_outer, b_inner, config.bootstrap.seed, args.db_method, config, criteria,
        config.bootstrap.workers,
    )
    paths = _write_samples(selection.samples, args.csv)
    if args.mlflow or project_config.get("mlflow", {}).get("enabled", False):
        _log_tuning_to_mlflow(
            project_config,
            {"command": "tune", "method": args.db_method, "b_outer": b_outer, "b_inner": b_inner, "n": dataset.n},
            {"selected_lambda": selection.lam},
            paths,
        )
    details = {
        "lambda": selection.lam,
        "tag": selection.tag,
        "grid": [float(g) for g in grid],
        "diagnostics": selection.diagnostics,
        "csv": paths,
    }
    return build_report("tune", [], config, start, details=details)


def cmd_confirm(args: argparse.Namespace, project_config: Dict):
    start = time.time()
    config = resolve_ab_config(args, project_config)
    _, b_outer, b_inner, criteria = _tuning_settings(args, project_config)
    dataset = _single_mediator(parse_dataset_csv(args.data, _role_map(args)))
    lam = args.lam if args.lam is not None else 0.0

    outcome = confirmatory_analysis(
        dataset, lam, b_outer, b_inner, config.bootstrap.seed, args.db_method, config, criteria,
        config.bootstrap.workers,
    )
    paths = _write_samples(outcome.samples, args.csv)
    if args.mlflow or project_config.get("mlflow", {}).get("enabled", False):
        _log_tuning_to_mlflow(
            project_config,
            {"command": "confirm", "method": args.db_method, "label": outcome.label, "n": dataset.n},
            {f"ks_distance_{k}": v["ks_distance"] for k, v in outcome.summaries.items()},
            paths,
        )
    details = {"label": outcome.label, "lambda": lam, "summaries": outcome.summaries, "csv": paths}
    return build_report("confirm", [], config, start, details=details)


COMMANDS = {
    "run": cmd_run,
    "screen": cmd_screen,
    "simulate": cmd_simulate,
    "tune": cmd_tune,
    "confirm": cmd_confirm,
}


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point; returns the process exit code
    """
    parser = build_parser()
    args = parser.parse_args(argv)

    try:
        project_config = load_config(args.config)
        setup_logging(args.log_level or project_config.get("logging", {}).get("level", "INFO"))
        try:
            report = COMMANDS[args.command](args, project_config)
        except ValidationError as e:
            raise InvalidConfig(f"Invalid configuration: {e}") from e
    except MedbootError as e:
        logger.error(f"{type(e).__name__}: {e}")
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return exit_code_for(e)

    print(report.to_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
