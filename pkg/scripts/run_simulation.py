"""
Batch Simulation Runner

Runs the standard null and power studies one after another and logs each
to MLflow for comparison:
1. Fixed nulls H01 (alpha_S=0.5, beta_M=0), H02 (0, 0.5), H03 (0, 0)
2. Mixture null with the moderate weights
3. Power along alpha_S = beta_M and along alpha_S / beta_M at a fixed product

Usage: python scripts/run_simulation.py [--reps 500] [--n 200] [--quick]
"""

import argparse
import sys
import time
from pathlib import Path

# Add src to path
sys.path.append(str(Path(__file__).parent.parent))

from src.api.models import AbConfig, BootstrapConfig, SimSpec
from src.config import load_config, setup_logging
from src.simulation.studies import SimulationRunner

METHODS = ["poc-ab", "poc-b", "poc-sobel", "js-ab", "js-b", "js-maxp"]

STUDIES = [
    {"name": "H01: alpha_S=0.5, beta_M=0", "study": "null", "fields": {"alpha_s": 0.5, "beta_m": 0.0}},
    {"name": "H02: alpha_S=0, beta_M=0.5", "study": "null", "fields": {"alpha_s": 0.0, "beta_m": 0.5}},
    {"name": "H03: alpha_S=0, beta_M=0", "study": "null", "fields": {"alpha_s": 0.0, "beta_m": 0.0}},
    {"name": "Mixture null (moderate)", "study": "null",
     "fields": {"null_mode": "mixture", "mixture_probs": "moderate"}},
    {"name": "Power: alpha_S = beta_M", "study": "power",
     "fields": {"signal_grid": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]}},
    {"name": "Power: alpha_S / beta_M at fixed product", "study": "power",
     "fields": {"ratio_grid": [0.25, 0.5, 1.0, 2.0, 4.0]}},
]


def parse_args():
    parser = argparse.ArgumentParser(description="Run the standard medboot simulation studies")
    parser.add_argument("--reps", type=int, default=None, help="Monte-Carlo replicates per study")
    parser.add_argument("--n", type=int, default=200, help="Sample size (200 or 500 have default products)")
    parser.add_argument("--B", type=int, dest="b", default=500, help="Bootstrap replicates per test")
    parser.add_argument("--output-dir", default="results/simulation", help="Root directory for CSV tables")
    parser.add_argument("--quick", action="store_true", help="Small reps and B for a smoke run")
    parser.add_argument("--no-mlflow", action="store_true", help="Skip MLflow logging")
    return parser.parse_args()


def print_study_header(num, total, study, spec):
    """Print formatted study header"""
    print("\n" + "=" * 70)
    print(f"🔬 {study['name']}")
    print(f"📊 Study {num}/{total}")
    print("=" * 70)
    print("📋 Settings:")
    print(f"   - n:       {spec.n}")
    print(f"   - reps:    {spec.reps}")
    print(f"   - B:       {spec.ab_config.bootstrap.b}")
    print(f"   - methods: {', '.join(spec.methods)}")
    print("=" * 70)


def print_study_result(runner, study):
    report = runner.report
    if study["study"] == "power":
        table = report.power.pivot(index="signal", columns="method", values="power")
        print("\n📈 Power at omega=0.05:")
        print(table.round(3).to_string())
    else:
        table = report.summary[report.summary["omega"] == 0.05][["method", "rejection_rate", "ks_distance"]]
        print("\n📈 Size at omega=0.05:")
        print(table.round(4).to_string(index=False))
    if report.failures:
        print(f"\n⚠️  {report.failures} method run(s) failed and were excluded")


def main():
    """Main execution function"""
    args = parse_args()
    config = load_config()
    setup_logging(config.get("logging", {}).get("level", "INFO"))

    reps = args.reps or (20 if args.quick else int(config.get("simulation", {}).get("reps", 500)))
    b = 49 if args.quick else args.b
    use_mlflow = not args.no_mlflow

    print("\n" + "🚀" + "=" * 68 + "🚀")
    print("    MEDBOOT SIMULATION STUDIES")
    print("🚀" + "=" * 68 + "🚀")
    print(f"\n📝 Will run {len(STUDIES)} studies with n={args.n}, reps={reps}, B={b}")

    start_time = time.time()
    for i, study in enumerate(STUDIES, 1):
        spec = SimSpec(
            n=args.n,
            reps=reps,
            methods=METHODS,
            ab_config=AbConfig(bootstrap=BootstrapConfig(b=b)),
            seed=20240101 + i,
            **study["fields"],
        )
        print_study_header(i, len(STUDIES), study, spec)

        runner = SimulationRunner(spec, config)
        output_dir = Path(args.output_dir) / f"study_{i}_{study['study']}"
        study_start = time.time()
        runner.run_pipeline(study["study"], str(output_dir), use_mlflow)

        print_study_result(runner, study)
        print(f"\n✅ Study {i} completed in {(time.time() - study_start) / 60:.2f} minutes")
        print(f"📁 Tables saved to: {output_dir}")

    total_time = time.time() - start_time
    print("\n" + "=" * 70)
    print("🎉 ALL STUDIES COMPLETED!")
    print("=" * 70)
    print(f"\n⏱️  Total time: {total_time / 60:.2f} minutes")
    print("\n📊 Next Steps:")
    print("   1. Open MLflow UI: bash scripts/start_mlflow.sh")
    print("   2. Compare runs: python scripts/analyze_simulations.py")
    print("=" * 70 + "\n")


if __name__ == "__main__":
    try:
        main()
    except KeyboardInterrupt:
        print("\n\n⚠️  Process interrupted by user")
        sys.exit(1)
    except Exception as e:
        print(f"\n\n❌ Error occurred: {str(e)}")
        import traceback
        traceback.print_exc()
        sys.exit(1)
