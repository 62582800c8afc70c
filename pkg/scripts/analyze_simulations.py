"""
MLflow Simulation Results Analyzer

Reads the simulation runs logged to MLflow and prints a size comparison
across methods: rejection rate at omega=0.05 and KS distance to uniform.

Usage: python scripts/analyze_simulations.py [--experiment medboot-simulations]
"""

import argparse
from pathlib import Path

import mlflow
import pandas as pd

OMEGA = "0.05"


def get_all_runs(experiment_name):
    """Get all MLflow runs from the simulation experiment"""
    mlflow.set_tracking_uri("file:./mlruns")
    client = mlflow.tracking.MlflowClient()

    experiment = client.get_experiment_by_name(experiment_name)
    if experiment is None:
        print(f"❌ Experiment '{experiment_name}' not found!")
        return None
    return client.search_runs(experiment_ids=[experiment.experiment_id])


def create_comparison_table(runs):
    """One row per (run, method) with size and KS distance"""
    rows = []
    for run in runs:
        params, metrics = run.data.params, run.data.metrics
        for method in params.get("methods", "").split(","):
            if not method:
                continue
            rows.append({
                "Run ID": run.info.run_id[:8],
                "Scenario": params.get("scenario", ""),
                "n": int(params.get("n", 0)),
                "Null": params.get("null_mode", ""),
                "Method": method,
                f"Size@{OMEGA}": metrics.get(f"rejection_rate_{method}_{OMEGA}", float("nan")),
                "KS distance": metrics.get(f"ks_distance_{method}", float("nan")),
                "Runtime (min)": metrics.get("runtime_seconds", 0) / 60,
            })
    return pd.DataFrame(rows)


def print_summary(df):
    """Print formatted summary"""
    print("\n" + "=" * 90)
    print("📊 SIMULATION COMPARISON REPORT")
    print("=" * 90)
    print("\n" + df.to_string(index=False))
    print("\n" + "=" * 90)

    by_method = df.groupby("Method")[[f"Size@{OMEGA}", "KS distance"]].mean().sort_values("KS distance")
    print("\n🏆 Mean over runs (lowest KS distance first):")
    print(by_method.round(4).to_string())

    oversized = by_method[by_method[f"Size@{OMEGA}"] > 2 * float(OMEGA)]
    if len(oversized):
        print(f"\n⚠️  Inflated size (> {2 * float(OMEGA):g}) for: {', '.join(oversized.index)}")
    print("\n" + "=" * 90 + "\n")


def main():
    """Main execution"""
    parser = argparse.ArgumentParser(description="Compare simulation runs logged to MLflow")
    parser.add_argument("--experiment", default="medboot-simulations")
    parser.add_argument("--output", default="results/simulation_comparison.csv")
    args = parser.parse_args()

    print("\n🔍 Analyzing MLflow simulation runs...")
    try:
        runs = get_all_runs(args.experiment)
        if not runs:
            print("❌ No runs found!")
            return
        print(f"✅ Found {len(runs)} runs")

        df = create_comparison_table(runs)
        print_summary(df)

        output = Path(args.output)
        output.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(output, index=False)
        print(f"💾 Report saved to: {output}")
        print("✅ Analysis complete!")

    except Exception as e:
        print(f"❌ Error: {e}")
        import traceback
        traceback.print_exc()


if __name__ == "__main__":
    main()
