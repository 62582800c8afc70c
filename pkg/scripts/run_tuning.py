"""
Double-Bootstrap Tuning Demo

This script:
1. Simulates a single-mediator dataset (or loads one from CSV)
2. Selects lambda by the double bootstrap
3. Runs the confirmatory pattern analysis
4. Runs the adaptive test at the selected lambda

Usage:
    python scripts/run_tuning.py --alpha-s 0 --beta-m 0 --n 200
    python scripts/run_tuning.py --data my.csv --exposure S --mediator M --outcome Y
"""

import argparse
import sys
from pathlib import Path

# Add src to path
sys.path.append(str(Path(__file__).parent.parent))

from src.api.models import AbConfig, BootstrapConfig, SimSpec
from src.config import load_config, setup_logging
from src.data_processing.dataset import ColumnRoleMap, parse_dataset_csv
from src.models.poc_ab import adaptive_poc_test
from src.models.resampling import derive_substream
from src.models.tuning import TuningCriteria, confirmatory_analysis, select_lambda
from src.simulation.generators import generate


def parse_args():
    parser = argparse.ArgumentParser(description="Select lambda and classify the null pattern")
    parser.add_argument("--data", help="CSV file; omitted -> simulate")
    parser.add_argument("--exposure", default="S")
    parser.add_argument("--mediator", default="M1")
    parser.add_argument("--outcome", default="Y")
    parser.add_argument("--covariates", default="", help="Comma-separated covariate columns")
    parser.add_argument("--n", type=int, default=200)
    parser.add_argument("--alpha-s", type=float, default=0.0, dest="alpha_s")
    parser.add_argument("--beta-m", type=float, default=0.0, dest="beta_m")
    parser.add_argument("--b-outer", type=int, default=None, dest="b_outer")
    parser.add_argument("--b-inner", type=int, default=None, dest="b_inner")
    parser.add_argument("--seed", type=int, default=20240101)
    return parser.parse_args()


def load_dataset(args):
    """Read the CSV, or simulate from the linear SEM"""
    if args.data:
        print(f"📂 Loading data from {args.data}...")
        covariates = tuple(c.strip() for c in args.covariates.split(",") if c.strip())
        role_map = ColumnRoleMap(args.exposure, (args.mediator,), args.outcome, covariates)
        return parse_dataset_csv(args.data, role_map)

    print(f"🎲 Simulating n={args.n} with alpha_S={args.alpha_s}, beta_M={args.beta_m}...")
    spec = SimSpec(n=args.n, alpha_s=args.alpha_s, beta_m=args.beta_m)
    return generate(spec, derive_substream(args.seed, 0))


def main():
    """Main tuning pipeline"""
    args = parse_args()
    config = load_config()
    setup_logging(config.get("logging", {}).get("level", "INFO"))
    tuning = config.get("tuning", {})
    b_outer = args.b_outer or int(tuning.get("b_outer", 500))
    b_inner = args.b_inner or int(tuning.get("b_inner", 500))
    criteria = TuningCriteria.from_config(tuning)

    print("\n" + "🚀" + "=" * 68 + "🚀")
    print("           DOUBLE-BOOTSTRAP LAMBDA SELECTION")
    print("🚀" + "=" * 68 + "🚀" + "\n")

    dataset = load_dataset(args)
    print(f"✅ {dataset.n:,} rows, {dataset.n_covariates - 1} covariate(s)")
    print(f"⏱️  {b_outer} outer x {b_inner} inner replicates per sample")

    print("\n🎛️  Selecting lambda...")
    selection = select_lambda(dataset, tuning.get("grid", [0, 1, 2, 3, 4, 5]), b_outer, b_inner,
                              args.seed, criteria=criteria)
    print(f"   Selected lambda: {selection.lam:g} ({selection.tag})")
    for name, sample in selection.samples.items():
        summary = sample.summary(criteria)
        print(f"   - {name:10s} KS={summary['ks_distance']:.4f}  P(p<0.05)={summary['fraction_below']:.3f}")

    print("\n🔍 Confirmatory analysis at lambda=0...")
    outcome = confirmatory_analysis(dataset, 0.0, b_outer, b_inner, args.seed, criteria=criteria)
    print(f"   Pattern: {outcome.label}")

    print(f"\n📊 Adaptive test at lambda={selection.lam:g}...")
    result = adaptive_poc_test(dataset, AbConfig(lam=selection.lam, bootstrap=BootstrapConfig(seed=args.seed)))
    print(f"   Estimate: {result.estimate:.6f}")
    print(f"   p-value:  {result.p_value:.4f}")

    print("\n" + "=" * 70)
    print("✅ Tuning complete!")
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
