#!/usr/bin/env python3
"""Run the small sensor-localization comparison and summarize convergence.

Prints, per method, the initial and final gradient magnitudes and the first
iteration below 1% of the initial magnitude (the convergence-rate picture;
the per-iteration CSVs under runs/ hold the full traces).
"""

import argparse
import csv
from pathlib import Path

import yaml

from trsvi.experiment import run_experiment

REPO = Path(__file__).resolve().parent.parent


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=REPO / "configs" / "snlp_small.yaml")
    parser.add_argument("--output-dir", default="artifacts/snlp_experiment")
    parser.add_argument("--workers", type=int, default=2)
    parser.add_argument("--seed", type=int, default=0,
                        help="single seed keeps the default run quick")
    args = parser.parse_args()

    artifact = run_experiment(args.config, args.output_dir,
                              seed_override=args.seed, workers=args.workers)
    manifest = yaml.safe_load((artifact / "manifest.yaml").read_text())
    print("\ngradient magnitude per method (seed "
          f"{manifest['run']['seeds'][0]}):")
    for method in manifest["method"]:
        label = method["label"]
        trace = artifact / "runs" / label / f"seed_{manifest['run']['seeds'][0]}" / "trace.csv"
        with open(trace, newline="") as fh:
            mags = [float(row["gradient_magnitude"])
                    for row in csv.DictReader(fh)]
        if not mags:
            continue
        below = next((i for i, m in enumerate(mags) if m < 0.01 * mags[0]),
                     None)
        below_txt = f"iter {below}" if below is not None else "never"
        print(f"  {label:<16} start {mags[0]:9.3f}  end {mags[-1]:9.4f}  "
              f"below 1%: {below_txt}")
    if (artifact / "metrics.yaml").exists():
        metrics = yaml.safe_load((artifact / "metrics.yaml").read_text())
        print("\nMMD against the Metropolis reference:")
        for label, stats in metrics["methods"].items():
            print(f"  {label:<16} {stats['mean']:.5f}")
    print(f"\nartifact: {artifact}")


if __name__ == "__main__":
    main()
