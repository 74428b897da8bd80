#!/usr/bin/env python3
"""Sweep the ensemble size N and tabulate suite energy and category shares.

Writes a CSV (stdout or --output) with one row per N: total energy, forecast
fraction, and the data-assimilation share of the non-forecast remainder.
"""

import argparse
import csv
import sys

from epsim import JobCategory, category_breakdown, load_bundled_model, suite_total
from epsim.model import EnsembleConfig, load_suite_model


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", default=None, help="suite model JSON (default: bundled)")
    parser.add_argument("--n-control", type=int, default=2)
    parser.add_argument("--n-max", type=int, default=62, help="largest total member count")
    parser.add_argument("--step", type=int, default=4)
    parser.add_argument("-o", "--output", default=None)
    args = parser.parse_args()

    model = load_suite_model(args.model) if args.model else load_bundled_model()
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["n_total", "total_kj", "forecast_fraction", "da_share_non_forecast"])
    for N in range(args.n_control, args.n_max + 1, args.step):
        cfg = EnsembleConfig(args.n_control, N)
        total = suite_total(model, cfg)
        bd = category_breakdown(model, cfg)
        non_fc = category_breakdown(model, cfg, exclude_forecast=True)
        writer.writerow(
            [
                N,
                f"{total:.1f}",
                f"{bd.fractions.get(JobCategory.FORECAST, 0.0):.4f}",
                f"{non_fc.fractions.get(JobCategory.DATA_ASSIMILATION, 0.0):.4f}",
            ]
        )
    if args.output:
        out.close()
        print(f"wrote {args.output}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
