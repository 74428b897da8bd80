#!/usr/bin/env python3
"""Makespan as a function of the forecast speedup factor.

Simulates the expanded suite for a range of forecast wall-clock divisors and
prints the resulting makespan next to the closed-form bound, showing the
saturation at the non-forecast path length.
"""

import argparse
import sys

from epsim import JobCategory, MemberPath, load_bundled_model, max_speedup, simulate
from epsim.model import expand_instances, load_suite_model
from epsim.whatif import Scenario, apply_scenario

FACTORS = [1, 1.5, 2, 3, 5, 10, 100, 1e6]


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--model", default=None, help="suite model JSON (default: bundled)")
    args = parser.parse_args()

    model = load_suite_model(args.model) if args.model else load_bundled_model()
    baseline = simulate(expand_instances(model), model.cluster).makespan_s
    bound = max_speedup(model, JobCategory.FORECAST, MemberPath.CONTROL)
    print(f"baseline makespan: {baseline:.1f} s, closed-form speedup bound: {bound:.3f}")
    print(f"{'divisor':>10} {'makespan [s]':>14} {'speedup':>9}")
    for factor in FACTORS:
        scaled = apply_scenario(model, Scenario(speedup={JobCategory.FORECAST: float(factor)}))
        makespan = simulate(expand_instances(scaled), scaled.cluster).makespan_s
        print(f"{factor:>10g} {makespan:>14.1f} {baseline / makespan:>9.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
