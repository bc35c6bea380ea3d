#!/usr/bin/env python3
"""Check that every kernel variant reproduces the baseline flow field.

Advances the Taylor-Green vortex a few steps under each variant and
reports the worst relative deviation from bl per conserved component.
"""

import argparse
import sys

from fdlab.bench import validate_mode
from fdlab.solver import RunConfig


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--grid", type=int, default=32)
    parser.add_argument("--steps", type=int, default=10)
    args = parser.parse_args(argv)

    config = RunConfig(n=args.grid, steps=args.steps, repeats=1)
    report = validate_mode(config)
    for variant in sorted(report.deviations, key=lambda v: max(report.deviations[v].values())):
        worst = max(report.deviations[variant].values())
        print(f"{variant:4s} worst relative deviation {worst:.3e}")
    for message in report.messages:
        print(message)
    verdict = "PASS" if report.passed else "FAIL"
    print(f"validation: {verdict} (tolerance {report.tolerance:g})")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
