"""Run every canned runner and print one PASS/FAIL line per acceptance criterion.

Usage: python scripts/run_acceptance.py [--out-dir out]
"""

import argparse
import sys
from pathlib import Path

from frt_reach import experiments as ex


def main() -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out-dir", type=Path, default=Path("out"))
    args = p.parse_args()
    outcomes = [
        ex.run_1d_comparison(args.out_dir / "1d_comparison"),
        ex.run_double_integrator(args.out_dir / "di_frt"),
        ex.run_pendulum(args.out_dir / "pendulum"),
        ex.run_property_suite(args.out_dir / "properties"),
    ]
    criteria = sorted((c for o in outcomes for c in o.criteria), key=lambda c: c.number)
    for c in criteria:
        print(c.line())
    n_pass = sum(c.passed for c in criteria)
    print(f"{n_pass}/{len(criteria)} criteria pass")
    return 0 if n_pass == len(criteria) else 4


if __name__ == "__main__":
    sys.exit(main())
