#!/usr/bin/env python3
"""Full extrapolation pipeline: banded-regular flow-fit scan over small
sizes, linear fit of the per-size means, and extrapolated equilibration
times at sizes beyond exact diagonalisation.

Outputs under --out: flow_scan.csv, flow_fit.ini, extrapolation.csv.
"""

import argparse
import sys

from spinflow.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="extrapolation_out")
    ap.add_argument("--fit-L", default="4-8", help="sizes for the flow fit")
    ap.add_argument("--target-L", default="10-12", help="extrapolation sizes")
    ap.add_argument("--n", type=int, default=3)
    ap.add_argument("--d", type=int, default=2)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--samples", default=None,
                    help="per-size override of the scan schedules")
    args = ap.parse_args()

    scan = ["flow-scan", "--variant", "brf", "--L", args.fit_L,
            "--n", str(args.n), "--d", str(args.d), "--seed", str(args.seed),
            "--out", args.out]
    if args.samples:
        scan += ["--samples", args.samples]
    for cmd in (
        scan,
        ["fit", "--kind", "flow", "--scan", f"{args.out}/flow_scan.csv",
         "--out", args.out],
        ["extrapolate", "--fit", f"{args.out}/flow_fit.ini",
         "--L", args.target_L, "--n", str(args.n), "--d", str(args.d),
         "--seed", str(args.seed), "--out", args.out]
        + (["--samples", args.samples] if args.samples else []),
    ):
        code = cli_main(cmd)
        if code != 0:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
