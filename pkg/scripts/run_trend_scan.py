#!/usr/bin/env python3
"""Equilibration-time trends of the six ensembles over a range of sizes.

Reproduces the ensemble-comparison experiment at a configurable scale:
per-(variant, size) means and standard errors of T_eq land in
<out>/teq_scan_means.csv, per-sample records in teq_scan.jsonl.
"""

import argparse
import sys

from spinflow.cli import main as cli_main


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="trend_scan_out")
    ap.add_argument("--L", default="4-8", help="size range, e.g. 4-9")
    ap.add_argument("--n", type=int, default=2)
    ap.add_argument("--d", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--samples", default=None,
                    help="per-size override of the 2^(18-L) schedule")
    ap.add_argument("--variants", default="exh,exa,brf,bvf,brc,reg")
    args = ap.parse_args()

    cmd = ["teq-scan", "--variant", args.variants, "--L", args.L,
           "--n", str(args.n), "--d", str(args.d), "--seed", str(args.seed),
           "--out", args.out]
    if args.samples:
        cmd += ["--samples", args.samples]
    return cli_main(cmd)


if __name__ == "__main__":
    sys.exit(main())
