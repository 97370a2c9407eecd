"""Run the default invariant battery and write per-instance metrics.

    python3 scripts/run_battery.py [--out results/battery.csv] [--threads N]
"""
import argparse
import sys

from pqlab.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="battery.csv")
    ap.add_argument("--threads", type=int, default=None)
    args = ap.parse_args()
    argv = ["battery", "--out", args.out]
    if args.threads:
        argv += ["--threads", str(args.threads)]
    sys.exit(main(argv))
