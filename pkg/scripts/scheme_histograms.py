"""Restart histograms of the five convergence schemes on the XXX chain.

Runs ``tmera hist`` for every ``configs/hist_*.json`` and prints best and
median energies per scheme.
"""
import argparse
import csv
import statistics
from pathlib import Path

from tmera import cli

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--out", default="out/schemes")
    ap.add_argument("--restarts", type=int, help="override the restart count of every config")
    args = ap.parse_args()
    for cfg in sorted((ROOT / "configs").glob("hist_*.json")):
        out = Path(args.out) / cfg.stem.removeprefix("hist_")
        argv = ["hist", "--config", str(cfg), "--out", str(out)]
        if args.restarts:
            argv += ["--restarts", str(args.restarts)]
        if cli.main(argv):
            print(f"{cfg.stem}: failed")
            continue
        with open(out / "records.csv") as fh:
            energies = [float(r["energy"]) for r in csv.DictReader(fh) if r["energy"]]
        print(f"{cfg.stem:32s} best {min(energies):.10f}  median {statistics.median(energies):.10f}")


if __name__ == "__main__":
    main()
