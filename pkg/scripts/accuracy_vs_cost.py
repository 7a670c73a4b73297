"""Accuracy versus cost: TMERA sweeps over (q, t) against full-tensor MERA.

Runs ``tmera sweep`` and fits ``eps = A chi^(-beta)`` to the full-tensor rows
and ``eps = A cost^(-beta)`` to the TMERA rows at fixed q.
"""
import argparse
import csv
from collections import defaultdict
from pathlib import Path

from tmera import cli
from tmera.costmodel import fit_power_law

ROOT = Path(__file__).resolve().parents[1]


def _fit(label, x, y):
    if len(x) < 3:
        print(f"{label}: {len(x)} points, no fit")
        return
    f = fit_power_law(x, y)
    print(f"{label}: beta = {f.exponent:.3f}, prefactor = {f.prefactor:.3g}, rms = {f.residual:.2g}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--config", default=str(ROOT / "configs" / "sweep_xxx.json"))
    ap.add_argument("--out", default="out/sweep")
    ap.add_argument("--restarts", type=int)
    args = ap.parse_args()
    argv = ["sweep", "--config", args.config, "--out", args.out]
    if args.restarts:
        argv += ["--restarts", str(args.restarts)]
    if cli.main(argv):
        raise SystemExit("sweep failed")
    with open(Path(args.out) / "sweep.csv") as fh:
        rows = [r for r in csv.DictReader(fh) if r["accuracy"] and float(r["accuracy"]) > 0]
    for r in rows:
        print(f"{r['parametrization']:16s} q={r['q']} t={r['t']}  cost {float(r['cost']):.4g}  "
              f"accuracy {float(r['accuracy']):.4g}")
    full = [r for r in rows if r["parametrization"] == "full-tensor"]
    _fit("full tensor vs chi", [float(r["chi"]) for r in full], [float(r["accuracy"]) for r in full])
    by_q = defaultdict(list)
    for r in rows:
        if r["parametrization"] != "full-tensor":
            by_q[r["q"]].append(r)
    for q, rs in sorted(by_q.items()):
        _fit(f"TMERA q={q} vs cost", [float(r["cost"]) for r in rs],
             [float(r["accuracy"]) for r in rs])


if __name__ == "__main__":
    main()
