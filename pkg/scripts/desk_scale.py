"""Best accuracy on the N=64 XXX chain for several circuit depths t."""
import argparse
import time

from tmera import models as M
from tmera import network as Nw
from tmera import schemes as S
from tmera.optimize import OptimizerConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--t", type=int, nargs="+", default=[1, 2, 4])
    ap.add_argument("--q", type=int, default=2)
    ap.add_argument("--restarts", type=int, default=20)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    for t in args.t:
        t0 = time.perf_counter()
        recs = S.run_restarts(S.SchemeSpec(S.BUILD_UP, stage_budget=200),
                              Nw.MeraConfig(64, 5, q=args.q, t=t), M.xxz(1.0),
                              OptimizerConfig(max_iter=600), args.restarts, workers=args.workers)
        best = S.best_of(recs)
        print(f"t={t}: best accuracy {best.accuracy:.5f} (seed {best.seed}), "
              f"{time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
