"""Success rate against alpha0 for XH, LM and SBB on (5,6) graphs of growing size.

    python scripts/waterfall_sweep.py --sizes 3000 15000 100002 --trials 200

For each size and algorithm this writes sweep_<alg>_n<n>.csv plus a
gnuplot-ready .dat file, then prints the width of the alpha0 interval over
which the rate falls from above 0.9 to below 0.1.  The widths should shrink
(or stay equal) as n grows, with the drop centred on the DE threshold.
"""

import argparse
from pathlib import Path

import numpy as np

from nbvb.de import DeParams
from nbvb.decoders import Algorithm
from nbvb.graph import GraphSpec, valid_n
from nbvb.montecarlo import SweepConfig, run_sweep, transition_width, write_gnuplot, write_sweep_csv
from nbvb.threshold import find_threshold


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[3000, 15000, 100002])
    ap.add_argument("--algs", nargs="+", default=["xh", "lm", "sbb"])
    ap.add_argument("--trials", type=int, default=200)
    ap.add_argument("--step", type=float, default=0.01)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", default="results/waterfall")
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    grid = tuple(np.round(np.arange(0.10, 0.45 + 1e-9, args.step), 10))
    widths = {}
    for alg in args.algs:
        thr = find_threshold(DeParams(5, 6, alg)).threshold
        for n in args.sizes:
            n = valid_n(n, 5, 6)
            cfg = SweepConfig(GraphSpec(n, 5, 6, seed=args.seed), Algorithm(alg), grid,
                              args.trials, master_seed=args.seed)
            curve = run_sweep(cfg, args.jobs)
            write_sweep_csv(curve, out / f"sweep_{alg}_n{n}.csv")
            write_gnuplot(curve, out / f"sweep_{alg}_n{n}.dat")
            widths[alg, n] = transition_width(curve)
            anomalies = sum(p.anomaly_count for p in curve.points)
            print(f"{alg:>5} n={n:>7}  DE threshold {thr:.4f}  transition width "
                  f"{widths[alg, n]:.3f}  anomalies {anomalies}  flags {curve.monotonicity_flags}")
    for alg in args.algs:
        w = [widths[alg, valid_n(n, 5, 6)] for n in args.sizes]
        verdict = "sharpening" if all(b <= a for a, b in zip(w, w[1:])) else "not monotone"
        print(f"{alg}: widths {w} -> {verdict}")


if __name__ == "__main__":
    main()
