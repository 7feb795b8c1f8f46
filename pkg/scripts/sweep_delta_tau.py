"""Success of end-points and en-route matching over a (delta, tau) grid, as CSV.

    python scripts/sweep_delta_tau.py --preset clustered-metro --n 5000 --out sweep.csv
"""
import argparse
import csv
import sys
import time

from rideshare.endpoints import MatchConstraints
from rideshare.pipeline import solve
from rideshare.population import PRESETS, generate_city, preset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--preset", choices=PRESETS, default="clustered-metro")
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--sigma-min", type=float, default=30.0)
    ap.add_argument("--deltas", default="0.2,0.4,0.6,0.8,1.0")
    ap.add_argument("--taus", default="5,10,15,20,inf")
    ap.add_argument("--modes", default="endpoints,enroute")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="-")
    args = ap.parse_args()

    people = generate_city(preset(args.preset, args.n, seed=args.seed, sigma_minutes=args.sigma_min))
    deltas = [float(x) for x in args.deltas.split(",")]
    taus = [None if x == "inf" else float(x) for x in args.taus.split(",")]
    out = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["preset", "mode", "delta_km", "tau_min", "success_percent", "tighter_bound_percent", "runtime_s"])
    for mode in args.modes.split(","):
        for d in deltas:
            for t in taus:
                t0 = time.perf_counter()
                r = solve(people, MatchConstraints(d, t), mode, seed=args.seed)
                w.writerow([args.preset, mode, d, "inf" if t is None else t, f"{r.success_percent:.3f}",
                            f"{r.tighter_bound_percent:.3f}", f"{time.perf_counter() - t0:.2f}"])
                out.flush()


if __name__ == "__main__":
    main()
