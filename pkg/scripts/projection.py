"""Savings-versus-sample-size curve for one setting and its fitted projection."""
import argparse
import json

import numpy as np

from rideshare.endpoints import MatchConstraints
from rideshare.extrapolation import fit_savings_curve, sample_curve
from rideshare.population import generate_city, preset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--mode", choices=("endpoints", "enroute"), default="endpoints")
    ap.add_argument("--delta-km", type=float, default=1.0)
    ap.add_argument("--tau-min", type=float, default=10.0)
    ap.add_argument("--fractions", default="0.1,0.2,0.4,0.6,0.8,1.0")
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    people = generate_city(preset("clustered-metro", args.n, seed=args.seed))
    fr = [float(x) for x in args.fractions.split(",")]
    pts = sample_curve(people, fr, args.mode, MatchConstraints(args.delta_km, args.tau_min),
                       repeats=args.repeats, seed=args.seed, jobs=args.jobs)
    curve = fit_savings_curve(pts)
    for f, s in pts:
        print(f"{f:5.2f} {s:7.2f}  fit {float(curve(f)):7.2f}")
    for m in (1.5, 2.0, 3.6, 10.0):
        print(f"x{m:<4} projected {curve.project(m):7.2f}")
    print(json.dumps({"a": curve.a, "b": curve.b, "c": curve.c, "rms": float(np.sqrt(np.mean(np.square(curve.residuals))))}))


if __name__ == "__main__":
    main()
