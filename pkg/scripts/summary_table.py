"""Summary table: savings at several sample sizes and constraints, plus the 3.6x projection.

Rows mirror a results table keyed by (sample %, delta, tau, sigma); the
projected rows come from fitting s(n) = a - b n^-c to the sampled points.
"""
import argparse
import json

from rideshare.endpoints import MatchConstraints
from rideshare.extrapolation import fit_savings_curve, sample_curve
from rideshare.population import generate_city, preset


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--fractions", default="0.2,0.4,0.6,0.8,1.0")
    ap.add_argument("--target", type=float, default=3.6)
    ap.add_argument("--repeats", type=int, default=1)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--json", default=None, help="also write the rows here")
    args = ap.parse_args()

    fracs = [float(x) for x in args.fractions.split(",")]
    settings = [(1.0, None, 30.0), (1.0, 10.0, 30.0), (0.5, 10.0, 30.0), (1.0, 10.0, 60.0)]
    print(f"{'sample%':>8} {'delta':>5} {'tau':>5} {'sigma':>5} {'end-points':>10} {'en-route':>9}")
    rows = []
    for delta, tau, sigma in settings:
        people = generate_city(preset("clustered-metro", args.n, seed=args.seed, sigma_minutes=sigma))
        c = MatchConstraints(delta, tau)
        curves = {m: sample_curve(people, fracs, m, c, repeats=args.repeats, seed=args.seed, jobs=args.jobs)
                  for m in ("endpoints", "enroute")}
        for i, f in enumerate(fracs):
            ep, er = curves["endpoints"][i][1], curves["enroute"][i][1]
            print(f"{100 * f:8.0f} {delta:5.1f} {tau or '-':>5} {sigma:5.0f} {ep:10.1f} {er:9.1f}")
            rows.append(dict(sample=f, delta=delta, tau=tau, sigma=sigma, endpoints=ep, enroute=er))
        proj = {m: fit_savings_curve(p).project(args.target) for m, p in curves.items()}
        print(f"{100 * args.target:8.0f} {delta:5.1f} {tau or '-':>5} {sigma:5.0f} "
              f"{proj['endpoints']:10.1f} {proj['enroute']:9.1f}   (projected)")
        rows.append(dict(sample=args.target, delta=delta, tau=tau, sigma=sigma, projected=True, **proj))
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=1)


if __name__ == "__main__":
    main()
