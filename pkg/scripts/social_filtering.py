"""En-route savings with 1-hop, 2-hop and no social filter, plus the friendship-paradox CDF."""
import argparse

import numpy as np

from rideshare.endpoints import MatchConstraints
from rideshare.pipeline import solve
from rideshare.population import generate_city, preset
from rideshare.social import friendship_paradox_cdf, preferential_attachment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--coverage", type=float, default=0.3, help="share of commuters in the social graph")
    ap.add_argument("--mean-degree", type=float, default=6.0)
    ap.add_argument("--delta-km", type=float, default=1.0)
    ap.add_argument("--tau-min", type=float, default=10.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    people = generate_city(preset("clustered-metro", args.n, seed=args.seed))
    rng = np.random.default_rng(args.seed)
    k = int(args.coverage * len(people))
    ids = [people[i].id for i in np.sort(rng.choice(len(people), k, replace=False))]
    g = preferential_attachment(ids, args.mean_degree, seed=args.seed)
    print(f"graph: {len(g)} nodes, mean degree {2 * g.n_edges() / len(g):.2f}")
    for hops, label in ((1, "1-hop"), (2, "2-hop"), (None, "no filter")):
        c = MatchConstraints(args.delta_km, args.tau_min, hops, g if hops else None)
        print(f"{label:>10}: {solve(people, c, 'enroute', seed=args.seed).success_percent:6.2f}%")
    r = np.asarray(friendship_paradox_cdf(g))
    print(f"friendship paradox: ratio > 1 for {np.mean(r > 1):.1%} of nodes")
    for q in (0.1, 0.25, 0.5, 0.75, 0.9):
        print(f"  ratio quantile {q:.2f}: {np.quantile(r, q):.2f}")


if __name__ == "__main__":
    main()
