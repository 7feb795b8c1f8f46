"""Command-line entry point: generate, generate-cdr, train, infer, solve, sweep, project, validate."""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import cdr as cdr_mod
from .endpoints import Assignment, MatchConstraints, validate_assignment
from .enroute import RouteGrid, enroute_pair_check
from .extrapolation import FitError, fit_savings_curve, sample_curve
from .pipeline import SOLVERS, InvariantViolation, solve
from .population import (PRESETS, CityConfig, CommuterFileError, ConfigError, generate_city, load_commuters,
                         preset, sample_departures, save_commuters)
from .social import load_edges

log = logging.getLogger("rideshare")


class CliError(Exception):
    pass


def _tau(text):
    if text is None:
        return None
    if str(text).lower() in ("inf", "none", "unbounded", "-"):
        return None
    return float(text)


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _tau_list(text):
    return [_tau(x.strip()) for x in text.split(",") if x.strip()]


def _add_constraints(p):
    p.add_argument("--delta-km", type=float, default=1.0, help="max home/work distance between riders")
    p.add_argument("--tau-min", type=_tau, default=None, help="departure tolerance in minutes (omit: unbounded)")
    p.add_argument("--sigma-min", type=float, default=None,
                   help="resample departures around 9am/5pm with this std (minutes) before solving")
    p.add_argument("--social-hops", type=int, choices=(1, 2), default=None)
    p.add_argument("--social-graph", type=Path, default=None, help="edge list CSV user_a,user_b")


def _add_solver(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--neighborhood", type=int, default=32, help="candidate driver sets per local-search step")
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--strict-richer", action="store_true",
                   help="en-route: only strictly fuller cars may take riders")
    p.add_argument("--cell-km", type=float, default=0.5, help="en-route road grid cell size")


def _constraints(args, delta=None, tau="unset") -> MatchConstraints:
    graph = None
    if args.social_hops is not None:
        if args.social_graph is None:
            raise CliError("--social-hops needs --social-graph")
        graph = load_edges(args.social_graph)
    return MatchConstraints(
        delta_km=args.delta_km if delta is None else delta,
        tau_min=args.tau_min if tau == "unset" else tau,
        social_hops=args.social_hops,
        social_graph=graph,
    )


def _population(args):
    try:
        people = load_commuters(args.commuters)
    except OSError as exc:
        raise CliError(f"cannot read {args.commuters}: {exc}") from exc
    sigma = getattr(args, "sigma_min", None)
    if sigma is not None:
        lh, lw = sample_departures(sigma, np.random.default_rng([args.seed, 7]), len(people))
        people = [replace(p, leave_home=round(float(a), 3), leave_work=round(float(b), 3))
                  for p, a, b in zip(people, lh, lw)]
    return people


def _write_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=False)
    if path is None or str(path) == "-":
        print(text)
    else:
        Path(path).write_text(text + "\n", encoding="utf-8")


# -- commands -------------------------------------------------------------------


def cmd_generate(args):
    if args.config is not None:
        try:
            cfg = CityConfig.from_dict(json.loads(Path(args.config).read_text(encoding="utf-8")))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliError(f"cannot read config {args.config}: {exc}") from exc
    elif args.preset is not None:
        cfg = preset(args.preset, args.n if args.n is not None else 10_000, args.seed if args.seed is not None else 0)
    else:
        raise CliError("give --config or --preset")
    overrides = {}
    if args.n is not None:
        overrides["n_commuters"] = args.n
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.car_ownership is not None:
        overrides["car_ownership"] = args.car_ownership
    if args.sigma_min is not None:
        overrides["sigma_minutes"] = args.sigma_min
    cfg = replace(cfg, **overrides)
    cfg.validate()
    people = generate_city(cfg)
    save_commuters(people, args.out)
    summary = {"n": len(people), "mode": cfg.mode, "seed": cfg.seed,
               "car_owners": sum(p.has_car for p in people)}
    if cfg.mode == "clustered":
        summary["clusters"] = {k: len(cfg._clusters_for(k)) for k in ("home", "work")}
    if args.dump_config:
        Path(args.dump_config).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n", encoding="utf-8")
    print(json.dumps(summary))
    return 0


def cmd_generate_cdr(args):
    people = load_commuters(args.commuters)
    grid = RouteGrid.covering(people, args.cell_km) if people else None
    events, truth = cdr_mod.synthetic_cdr(people, args.calls_per_user, args.days, args.signal,
                                          seed=args.seed, grid=grid, speed_kmh=args.speed_kmh)
    cdr_mod.save_cdr(events, args.out)
    if args.truth:
        save_commuters(list(truth.values()), args.truth)
    print(json.dumps({"users": len(truth), "events": len(events), "seed": args.seed}))
    return 0


def _labelled(events, truth_path, radius):
    truth = {c.id: c for c in load_commuters(truth_path)}
    users = cdr_mod.group_by_user(events)
    return [(cdr_mod.cluster_events(evs, radius), truth[u].home, truth[u].work)
            for u, evs in sorted(users.items()) if u in truth]


def cmd_train(args):
    labelled = _labelled(cdr_mod.load_cdr(args.cdr), args.truth, args.merge_radius_km)
    try:
        model = cdr_mod.train_weights(labelled)
    except cdr_mod.TrainingError as exc:
        raise CliError(str(exc)) from exc
    _write_json(model.to_dict(), args.out)
    print(json.dumps({"users": len(labelled), "accuracy": cdr_mod.training_accuracy(labelled, model)}),
          file=sys.stderr)
    return 0


def cmd_infer(args):
    try:
        events = cdr_mod.load_cdr(args.cdr)
    except OSError as exc:
        raise CliError(f"cannot read {args.cdr}: {exc}") from exc
    model = None
    if args.weights:
        model = cdr_mod.ScoreWeights.from_dict(json.loads(Path(args.weights).read_text(encoding="utf-8")))
    users = cdr_mod.group_by_user(events)
    grid = None
    if users:
        lats = [e.tower.lat for e in events]
        lons = [e.tower.lon for e in events]
        from .geo import Grid

        g = Grid.covering(lats, lons, args.cell_km, margin_km=1.0)
        grid = RouteGrid(g.origin, g.cell_km, g.rows, g.cols)
    rows, deps, rejected, commuters = [], [], [], []
    for uid in sorted(users):
        r = cdr_mod.infer_user(uid, users[uid], model, args.merge_radius_km, grid, args.speed_kmh)
        if r.result is None:
            rejected.append([uid, r.reason])
            continue
        h, w = r.result.home, r.result.work
        rows.append([uid, f"{h.lat:.7f}", f"{h.lon:.7f}", f"{w.lat:.7f}", f"{w.lon:.7f}"])
        deps.append([uid, "" if r.leave_home is None else f"{r.leave_home:.3f}",
                     "" if r.leave_work is None else f"{r.leave_work:.3f}"])
    _csv(args.out, ["user_id", "home_lat", "home_lon", "work_lat", "work_lon"], rows)
    if args.departures:
        _csv(args.departures, ["user_id", "leave_home_min", "leave_work_min"], deps)
    sidecar = args.sidecar or str(Path(args.out).with_suffix("")) + ".ineligible.csv"
    _csv(sidecar, ["user_id", "reason"], rejected)
    print(json.dumps({"users": len(users), "identified": len(rows), "rejected": len(rejected)}))
    return 0


def _csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def cmd_solve(args):
    people = _population(args)
    c = _constraints(args)
    res = solve(people, c, args.mode, seed=args.seed, neighborhood_size=args.neighborhood,
                max_iters=args.max_iters, strict_richer=args.strict_richer, cell_km=args.cell_km)
    owners = [p for p in people if p.has_car]
    report = res.report(c, owners)
    if args.out and res.assignment is not None:
        routes = None
        if args.mode == "enroute" and res.grid is not None:
            from .enroute import route_for

            by_id = {p.id: p for p in owners}
            routes = {d: route_for(by_id[d], res.grid).as_pairs() for d in sorted(res.assignment.drivers)}
        doc = res.assignment.to_json(c, None, routes)
        doc["cost"] = report["cost"]
        doc["mode"] = args.mode
        if res.grid is not None:
            g = res.grid
            doc["grid"] = {"origin": [g.origin.lat, g.origin.lon], "cell_km": g.cell_km,
                           "rows": g.rows, "cols": g.cols}
        _write_json(doc, args.out)
    _write_json(report, args.report)
    return 0


def _sweep_cell(task):
    people, delta, tau, solver, social_hops, graph_path, sigma, seed, kw = task
    graph = load_edges(graph_path) if social_hops is not None else None
    c = MatchConstraints(delta, tau, social_hops, graph)
    res = solve(people, c, solver, seed=seed, **kw)
    return {
        "solver": solver, "delta_km": delta, "tau_min": "inf" if tau is None else tau,
        "sigma_min": "" if sigma is None else sigma, "social_hops": social_hops or "",
        "cars_before": res.cars_before, "cars_after": res.cars_after,
        "success_percent": round(res.success_percent, 6),
        "tighter_bound_percent": round(res.tighter_bound_percent, 6),
        "absolute_bound_percent": 75.0, "runtime_s": round(res.runtime_s, 3),
    }


SWEEP_COLUMNS = ["solver", "delta_km", "tau_min", "sigma_min", "social_hops", "cars_before", "cars_after",
                 "success_percent", "tighter_bound_percent", "absolute_bound_percent", "runtime_s"]


def cmd_sweep(args):
    if args.spec:
        spec = json.loads(Path(args.spec).read_text(encoding="utf-8"))
        deltas = [float(x) for x in spec["deltas"]]
        taus = [_tau(x) for x in spec["taus"]]
        solvers = spec.get("solvers") or [spec.get("solver", "endpoints")]
        if spec.get("sigma") is not None:
            args.sigma_min = float(spec["sigma"])
        if spec.get("social") not in (None, "none"):
            args.social_hops = int(spec["social"])
    else:
        deltas = _float_list(args.deltas)
        taus = _tau_list(args.taus)
        solvers = [s.strip() for s in args.solvers.split(",")]
    if not deltas or not taus:
        raise CliError("sweep needs non-empty deltas and taus")
    for s in solvers:
        if s not in SOLVERS:
            raise CliError(f"unknown solver {s!r}")
    if args.social_hops is not None and args.social_graph is None:
        raise CliError("--social-hops needs --social-graph")
    people = _population(args)
    kw = dict(neighborhood_size=args.neighborhood, max_iters=args.max_iters,
              strict_richer=args.strict_richer, cell_km=args.cell_km)
    tasks = [(people, d, t, s, args.social_hops, args.social_graph, args.sigma_min, args.seed, kw)
             for s in sorted(solvers) for d in sorted(deltas)
             for t in sorted(taus, key=lambda x: math.inf if x is None else x)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            rows = list(ex.map(_sweep_cell, tasks))
    else:
        rows = [_sweep_cell(t) for t in tasks]
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.DictWriter(out, SWEEP_COLUMNS, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    finally:
        if args.out:
            out.close()
    return 0


def cmd_project(args):
    if args.points:
        pts = []
        with open(args.points, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                pts.append((float(row["fraction"]), float(row["savings_percent"])))
        c = None
    else:
        if not args.commuters:
            raise CliError("give --commuters (to sample a curve) or --points")
        fractions = sorted(_float_list(args.fractions))
        if len(set(fractions)) < 3:
            raise CliError(f"fit needs at least 3 distinct fractions, got {len(set(fractions))}")
        people = _population(args)
        c = _constraints(args)
        pts = sample_curve(people, fractions, args.mode, c, repeats=args.repeats, seed=args.seed, jobs=args.jobs,
                           neighborhood_size=args.neighborhood, max_iters=args.max_iters,
                           strict_richer=args.strict_richer, cell_km=args.cell_km)
        if args.curve_out:
            _csv(args.curve_out, ["fraction", "savings_percent"], [[f, f"{s:.6f}"] for f, s in pts])
    try:
        curve = fit_savings_curve(pts)
    except FitError as exc:
        raise CliError(f"fit failed: {exc}") from exc
    doc = {
        "target_multiple": args.target,
        "projected_savings_percent": curve.project(args.target),
        "max_observed_percent": max(s for _, s in pts),
        "parameters": {"a": curve.a, "b": curve.b, "c": curve.c},
        "residuals": list(curve.residuals),
        "points": [{"fraction": f, "savings_percent": s} for f, s in curve.points],
    }
    if c is not None:
        doc["mode"] = args.mode
        doc["constraints"] = c.to_dict()
    _write_json(doc, args.out)
    return 0


def cmd_validate(args):
    people = [p for p in load_commuters(args.commuters) if p.has_car]
    doc = json.loads(Path(args.assignment).read_text(encoding="utf-8"))
    a = Assignment.from_json(doc)
    cons = doc.get("constraints", {})
    if args.social_hops is not None and args.social_graph is None:
        raise CliError("--social-hops needs --social-graph")
    delta = cons.get("delta_km", args.delta_km)
    tau = cons.get("tau_min", args.tau_min) if "tau_min" in cons else args.tau_min
    hops = cons.get("social_hops", args.social_hops)
    graph = load_edges(args.social_graph) if args.social_graph else None
    if hops is not None and graph is None:
        raise CliError("assignment was built with a social filter; pass --social-graph")
    c = MatchConstraints(delta, tau, hops, graph)
    pair_ok = None
    if doc.get("mode") == "enroute" or args.enroute:
        if "grid" in doc:
            from .geo import GeoPoint

            g = doc["grid"]
            grid = RouteGrid(GeoPoint(*g["origin"]), g["cell_km"], g["rows"], g["cols"])
        else:
            grid = RouteGrid.covering(people, args.cell_km, margin_km=c.delta_km + 1.0)
        pair_ok = enroute_pair_check(people, c, grid)
    errors = validate_assignment(a, people, c, pair_ok=pair_ok)
    print(json.dumps({"valid": not errors, "violations": errors[:50], "n_violations": len(errors)}))
    return 0 if not errors else 1


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rideshare", description="Ride-sharing potential of commuter populations.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic commuter CSV")
    p.add_argument("--config", type=Path, help="CityConfig JSON")
    p.add_argument("--preset", choices=PRESETS)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--car-ownership", type=float, default=None)
    p.add_argument("--sigma-min", type=float, default=None)
    p.add_argument("--dump-config", type=Path, default=None, help="also write the effective config JSON")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("generate-cdr", help="synthetic call records with planted home/work/departures")
    p.add_argument("--commuters", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--truth", type=Path, help="write planted truth as commuter CSV")
    p.add_argument("--calls-per-user", type=int, default=50)
    p.add_argument("--days", type=int, default=42)
    p.add_argument("--signal", type=float, default=0.9)
    p.add_argument("--speed-kmh", type=float, default=25.0)
    p.add_argument("--cell-km", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_generate_cdr)

    p = sub.add_parser("train", help="fit home/work scorers on labelled users")
    p.add_argument("--cdr", type=Path, required=True)
    p.add_argument("--truth", type=Path, required=True, help="commuter CSV with true home/work")
    p.add_argument("--merge-radius-km", type=float, default=1.0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="home/work and departures from call records")
    p.add_argument("--cdr", type=Path, required=True)
    p.add_argument("--weights", type=Path, default=None)
    p.add_argument("--out", type=Path, required=True, help="home/work CSV")
    p.add_argument("--departures", type=Path, default=None)
    p.add_argument("--sidecar", type=Path, default=None, help="rejected users and reasons")
    p.add_argument("--merge-radius-km", type=float, default=1.0)
    p.add_argument("--speed-kmh", type=float, default=25.0)
    p.add_argument("--cell-km", type=float, default=0.5)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("solve", help="match one population and report the savings")
    p.add_argument("--commuters", type=Path, required=True)
    p.add_argument("--mode", choices=SOLVERS, default="endpoints")
    _add_constraints(p)
    _add_solver(p)
    p.add_argument("--out", type=Path, default=None, help="assignment JSON")
    p.add_argument("--report", type=Path, default=None, help="report JSON (default: stdout)")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="success over a (delta, tau) grid as CSV")
    p.add_argument("--commuters", type=Path, required=True)
    p.add_argument("--spec", type=Path, default=None, help="SweepSpec JSON")
    p.add_argument("--deltas", default="0.2,0.4,0.6,0.8,1.0")
    p.add_argument("--taus", default="5,10,15,inf")
    p.add_argument("--solvers", default="endpoints,tighter_bound")
    _add_constraints(p)
    _add_solver(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("project", help="fit savings vs sample size and project to a larger population")
    p.add_argument("--commuters", type=Path, default=None)
    p.add_argument("--points", type=Path, default=None, help="curve CSV fraction,savings_percent")
    p.add_argument("--fractions", default="0.3,0.6,1.0")
    p.add_argument("--target", type=float, default=3.6)
    p.add_argument("--mode", choices=("endpoints", "enroute"), default="endpoints")
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--curve-out", type=Path, default=None)
    _add_constraints(p)
    _add_solver(p)
    p.add_argument("--out", type=Path, default=None)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("validate", help="check an assignment JSON against its population")
    p.add_argument("--commuters", type=Path, required=True)
    p.add_argument("--assignment", type=Path, required=True)
    p.add_argument("--enroute", action="store_true", help="accept en-route pickups")
    _add_constraints(p)
    p.add_argument("--cell-km", type=float, default=0.5)
    p.set_defaults(func=cmd_validate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CliError, ConfigError, CommuterFileError, FitError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
