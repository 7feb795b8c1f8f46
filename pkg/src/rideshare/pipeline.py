"""One-call solver entry points shared by the CLI, the sweeps and the extrapolation."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Sequence

from .endpoints import (Assignment, MatchConstraints, OptionGraph, absolute_upper_bound, solve_endpoints,
                        success_ratio, tighter_upper_bound, total_cost, validate_assignment)
from .enroute import RouteGrid, enroute_pair_check, enroute_solve
from .population import Commuter

SOLVERS = ("endpoints", "enroute", "tighter_bound")


class InvariantViolation(RuntimeError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__(f"{len(self.errors)} assignment invariant violations, first: {self.errors[:3]}")


@dataclass
class SolveResult:
    mode: str
    assignment: Assignment | None
    cars_before: int
    cars_after: int
    success_percent: float
    tighter_bound_percent: float
    runtime_s: float
    endpoints: Assignment | None = None
    grid: RouteGrid | None = None
    stats: dict = field(default_factory=dict)

    def report(self, constraints: MatchConstraints, population: Sequence[Commuter]) -> dict:
        out = {
            "mode": self.mode,
            "n_commuters": self.cars_before,
            "cars_before": self.cars_before,
            "cars_after": self.cars_after,
            "success_percent": self.success_percent,
            "absolute_bound_percent": absolute_upper_bound(),
            "tighter_bound_percent": self.tighter_bound_percent,
            "runtime_s": self.runtime_s,
            "constraints": constraints.to_dict(),
        }
        if self.assignment is not None:
            out["cost"] = total_cost(self.assignment, population, constraints).to_dict()
        if self.endpoints is not None and self.mode == "enroute":
            out["endpoints_cars_after"] = self.endpoints.car_count
            out["endpoints_success_percent"] = success_ratio(self.cars_before, self.endpoints.car_count) \
                if self.cars_before else 0.0
        out.update({k: v for k, v in self.stats.items() if isinstance(v, (int, float, bool))})
        return out


def solve(population: Sequence[Commuter], c: MatchConstraints, mode: str = "endpoints", seed: int = 0,
          neighborhood_size: int = 32, max_iters: int = 50, strict_richer: bool = False,
          grid: RouteGrid | None = None, cell_km: float = 0.5, validate: bool = True) -> SolveResult:
    """Run one solver over the car owners in ``population``."""
    if mode not in SOLVERS:
        raise ValueError(f"unknown solver {mode!r}; expected one of {SOLVERS}")
    people = [x for x in population if x.has_car]
    t0 = time.perf_counter()
    n = len(people)
    g = OptionGraph(people, c)
    bound = tighter_upper_bound(people, c, graph=g)
    if mode == "tighter_bound":
        return SolveResult(mode, None, n, n - round(n * bound / 100), bound, bound, time.perf_counter() - t0)
    a = solve_endpoints(people, c, neighborhood_size, max_iters, seed, graph=g)
    stats: dict = {}
    result_a, ep = a, a
    if mode == "enroute" and n:
        grid = grid if grid is not None else RouteGrid.covering(people, cell_km, margin_km=c.delta_km + 1.0)
        result_a = enroute_solve(a, people, c, grid, strict_richer=strict_richer, stats=stats)
    runtime = time.perf_counter() - t0
    if validate:
        pair_ok = enroute_pair_check(people, c, grid) if mode == "enroute" and n else None
        errors = validate_assignment(result_a, people, c, pair_ok=pair_ok)
        if errors:
            raise InvariantViolation(errors)
    success = success_ratio(n, result_a.car_count) if n else 0.0
    return SolveResult(mode, result_a, n, result_a.car_count, success, bound, runtime, endpoints=ep,
                       grid=grid, stats=stats)
