"""Savings-versus-sample-size curves and their projection to a larger population.

The curve model is ``s(n) = a - b * n**(-c)`` with ``n`` the sample size as a
fraction of the observed population. ``b, c > 0`` make it increasing and concave.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .endpoints import MatchConstraints, success_ratio
from .population import Commuter

A_MAX = 75.0
C_MAX = 5.0
C_MIN = 1e-9


class FitError(RuntimeError):
    def __init__(self, message: str, residuals=None):
        super().__init__(message)
        self.residuals = None if residuals is None else np.asarray(residuals)


@dataclass(frozen=True)
class SavingsCurve:
    points: tuple[tuple[float, float], ...]
    a: float
    b: float
    c: float
    residuals: tuple[float, ...] = ()
    iterations: int = 0

    def __call__(self, n):
        return self.a - self.b * np.power(n, -self.c)

    def project(self, target: float) -> float:
        hi = max(s for _, s in self.points)
        return float(min(A_MAX, max(hi, float(self(target)))))

    def to_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "c": self.c, "residuals": list(self.residuals),
                "iterations": self.iterations, "points": [list(p) for p in self.points]}


def _model(p, n):
    a, b, c = p
    return a - b * n ** (-c)


def _jacobian(p, n):
    a, b, c = p
    t = n ** (-c)
    return np.column_stack([np.ones_like(n), -t, b * t * np.log(n)])


def levenberg_marquardt(n, y, p0, lower, upper, tol: float = 1e-10, max_iter: int = 500):
    """Box-constrained Levenberg-Marquardt (steps projected onto the box).

    Returns ``(params, residuals, iterations)``; raises FitError if it stalls
    away from a stationary point or runs out of iterations.
    """
    p = np.clip(np.asarray(p0, dtype=float), lower, upper)
    r = _model(p, n) - y
    cost = 0.5 * r @ r
    lam = 1e-3
    for it in range(1, max_iter + 1):
        J = _jacobian(p, n)
        g = J.T @ r
        A = J.T @ J
        # stationary on the box: no descent direction that stays feasible
        pg = p - np.clip(p - g, lower, upper)
        if np.max(np.abs(pg)) <= tol * (1.0 + cost) or cost <= 1e-30:
            return p, r, it
        # parameters pinned at a bound with the gradient pushing outwards stay fixed
        free = ~(((p <= lower) & (g > 0)) | ((p >= upper) & (g < 0)))
        Af = A[np.ix_(free, free)]
        gf = g[free]
        diag = np.maximum(np.diag(Af), 1e-12)
        while True:
            step = np.zeros_like(p)
            try:
                step[free] = np.linalg.solve(Af + lam * np.diag(diag), -gf)
            except np.linalg.LinAlgError:
                step[free] = -gf / (diag * (1 + lam))
            p_new = np.clip(p + step, lower, upper)
            r_new = _model(p_new, n) - y
            cost_new = 0.5 * r_new @ r_new
            if np.isfinite(cost_new) and cost_new < cost:
                break
            lam *= 10.0
            if lam > 1e16:
                if cost - cost_new < 1e-12 and np.all(np.abs(pg) <= 1e-6 * (1.0 + np.abs(p))):
                    return p, r, it
                raise FitError("fit stalled: residual no longer improves", r)
        dp = p_new - p
        improvement = cost - cost_new
        p, r, cost = p_new, r_new, cost_new
        lam = max(lam / 10.0, 1e-15)
        if np.max(np.abs(dp) / (np.abs(p) + tol)) <= tol or improvement <= tol * tol * (1.0 + cost):
            return p, r, it
    raise FitError(f"no convergence in {max_iter} iterations", r)


def fit_savings_curve(points: Sequence[tuple[float, float]], tol: float = 1e-10, max_iter: int = 500,
                      a_max: float = A_MAX, c_max: float = C_MAX, p0=None) -> SavingsCurve:
    pts = sorted((float(f), float(s)) for f, s in points)
    if len({f for f, _ in pts}) < 3:
        raise FitError("need at least 3 points with distinct sample fractions")
    if any(f <= 0 for f, _ in pts):
        raise FitError("sample fractions must be positive")
    n = np.array([f for f, _ in pts])
    y = np.array([s for _, s in pts])
    if p0 is None:
        a0 = min(a_max, y.max() + 5.0)
        p0 = (a0, max(a0 - y.min(), 0.0), 0.5)
    lower = np.array([0.0, 0.0, C_MIN])
    upper = np.array([a_max, np.inf, c_max])
    p, r, it = levenberg_marquardt(n, y, p0, lower, upper, tol, max_iter)
    return SavingsCurve(tuple(pts), float(p[0]), float(p[1]), float(p[2]), tuple(float(x) for x in r), it)


def fit_and_project(points: Sequence[tuple[float, float]], target_multiple: float = 3.6) -> float:
    return fit_savings_curve(points).project(target_multiple)


def _solve_fraction(args):
    population, frac, mode, c, seed, solver_kwargs = args
    from .pipeline import solve

    rng = np.random.default_rng(seed)
    k = math.floor(frac * len(population))
    idx = np.sort(rng.choice(len(population), size=k, replace=False))
    sub = [population[i] for i in idx]
    if not sub:
        return 0.0
    if callable(mode):
        a = mode(sub, c, seed)
        return success_ratio(len(sub), a.car_count)
    return solve(sub, c, mode, seed=seed, **solver_kwargs).success_percent


def sample_curve(population: Sequence[Commuter], fractions: Sequence[float], solver: str | Callable,
                 c: MatchConstraints, repeats: int = 1, seed: int = 0, jobs: int = 1,
                 **solver_kwargs) -> list[tuple[float, float]]:
    """Mean savings over ``repeats`` uniform subsamples at each fraction.

    ``solver`` is a pipeline mode name or a callable ``(people, constraints, seed) -> Assignment``.
    """
    fractions = list(fractions)
    if any(not 0 < f <= 1 for f in fractions):
        raise ValueError("fractions must lie in (0, 1]")
    if fractions != sorted(fractions):
        raise ValueError("fractions must be sorted ascending")
    people = [x for x in population if x.has_car]
    seeds = np.random.SeedSequence(seed).generate_state(len(fractions) * repeats)
    tasks = [(people, f, solver, c, int(seeds[i * repeats + r]), solver_kwargs)
             for i, f in enumerate(fractions) for r in range(repeats)]
    if jobs > 1 and not callable(solver):
        with ProcessPoolExecutor(jobs) as ex:
            values = list(ex.map(_solve_fraction, tasks))
    else:
        values = [_solve_fraction(t) for t in tasks]
    return [(f, float(np.mean(values[i * repeats:(i + 1) * repeats]))) for i, f in enumerate(fractions)]
