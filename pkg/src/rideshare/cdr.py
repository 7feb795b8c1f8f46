"""Home/work and departure-time inference from call detail records.

Timestamps are wall-clock seconds since the Unix epoch in the city's local
time; hour-of-day windows are evaluated directly on them.
"""
from __future__ import annotations

import csv
import math
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .geo import KM_PER_DEG, GeoPoint, distance_km
from .population import Commuter

DAY_S = 86_400
MIN_USERS_FOR_TRAINING = 20
CDR_HEADER = ["user_id", "timestamp_unix", "tower_lat", "tower_lon"]
# Monday 2024-01-01 00:00
EPOCH_BASE = 1_704_067_200


class TrainingError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class CdrEvent:
    user_id: str
    timestamp: int
    tower: GeoPoint

    @property
    def day(self) -> int:
        return self.timestamp // DAY_S

    @property
    def minute_of_day(self) -> float:
        return (self.timestamp % DAY_S) / 60.0

    @property
    def is_weekend(self) -> bool:
        # 1970-01-01 was a Thursday
        return (self.day + 3) % 7 >= 5


@dataclass(frozen=True)
class PlaceCluster:
    centroid: GeoPoint
    towers: frozenset
    days_appeared: int
    duration_weeks: int
    rank: int
    home_hour_events: int
    work_hour_events: int
    n_events: int = 0


@dataclass(frozen=True)
class HomeWorkResult:
    user_id: str
    home: GeoPoint
    work: GeoPoint
    home_cluster: PlaceCluster | None = field(default=None, compare=False, repr=False)
    work_cluster: PlaceCluster | None = field(default=None, compare=False, repr=False)


def is_home_hour(minute: float) -> bool:
    return minute >= 19 * 60 or minute < 7 * 60


def is_work_hour(minute: float) -> bool:
    return 13 * 60 <= minute < 17 * 60


# -- clustering ---------------------------------------------------------------


def cluster_events(events: Sequence[CdrEvent], merge_radius_km: float = 1.0) -> list[PlaceCluster]:
    """Single-linkage clusters of a user's towers, ranked by days of appearance."""
    if not events:
        return []
    if len({e.user_id for e in events}) > 1:
        raise ValueError("cluster_events expects the events of a single user")
    towers = sorted({e.tower for e in events})
    parent = list(range(len(towers)))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i in range(len(towers)):
        for j in range(i + 1, len(towers)):
            if distance_km(towers[i], towers[j]) <= merge_radius_km:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
    group_of = {t: find(i) for i, t in enumerate(towers)}

    by_group: dict[int, list[CdrEvent]] = {}
    for e in events:
        by_group.setdefault(group_of[e.tower], []).append(e)

    raw = []
    for gid, evs in by_group.items():
        members = frozenset(t for t in towers if group_of[t] == gid)
        tower_days: dict[GeoPoint, set] = {}
        for e in evs:
            tower_days.setdefault(e.tower, set()).add(e.day)
        # sorted so the float sums do not depend on event order
        w = sorted((t, len(d)) for t, d in tower_days.items())
        wsum = sum(k for _, k in w)
        lat = sum(t.lat * k for t, k in w) / wsum
        lon = sum(t.lon * k for t, k in w) / wsum
        days = sorted({e.day for e in evs})
        raw.append(dict(
            centroid=GeoPoint(lat, lon), towers=members, days_appeared=len(days),
            duration_weeks=(days[-1] - days[0]) // 7,
            home_hour_events=sum(is_home_hour(e.minute_of_day) for e in evs),
            work_hour_events=sum(is_work_hour(e.minute_of_day) for e in evs),
            n_events=len(evs),
        ))
    raw.sort(key=lambda r: (-r["days_appeared"], -r["n_events"], r["centroid"]))
    return [PlaceCluster(rank=i + 1, **r) for i, r in enumerate(raw)]


def eligibility(events: Sequence[CdrEvent], merge_radius_km: float = 1.0,
                clusters: Sequence[PlaceCluster] | None = None) -> tuple[bool, str]:
    """``(eligible, reason)``; reason is empty for eligible users."""
    if not events:
        return False, "no-events"
    days = [e.day for e in events]
    span = max(days) - min(days) + 1
    if len(events) / span < 1.0:
        return False, "insufficient-activity"
    if clusters is None:
        clusters = cluster_events(events, merge_radius_km)
    strong = [c for c in clusters if c.days_appeared >= 3 and c.duration_weeks >= 2]
    if len(strong) < 2:
        return False, "insufficient-clusters"
    return True, ""


def eligible(events: Sequence[CdrEvent], merge_radius_km: float = 1.0) -> bool:
    return eligibility(events, merge_radius_km)[0]


# -- classification -----------------------------------------------------------

FEATURES = ("days_appeared", "duration_weeks", "inverse_rank", "home_hour_events", "work_hour_events")


def cluster_features(clusters: Sequence[PlaceCluster]) -> np.ndarray:
    """(n_clusters, 6) matrix: bias column then the five features, each scaled by the user's total."""
    if not clusters:
        return np.zeros((0, 6))
    days = np.array([c.days_appeared for c in clusters], float)
    weeks = np.array([c.duration_weeks for c in clusters], float)
    home = np.array([c.home_hour_events for c in clusters], float)
    work = np.array([c.work_hour_events for c in clusters], float)
    rank = np.array([c.rank for c in clusters], float)

    def share(x):
        s = x.sum()
        return x / s if s > 0 else np.zeros_like(x)

    return np.column_stack([np.ones(len(clusters)), share(days), share(weeks), 1.0 / rank,
                            share(home), share(work)])


@dataclass(frozen=True)
class ScoreWeights:
    home: tuple[float, ...] = (-2.0, 1.0, 0.5, 0.5, 6.0, -4.0)
    work: tuple[float, ...] = (-2.0, 1.0, 0.5, 0.5, -4.0, 6.0)
    home_threshold: float = 0.0
    work_threshold: float = 0.0

    def to_dict(self) -> dict:
        return {"features": ["bias", *FEATURES], "home": list(self.home), "work": list(self.work),
                "home_threshold": self.home_threshold, "work_threshold": self.work_threshold}

    @classmethod
    def from_dict(cls, d: dict) -> "ScoreWeights":
        return cls(tuple(map(float, d["home"])), tuple(map(float, d["work"])),
                   float(d.get("home_threshold", 0.0)), float(d.get("work_threshold", 0.0)))


def classify_home_work(clusters: Sequence[PlaceCluster], model: ScoreWeights | None = None,
                       user_id: str = "") -> HomeWorkResult | None:
    """Pick exactly one home and one distinct work cluster, or None when ambiguous."""
    model = model or ScoreWeights()
    if len(clusters) < 2:
        return None
    X = cluster_features(clusters)
    hs = X @ np.asarray(model.home)
    ws = X @ np.asarray(model.work)
    home_hits = np.nonzero(hs > model.home_threshold)[0]
    if len(home_hits) != 1:
        return None
    h = int(home_hits[0])
    others = np.sort(hs)[::-1]
    if len(others) > 1 and others[0] - others[1] <= 1e-9:
        return None
    work_scores = ws.copy()
    work_scores[h] = -np.inf
    work_hits = np.nonzero(work_scores > model.work_threshold)[0]
    if len(work_hits) != 1:
        return None
    w = int(work_hits[0])
    top = np.sort(work_scores)[::-1]
    if top[0] - top[1] <= 1e-9:
        return None
    return HomeWorkResult(user_id, clusters[h].centroid, clusters[w].centroid, clusters[h], clusters[w])


def label_clusters(clusters: Sequence[PlaceCluster], home: GeoPoint, work: GeoPoint,
                   max_km: float = 2.0) -> tuple[np.ndarray, np.ndarray]:
    """0/1 home and work labels: the cluster nearest each true location, if within ``max_km``."""
    yh = np.zeros(len(clusters))
    yw = np.zeros(len(clusters))
    for target, y in ((home, yh), (work, yw)):
        if not clusters:
            continue
        d = [distance_km(c.centroid, target) for c in clusters]
        k = int(np.argmin(d))
        if d[k] <= max_km:
            y[k] = 1.0
    return yh, yw


def _fit_logistic(X, y, l2):
    from scipy.optimize import minimize

    def loss(w):
        z = X @ w
        # log(1 + e^z) - y z, numerically stable
        val = np.logaddexp(0.0, z) - y * z
        p = 0.5 * (1.0 + np.tanh(0.5 * z))
        grad = X.T @ (p - y) / len(y) + l2 * w
        return val.mean() + 0.5 * l2 * w @ w, grad

    res = minimize(loss, np.zeros(X.shape[1]), jac=True, method="L-BFGS-B",
                   options={"maxiter": 2000, "gtol": 1e-10, "ftol": 1e-15})
    return res.x


def train_weights(labeled: Sequence[tuple[Sequence[PlaceCluster], GeoPoint, GeoPoint]],
                  l2: float = 1e-4) -> ScoreWeights:
    """Fit the home and work scorers by L2-regularised logistic regression from zero."""
    if len(labeled) < MIN_USERS_FOR_TRAINING:
        raise TrainingError(f"need at least {MIN_USERS_FOR_TRAINING} labelled users, got {len(labeled)}")
    Xs, yh, yw = [], [], []
    for clusters, home, work in labeled:
        Xs.append(cluster_features(clusters))
        h, w = label_clusters(clusters, home, work)
        yh.append(h)
        yw.append(w)
    X = np.vstack(Xs)
    yh = np.concatenate(yh)
    yw = np.concatenate(yw)
    for name, y in (("home", yh), ("work", yw)):
        if y.min() == y.max():
            raise TrainingError(f"degenerate {name} labels: every cluster has the same class")
    return ScoreWeights(tuple(_fit_logistic(X, yh, l2)), tuple(_fit_logistic(X, yw, l2)))


def training_accuracy(labeled, model: ScoreWeights) -> float:
    """Fraction of clusters whose home and work scores both fall on the labelled side of the threshold."""
    right = total = 0
    for clusters, home, work in labeled:
        X = cluster_features(clusters)
        h, w = label_clusters(clusters, home, work)
        ph = (X @ np.asarray(model.home)) > model.home_threshold
        pw = (X @ np.asarray(model.work)) > model.work_threshold
        right += int(((ph == (h > 0)) & (pw == (w > 0))).sum())
        total += len(clusters)
    return right / total if total else 0.0


# -- departure times ----------------------------------------------------------


def estimate_departure(events: Sequence[CdrEvent], home: PlaceCluster, work: PlaceCluster, trip_time_min: float,
                       home_window=(8 * 60, 10 * 60), work_window=(16 * 60, 18 * 60),
                       min_samples: int = 3) -> tuple[float | None, float | None]:
    """Median time of a home (work) call in the window that is next followed by a work (home)
    call less than twice the trip time later. None with fewer than ``min_samples`` samples."""
    evs = sorted(events, key=lambda e: e.timestamp)
    limit_s = 2.0 * trip_time_min * 60.0
    leave_home, leave_work = [], []
    for a, b in zip(evs, evs[1:]):
        if b.timestamp - a.timestamp >= limit_s:
            continue
        m = a.minute_of_day
        if a.tower in home.towers and b.tower in work.towers and home_window[0] <= m < home_window[1]:
            leave_home.append(m)
        elif a.tower in work.towers and b.tower in home.towers and work_window[0] <= m < work_window[1]:
            leave_work.append(m)

    def med(xs):
        return float(statistics.median(xs)) if len(xs) >= min_samples else None

    return med(leave_home), med(leave_work)


def trip_time_minutes(home: GeoPoint, work: GeoPoint, grid=None, speed_kmh: float = 25.0,
                      floor_min: float = 15.0) -> float:
    """Travel time along the grid route (or great-circle if no grid), never below ``floor_min``."""
    if grid is not None:
        from .enroute import compute_route

        km = compute_route(home, work, grid).length_km
    else:
        km = distance_km(home, work)
    return max(floor_min, 60.0 * km / speed_kmh)


# -- whole-user inference -----------------------------------------------------


@dataclass
class UserInference:
    user_id: str
    eligible: bool
    reason: str = ""
    result: HomeWorkResult | None = None
    leave_home: float | None = None
    leave_work: float | None = None


def infer_user(user_id: str, events: Sequence[CdrEvent], model: ScoreWeights | None = None,
               merge_radius_km: float = 1.0, grid=None, speed_kmh: float = 25.0) -> UserInference:
    clusters = cluster_events(events, merge_radius_km)
    ok, reason = eligibility(events, merge_radius_km, clusters)
    if not ok:
        return UserInference(user_id, False, reason)
    res = classify_home_work(clusters, model, user_id)
    if res is None:
        return UserInference(user_id, True, "ambiguous-home-work")
    trip = trip_time_minutes(res.home, res.work, grid, speed_kmh)
    lh, lw = estimate_departure(events, res.home_cluster, res.work_cluster, trip)
    return UserInference(user_id, True, "", res, lh, lw)


def group_by_user(events: Iterable[CdrEvent]) -> dict[str, list[CdrEvent]]:
    out: dict[str, list[CdrEvent]] = {}
    for e in events:
        out.setdefault(e.user_id, []).append(e)
    for evs in out.values():
        evs.sort(key=lambda e: (e.timestamp, e.tower))
    return out


# -- files ----------------------------------------------------------------------


def load_cdr(path) -> list[CdrEvent]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return out
        if [h.strip() for h in header] != CDR_HEADER:
            raise ValueError(f"{path}: line 1: expected header {','.join(CDR_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise ValueError(f"{path}: line {lineno}: expected 4 fields, got {len(row)}")
            try:
                out.append(CdrEvent(row[0], int(row[1]), GeoPoint(float(row[2]), float(row[3]))))
            except ValueError as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from None
    return out


def save_cdr(events: Iterable[CdrEvent], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CDR_HEADER)
        for e in events:
            w.writerow([e.user_id, e.timestamp, f"{e.tower.lat:.7f}", f"{e.tower.lon:.7f}"])


# -- synthetic traces -------------------------------------------------------------


class TowerLattice:
    """Square lattice of towers; a call is served by the nearest one."""

    def __init__(self, origin: GeoPoint, spacing_km: float = 0.5):
        self.origin = origin
        self.spacing = spacing_km
        self._cos = math.cos(math.radians(origin.lat))

    def _ij(self, p: GeoPoint):
        north = (p.lat - self.origin.lat) * KM_PER_DEG
        east = (p.lon - self.origin.lon) * KM_PER_DEG * self._cos
        return round(north / self.spacing), round(east / self.spacing)

    def tower(self, i: int, j: int) -> GeoPoint:
        lat = self.origin.lat + i * self.spacing / KM_PER_DEG
        lon = self.origin.lon + j * self.spacing / (KM_PER_DEG * self._cos)
        return GeoPoint(round(lat, 7), round(lon, 7))

    def nearest(self, p: GeoPoint) -> GeoPoint:
        return self.tower(*self._ij(p))

    def neighbour(self, p: GeoPoint, rng) -> GeoPoint:
        i, j = self._ij(p)
        di, dj = [(1, 0), (-1, 0), (0, 1), (0, -1)][int(rng.integers(4))]
        return self.tower(i + di, j + dj)


def synthetic_cdr(commuters: Sequence[Commuter], calls_per_user: int = 50, n_days: int = 42,
                  signal: float = 0.9, departure_pairs: int = 4, handover: float = 0.2,
                  tower_spacing_km: float = 0.5, speed_kmh: float = 25.0, seed: int = 0,
                  grid=None) -> tuple[list[CdrEvent], dict[str, Commuter]]:
    """Call traces with planted home/work and departures.

    A ``signal`` share of calls sits at home during home hours or at work
    during work hours; ``departure_pairs`` mornings and evenings carry a call
    just before leaving and one just after arriving. The rest are noise at
    uniform places and times. Planted departures are clipped into the
    estimation windows. Returns the events and the planted truth by user id.
    """
    rng = np.random.default_rng(seed)
    if not commuters:
        return [], {}
    lats = [c.home.lat for c in commuters] + [c.work.lat for c in commuters]
    lons = [c.home.lon for c in commuters] + [c.work.lon for c in commuters]
    lo, hi = GeoPoint(min(lats), min(lons)), GeoPoint(max(lats), max(lons))
    lattice = TowerLattice(lo, tower_spacing_km)
    events: list[CdrEvent] = []
    truth: dict[str, Commuter] = {}

    def at(place: GeoPoint) -> GeoPoint:
        return lattice.neighbour(place, rng) if rng.random() < handover else lattice.nearest(place)

    def stamp(day: int, minute: float) -> int:
        return EPOCH_BASE + day * DAY_S + int(round(minute * 60))

    for com in commuters:
        lh = float(np.clip(com.leave_home, 8 * 60 + 5, 10 * 60 - 1))
        lw = float(np.clip(com.leave_work, 16 * 60 + 5, 18 * 60 - 1))
        truth[com.id] = Commuter(com.id, com.home, com.work, lh, lw, com.capacity, com.has_car)
        trip = trip_time_minutes(com.home, com.work, grid, speed_kmh)
        n_signal = int(round(signal * calls_per_user))
        n_pairs = min(departure_pairs, n_signal // 4)
        pair_days = rng.choice(n_days, size=2 * n_pairs, replace=False)
        for k in range(n_pairs):
            d = int(pair_days[k])
            events.append(CdrEvent(com.id, stamp(d, lh - rng.uniform(0, 5)), at(com.home)))
            events.append(CdrEvent(com.id, stamp(d, lh + trip + rng.uniform(0, 5)), at(com.work)))
            d = int(pair_days[n_pairs + k])
            events.append(CdrEvent(com.id, stamp(d, lw - rng.uniform(0, 5)), at(com.work)))
            events.append(CdrEvent(com.id, stamp(d, lw + trip + rng.uniform(0, 5)), at(com.home)))
        rest = n_signal - 4 * n_pairs
        for k in range(rest):
            day = int(rng.integers(n_days))
            if k % 2 == 0:
                minute = (19 * 60 + rng.uniform(0, 12 * 60)) % (24 * 60)
                events.append(CdrEvent(com.id, stamp(day, minute), at(com.home)))
            else:
                events.append(CdrEvent(com.id, stamp(day, rng.uniform(13 * 60, 17 * 60)), at(com.work)))
        for _ in range(calls_per_user - n_signal):
            p = GeoPoint(rng.uniform(lo.lat, hi.lat), rng.uniform(lo.lon, hi.lon))
            events.append(CdrEvent(com.id, stamp(int(rng.integers(n_days)), rng.uniform(0, 24 * 60)),
                                   lattice.nearest(p)))
    events.sort(key=lambda e: (e.user_id, e.timestamp))
    return events, truth
