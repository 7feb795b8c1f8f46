"""Commuter records, synthetic city generation and the commuter CSV format."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Literal, Sequence

import numpy as np

from .geo import KM_PER_DEG, GeoPoint

HOME_DEPARTURE_MIN = 540.0  # 9 am
WORK_DEPARTURE_MIN = 1020.0  # 5 pm
DEFAULT_CAPACITY = 4
CSV_HEADER = ["id", "home_lat", "home_lon", "work_lat", "work_lon",
              "leave_home_min", "leave_work_min", "capacity", "has_car"]


class ConfigError(ValueError):
    pass


class CommuterFileError(ValueError):
    pass


@dataclass(frozen=True)
class Commuter:
    id: str
    home: GeoPoint
    work: GeoPoint
    leave_home: float = HOME_DEPARTURE_MIN
    leave_work: float = WORK_DEPARTURE_MIN
    capacity: int = DEFAULT_CAPACITY
    has_car: bool = True

    def __post_init__(self):
        if not self.leave_home < self.leave_work:
            raise ValueError(f"commuter {self.id}: leave_home must precede leave_work")
        if self.capacity < 1:
            raise ValueError(f"commuter {self.id}: capacity must be >= 1")
        if self.home == self.work:
            raise ValueError(f"commuter {self.id}: home and work coincide")


@dataclass(frozen=True)
class Cluster:
    center: GeoPoint
    weight: float
    spread_km: float
    kind: Literal["home", "work", "mixed"] = "mixed"


@dataclass
class CityConfig:
    n_commuters: int
    mode: Literal["uniform", "clustered"] = "uniform"
    bounding_box: tuple[GeoPoint, GeoPoint] = (GeoPoint(40.25, -3.95), GeoPoint(40.60, -3.50))
    clusters: list[Cluster] = field(default_factory=list)
    sigma_minutes: float = 30.0
    car_ownership: float = 1.0
    seed: int = 0

    def validate(self):
        if self.n_commuters < 0:
            raise ConfigError("n_commuters must be non-negative")
        if self.mode not in ("uniform", "clustered"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        sw, ne = self.bounding_box
        if not (ne.lat > sw.lat and ne.lon > sw.lon):
            raise ConfigError("bounding box is empty")
        if not 0.0 <= self.car_ownership <= 1.0:
            raise ConfigError("car_ownership must lie in [0, 1]")
        if self.sigma_minutes < 0:
            raise ConfigError("sigma_minutes must be non-negative")
        if self.mode == "clustered":
            for role in ("home", "work"):
                total = sum(c.weight for c in self._clusters_for(role))
                if not math.isclose(total, 1.0, abs_tol=1e-9):
                    raise ConfigError(f"{role} cluster weights sum to {total}, expected 1")

    def _clusters_for(self, role: str) -> list[Cluster]:
        own = [c for c in self.clusters if c.kind == role]
        return own if own else [c for c in self.clusters if c.kind == "mixed"]

    def to_dict(self) -> dict:
        sw, ne = self.bounding_box
        return {
            "n_commuters": self.n_commuters,
            "mode": self.mode,
            "bounding_box": [[sw.lat, sw.lon], [ne.lat, ne.lon]],
            "clusters": [
                {"center": [c.center.lat, c.center.lon], "weight": c.weight,
                 "spread_km": c.spread_km, "kind": c.kind}
                for c in self.clusters
            ],
            "sigma_minutes": self.sigma_minutes,
            "car_ownership": self.car_ownership,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CityConfig":
        try:
            box = d.get("bounding_box")
            kw = {}
            if box is not None:
                kw["bounding_box"] = (GeoPoint(*box[0]), GeoPoint(*box[1]))
            clusters = [
                Cluster(GeoPoint(*c["center"]), float(c["weight"]), float(c["spread_km"]), c.get("kind", "mixed"))
                for c in d.get("clusters", [])
            ]
            cfg = cls(
                n_commuters=int(d["n_commuters"]),
                mode=d.get("mode", "uniform"),
                clusters=clusters,
                sigma_minutes=float(d.get("sigma_minutes", 30.0)),
                car_ownership=float(d.get("car_ownership", 1.0)),
                seed=int(d.get("seed", 0)),
                **kw,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid city config: {exc}") from exc
        cfg.validate()
        return cfg


# A Madrid-sized metro: dispersed residential clusters, a dense CBD and two business parks.
_METRO_CENTER = GeoPoint(40.4168, -3.7038)


def preset(name: str, n_commuters: int = 10_000, seed: int = 0, **overrides) -> CityConfig:
    from .geo import offset_point

    box = (offset_point(_METRO_CENTER, -20, -20), offset_point(_METRO_CENTER, 20, 20))
    if name == "uniform":
        cfg = CityConfig(n_commuters, "uniform", box, seed=seed)
    elif name == "clustered-metro":
        c = _METRO_CENTER
        clusters = [
            Cluster(offset_point(c, 8, -6), 0.25, 1.5, "home"),
            Cluster(offset_point(c, -7, -8), 0.25, 1.5, "home"),
            Cluster(offset_point(c, -9, 7), 0.20, 1.5, "home"),
            Cluster(offset_point(c, 6, 9), 0.15, 1.2, "home"),
            Cluster(offset_point(c, 0, 0), 0.15, 2.0, "home"),
            Cluster(offset_point(c, 0.5, 0.5), 0.60, 1.0, "work"),
            Cluster(offset_point(c, 11, 2), 0.20, 0.8, "work"),
            Cluster(offset_point(c, -4, -13), 0.20, 0.8, "work"),
        ]
        cfg = CityConfig(n_commuters, "clustered", box, clusters, seed=seed)
    else:
        raise ConfigError(f"unknown preset {name!r}")
    cfg = replace(cfg, **overrides)
    cfg.validate()
    return cfg


PRESETS = ("uniform", "clustered-metro")


def sample_departures(sigma_minutes: float, seed=None, size: int | None = None):
    """Draw (leave_home, leave_work) minute pairs around 9 am and 5 pm.

    Draws are clamped to the day and redrawn (up to 100 times) until the
    home departure precedes the work departure. ``seed`` may be an int or a
    ``numpy.random.Generator`` (which is then advanced in place).
    """
    if sigma_minutes < 0:
        raise ValueError("sigma_minutes must be non-negative")
    rng = np.random.default_rng(seed)
    scalar = size is None
    n = 1 if scalar else size
    lh = np.full(n, HOME_DEPARTURE_MIN)
    lw = np.full(n, WORK_DEPARTURE_MIN)
    bad = np.ones(n, dtype=bool)
    for _ in range(100):
        k = int(bad.sum())
        if k == 0:
            break
        lh[bad] = np.clip(rng.normal(HOME_DEPARTURE_MIN, sigma_minutes, k), 0, 1439)
        lw[bad] = np.clip(rng.normal(WORK_DEPARTURE_MIN, sigma_minutes, k), 0, 1439)
        bad = lh >= lw
    else:
        if bad.any():
            raise RuntimeError("could not draw ordered departure times in 100 attempts")
    if scalar:
        return float(lh[0]), float(lw[0])
    return lh, lw


def _sample_mixture(clusters: Sequence[Cluster], n: int, rng: np.random.Generator):
    weights = np.array([c.weight for c in clusters])
    which = rng.choice(len(clusters), size=n, p=weights / weights.sum())
    lat = np.empty(n)
    lon = np.empty(n)
    for i, c in enumerate(clusters):
        m = which == i
        k = int(m.sum())
        north = rng.normal(0.0, c.spread_km, k)
        east = rng.normal(0.0, c.spread_km, k)
        lat[m] = c.center.lat + north / KM_PER_DEG
        lon[m] = c.center.lon + east / (KM_PER_DEG * np.cos(np.radians(lat[m])))
    return lat, lon


def _sample_uniform(box: tuple[GeoPoint, GeoPoint], n: int, rng: np.random.Generator):
    sw, ne = box
    return rng.uniform(sw.lat, ne.lat, n), rng.uniform(sw.lon, ne.lon, n)


def generate_city(config: CityConfig) -> list[Commuter]:
    config.validate()
    rng = np.random.default_rng(config.seed)
    n = config.n_commuters
    if n == 0:
        return []
    if config.mode == "uniform":
        hlat, hlon = _sample_uniform(config.bounding_box, n, rng)
        wlat, wlon = _sample_uniform(config.bounding_box, n, rng)
    else:
        hlat, hlon = _sample_mixture(config._clusters_for("home"), n, rng)
        wlat, wlon = _sample_mixture(config._clusters_for("work"), n, rng)
    lh, lw = sample_departures(config.sigma_minutes, rng, n)
    owners = rng.choice(n, size=math.floor(config.car_ownership * n), replace=False)
    has_car = np.zeros(n, dtype=bool)
    has_car[owners] = True
    width = max(6, len(str(n - 1)))
    # round as the CSV does so a save/load cycle is lossless
    out = []
    for i in range(n):
        out.append(Commuter(
            id=f"c{i:0{width}d}",
            home=GeoPoint(round(float(hlat[i]), 7), round(float(hlon[i]), 7)),
            work=GeoPoint(round(float(wlat[i]), 7), round(float(wlon[i]), 7)),
            leave_home=round(float(lh[i]), 3),
            leave_work=round(float(lw[i]), 3),
            capacity=DEFAULT_CAPACITY,
            has_car=bool(has_car[i]),
        ))
    return out


def subsample_owners(commuters: Sequence[Commuter], fraction: float, seed: int) -> list[Commuter]:
    """Pick floor(fraction * n) commuters uniformly without replacement and mark them car owners."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    n = len(commuters)
    k = math.floor(fraction * n)
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=k, replace=False)) if k else np.array([], dtype=int)
    return [replace(commuters[i], has_car=True) for i in idx]


def car_owners(commuters: Sequence[Commuter]) -> list[Commuter]:
    return [c for c in commuters if c.has_car]


def _fmt(x: float) -> str:
    return f"{x:.7f}"


def _fmt_min(x: float) -> str:
    return f"{x:.3f}"


def save_commuters(commuters: Sequence[Commuter], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for c in commuters:
            w.writerow([c.id, _fmt(c.home.lat), _fmt(c.home.lon), _fmt(c.work.lat), _fmt(c.work.lon),
                        _fmt_min(c.leave_home), _fmt_min(c.leave_work), c.capacity,
                        "true" if c.has_car else "false"])


def load_commuters(path) -> list[Commuter]:
    path = Path(path)
    out: list[Commuter] = []
    seen: set[str] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return out
        if [h.strip() for h in header] != CSV_HEADER:
            raise CommuterFileError(f"{path}: line 1: expected header {','.join(CSV_HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise CommuterFileError(f"{path}: line {lineno}: expected {len(CSV_HEADER)} fields, got {len(row)}")
            rec = dict(zip(CSV_HEADER, row))
            out.append(_parse_row(rec, path, lineno))
            if out[-1].id in seen:
                raise CommuterFileError(f"{path}: line {lineno}: duplicate id {out[-1].id!r}")
            seen.add(out[-1].id)
    return out


def _parse_row(rec: dict, path, lineno: int) -> Commuter:
    def num(name, conv=float):
        try:
            return conv(rec[name])
        except ValueError:
            raise CommuterFileError(f"{path}: line {lineno}: field {name!r}: cannot parse {rec[name]!r}") from None

    def point(lat_name, lon_name):
        lat, lon = num(lat_name), num(lon_name)
        try:
            return GeoPoint(lat, lon)
        except ValueError as exc:
            bad = lat_name if not -90 <= lat <= 90 else lon_name
            raise CommuterFileError(f"{path}: line {lineno}: field {bad!r}: {exc}") from None

    flag = rec["has_car"].strip().lower()
    if flag not in ("true", "false"):
        raise CommuterFileError(f"{path}: line {lineno}: field 'has_car': expected true/false, got {rec['has_car']!r}")
    if not rec["id"]:
        raise CommuterFileError(f"{path}: line {lineno}: field 'id': empty")
    try:
        return Commuter(
            id=rec["id"],
            home=point("home_lat", "home_lon"),
            work=point("work_lat", "work_lon"),
            leave_home=num("leave_home_min"),
            leave_work=num("leave_work_min"),
            capacity=num("capacity", int),
            has_car=flag == "true",
        )
    except CommuterFileError:
        raise
    except ValueError as exc:
        raise CommuterFileError(f"{path}: line {lineno}: {exc}") from None
