"""Great-circle distances and a uniform kilometer grid over lat/lon."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

EARTH_RADIUS_KM = 6371.0
KM_PER_DEG = EARTH_RADIUS_KM * math.pi / 180.0


class OutOfBoundsError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


class GridCell(NamedTuple):
    row: int
    col: int


def distance_km(a: GeoPoint, b: GeoPoint) -> float:
    """Haversine distance on a sphere of radius 6371 km."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def haversine_km(lat1, lon1, lat2, lon2):
    """Vectorised haversine; arguments broadcast like numpy arrays."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlmb / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def offset_point(origin: GeoPoint, north_km: float, east_km: float) -> GeoPoint:
    """Point displaced from ``origin`` by a local north/east offset (equirectangular)."""
    lat = origin.lat + north_km / KM_PER_DEG
    lon = origin.lon + east_km / (KM_PER_DEG * math.cos(math.radians(lat)))
    return GeoPoint(lat, lon)


@dataclass(frozen=True)
class Grid:
    """Square cells of ``cell_km`` anchored at the south-west ``origin``.

    Rows run north from the origin latitude. Column widths are measured at the
    latitude of the row center, so every cell is ``cell_km`` wide on the ground.
    Intervals are half-open: a point on a boundary belongs to the higher cell.
    """

    origin: GeoPoint
    cell_km: float
    rows: int | None = None
    cols: int | None = None

    def __post_init__(self):
        if not self.cell_km > 0:
            raise ValueError("cell_km must be positive")

    def _row_scale(self, row: int) -> float:
        lat_c = self.origin.lat + (row + 0.5) * self.cell_km / KM_PER_DEG
        return KM_PER_DEG * math.cos(math.radians(lat_c))

    def to_cell(self, p: GeoPoint) -> GridCell:
        north = (p.lat - self.origin.lat) * KM_PER_DEG
        # guard against float noise when the offset is an exact multiple of cell_km
        row = math.floor(round(north / self.cell_km, 9))
        east = (p.lon - self.origin.lon) * self._row_scale(row)
        col = math.floor(round(east / self.cell_km, 9))
        if row < 0 or col < 0:
            raise OutOfBoundsError(f"{p} lies south or west of grid origin {self.origin}")
        if (self.rows is not None and row >= self.rows) or (self.cols is not None and col >= self.cols):
            raise OutOfBoundsError(f"{p} maps to cell ({row}, {col}) outside {self.rows}x{self.cols} grid")
        return GridCell(row, col)

    def cell_center(self, cell: GridCell) -> GeoPoint:
        lat = self.origin.lat + (cell.row + 0.5) * self.cell_km / KM_PER_DEG
        lon = self.origin.lon + (cell.col + 0.5) * self.cell_km / self._row_scale(cell.row)
        return GeoPoint(lat, lon)

    def local_km(self, lat, lon):
        """Planar (north, east) km of points, using each point's row scale.

        In these coordinates cell (r, c) spans [r, r+1) x [c, c+1) times cell_km.
        """
        lat = np.asarray(lat, dtype=float)
        lon = np.asarray(lon, dtype=float)
        north = (lat - self.origin.lat) * KM_PER_DEG
        row = np.floor(np.round(north / self.cell_km, 9))
        lat_c = self.origin.lat + (row + 0.5) * self.cell_km / KM_PER_DEG
        east = (lon - self.origin.lon) * KM_PER_DEG * np.cos(np.radians(lat_c))
        return north, east

    def cells_of(self, lat, lon) -> np.ndarray:
        """Vectorised ``to_cell`` (no bounds check); returns an (n, 2) int array."""
        north, east = self.local_km(lat, lon)
        rc = np.stack([np.floor(np.round(north / self.cell_km, 9)),
                       np.floor(np.round(east / self.cell_km, 9))], axis=-1)
        return rc.astype(np.int64)

    @classmethod
    def covering(cls, lats, lons, cell_km: float, margin_km: float = 0.0) -> "Grid":
        """Smallest grid (plus margin) whose cells contain every given point."""
        lats = np.asarray(lats, dtype=float)
        lons = np.asarray(lons, dtype=float)
        if lats.size == 0:
            raise ValueError("cannot build a grid over zero points")
        lat0 = float(lats.min()) - margin_km / KM_PER_DEG
        # widest column scale is at the lowest |lat|; take the smallest cosine to be safe
        far_lat = max(abs(float(lats.min())), abs(float(lats.max()))) + 1.0
        lon_pad = margin_km / (KM_PER_DEG * math.cos(math.radians(min(far_lat, 89.0))))
        lon0 = float(lons.min()) - lon_pad
        grid = cls(GeoPoint(lat0, lon0), cell_km)
        rc = grid.cells_of(lats, lons)
        pad = int(math.ceil(margin_km / cell_km))
        rows = int(rc[:, 0].max()) + 1 + pad
        cols = int(rc[:, 1].max()) + 1 + pad
        return cls(grid.origin, cell_km, rows, cols)
