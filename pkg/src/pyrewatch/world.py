"""Simulated 2-D operations area.

Holds the shared coordinate types (fixed-point GPS fixes and a flat local
meters frame), the smoke and heat fields the sensors sample, and the
entities (targets, obstacles, agents) that populate a scenario. Everything
here is an immutable per-tick snapshot: the engine builds a new snapshot
between ticks and every sensor reads it without locking.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

EARTH_RADIUS_M = 6_371_000.0
DEFAULT_BOUND_M = 10_000.0
AMBIENT_C = 20.0

LAT_E7_MAX = 90 * 10**7
LON_E7_MAX = 180 * 10**7


class CoordinateError(ValueError):
    """A GPS fix or local point is outside its legal domain."""


@dataclass(frozen=True)
class GeoFix:
    """Fixed-point GPS fix: degrees x 1e7, altitude in cm above local ground."""

    lat_e7: int
    lon_e7: int
    alt_cm: int = 0

    def __post_init__(self):
        if not (-LAT_E7_MAX <= self.lat_e7 <= LAT_E7_MAX):
            raise CoordinateError(f"latitude out of range: {self.lat_e7}")
        if not (-LON_E7_MAX <= self.lon_e7 <= LON_E7_MAX):
            raise CoordinateError(f"longitude out of range: {self.lon_e7}")
        if self.alt_cm < 0:
            raise CoordinateError(f"negative altitude: {self.alt_cm}")

    @classmethod
    def from_degrees(cls, lat_deg, lon_deg, alt_m=0.0):
        return cls(round(lat_deg * 1e7), round(lon_deg * 1e7), round(alt_m * 100))

    @property
    def lat_deg(self):
        return self.lat_e7 / 1e7

    @property
    def lon_deg(self):
        return self.lon_e7 / 1e7


@dataclass(frozen=True)
class LocalPoint:
    """Point in the flat local frame: meters east/north of origin, up."""

    x_m: float
    y_m: float
    z_m: float = 0.0

    def distance_to(self, other):
        return math.sqrt(
            (self.x_m - other.x_m) ** 2
            + (self.y_m - other.y_m) ** 2
            + (self.z_m - other.z_m) ** 2
        )

    def horizontal_distance_to(self, other):
        return math.hypot(self.x_m - other.x_m, self.y_m - other.y_m)


class EntityKind(Enum):
    TARGET = "Target"
    OBSTACLE = "Obstacle"
    DRONE = "Drone"
    RETRIEVER = "Retriever"
    BASE_STATION = "BaseStation"


class PoseView(Enum):
    FRONT = "Front"
    SIDE = "Side"
    NONE = "None"


@dataclass(frozen=True)
class Entity:
    """A scenario object: ground-truth class label plus a spherical extent
    (radius_m) used by the camera and ranger ray casts."""

    id: int
    kind: EntityKind
    position: LocalPoint
    label: str = ""
    pose_view: PoseView = PoseView.NONE
    radius_m: float = 0.5


@dataclass(frozen=True)
class HeatSource:
    position: LocalPoint
    temp_c: float
    radius_m: float

    def __post_init__(self):
        if self.temp_c <= AMBIENT_C:
            raise ValueError("heat source must be above ambient")
        if self.radius_m <= 0:
            raise ValueError("heat source radius must be positive")


class SmokeField:
    """Static per-tick grid of smoke optical density (per meter, >= 0).

    Grid values live at cell centers; row index is y (north), column is x
    (east). Sampling outside the grid extent reads as open air (0).
    """

    def __init__(self, grid, cell_m):
        self.grid = np.asarray(grid, dtype=float)
        if self.grid.ndim != 2 or self.grid.size < 1:
            raise ValueError("smoke grid must be 2-D and non-empty")
        if (self.grid < 0).any():
            raise ValueError("smoke densities must be >= 0")
        if cell_m <= 0:
            raise ValueError("cell size must be positive")
        self.cell_m = float(cell_m)

    @classmethod
    def uniform(cls, density, rows, cols, cell_m):
        return cls(np.full((rows, cols), float(density)), cell_m)

    @classmethod
    def empty(cls, rows=1, cols=1, cell_m=1.0):
        return cls(np.zeros((rows, cols)), cell_m)

    @property
    def extent_m(self):
        rows, cols = self.grid.shape
        return cols * self.cell_m, rows * self.cell_m


@dataclass(frozen=True)
class WorldSnapshot:
    """Immutable view of the world for one tick."""

    smoke: SmokeField
    heat_sources: tuple = ()
    entities: tuple = ()
    bounds_m: float = DEFAULT_BOUND_M
    ambient_c: float = AMBIENT_C
    tick: int = 0

    def entity_by_id(self, entity_id):
        for e in self.entities:
            if e.id == entity_id:
                return e
        return None

    def with_entity_position(self, entity_id, position):
        entities = tuple(
            replace(e, position=position) if e.id == entity_id else e
            for e in self.entities
        )
        return replace(self, entities=entities)


def geo_to_local(fix: GeoFix, origin: GeoFix) -> LocalPoint:
    """Equirectangular projection of `fix` about `origin`.

    Valid for scenario-scale extents (|lat difference| < 1 degree); Earth
    treated as a sphere of radius 6371 km.
    """
    dlat_deg = (fix.lat_e7 - origin.lat_e7) / 1e7
    dlon_deg = (fix.lon_e7 - origin.lon_e7) / 1e7
    if abs(dlat_deg) >= 1.0:
        raise CoordinateError("fix too far from origin for flat projection")
    lat0 = math.radians(origin.lat_e7 / 1e7)
    x_m = math.radians(dlon_deg) * EARTH_RADIUS_M * math.cos(lat0)
    y_m = math.radians(dlat_deg) * EARTH_RADIUS_M
    return LocalPoint(x_m, y_m, fix.alt_cm / 100.0)


def local_to_geo(p: LocalPoint, origin: GeoFix) -> GeoFix:
    """Inverse of geo_to_local; rounds to 1e-7-degree / 1 cm quanta."""
    lat0 = math.radians(origin.lat_e7 / 1e7)
    dlat_deg = math.degrees(p.y_m / EARTH_RADIUS_M)
    dlon_deg = math.degrees(p.x_m / (EARTH_RADIUS_M * math.cos(lat0)))
    return GeoFix(
        origin.lat_e7 + round(dlat_deg * 1e7),
        origin.lon_e7 + round(dlon_deg * 1e7),
        round(p.z_m * 100),
    )


def smoke_density_at(fld: SmokeField, p: LocalPoint) -> float:
    """Bilinear interpolation over the smoke grid; exact at cell centers.

    Points outside the grid extent return 0 (open air). Inside the extent
    but beyond the border cell centers, the edge value extends (clamped).
    """
    ext_x, ext_y = fld.extent_m
    if not (0.0 <= p.x_m <= ext_x and 0.0 <= p.y_m <= ext_y):
        return 0.0
    rows, cols = fld.grid.shape
    # fractional index into the cell-center lattice
    gx = min(max(p.x_m / fld.cell_m - 0.5, 0.0), cols - 1.0)
    gy = min(max(p.y_m / fld.cell_m - 0.5, 0.0), rows - 1.0)
    x0, y0 = int(gx), int(gy)
    x1, y1 = min(x0 + 1, cols - 1), min(y0 + 1, rows - 1)
    fx, fy = gx - x0, gy - y0
    top = fld.grid[y0, x0] * (1 - fx) + fld.grid[y0, x1] * fx
    bot = fld.grid[y1, x0] * (1 - fx) + fld.grid[y1, x1] * fx
    return float(top * (1 - fy) + bot * fy)


def optical_depth(fld: SmokeField, a: LocalPoint, b: LocalPoint) -> float:
    """Line integral of smoke density along the segment a -> b.

    Fixed-step midpoint sampling at cell_m / 4; midpoints make the result
    exactly symmetric under swapping a and b.
    """
    length = a.distance_to(b)
    if length == 0.0:
        return 0.0
    n = max(1, math.ceil(length / (fld.cell_m / 4.0)))
    ds = length / n
    total = 0.0
    for i in range(n):
        t = (i + 0.5) / n
        p = LocalPoint(
            a.x_m + (b.x_m - a.x_m) * t,
            a.y_m + (b.y_m - a.y_m) * t,
            a.z_m + (b.z_m - a.z_m) * t,
        )
        total += smoke_density_at(fld, p)
    return total * ds
