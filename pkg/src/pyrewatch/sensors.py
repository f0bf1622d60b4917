"""Models of the physical sensors carried by the drone and retriever.

Gas (MQ-2 style ADC), thermal camera, visual camera, GPS, ultrasonic
rangers and LIDAR. All samplers are pure functions of (world snapshot,
pose, seed, tick): safe to evaluate in parallel and bit-identical across
runs for the same inputs.
"""

import math
from dataclasses import dataclass, field
from enum import IntEnum, Enum

from .rng import derive_rng
from .world import (
    EntityKind,
    LocalPoint,
    WorldSnapshot,
    GeoFix,
    local_to_geo,
    optical_depth,
    smoke_density_at,
)

ADC_MAX = 1023
GAS_HALF_SATURATION = 0.8  # smoke density giving ADC mid-scale
GAS_NOISE_COUNTS = 8  # uniform +/- counts of seeded ADC noise
SMOKE_THRESHOLDS = (200, 400)  # Normal / Elevated / ThickSmoke ladder
VISIBILITY_FLOOR = 0.35  # below this, entity identity is not reported
GPS_SIGMA_M = 2.5  # horizontal 1-sigma

ULTRASONIC_MIN_MM = 20
ULTRASONIC_MAX_MM = 4000
ULTRASONIC_HALF_ANGLE_RAD = math.radians(15.0)
LIDAR_MIN_MM = 1
LIDAR_MAX_MM = 12000


class SmokeClass(IntEnum):
    NORMAL = 0
    ELEVATED = 1
    THICK_SMOKE = 2


class RangeSensor(Enum):
    LEFT = "Left"
    CENTER = "Center"
    RIGHT = "Right"
    LIDAR = "Lidar"


@dataclass(frozen=True)
class GasReading:
    raw: int  # ADC counts, 0..1023
    tick: int = 0

    def __post_init__(self):
        if not (0 <= self.raw <= ADC_MAX):
            raise ValueError(f"gas ADC count out of range: {self.raw}")


@dataclass(frozen=True)
class ThermalFrame:
    w: int
    h: int
    temps_dc: tuple  # deci-degC per pixel, row-major

    def at(self, px, py):
        return self.temps_dc[py * self.w + px]

    @property
    def center_pixel(self):
        return self.at(self.w // 2, self.h // 2)


@dataclass(frozen=True)
class VisualFrame:
    """Semantic camera frame: per-pixel entity identity and visibility.

    Identity is present only where smoke attenuation left the pixel above
    the detectability floor; `meta` maps each reported entity id to its
    ground-truth (label, pose_view).
    """

    w: int
    h: int
    entity_ids: tuple  # entity id or None, row-major
    visibility: tuple  # float in [0, 1], row-major
    meta: dict = field(default_factory=dict)

    def at(self, px, py):
        i = py * self.w + px
        return self.entity_ids[i], self.visibility[i]

    def visible_entity_ids(self):
        return sorted({e for e in self.entity_ids if e is not None})


@dataclass(frozen=True)
class RangeReading:
    sensor: RangeSensor
    distance_mm: int
    max_range: bool = False


@dataclass(frozen=True)
class CameraPose:
    """Camera position plus viewing direction (unit-ish vector, world frame)."""

    position: LocalPoint
    forward: tuple = (0.0, 0.0, -1.0)  # nadir by default

    def basis(self):
        fx, fy, fz = self.forward
        norm = math.sqrt(fx * fx + fy * fy + fz * fz)
        f = (fx / norm, fy / norm, fz / norm)
        up_hint = (0.0, 0.0, 1.0) if abs(f[2]) < 0.99 else (0.0, 1.0, 0.0)
        r = _cross(f, up_hint)
        rn = math.sqrt(sum(c * c for c in r))
        r = tuple(c / rn for c in r)
        u = _cross(r, f)
        return f, r, u


def _cross(a, b):
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def sample_gas(smoke_field, p: LocalPoint, noise_seed: int, tick: int = 0,
               k: float = GAS_HALF_SATURATION,
               noise_counts: int = GAS_NOISE_COUNTS) -> GasReading:
    """Saturating hyperbolic ADC response to local smoke density.

    raw = clamp(round(1023 * c / (c + k)) + n, 0, 1023) with n a seeded
    integer uniform in [-noise_counts, +noise_counts]. Monotone
    nondecreasing in density before noise; saturates strictly below 1024.
    """
    c = smoke_density_at(smoke_field, p)
    clean = round(ADC_MAX * c / (c + k))
    n = derive_rng(noise_seed, "gas", tick).randint(-noise_counts, noise_counts) \
        if noise_counts > 0 else 0
    return GasReading(raw=min(max(clean + n, 0), ADC_MAX), tick=tick)


def classify_smoke(r: GasReading, thresholds=SMOKE_THRESHOLDS) -> SmokeClass:
    """Two-tier alarm ladder: <200 Normal, 200..400 Elevated, >400 ThickSmoke."""
    low, high = thresholds
    if r.raw < low:
        return SmokeClass.NORMAL
    if r.raw <= high:
        return SmokeClass.ELEVATED
    return SmokeClass.THICK_SMOKE


def _pixel_rays(pose: CameraPose, fov_deg: float, w: int, h: int):
    """Pinhole ray per pixel; fov_deg is the horizontal field of view,
    square pixels."""
    f, r, u = pose.basis()
    tan_half = math.tan(math.radians(fov_deg) / 2.0)
    for py in range(h):
        v = (1.0 - 2.0 * (py + 0.5) / h) * tan_half * (h / w)
        for px in range(w):
            uu = (2.0 * (px + 0.5) / w - 1.0) * tan_half
            d = tuple(f[i] + uu * r[i] + v * u[i] for i in range(3))
            dn = math.sqrt(sum(c * c for c in d))
            yield px, py, tuple(c / dn for c in d)


def _ray_sphere(origin: LocalPoint, direction, center: LocalPoint, radius):
    """Distance along the ray to the sphere surface, or None if missed."""
    oc = (center.x_m - origin.x_m, center.y_m - origin.y_m, center.z_m - origin.z_m)
    tc = sum(oc[i] * direction[i] for i in range(3))
    if tc < 0:
        return None
    d2 = sum(c * c for c in oc) - tc * tc
    if d2 > radius * radius:
        return None
    return max(tc - math.sqrt(radius * radius - d2), 0.0)


def capture_thermal(snapshot: WorldSnapshot, pose: CameraPose, fov_deg: float,
                    w: int = 32, h: int = 24) -> ThermalFrame:
    """Ray-cast thermal frame. Heat falls off as 1/(1 + d/radius) from each
    source hit by the pixel ray; smoke contributes no attenuation (thermal
    penetrates smoke)."""
    if not (10.0 < fov_deg < 120.0):
        raise ValueError(f"thermal fov out of range: {fov_deg}")
    ambient = snapshot.ambient_c
    temps = [0] * (w * h)
    for px, py, d in _pixel_rays(pose, fov_deg, w, h):
        t = ambient
        for src in snapshot.heat_sources:
            hit = _ray_sphere(pose.position, d, src.position, src.radius_m)
            if hit is None:
                continue
            dist = pose.position.distance_to(src.position)
            t += (src.temp_c - ambient) / (1.0 + dist / src.radius_m)
        temps[py * w + px] = min(max(round(t * 10), -400), 15000)
    return ThermalFrame(w=w, h=h, temps_dc=tuple(temps))


def capture_visual(snapshot: WorldSnapshot, pose: CameraPose, fov_deg: float,
                   w: int = 64, h: int = 48, exclude_ids=(),
                   floor: float = VISIBILITY_FLOOR) -> VisualFrame:
    """Ray-cast semantic frame. Each pixel reports the nearest entity hit,
    with visibility exp(-optical_depth) along the ray; identity is
    suppressed (None) when visibility drops below the floor."""
    if not (10.0 < fov_deg < 120.0):
        raise ValueError(f"visual fov out of range: {fov_deg}")
    ids = [None] * (w * h)
    vis = [1.0] * (w * h)
    meta = {}
    entities = [e for e in snapshot.entities if e.id not in exclude_ids]
    for px, py, d in _pixel_rays(pose, fov_deg, w, h):
        best = None
        best_t = math.inf
        for e in entities:
            t = _ray_sphere(pose.position, d, e.position, e.radius_m)
            if t is not None and t < best_t:
                best, best_t = e, t
        if best is None:
            continue
        hit_point = LocalPoint(
            pose.position.x_m + d[0] * best_t,
            pose.position.y_m + d[1] * best_t,
            pose.position.z_m + d[2] * best_t,
        )
        v = math.exp(-optical_depth(snapshot.smoke, pose.position, hit_point))
        i = py * w + px
        vis[i] = v
        if v >= floor:
            ids[i] = best.id
            meta[best.id] = (best.label, best.pose_view)
    return VisualFrame(w=w, h=h, entity_ids=tuple(ids), visibility=tuple(vis),
                       meta=meta)


def sample_gps(true_position: LocalPoint, origin: GeoFix, noise_seed: int,
               tick: int = 0, sigma_m: float = GPS_SIGMA_M) -> GeoFix:
    """GPS fix of a true position with seeded Gaussian horizontal noise,
    clamped at 3 sigma per axis."""
    rng = derive_rng(noise_seed, "gps", tick)
    lim = 3.0 * sigma_m
    dx = min(max(rng.gauss(0.0, sigma_m), -lim), lim) if sigma_m > 0 else 0.0
    dy = min(max(rng.gauss(0.0, sigma_m), -lim), lim) if sigma_m > 0 else 0.0
    noisy = LocalPoint(true_position.x_m + dx, true_position.y_m + dy,
                       max(true_position.z_m, 0.0))
    return local_to_geo(noisy, origin)


def sample_range(snapshot: WorldSnapshot, position: LocalPoint,
                 heading_rad: float, sensor: RangeSensor,
                 exclude_ids=()) -> RangeReading:
    """Nearest obstacle/target return for one ranger.

    Ultrasonic sensors see a 15-degree half-angle cone; Left and Right are
    mounted at +/-30 degrees off the heading. LIDAR is a zero-width ray
    along the heading. Distances quantized to 1 mm.
    """
    offsets = {
        RangeSensor.LEFT: math.radians(30.0),
        RangeSensor.CENTER: 0.0,
        RangeSensor.RIGHT: math.radians(-30.0),
        RangeSensor.LIDAR: 0.0,
    }
    axis = heading_rad + offsets[sensor]
    ax, ay = math.cos(axis), math.sin(axis)
    lo, hi = ((LIDAR_MIN_MM, LIDAR_MAX_MM) if sensor is RangeSensor.LIDAR
              else (ULTRASONIC_MIN_MM, ULTRASONIC_MAX_MM))
    best_mm = None
    for e in snapshot.entities:
        if e.id in exclude_ids:
            continue
        if e.kind not in (EntityKind.OBSTACLE, EntityKind.TARGET):
            continue
        vx = e.position.x_m - position.x_m
        vy = e.position.y_m - position.y_m
        dist = math.hypot(vx, vy)
        if sensor is RangeSensor.LIDAR:
            # ray-circle intersection in the ground plane
            tc = vx * ax + vy * ay
            if tc < 0:
                continue
            d2 = dist * dist - tc * tc
            if d2 > e.radius_m * e.radius_m:
                continue
            hit = tc - math.sqrt(e.radius_m * e.radius_m - d2)
        else:
            if dist == 0.0:
                hit = 0.0
            else:
                ang = math.acos(min(max((vx * ax + vy * ay) / dist, -1.0), 1.0))
                if ang > ULTRASONIC_HALF_ANGLE_RAD:
                    continue
                hit = max(dist - e.radius_m, 0.0)
        mm = round(hit * 1000.0)
        if best_mm is None or mm < best_mm:
            best_mm = mm
    if best_mm is None or best_mm > hi:
        return RangeReading(sensor=sensor, distance_mm=hi, max_range=True)
    return RangeReading(sensor=sensor, distance_mm=max(best_mm, lo))
