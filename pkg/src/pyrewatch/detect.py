"""Pluggable target identification and localization.

The backends here are deterministic distribution simulators standing in
for onboard vision models: labels come from the semantic camera frame,
confidences are drawn from a configured band, front-view confusion rules
can swap labels, and the localizer occasionally emits a false positive.
A real vision backend can replace them behind the same call signatures.
"""

import math
from dataclasses import dataclass, field

from .rng import derive_rng
from .sensors import VisualFrame
from .world import GeoFix, LocalPoint, PoseView, local_to_geo

DEFAULT_LABELS = ("dog", "fire-engine", "fire", "ambulance", "moving-van")


class DegenerateGeometryError(ValueError):
    """Geolocation attempted with zero altitude (no ground-plane scale)."""


@dataclass(frozen=True)
class Detection:
    label: str
    confidence: float
    box: tuple = None  # (cx, cy, w, h) normalized, or None for identify()
    geo: GeoFix = None

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence out of range: {self.confidence}")


@dataclass(frozen=True)
class ConfusionRule:
    true_label: str
    pose_view: PoseView
    confused_as: str
    prob: float

    def __post_init__(self):
        if not (0.0 <= self.prob <= 1.0):
            raise ValueError(f"confusion prob out of range: {self.prob}")


@dataclass(frozen=True)
class DetectorConfig:
    conf_low: float = 0.60
    conf_high: float = 0.95
    confusion_rules: tuple = ()
    fp_rate: float = 0.1  # false positives per localizer frame
    seed: int = 0
    labels: tuple = DEFAULT_LABELS

    def __post_init__(self):
        if not (0.0 <= self.conf_low <= self.conf_high <= 1.0):
            raise ValueError("require 0 <= conf_low <= conf_high <= 1")
        if not (0.0 <= self.fp_rate <= 1.0):
            raise ValueError("fp_rate must be in [0, 1]")


def _draw_label(entity_id, label, pose_view, cfg, tick):
    for rule in cfg.confusion_rules:
        if rule.true_label == label and rule.pose_view == pose_view:
            rng = derive_rng(cfg.seed, "confuse", tick, entity_id)
            if rng.random() < rule.prob:
                return rule.confused_as
            break
    return label


def _draw_confidence(entity_id, cfg, tick):
    rng = derive_rng(cfg.seed, "conf", tick, entity_id)
    return rng.uniform(cfg.conf_low, cfg.conf_high)


def identify(frame: VisualFrame, cfg: DetectorConfig, tick: int = 0):
    """Label each entity that survived the visibility floor (no boxes)."""
    out = []
    for entity_id in frame.visible_entity_ids():
        label, pose_view = frame.meta[entity_id]
        out.append(Detection(
            label=_draw_label(entity_id, label, pose_view, cfg, tick),
            confidence=_draw_confidence(entity_id, cfg, tick),
        ))
    return out


def _footprint_box(frame, entity_id):
    """Tight normalized bounding box of the entity's pixel footprint."""
    min_x = min_y = math.inf
    max_x = max_y = -math.inf
    for i, eid in enumerate(frame.entity_ids):
        if eid != entity_id:
            continue
        px, py = i % frame.w, i // frame.w
        min_x = min(min_x, px / frame.w)
        max_x = max(max_x, (px + 1) / frame.w)
        min_y = min(min_y, py / frame.h)
        max_y = max(max_y, (py + 1) / frame.h)
    cx, cy = (min_x + max_x) / 2, (min_y + max_y) / 2
    return cx, cy, max_x - min_x, max_y - min_y


def locate(frame: VisualFrame, cfg: DetectorConfig, tick: int = 0):
    """One dilated bounding box per visible entity, plus seeded false
    positives at fp_rate per frame."""
    out = []
    for entity_id in frame.visible_entity_ids():
        label, pose_view = frame.meta[entity_id]
        cx, cy, w, h = _footprint_box(frame, entity_id)
        w, h = min(w * 1.05, 1.0), min(h * 1.05, 1.0)  # 5% dilation
        cx = min(max(cx, w / 2), 1.0 - w / 2)
        cy = min(max(cy, h / 2), 1.0 - h / 2)
        out.append(Detection(
            label=_draw_label(entity_id, label, pose_view, cfg, tick),
            confidence=_draw_confidence(entity_id, cfg, tick),
            box=(cx, cy, w, h),
        ))
    rng = derive_rng(cfg.seed, "fp", tick)
    if rng.random() < cfg.fp_rate:
        w, h = rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3)
        out.append(Detection(
            label=rng.choice(list(cfg.labels)),
            confidence=rng.uniform(cfg.conf_low, cfg.conf_high),
            box=(rng.uniform(w / 2, 1 - w / 2), rng.uniform(h / 2, 1 - h / 2), w, h),
        ))
    return out


def geolocate(det: Detection, drone_fix: GeoFix, drone_alt_cm: int,
              fov_deg: float) -> GeoFix:
    """Ground-plane pinhole projection of a detection from a nadir camera.

    offset_east  = alt * tan(fov/2) * (2*cx - 1)
    offset_north = alt * tan(fov/2) * (1 - 2*cy)
    """
    if drone_alt_cm <= 0:
        raise DegenerateGeometryError("geolocation requires positive altitude")
    cx, cy = det.box[0], det.box[1]
    alt_m = drone_alt_cm / 100.0
    half = alt_m * math.tan(math.radians(fov_deg) / 2.0)
    ground = GeoFix(drone_fix.lat_e7, drone_fix.lon_e7, 0)
    return local_to_geo(
        LocalPoint(half * (2.0 * cx - 1.0), half * (1.0 - 2.0 * cy), 0.0),
        ground,
    )
