"""Rescue retriever: tank drive model, guidance state machine, grasp script.

The crawler is a differential-drive tank whose speed envelope follows the
measured motor behavior (no motion below 5.5 V, full speed at 6.8 V, load
derating up to the 2 kg capacity). Guidance is a tick-driven state machine:
GPS waypoint transit with proportional heading control, sonar obstacle
avoidance, LIDAR fine approach, then a fixed 6-servo grasp script.
"""

import math
from dataclasses import dataclass, replace
from enum import IntEnum

from .sensors import RangeReading, RangeSensor
from .world import GeoFix, LocalPoint, geo_to_local


class Phase(IntEnum):
    IDLE = 0
    TRANSIT = 1
    AVOIDING = 2
    FINE_APPROACH = 3
    GRASP = 4
    RETURN = 5
    DONE = 6
    FAULT = 7


LEGAL_TRANSITIONS = {
    Phase.IDLE: {Phase.TRANSIT},
    Phase.TRANSIT: {Phase.AVOIDING, Phase.FINE_APPROACH},
    Phase.AVOIDING: {Phase.TRANSIT},
    Phase.FINE_APPROACH: {Phase.GRASP},
    Phase.GRASP: {Phase.RETURN},
    Phase.RETURN: {Phase.DONE},
    Phase.DONE: set(),
    Phase.FAULT: set(),
}


class CapacityExceeded(ValueError):
    """Mission refused: payload above the 2 kg hard capacity."""


class IllegalTransition(RuntimeError):
    pass


@dataclass(frozen=True)
class TankModel:
    drive_v: float = 6.8
    load_g: int = 0
    v_max_mps: float = 0.5
    stall_v: float = 5.5
    full_v: float = 6.8
    load_derate: float = 0.4

    def __post_init__(self):
        if not (0.0 <= self.drive_v <= 8.4):
            raise ValueError(f"drive voltage out of range: {self.drive_v}")
        if self.load_g < 0:
            raise ValueError("negative load")


def tank_speed(m: TankModel) -> float:
    """Crawler ground speed in m/s for the given drive voltage and load.

    Zero below the stall voltage, linear up to full speed at full_v, then
    flat; load derates linearly to (1 - load_derate) at the 2 kg cap.
    """
    if m.load_g > 2000:
        raise CapacityExceeded(f"load {m.load_g} g exceeds 2000 g capacity")
    if m.drive_v < m.stall_v:
        return 0.0
    frac = min(1.0, (m.drive_v - m.stall_v) / (m.full_v - m.stall_v))
    return m.v_max_mps * frac * (1.0 - m.load_derate * m.load_g / 2000.0)


@dataclass(frozen=True)
class GuidanceParams:
    k_heading: float = 2.0  # rad/s per rad of heading error
    turn_clamp_rps: float = 1.2
    sonar_trigger_mm: int = 250
    avoid_hold_ticks: int = 8
    avoid_creep_mps: float = 0.05
    fine_enter_m: float = 1.0
    creep_mps: float = 0.05
    grasp_standoff_mm: int = 120
    align_tol_mm: float = 5.0  # final gripper positioning error gate
    gps_lost_fault_ticks: int = 50


@dataclass(frozen=True)
class Pose2D:
    point: LocalPoint
    heading_rad: float


@dataclass(frozen=True)
class DriveCommand:
    turn_rps: float = 0.0
    speed_mps: float = 0.0


@dataclass(frozen=True)
class RangeSet:
    left: RangeReading
    center: RangeReading
    right: RangeReading
    lidar: RangeReading
    lateral_mm: float = None  # LIDAR-derived lateral offset of the target


@dataclass(frozen=True)
class RetrieverState:
    phase: Phase = Phase.IDLE
    pose: Pose2D = None
    target: GeoFix = None
    home: LocalPoint = None
    avoid_ticks_left: int = 0
    gps_lost_ticks: int = 0
    grasp_start_tick: int = None
    fault_reason: str = None
    align_error_mm: float = None  # positioning error recorded at Grasp entry


def _transition(s: RetrieverState, phase: Phase, **changes) -> RetrieverState:
    if phase != s.phase and phase != Phase.FAULT \
            and phase not in LEGAL_TRANSITIONS[s.phase]:
        raise IllegalTransition(f"{s.phase.name} -> {phase.name}")
    return replace(s, phase=phase, **changes)


def wrap_angle(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def step_guidance(s: RetrieverState, sensors: RangeSet, own_fix: GeoFix,
                  tick: int, tank: TankModel, origin: GeoFix,
                  params: GuidanceParams = GuidanceParams()):
    """Advance the guidance state machine one tick.

    Returns (new state, drive command). `own_fix` may be None when GPS is
    unavailable; 50 consecutive GPS-less Transit ticks fault the mission.
    """
    p = params
    cmd = DriveCommand()

    if s.phase in (Phase.IDLE, Phase.DONE, Phase.FAULT, Phase.GRASP):
        return s, cmd

    if s.phase == Phase.AVOIDING:
        if sensors.left.distance_mm > sensors.right.distance_mm:
            turn = p.turn_clamp_rps  # more clearance on the left
        else:
            turn = -p.turn_clamp_rps  # ties go right
        if s.avoid_ticks_left > 1:
            return replace(s, avoid_ticks_left=s.avoid_ticks_left - 1), \
                DriveCommand(turn_rps=turn, speed_mps=p.avoid_creep_mps)
        return _transition(s, Phase.TRANSIT, avoid_ticks_left=0), \
            DriveCommand(turn_rps=turn, speed_mps=p.avoid_creep_mps)

    if s.phase == Phase.TRANSIT:
        if own_fix is None:
            lost = s.gps_lost_ticks + 1
            if lost >= p.gps_lost_fault_ticks:
                return _transition(s, Phase.FAULT, fault_reason="GpsLost",
                                   gps_lost_ticks=lost), cmd
            return replace(s, gps_lost_ticks=lost), cmd
        s = replace(s, gps_lost_ticks=0)
        if sensors.center.distance_mm < p.sonar_trigger_mm:
            return _transition(s, Phase.AVOIDING,
                               avoid_ticks_left=p.avoid_hold_ticks), cmd
        own = geo_to_local(own_fix, origin)
        tgt = geo_to_local(s.target, origin)
        dist = own.horizontal_distance_to(tgt)
        if dist < p.fine_enter_m:
            return _transition(s, Phase.FINE_APPROACH), cmd
        bearing = math.atan2(tgt.y_m - own.y_m, tgt.x_m - own.x_m)
        err = wrap_angle(bearing - s.pose.heading_rad)
        turn = min(max(p.k_heading * err, -p.turn_clamp_rps), p.turn_clamp_rps)
        speed = tank_speed(tank) * max(0.0, math.cos(err))
        return s, DriveCommand(turn_rps=turn, speed_mps=speed)

    if s.phase == Phase.FINE_APPROACH:
        lidar = sensors.lidar
        lateral = sensors.lateral_mm if sensors.lateral_mm is not None else 0.0
        if not lidar.max_range and lidar.distance_mm <= p.grasp_standoff_mm \
                and abs(lateral) <= p.align_tol_mm:
            return _transition(s, Phase.GRASP, grasp_start_tick=tick,
                               align_error_mm=abs(lateral)), cmd
        # steer out the lateral offset, creep forward
        range_mm = 1000.0 if lidar.max_range \
            else max(lidar.distance_mm, p.grasp_standoff_mm)
        err = math.atan2(lateral, range_mm)
        turn = min(max(p.k_heading * err, -p.turn_clamp_rps), p.turn_clamp_rps)
        speed = p.creep_mps if abs(lateral) <= p.align_tol_mm * 4 else 0.0
        return s, DriveCommand(turn_rps=turn, speed_mps=speed)

    if s.phase == Phase.RETURN:
        if own_fix is None:
            return s, cmd
        own = geo_to_local(own_fix, origin)
        if own.horizontal_distance_to(s.home) < 0.5:
            return _transition(s, Phase.DONE), cmd
        bearing = math.atan2(s.home.y_m - own.y_m, s.home.x_m - own.x_m)
        err = wrap_angle(bearing - s.pose.heading_rad)
        turn = min(max(p.k_heading * err, -p.turn_clamp_rps), p.turn_clamp_rps)
        speed = tank_speed(tank) * max(0.0, math.cos(err))
        return s, DriveCommand(turn_rps=turn, speed_mps=speed)

    raise AssertionError(f"unhandled phase {s.phase}")


def advance_pose(pose: Pose2D, cmd: DriveCommand, dt_s: float) -> Pose2D:
    """Integrate the drive command over one tick (turn first, then move)."""
    heading = wrap_angle(pose.heading_rad + cmd.turn_rps * dt_s)
    return Pose2D(
        point=LocalPoint(
            pose.point.x_m + math.cos(heading) * cmd.speed_mps * dt_s,
            pose.point.y_m + math.sin(heading) * cmd.speed_mps * dt_s,
            pose.point.z_m,
        ),
        heading_rad=heading,
    )


# --- grasp script --------------------------------------------------------

PULSE_MIN_US = 500
PULSE_MAX_US = 2500
GRASP_STAGE_TICKS = 10

# stage name -> angle (degrees) per servo channel 0..5
GRASP_STAGES = (
    ("open", (90, 45, 120, 90, 90, 170)),
    ("lower", (90, 100, 150, 90, 90, 170)),
    ("close", (90, 100, 150, 90, 90, 20)),
    ("lift", (90, 45, 120, 90, 90, 20)),
    ("stow", (90, 20, 60, 90, 90, 20)),
)


@dataclass(frozen=True)
class ServoCommand:
    channel: int
    pulse_us: int

    def __post_init__(self):
        if not (0 <= self.channel <= 5):
            raise ValueError(f"servo channel out of range: {self.channel}")
        if not (PULSE_MIN_US <= self.pulse_us <= PULSE_MAX_US):
            raise ValueError(f"servo pulse out of range: {self.pulse_us}")


def servo_pulse(angle_deg: float) -> int:
    """Linear map: 0 deg -> 500 us, 180 deg -> 2500 us."""
    if not (0.0 <= angle_deg <= 180.0):
        raise ValueError(f"servo angle out of range: {angle_deg}")
    return round(PULSE_MIN_US + angle_deg / 180.0 * (PULSE_MAX_US - PULSE_MIN_US))


def grasp_sequence(start_tick: int):
    """Fixed 5-stage grasp script: (tick, stage name, ServoCommand) triples,
    10 ticks per stage, 6 channels per stage."""
    out = []
    for i, (name, angles) in enumerate(GRASP_STAGES):
        tick = start_tick + i * GRASP_STAGE_TICKS
        for ch, angle in enumerate(angles):
            out.append((tick, name, ServoCommand(channel=ch,
                                                 pulse_us=servo_pulse(angle))))
    return out


GRASP_DURATION_TICKS = len(GRASP_STAGES) * GRASP_STAGE_TICKS


def finish_grasp(s: RetrieverState) -> RetrieverState:
    """Called by the engine once the grasp script has run to completion."""
    return _transition(s, Phase.RETURN, grasp_start_tick=None)


def fault(s: RetrieverState, reason: str) -> RetrieverState:
    return _transition(s, Phase.FAULT, fault_reason=reason)


def engage(s: RetrieverState, target: GeoFix) -> RetrieverState:
    """Accept a dispatch order: Idle -> Transit toward the target fix."""
    if s.phase is not Phase.IDLE:
        raise IllegalTransition(f"cannot engage from {s.phase.name}")
    return _transition(s, Phase.TRANSIT, target=target)
