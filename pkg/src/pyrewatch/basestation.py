"""AI-powered base station.

Ingests decoded telemetry, runs the detector pipeline on downlinked
frames, keeps an alarm state from gas readings, maintains the candidate
target queue, and decides dispatch either from a scripted policy or from
operator commands arriving through the console gateway. All mutation
happens inside the engine's tick loop; the gateway exchanges data through
ordered event/command queues drained at tick boundaries.
"""

import collections
from dataclasses import dataclass, replace
from enum import Enum

from . import detect, radio
from .sensors import GasReading, SmokeClass, classify_smoke
from .world import GeoFix, geo_to_local

EVENT_BUFFER_MAX = 10_000
CANDIDATE_MERGE_RADIUS_M = 3.0  # matches GPS sigma


class CandidateStatus(Enum):
    PENDING = "Pending"
    DISPATCHED = "Dispatched"
    RETRIEVED = "Retrieved"
    REJECTED = "Rejected"


class PolicyMode(Enum):
    SCRIPTED = "Scripted"
    HUMAN = "Human"


@dataclass(frozen=True)
class AlarmState:
    level: SmokeClass = SmokeClass.NORMAL
    since_tick: int = 0
    source_drone: int = 0


@dataclass
class CandidateTarget:
    id: int
    label: str
    confidence: float
    geo: GeoFix
    first_seen_tick: int
    status: CandidateStatus = CandidateStatus.PENDING


@dataclass(frozen=True)
class DispatchPolicy:
    mode: PolicyMode = PolicyMode.SCRIPTED
    min_confidence: float = 0.60
    gas_gate: SmokeClass = SmokeClass.THICK_SMOKE

    def __post_init__(self):
        if not (0.0 <= self.min_confidence <= 1.0):
            raise ValueError("min_confidence must be in [0, 1]")


@dataclass(frozen=True)
class DispatchOrder:
    candidate_id: int
    label: str
    confidence: float
    geo: GeoFix
    tick: int


# terminal statuses never transition again
_LEGAL_STATUS = {
    CandidateStatus.PENDING: {CandidateStatus.DISPATCHED, CandidateStatus.REJECTED},
    CandidateStatus.DISPATCHED: {CandidateStatus.RETRIEVED},
    CandidateStatus.RETRIEVED: set(),
    CandidateStatus.REJECTED: set(),
}


class BaseStation:
    """Tick-driven base-station state machine."""

    def __init__(self, origin: GeoFix, detector_cfg: detect.DetectorConfig,
                 policy: DispatchPolicy = DispatchPolicy(),
                 known_senders=(1, 3), smoke_thresholds=(200, 400),
                 frame_store=None, snapshot_period_ticks: int = 10):
        self.origin = origin
        self.detector_cfg = detector_cfg
        self.policy = policy
        self.known_senders = set(known_senders)
        self.smoke_thresholds = smoke_thresholds
        self.frame_store = frame_store if frame_store is not None else {}
        self.snapshot_period_ticks = snapshot_period_ticks
        self.alarm = AlarmState()
        self.candidates = {}
        self.retriever_phase = "Idle"
        self.retriever_fix = None
        self.dispatched_id = None
        self.events = collections.deque(maxlen=EVENT_BUFFER_MAX)
        self.dropped_messages = 0
        self.dispatch_count = 0
        self._next_candidate_id = 1

    # -- event plumbing ----------------------------------------------------

    def _emit(self, kind, tick, data):
        self.events.append({"type": kind, "tick": tick, "data": data})

    def drain_events(self):
        out = list(self.events)
        self.events.clear()
        return out

    def _candidate_row(self, c: CandidateTarget):
        return {
            "id": c.id,
            "label": c.label,
            "confidence": round(c.confidence, 9),
            "lat_e7": c.geo.lat_e7,
            "lon_e7": c.geo.lon_e7,
            "first_seen_tick": c.first_seen_tick,
            "status": c.status.value,
        }

    def snapshot(self, tick):
        """Full state snapshot for the console (also the resync payload)."""
        return {
            "alarm": {"level": self.alarm.level.name,
                      "since_tick": self.alarm.since_tick,
                      "source_drone": self.alarm.source_drone},
            "candidates": [self._candidate_row(c)
                           for c in sorted(self.candidates.values(),
                                           key=lambda c: c.id)],
            "retriever_phase": self.retriever_phase,
            "policy": {"mode": self.policy.mode.value,
                       "min_confidence": self.policy.min_confidence,
                       "gas_gate": self.policy.gas_gate.name},
            "dispatch_count": self.dispatch_count,
        }

    def tick_housekeeping(self, tick):
        if tick % self.snapshot_period_ticks == 0:
            self._emit("snapshot", tick, self.snapshot(tick))

    # -- ingest ------------------------------------------------------------

    def ingest(self, msg_type, sender_id, data, tick):
        """Apply one decoded application message to station state."""
        if sender_id not in self.known_senders:
            self.dropped_messages += 1
            self._emit("dropped", tick, {"sender_id": sender_id,
                                         "msg_type": int(msg_type)})
            return
        if msg_type == radio.MsgType.GAS_TELEMETRY:
            self._ingest_gas(sender_id, data, tick)
        elif msg_type == radio.MsgType.VISUAL_SUMMARY:
            self._ingest_visual(sender_id, data, tick)
        elif msg_type == radio.MsgType.RETRIEVER_STATUS:
            self._ingest_retriever_status(sender_id, data, tick)
        # GPS/thermal telemetry only feeds the console stream
        elif msg_type == radio.MsgType.GPS_TELEMETRY:
            self._emit("drone_fix", tick, {"sender_id": sender_id,
                                           "lat_e7": data["fix"].lat_e7,
                                           "lon_e7": data["fix"].lon_e7,
                                           "alt_cm": data["fix"].alt_cm})
        elif msg_type == radio.MsgType.THERMAL_SUMMARY:
            self._emit("thermal", tick, {"sender_id": sender_id,
                                         "max_temp_dc": data["max_temp_dc"],
                                         "hot_pixels": data["hot_pixels"]})

    def _ingest_gas(self, sender_id, data, tick):
        level = classify_smoke(GasReading(raw=data["raw"], tick=data["tick"]),
                               self.smoke_thresholds)
        if level != self.alarm.level:
            self.alarm = AlarmState(level=level, since_tick=tick,
                                    source_drone=sender_id)
            self._emit("alarm", tick, {"level": level.name,
                                       "source_drone": sender_id})
        self._emit("gas", tick, {"raw": data["raw"], "level": level.name,
                                 "sender_id": sender_id})

    def _ingest_visual(self, sender_id, data, tick):
        frame = self.frame_store.get(data["frame_id"])
        if frame is None:
            self.dropped_messages += 1
            return
        drone_fix = data["drone_fix"]
        fov_deg = data["fov_cdeg"] / 100.0
        detections = detect.locate(frame, self.detector_cfg, tick=tick)
        for det in detections:
            geo = detect.geolocate(det, drone_fix, drone_fix.alt_cm, fov_deg)
            self._upsert_candidate(det.label, det.confidence, geo, tick)

    def _upsert_candidate(self, label, confidence, geo, tick):
        """Merge with an existing candidate within 3 m carrying the same
        label (keep max confidence), else create a new one."""
        p = geo_to_local(geo, self.origin)
        for c in self.candidates.values():
            if c.label != label:
                continue
            if geo_to_local(c.geo, self.origin).horizontal_distance_to(p) \
                    <= CANDIDATE_MERGE_RADIUS_M:
                if confidence > c.confidence:
                    c.confidence = confidence
                    self._emit("candidate", tick, self._candidate_row(c))
                return c
        c = CandidateTarget(id=self._next_candidate_id, label=label,
                            confidence=confidence, geo=geo,
                            first_seen_tick=tick)
        self._next_candidate_id += 1
        self.candidates[c.id] = c
        self._emit("candidate", tick, self._candidate_row(c))
        return c

    def _ingest_retriever_status(self, sender_id, data, tick):
        from .retriever import Phase  # avoid import cycle at module load
        phase = Phase(data["phase_code"]).name.title().replace("_", "")
        self.retriever_phase = {"Fineapproach": "FineApproach"}.get(phase, phase)
        self.retriever_fix = data["fix"]
        grasped = bool(data["flags"] & 0x01)
        self._emit("retriever", tick, {"phase": self.retriever_phase,
                                       "lat_e7": data["fix"].lat_e7,
                                       "lon_e7": data["fix"].lon_e7,
                                       "lidar_mm": data["lidar_mm"],
                                       "grasped": grasped})
        if grasped and self.dispatched_id is not None:
            self._set_status(self.dispatched_id, CandidateStatus.RETRIEVED, tick)
            self.dispatched_id = None

    def _set_status(self, candidate_id, status, tick):
        c = self.candidates[candidate_id]
        if status not in _LEGAL_STATUS[c.status]:
            raise RuntimeError(f"illegal candidate transition "
                               f"{c.status.value} -> {status.value}")
        c.status = status
        self._emit("candidate", tick, self._candidate_row(c))

    # -- dispatch ----------------------------------------------------------

    def retriever_idle(self):
        return self.retriever_phase == "Idle" and self.dispatched_id is None

    def decide_dispatch(self, tick, operator_candidate_id=None):
        """Return a DispatchOrder, or None if nothing should go out.

        Scripted mode picks the best Pending candidate; Human mode only
        acts on an explicit operator candidate id. Dispatch is suppressed
        while the alarm is at or above the gas gate or the retriever is
        not idle.
        """
        if not self.retriever_idle():
            return None
        if self.alarm.level >= self.policy.gas_gate:
            return None
        if self.policy.mode == PolicyMode.HUMAN:
            if operator_candidate_id is None:
                return None
            c = self.candidates.get(operator_candidate_id)
            if c is None or c.status != CandidateStatus.PENDING:
                self._emit("dispatch_rejected", tick, {
                    "candidate_id": operator_candidate_id,
                    "reason": "unknown id" if c is None
                    else f"status {c.status.value}, not Pending"})
                return None
        else:
            pending = [c for c in self.candidates.values()
                       if c.status == CandidateStatus.PENDING
                       and c.confidence >= self.policy.min_confidence]
            if not pending:
                return None
            c = min(pending, key=lambda c: (-c.confidence, c.first_seen_tick, c.id))
        self._set_status(c.id, CandidateStatus.DISPATCHED, tick)
        self.dispatched_id = c.id
        self.dispatch_count += 1
        order = DispatchOrder(candidate_id=c.id, label=c.label,
                              confidence=c.confidence, geo=c.geo, tick=tick)
        self._emit("dispatch", tick, {"candidate_id": c.id, "label": c.label,
                                      "lat_e7": c.geo.lat_e7,
                                      "lon_e7": c.geo.lon_e7})
        return order

    # -- console commands ----------------------------------------------------

    def handle_command(self, cmd: dict, tick):
        """Apply one inbound gateway command at a tick boundary.

        Returns an operator dispatch request id for `dispatch` commands
        (resolved by decide_dispatch this tick), None otherwise.
        """
        kind = cmd.get("type")
        if kind == "dispatch":
            cid = cmd.get("candidate_id")
            self._emit("ack", tick, {"command": "dispatch", "candidate_id": cid})
            return cid
        if kind == "reject":
            cid = cmd.get("candidate_id")
            c = self.candidates.get(cid)
            if c is not None and c.status == CandidateStatus.PENDING:
                self._set_status(cid, CandidateStatus.REJECTED, tick)
                self._emit("ack", tick, {"command": "reject", "candidate_id": cid})
            else:
                self._emit("dispatch_rejected", tick, {
                    "candidate_id": cid, "reason": "unknown or non-Pending id"})
            return None
        if kind == "set_policy":
            changes = {}
            if "mode" in cmd:
                changes["mode"] = PolicyMode(cmd["mode"])
            if "min_confidence" in cmd:
                changes["min_confidence"] = float(cmd["min_confidence"])
            if "gas_gate" in cmd:
                changes["gas_gate"] = SmokeClass[cmd["gas_gate"]]
            self.policy = replace(self.policy, **changes)
            self._emit("ack", tick, {"command": "set_policy",
                                     "policy": self.snapshot(tick)["policy"]})
            return None
        self._emit("dispatch_rejected", tick, {"reason": f"unknown command {kind!r}"})
        return None
