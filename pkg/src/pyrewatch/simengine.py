"""Deterministic tick-loop orchestrator.

Loads a scenario, advances world / drone / radio / base station /
retriever in a fixed phase order each tick, and records a replayable
event log. The gateway (console server) exchanges data with the loop
exclusively through two ordered queues: events out, commands in, drained
at tick boundaries.

Per-tick phase order (total; nothing from phase k+1 precedes phase k):
  1. drain console commands
  2. advance drone along its sweep, sample sensors on schedule
  3. radio transmit/deliver + ARQ retransmissions
  4. base station ingest + dispatch decision
  5. retriever guidance step
  6. emit events
"""

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

from . import radio, retriever as rtv, turbidity
from .basestation import BaseStation, DispatchPolicy, PolicyMode
from .detect import ConfusionRule, DetectorConfig
from .rng import derive_rng
from .sensors import (
    CameraPose,
    RangeSensor,
    SmokeClass,
    capture_thermal,
    capture_visual,
    sample_gas,
    sample_gps,
    sample_range,
)
from .world import (
    Entity,
    EntityKind,
    GeoFix,
    HeatSource,
    LocalPoint,
    PoseView,
    SmokeField,
    WorldSnapshot,
    geo_to_local,
    local_to_geo,
)

DRONE_ID = 1
BASE_ID = 2
RETRIEVER_ID = 3

OUTCOME_RETRIEVED = "TargetRetrieved"
OUTCOME_TIMEOUT = "Timeout"
OUTCOME_FAULT = "Fault"


class ConfigError(ValueError):
    """Scenario validation failure; carries the offending field paths."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


# --- strict config parsing ------------------------------------------------

def _require(d, key, path, expected=None):
    if key not in d:
        raise ConfigError(f"{path}.{key}: missing required field")
    v = d[key]
    if expected is not None and not isinstance(v, expected):
        raise ConfigError(f"{path}.{key}: expected {expected}, got {type(v).__name__}")
    return v


def _strict(d, path, allowed):
    unknown = set(d) - set(allowed)
    if unknown:
        raise ConfigError([f"{path}.{k}: unknown key" for k in sorted(unknown)])


@dataclass(frozen=True)
class DroneConfig:
    speed_mps: float = 3.0
    alt_m: float = 20.0
    fov_deg: float = 90.0
    sensor_period_ticks: int = 5
    area: tuple = None  # (x0, y0, x1, y1); defaults to the whole bounds
    gps_sigma_m: float = 2.5


@dataclass(frozen=True)
class RetrieverConfig:
    start: LocalPoint = LocalPoint(0.0, 0.0)
    heading_rad: float = 0.0
    tank: rtv.TankModel = rtv.TankModel()
    gps_sigma_m: float = 0.5
    status_period_ticks: int = 5
    guidance: rtv.GuidanceParams = rtv.GuidanceParams()


@dataclass(frozen=True)
class ScenarioConfig:
    seed: int
    origin: GeoFix
    smoke: SmokeField
    heat_sources: tuple = ()
    entities: tuple = ()
    bounds_m: float = 10_000.0
    dt_ms: int = 100
    drone: DroneConfig = DroneConfig()
    retriever: RetrieverConfig = RetrieverConfig()
    channel: radio.ChannelModel = radio.ChannelModel()
    detector: DetectorConfig = DetectorConfig()
    policy: DispatchPolicy = DispatchPolicy()
    turbidity_inputs: str = None


def _parse_origin(d, path):
    _strict(d, path, {"lat_deg", "lon_deg", "alt_m"})
    return GeoFix.from_degrees(_require(d, "lat_deg", path, (int, float)),
                               _require(d, "lon_deg", path, (int, float)),
                               d.get("alt_m", 0.0))


def _parse_smoke(d, path):
    kind = _require(d, "kind", path, str)
    if kind == "uniform":
        _strict(d, path, {"kind", "density", "rows", "cols", "cell_m"})
        return SmokeField.uniform(_require(d, "density", path, (int, float)),
                                  _require(d, "rows", path, int),
                                  _require(d, "cols", path, int),
                                  _require(d, "cell_m", path, (int, float)))
    if kind == "grid":
        _strict(d, path, {"kind", "values", "cell_m"})
        return SmokeField(_require(d, "values", path, list),
                          _require(d, "cell_m", path, (int, float)))
    raise ConfigError(f"{path}.kind: unknown smoke kind {kind!r}")


def _parse_entity(d, path):
    _strict(d, path, {"id", "kind", "x_m", "y_m", "label", "pose_view", "radius_m"})
    try:
        kind = EntityKind(_require(d, "kind", path, str))
    except ValueError:
        raise ConfigError(f"{path}.kind: unknown entity kind {d['kind']!r}") from None
    return Entity(
        id=_require(d, "id", path, int),
        kind=kind,
        position=LocalPoint(_require(d, "x_m", path, (int, float)),
                            _require(d, "y_m", path, (int, float))),
        label=d.get("label", ""),
        pose_view=PoseView(d.get("pose_view", "None")),
        radius_m=d.get("radius_m", 0.5),
    )


def load_scenario(doc) -> ScenarioConfig:
    """Validate a scenario JSON document (dict) into a ScenarioConfig.

    Parsing is strict: unknown keys anywhere are fatal, and every problem
    is reported with its field path.
    """
    top = {"seed", "dt_ms", "bounds_m", "origin", "smoke", "heat_sources",
           "entities", "drone", "retriever", "channel", "detector", "policy",
           "turbidity_inputs"}
    _strict(doc, "scenario", top)
    seed = _require(doc, "seed", "scenario", int)
    origin = _parse_origin(_require(doc, "origin", "scenario", dict),
                           "scenario.origin")
    smoke = _parse_smoke(_require(doc, "smoke", "scenario", dict),
                         "scenario.smoke")

    heat_sources = []
    for i, h in enumerate(doc.get("heat_sources", [])):
        path = f"scenario.heat_sources[{i}]"
        _strict(h, path, {"x_m", "y_m", "temp_c", "radius_m"})
        heat_sources.append(HeatSource(
            position=LocalPoint(_require(h, "x_m", path, (int, float)),
                                _require(h, "y_m", path, (int, float))),
            temp_c=_require(h, "temp_c", path, (int, float)),
            radius_m=_require(h, "radius_m", path, (int, float))))

    entities = [_parse_entity(e, f"scenario.entities[{i}]")
                for i, e in enumerate(doc.get("entities", []))]
    ids = [e.id for e in entities]
    if len(ids) != len(set(ids)):
        raise ConfigError("scenario.entities: duplicate entity ids")

    d = doc.get("drone", {})
    _strict(d, "scenario.drone", {"speed_mps", "alt_m", "fov_deg",
                                  "sensor_period_ticks", "area", "gps_sigma_m"})
    drone = DroneConfig(
        speed_mps=d.get("speed_mps", 3.0),
        alt_m=d.get("alt_m", 20.0),
        fov_deg=d.get("fov_deg", 90.0),
        sensor_period_ticks=d.get("sensor_period_ticks", 5),
        area=tuple(d["area"]) if "area" in d else None,
        gps_sigma_m=d.get("gps_sigma_m", 2.5),
    )

    r = doc.get("retriever", {})
    _strict(r, "scenario.retriever",
            {"start", "heading_rad", "drive_v", "load_g", "v_max_mps",
             "stall_v", "full_v", "load_derate", "gps_sigma_m",
             "status_period_ticks"})
    start = r.get("start", {"x_m": 0.0, "y_m": 0.0})
    _strict(start, "scenario.retriever.start", {"x_m", "y_m"})
    retr = RetrieverConfig(
        start=LocalPoint(start.get("x_m", 0.0), start.get("y_m", 0.0)),
        heading_rad=r.get("heading_rad", 0.0),
        tank=rtv.TankModel(
            drive_v=r.get("drive_v", 6.8),
            load_g=r.get("load_g", 0),
            v_max_mps=r.get("v_max_mps", 0.5),
            stall_v=r.get("stall_v", 5.5),
            full_v=r.get("full_v", 6.8),
            load_derate=r.get("load_derate", 0.4)),
        gps_sigma_m=r.get("gps_sigma_m", 0.5),
        status_period_ticks=r.get("status_period_ticks", 5),
    )

    c = doc.get("channel", {})
    _strict(c, "scenario.channel", {"loss_prob", "corrupt_prob", "latency_ticks"})
    try:
        channel = radio.ChannelModel(
            loss_prob=c.get("loss_prob", 0.0),
            corrupt_prob=c.get("corrupt_prob", 0.0),
            latency_ticks=c.get("latency_ticks", 1),
            seed=seed)
    except ValueError as exc:
        raise ConfigError(f"scenario.channel: {exc}") from None

    dt = doc.get("detector", {})
    _strict(dt, "scenario.detector",
            {"conf_low", "conf_high", "fp_rate", "confusion_rules", "labels"})
    rules = []
    for i, cr in enumerate(dt.get("confusion_rules", [])):
        path = f"scenario.detector.confusion_rules[{i}]"
        _strict(cr, path, {"true_label", "pose_view", "confused_as", "prob"})
        rules.append(ConfusionRule(
            true_label=_require(cr, "true_label", path, str),
            pose_view=PoseView(_require(cr, "pose_view", path, str)),
            confused_as=_require(cr, "confused_as", path, str),
            prob=_require(cr, "prob", path, (int, float))))
    try:
        detector = DetectorConfig(
            conf_low=dt.get("conf_low", 0.60),
            conf_high=dt.get("conf_high", 0.95),
            confusion_rules=tuple(rules),
            fp_rate=dt.get("fp_rate", 0.1),
            seed=seed,
            labels=tuple(dt.get("labels", list(DetectorConfig().labels))))
    except ValueError as exc:
        raise ConfigError(f"scenario.detector: {exc}") from None

    p = doc.get("policy", {})
    _strict(p, "scenario.policy", {"mode", "min_confidence", "gas_gate"})
    try:
        policy = DispatchPolicy(
            mode=PolicyMode(p.get("mode", "Scripted")),
            min_confidence=p.get("min_confidence", 0.60),
            gas_gate=SmokeClass[p.get("gas_gate", "THICK_SMOKE")])
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"scenario.policy: {exc}") from None

    return ScenarioConfig(
        seed=seed,
        origin=origin,
        smoke=smoke,
        heat_sources=tuple(heat_sources),
        entities=tuple(entities),
        bounds_m=doc.get("bounds_m", 10_000.0),
        dt_ms=doc.get("dt_ms", 100),
        drone=drone,
        retriever=retr,
        channel=channel,
        detector=detector,
        policy=policy,
        turbidity_inputs=doc.get("turbidity_inputs"),
    )


def load_scenario_file(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"scenario file is not valid JSON: {exc}") from None
    return load_scenario(doc)


# --- event log ------------------------------------------------------------

def _sanitize(value):
    """Round floats to 1e-9 so logs hash identically across platforms."""
    if isinstance(value, float):
        return round(value, 9)
    if isinstance(value, dict):
        return {k: _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    return value


def _canonical(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class ReplayParseError(ValueError):
    def __init__(self, lineno, message):
        super().__init__(f"log line {lineno}: {message}")
        self.lineno = lineno


class EventLog:
    """Ordered record of everything a run did; the gateway stream is a
    projection of it, so replaying a log reproduces the console exactly."""

    def __init__(self):
        self.records = []

    def append(self, tick, module, kind, payload):
        rec = self.records[-1] if self.records else None
        if rec is not None and tick < rec["tick"]:
            raise ValueError("event ticks must be nondecreasing")
        self.records.append({"tick": tick, "module": module, "kind": kind,
                             "payload": _sanitize(payload)})

    def lines(self):
        return [_canonical(r) for r in self.records]

    def sha256(self) -> str:
        h = hashlib.sha256()
        for line in self.lines():
            h.update(line.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for line in self.lines():
                fh.write(line + "\n")

    @classmethod
    def load(cls, path):
        """Parse an NDJSON log. A truncated final line is a clean EOF; a
        corrupt interior line is a position-reporting parse error."""
        log = cls()
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        lines = text.split("\n")
        trailing_complete = text.endswith("\n")
        for i, line in enumerate(lines):
            if line == "":
                continue
            is_last = (i == len(lines) - 1)
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                if is_last and not trailing_complete:
                    break  # truncated tail
                raise ReplayParseError(i + 1, str(exc)) from None
            if not isinstance(rec, dict) or \
                    not {"tick", "module", "kind", "payload"} <= set(rec):
                raise ReplayParseError(i + 1, "missing record fields")
            log.records.append(rec)
        return log

    def gateway_events(self):
        """The console-facing projection: payloads of gateway records."""
        return [r["payload"] for r in self.records if r["module"] == "gateway"]

    def gateway_lines(self):
        return [_canonical(p) for p in self.gateway_events()]


def replay(log: EventLog):
    """Re-emit the gateway stream from a recorded log, byte for byte,
    without re-running the simulation."""
    return log.gateway_lines()


# --- agents ---------------------------------------------------------------

class Drone:
    """Scripted lawnmower sweep with periodic sensor sampling."""

    def __init__(self, cfg: ScenarioConfig):
        d = cfg.drone
        area = d.area if d.area is not None else (0.0, 0.0, cfg.bounds_m, cfg.bounds_m)
        x0, y0, x1, y1 = area
        footprint = 2.0 * d.alt_m * math.tan(math.radians(d.fov_deg) / 2.0)
        spacing = max(footprint * 0.8, 1e-6)  # 10% overlap per side
        self.waypoints = []
        y = y0
        left_to_right = True
        while y <= y1 + 1e-9:
            xs = (x0, x1) if left_to_right else (x1, x0)
            self.waypoints.append(LocalPoint(xs[0], y, d.alt_m))
            self.waypoints.append(LocalPoint(xs[1], y, d.alt_m))
            left_to_right = not left_to_right
            y += spacing
        self.position = self.waypoints[0]
        self._wp_index = 1
        self.cfg = d

    def advance(self, dt_s):
        step = self.cfg.speed_mps * dt_s
        wp = self.waypoints[self._wp_index]
        while step > 0:
            dist = self.position.horizontal_distance_to(wp)
            if dist <= step:
                self.position = wp
                step -= dist
                self._wp_index = (self._wp_index + 1) % len(self.waypoints)
                wp = self.waypoints[self._wp_index]
                if dist == 0:
                    break
            else:
                f = step / dist
                self.position = LocalPoint(
                    self.position.x_m + (wp.x_m - self.position.x_m) * f,
                    self.position.y_m + (wp.y_m - self.position.y_m) * f,
                    self.cfg.alt_m)
                step = 0


class Engine:
    """One simulation run: owns all mutable state, steps tick by tick."""

    def __init__(self, cfg: ScenarioConfig, max_ticks: int = 10_000):
        self.cfg = cfg
        self.max_ticks = max_ticks
        self.tick = 0
        self.paused = False
        self.outcome = None
        self.log = EventLog()
        self.command_queue = []  # inbound console commands, arrival order
        self.frame_store = {}
        self._next_frame_id = 1

        self.world = WorldSnapshot(
            smoke=cfg.smoke, heat_sources=cfg.heat_sources,
            entities=cfg.entities, bounds_m=cfg.bounds_m, tick=0)
        self.drone = Drone(cfg)
        self.base = BaseStation(
            origin=cfg.origin, detector_cfg=cfg.detector, policy=cfg.policy,
            known_senders=(DRONE_ID, RETRIEVER_ID),
            frame_store=self.frame_store)

        self.retr_state = rtv.RetrieverState(
            phase=rtv.Phase.IDLE,
            pose=rtv.Pose2D(point=cfg.retriever.start,
                            heading_rad=cfg.retriever.heading_rad),
            home=cfg.retriever.start)
        self.retr_entity_id = self._allocate_retriever_entity()

        # directed links: drone->base, base->drone (acks), base->retriever,
        # retriever->base; each with its own seeded channel stream
        self.ch = {name: radio.Channel(cfg.channel, name)
                   for name in ("d2b", "b2d", "b2r", "r2b")}
        self.ep = {DRONE_ID: radio.Endpoint(DRONE_ID),
                   BASE_ID: radio.Endpoint(BASE_ID),
                   RETRIEVER_ID: radio.Endpoint(RETRIEVER_ID)}
        self.assembler = radio.FragmentAssembler()
        self.pending_target_report = None  # body of last TargetReport at retriever
        self.dispatch_orders_sent = 0
        self._operator_dispatch_id = None
        self._emitted_turbidity = False

    def _allocate_retriever_entity(self):
        eid = max((e.id for e in self.world.entities), default=0) + 1
        self.world = WorldSnapshot(
            smoke=self.world.smoke, heat_sources=self.world.heat_sources,
            entities=self.world.entities + (Entity(
                id=eid, kind=EntityKind.RETRIEVER,
                position=self.cfg.retriever.start, label="retriever"),),
            bounds_m=self.world.bounds_m, tick=0)
        return eid

    # -- command queue (thread-safe enough: list append is atomic) ---------

    def submit_command(self, cmd: dict):
        self.command_queue.append(cmd)

    # -- tick phases --------------------------------------------------------

    def step(self):
        """Advance one tick; returns the gateway events emitted this tick."""
        t = self.tick
        dt_s = self.cfg.dt_ms / 1000.0

        # phase 1: console commands, in arrival order
        commands, self.command_queue = self.command_queue, []
        for cmd in commands:
            kind = cmd.get("type")
            if kind == "pause":
                self.paused = True
                self.base._emit("ack", t, {"command": "pause"})
            elif kind == "resume":
                self.paused = False
                self.base._emit("ack", t, {"command": "resume"})
            elif kind == "snapshot":
                self.base._emit("snapshot", t, self.base.snapshot(t))
            else:
                cid = self.base.handle_command(cmd, t)
                if cid is not None:
                    self._operator_dispatch_id = cid

        if not self.paused:
            # phase 2: drone
            self._drone_phase(t, dt_s)
            # phase 3: radio delivery + retransmissions
            inbound = self._radio_phase(t)
            # phase 4: base station
            self._base_phase(t, inbound.get(BASE_ID, []))
            # phase 5: retriever
            self._retriever_phase(t, dt_s, inbound.get(RETRIEVER_ID, []))

        # phase 6: events out
        self._turbidity_phase(t)
        self._check_outcome(t)
        self.base.tick_housekeeping(t)
        emitted = []
        for ev in self.base.drain_events():
            self.log.append(t, "gateway", ev["type"], ev)
            emitted.append(_sanitize(ev))
        self.tick += 1
        return emitted

    def _drone_phase(self, t, dt_s):
        cfg = self.cfg
        self.drone.advance(dt_s)
        if t % cfg.drone.sensor_period_ticks != 0:
            return
        pos = self.drone.position
        ground = LocalPoint(pos.x_m, pos.y_m, 0.0)
        gas = sample_gas(cfg.smoke, ground, cfg.seed, tick=t)
        fix = sample_gps(pos, cfg.origin, cfg.seed, tick=t,
                         sigma_m=cfg.drone.gps_sigma_m)
        ep, ch = self.ep[DRONE_ID], self.ch["d2b"]
        ep.send(ch, radio.MsgType.GAS_TELEMETRY,
                radio.encode_gas_telemetry(gas.raw, t), t)
        ep.send(ch, radio.MsgType.GPS_TELEMETRY,
                radio.encode_gps_telemetry(fix, t), t)
        pose = CameraPose(position=pos)
        thermal = capture_thermal(self.world, pose, cfg.drone.fov_deg)
        max_dc = max(thermal.temps_dc)
        if max_dc > round(self.world.ambient_c * 10) + 50:
            hot = sum(1 for v in thermal.temps_dc
                      if v > round(self.world.ambient_c * 10) + 50)
            ep.send(ch, radio.MsgType.THERMAL_SUMMARY,
                    radio.encode_thermal_summary(max_dc, hot, t), t)
        frame = capture_visual(self.world, pose, cfg.drone.fov_deg,
                               exclude_ids=(self.retr_entity_id,))
        if frame.visible_entity_ids():
            frame_id = self._next_frame_id
            self._next_frame_id += 1
            self.frame_store[frame_id] = frame
            ep.send(ch, radio.MsgType.VISUAL_SUMMARY,
                    radio.encode_visual_summary(
                        frame_id, fix, round(cfg.drone.fov_deg * 100), t), t)
        self.log.append(t, "drone", "sample",
                        {"x_m": pos.x_m, "y_m": pos.y_m, "gas_raw": gas.raw,
                         "visible": frame.visible_entity_ids()})

    def _radio_phase(self, t):
        """Deliver due frames on every link, route to endpoints, retransmit."""
        inbound = {BASE_ID: [], RETRIEVER_ID: [], DRONE_ID: []}
        routes = (  # link -> (receiver, ack link)
            ("d2b", BASE_ID, "b2d"),
            ("b2d", DRONE_ID, None),
            ("b2r", RETRIEVER_ID, "r2b"),
            ("r2b", BASE_ID, "b2r"),
        )
        for link, receiver, ack_link in routes:
            for raw in self.ch[link].deliver(t):
                frame = self.ep[receiver].receive(
                    raw, t, self.ch[ack_link] if ack_link else None)
                if frame is not None:
                    inbound[receiver].append(frame)
        for node, ep in self.ep.items():
            for seq in ep.on_tick(t):
                self.log.append(t, "radio", "link_down",
                                {"node": node, "seq": seq})
                if node == RETRIEVER_ID and self.retr_state.phase not in (
                        rtv.Phase.IDLE, rtv.Phase.DONE, rtv.Phase.FAULT):
                    self.retr_state = rtv.fault(self.retr_state, "LinkDown")
        return inbound

    def _base_phase(self, t, frames):
        for frame in frames:
            payload = frame.payload
            if frame.msg_type == radio.MsgType.GAS_TELEMETRY:
                self.base.ingest(frame.msg_type, frame.sender_id,
                                 radio.decode_gas_telemetry(payload), t)
            elif frame.msg_type == radio.MsgType.GPS_TELEMETRY:
                self.base.ingest(frame.msg_type, frame.sender_id,
                                 radio.decode_gps_telemetry(payload), t)
            elif frame.msg_type == radio.MsgType.THERMAL_SUMMARY:
                self.base.ingest(frame.msg_type, frame.sender_id,
                                 radio.decode_thermal_summary(payload), t)
            elif frame.msg_type == radio.MsgType.VISUAL_SUMMARY:
                self.base.ingest(frame.msg_type, frame.sender_id,
                                 radio.decode_visual_summary(payload), t)
            elif frame.msg_type == radio.MsgType.RETRIEVER_STATUS:
                self.base.ingest(frame.msg_type, frame.sender_id,
                                 radio.decode_retriever_status(payload), t)
        operator_id, self._operator_dispatch_id = self._operator_dispatch_id, None
        order = self.base.decide_dispatch(t, operator_candidate_id=operator_id)
        if order is not None:
            ep, ch = self.ep[BASE_ID], self.ch["b2r"]
            ep.send_message(ch, radio.MsgType.TARGET_REPORT,
                            radio.encode_target_report(
                                order.candidate_id, order.label,
                                order.confidence, order.geo), t)
            ep.send(ch, radio.MsgType.DISPATCH_ORDER,
                    radio.encode_dispatch_order(order.candidate_id, t), t)
            self.dispatch_orders_sent += 1
            self.log.append(t, "basestation", "dispatch_order",
                            {"candidate_id": order.candidate_id,
                             "label": order.label,
                             "lat_e7": order.geo.lat_e7,
                             "lon_e7": order.geo.lon_e7})

    def _retriever_sensors(self, target_entity):
        pos = self.retr_state.pose.point
        heading = self.retr_state.pose.heading_rad
        exclude = (self.retr_entity_id,)
        readings = {s: sample_range(self.world, pos, heading, s, exclude)
                    for s in RangeSensor}
        lateral = None
        if target_entity is not None:
            dx = target_entity.position.x_m - pos.x_m
            dy = target_entity.position.y_m - pos.y_m
            # signed perpendicular offset, positive = target to the left
            lateral = (-math.sin(heading) * dx + math.cos(heading) * dy) * 1000.0
        return rtv.RangeSet(left=readings[RangeSensor.LEFT],
                            center=readings[RangeSensor.CENTER],
                            right=readings[RangeSensor.RIGHT],
                            lidar=readings[RangeSensor.LIDAR],
                            lateral_mm=lateral)

    def _nearest_target_entity(self, geo):
        p = geo_to_local(geo, self.cfg.origin)
        targets = [e for e in self.world.entities if e.kind == EntityKind.TARGET]
        if not targets:
            return None
        return min(targets,
                   key=lambda e: e.position.horizontal_distance_to(p))

    def _retriever_phase(self, t, dt_s, frames):
        cfg = self.cfg
        s = self.retr_state
        for frame in frames:
            if frame.msg_type == radio.MsgType.TARGET_REPORT:
                body = self.assembler.push(frame.sender_id, frame.msg_type,
                                           frame.payload)
                if body is not None:
                    self.pending_target_report = radio.decode_target_report(body)
            elif frame.msg_type == radio.MsgType.DISPATCH_ORDER:
                data = radio.decode_dispatch_order(frame.payload)
                report = self.pending_target_report
                if s.phase == rtv.Phase.IDLE and report is not None \
                        and report["candidate_id"] == data["candidate_id"]:
                    s = rtv.engage(s, report["geo"])
                    self.log.append(t, "retriever", "engaged",
                                    {"candidate_id": data["candidate_id"]})

        if s.phase in (rtv.Phase.IDLE, rtv.Phase.DONE, rtv.Phase.FAULT):
            self.retr_state = s
            self._retriever_status(t, s)
            return

        if s.phase == rtv.Phase.GRASP:
            if t - s.grasp_start_tick + 1 >= rtv.GRASP_DURATION_TICKS:
                s = rtv.finish_grasp(s)
                self.log.append(t, "retriever", "grasped",
                                {"align_error_mm": s.align_error_mm})
                self.retr_state = s
                self._retriever_status(t, s, force=True, grasped=True)
                return
            self.retr_state = s
            self._retriever_status(t, s)
            return

        target_entity = self._nearest_target_entity(s.target) \
            if s.target is not None else None
        sensors = self._retriever_sensors(target_entity)
        own_fix = sample_gps(s.pose.point, cfg.origin, cfg.seed + 1, tick=t,
                             sigma_m=cfg.retriever.gps_sigma_m)
        prev_phase = s.phase
        s, cmd = rtv.step_guidance(s, sensors, own_fix, t, cfg.retriever.tank,
                                   cfg.origin, cfg.retriever.guidance)
        pose = rtv.advance_pose(s.pose, cmd, dt_s)
        s = dataclasses.replace(s, pose=pose)
        self.world = self.world.with_entity_position(self.retr_entity_id,
                                                     pose.point)
        if s.phase != prev_phase:
            payload = {"from": prev_phase.name, "to": s.phase.name}
            if s.phase == rtv.Phase.FINE_APPROACH:
                # the distance the guidance law actually acted on (GPS-based)
                tgt = geo_to_local(s.target, cfg.origin)
                own = geo_to_local(own_fix, cfg.origin)
                payload["distance_m"] = own.horizontal_distance_to(tgt)
            if s.phase == rtv.Phase.GRASP:
                payload["align_error_mm"] = s.align_error_mm
            self.log.append(t, "retriever", "phase", payload)
        self.retr_state = s
        self._retriever_status(t, s, force=(s.phase != prev_phase))

    def _retriever_status(self, t, s, force=False, grasped=False,
                          lidar_mm=0xFFFF):
        if not force and t % self.cfg.retriever.status_period_ticks != 0:
            return
        fix = local_to_geo(s.pose.point, self.cfg.origin)
        payload = radio.encode_retriever_status(
            int(s.phase), fix, lidar_mm, 0x01 if grasped else 0x00)
        ep, ch = self.ep[RETRIEVER_ID], self.ch["r2b"]
        if force:
            # phase changes and the grasp notification ride the ARQ
            ep.send(ch, radio.MsgType.RETRIEVER_STATUS, payload, t)
        else:
            ep.send_unreliable(ch, radio.MsgType.RETRIEVER_STATUS, payload, t)

    def _turbidity_phase(self, t):
        if self._emitted_turbidity or not self.cfg.turbidity_inputs:
            return
        self._emitted_turbidity = True
        readings = turbidity.read_csv(self.cfg.turbidity_inputs)
        groups = turbidity.group_by_sample(readings)
        ref_id = "water" if "water" in groups else sorted(groups)[0]
        ref = groups[ref_id][0]
        for sample_id in sorted(groups):
            if sample_id == ref_id:
                continue
            points, first_turbid, _ = turbidity.monitor(groups[sample_id], ref)
            self.base._emit("turbidity", t, {
                "sample_id": sample_id,
                "first_turbid_t": first_turbid,
                "points": [{"t_hours": p.t_hours, "ratio": p.ratio,
                            "classification":
                                p.classification.value if p.classification
                                else None}
                           for p in points]})

    def _check_outcome(self, t):
        if self.outcome is not None:
            return
        if self.retr_state.phase == rtv.Phase.FAULT:
            self.outcome = OUTCOME_FAULT
        elif self.retr_state.phase == rtv.Phase.DONE:
            self.outcome = OUTCOME_RETRIEVED
        elif t + 1 >= self.max_ticks:
            self.outcome = OUTCOME_TIMEOUT
        if self.outcome is not None:
            self.log.append(t, "engine", "outcome", {"outcome": self.outcome})
            self.base._emit("outcome", t, {"outcome": self.outcome})

    def run(self):
        """Run to completion; returns (EventLog, outcome string)."""
        while self.outcome is None:
            self.step()
        return self.log, self.outcome


def run(cfg: ScenarioConfig, max_ticks: int = 10_000):
    """Convenience wrapper: build an engine and run it."""
    return Engine(cfg, max_ticks=max_ticks).run()
