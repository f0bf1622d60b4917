/**
 * Console state and the pure event fold.
 *
 * All state transitions live here as pure functions: the same event
 * sequence always yields deep-equal states, which is what makes the
 * console replayable and testable without a socket. The TCP client and
 * the renderer both depend on this module; it depends on nothing but the
 * protocol types.
 */

import type {
  AlarmLevel,
  CandidateRow,
  Command,
  GatewayEvent,
  RetrieverPhase,
} from "./protocol.js";
import { SCHEMA_VERSION } from "./protocol.js";

const ALARM_ORDER: Record<AlarmLevel, number> = {
  NORMAL: 0,
  ELEVATED: 1,
  THICK_SMOKE: 2,
};

export interface PolicyView {
  mode: "Scripted" | "Human";
  min_confidence: number;
  gas_gate: AlarmLevel;
}

export interface RetrieverView {
  phase: RetrieverPhase;
  lat_e7: number;
  lon_e7: number;
  grasped: boolean;
}

export interface PendingCommand {
  /** Locally assigned, for display ordering. */
  seq: number;
  command: Command;
}

export interface ConsoleState {
  /** Schema announced by the server's hello; null before the handshake. */
  schema: number | null;
  /** True once a hello with an unsupported schema arrived; render nothing. */
  schemaMismatch: boolean;
  /** Latest tick observed on any event. */
  tick: number;
  alarm: { level: AlarmLevel; since_tick: number };
  /** Candidate rows keyed by id (plain object so states deep-compare). */
  candidates: Record<number, CandidateRow>;
  retriever: RetrieverView | null;
  droneFix: { lat_e7: number; lon_e7: number; alt_cm: number } | null;
  lastGas: { raw: number; level: AlarmLevel } | null;
  lastThermal: { max_temp_dc: number; hot_pixels: number } | null;
  policy: PolicyView | null;
  dispatchCount: number;
  outcome: "TargetRetrieved" | "Timeout" | "Fault" | null;
  /** Commands sent but not yet acknowledged (optimistic-UI ledger). */
  pending: PendingCommand[];
  /** Most recent dispatch_rejected reason, cleared by a successful ack. */
  lastRejection: string | null;
  notices: string[];
  nextSeq: number;
}

export function initialState(): ConsoleState {
  return {
    schema: null,
    schemaMismatch: false,
    tick: -1,
    alarm: { level: "NORMAL", since_tick: 0 },
    candidates: {},
    retriever: null,
    droneFix: null,
    lastGas: null,
    lastThermal: null,
    policy: null,
    dispatchCount: 0,
    outcome: null,
    pending: [],
    lastRejection: null,
    notices: [],
    nextSeq: 1,
  };
}

/** Record a just-sent command as pending until the server acks it. */
export function noteCommandSent(s: ConsoleState, command: Command): ConsoleState {
  return {
    ...s,
    pending: [...s.pending, { seq: s.nextSeq, command }],
    nextSeq: s.nextSeq + 1,
  };
}

function withoutOldestPending(
  pending: readonly PendingCommand[],
  type: string,
): PendingCommand[] {
  const idx = pending.findIndex((p) => p.command.type === type);
  if (idx < 0) return [...pending];
  return [...pending.slice(0, idx), ...pending.slice(idx + 1)];
}

/** Pure fold: next console state from one gateway event. */
export function applyEvent(s: ConsoleState, ev: GatewayEvent): ConsoleState {
  const tick = Math.max(s.tick, ev.tick);
  switch (ev.type) {
    case "hello":
      return {
        ...s,
        schema: ev.data.schema,
        schemaMismatch: ev.data.schema !== SCHEMA_VERSION,
      };
    case "snapshot": {
      // Snapshots are authoritative resync points: replace derived state.
      const candidates: Record<number, CandidateRow> = {};
      for (const row of ev.data.candidates) candidates[row.id] = row;
      return {
        ...s,
        tick,
        alarm: { level: ev.data.alarm.level, since_tick: ev.data.alarm.since_tick },
        candidates,
        retriever: s.retriever
          ? { ...s.retriever, phase: ev.data.retriever_phase }
          : null,
        policy: {
          mode: ev.data.policy.mode,
          min_confidence: ev.data.policy.min_confidence,
          gas_gate: ev.data.policy.gas_gate,
        },
        dispatchCount: ev.data.dispatch_count,
      };
    }
    case "alarm":
      return {
        ...s,
        tick,
        alarm: { level: ev.data.level, since_tick: ev.tick },
      };
    case "gas":
      return { ...s, tick, lastGas: { raw: ev.data.raw, level: ev.data.level } };
    case "drone_fix":
      return {
        ...s,
        tick,
        droneFix: {
          lat_e7: ev.data.lat_e7,
          lon_e7: ev.data.lon_e7,
          alt_cm: ev.data.alt_cm,
        },
      };
    case "thermal":
      return {
        ...s,
        tick,
        lastThermal: {
          max_temp_dc: ev.data.max_temp_dc,
          hot_pixels: ev.data.hot_pixels,
        },
      };
    case "candidate":
      return {
        ...s,
        tick,
        candidates: { ...s.candidates, [ev.data.id]: ev.data },
      };
    case "dispatch":
      return { ...s, tick, dispatchCount: s.dispatchCount + 1 };
    case "dispatch_rejected":
      return {
        ...s,
        tick,
        lastRejection: ev.data.reason,
        pending: withoutOldestPending(s.pending, "dispatch"),
      };
    case "retriever":
      return {
        ...s,
        tick,
        retriever: {
          phase: ev.data.phase,
          lat_e7: ev.data.lat_e7,
          lon_e7: ev.data.lon_e7,
          grasped: ev.data.grasped,
        },
      };
    case "turbidity":
      return { ...s, tick, notices: [...s.notices, turbidityNotice(ev.data)] };
    case "ack":
      return {
        ...s,
        tick,
        pending: withoutOldestPending(s.pending, ev.data.command),
        lastRejection:
          ev.data.command === "dispatch" ? null : s.lastRejection,
      };
    case "outcome":
      return { ...s, tick, outcome: ev.data.outcome };
    case "dropped":
      return { ...s, tick };
    case "error":
      return {
        ...s,
        tick,
        notices: [...s.notices, `server error: ${ev.data.reason}`],
      };
  }
}

function turbidityNotice(data: {
  sample_id: string;
  first_turbid_t: number | null;
}): string {
  return data.first_turbid_t === null
    ? `turbidity[${data.sample_id}]: all clear`
    : `turbidity[${data.sample_id}]: first turbid at t=${data.first_turbid_t}h`;
}

/** Fold a whole event sequence from the initial state. */
export function foldEvents(events: Iterable<GatewayEvent>): ConsoleState {
  let s = initialState();
  for (const ev of events) s = applyEvent(s, ev);
  return s;
}

/** Candidate rows sorted for display: Pending first, then by confidence. */
export function sortedCandidates(s: ConsoleState): CandidateRow[] {
  const statusRank: Record<string, number> = {
    Pending: 0,
    Dispatched: 1,
    Retrieved: 2,
    Rejected: 3,
  };
  return Object.values(s.candidates).sort(
    (a, b) =>
      (statusRank[a.status] ?? 9) - (statusRank[b.status] ?? 9) ||
      b.confidence - a.confidence ||
      a.id - b.id,
  );
}

/**
 * Whether the dispatch controls are live. Mirrors the server-side gate so
 * the operator is not offered an action the server would reject: the alarm
 * must be below the policy's gas gate, the retriever must be idle, the run
 * must not be over, and there must be something Pending to send.
 */
export function canDispatch(s: ConsoleState): boolean {
  if (s.schemaMismatch || s.outcome !== null) return false;
  if (s.policy && ALARM_ORDER[s.alarm.level] >= ALARM_ORDER[s.policy.gas_gate]) {
    return false;
  }
  if (s.retriever && s.retriever.phase !== "Idle") return false;
  if (s.pending.some((p) => p.command.type === "dispatch")) return false;
  return Object.values(s.candidates).some((c) => c.status === "Pending");
}
