/**
 * Gateway protocol (schema version 1) as zod schemas.
 *
 * The wire format is newline-delimited JSON over TCP; every server event
 * is `{type, tick, data}`. See ../docs/gateway.md for the frozen contract
 * with examples. Parsing is strict on the fields the console relies on
 * and tolerant of additive payload fields (passthrough), so a newer
 * server with extra data does not break an older console — but a schema
 * *version* bump always does.
 */

import { z } from "zod";

export const SCHEMA_VERSION = 1;

export const AlarmLevel = z.enum(["NORMAL", "ELEVATED", "THICK_SMOKE"]);
export type AlarmLevel = z.infer<typeof AlarmLevel>;

export const CandidateStatus = z.enum([
  "Pending",
  "Dispatched",
  "Retrieved",
  "Rejected",
]);
export type CandidateStatus = z.infer<typeof CandidateStatus>;

export const RetrieverPhase = z.enum([
  "Idle",
  "Transit",
  "Avoiding",
  "FineApproach",
  "Grasp",
  "Return",
  "Done",
  "Fault",
]);
export type RetrieverPhase = z.infer<typeof RetrieverPhase>;

export const CandidateRow = z
  .object({
    id: z.number().int(),
    label: z.string(),
    confidence: z.number().min(0).max(1),
    lat_e7: z.number().int(),
    lon_e7: z.number().int(),
    first_seen_tick: z.number().int(),
    status: CandidateStatus,
  })
  .passthrough();
export type CandidateRow = z.infer<typeof CandidateRow>;

const base = { tick: z.number().int() };

export const HelloEvent = z.object({
  ...base,
  type: z.literal("hello"),
  data: z.object({ schema: z.number().int() }).passthrough(),
});

export const SnapshotEvent = z.object({
  ...base,
  type: z.literal("snapshot"),
  data: z
    .object({
      alarm: z
        .object({ level: AlarmLevel, since_tick: z.number().int() })
        .passthrough(),
      candidates: z.array(CandidateRow),
      retriever_phase: RetrieverPhase,
      policy: z
        .object({
          mode: z.enum(["Scripted", "Human"]),
          min_confidence: z.number(),
          gas_gate: AlarmLevel,
        })
        .passthrough(),
      dispatch_count: z.number().int(),
    })
    .passthrough(),
});

export const AlarmEvent = z.object({
  ...base,
  type: z.literal("alarm"),
  data: z.object({ level: AlarmLevel }).passthrough(),
});

export const GasEvent = z.object({
  ...base,
  type: z.literal("gas"),
  data: z
    .object({ raw: z.number().int(), level: AlarmLevel })
    .passthrough(),
});

export const DroneFixEvent = z.object({
  ...base,
  type: z.literal("drone_fix"),
  data: z
    .object({
      lat_e7: z.number().int(),
      lon_e7: z.number().int(),
      alt_cm: z.number().int(),
    })
    .passthrough(),
});

export const ThermalEvent = z.object({
  ...base,
  type: z.literal("thermal"),
  data: z
    .object({ max_temp_dc: z.number().int(), hot_pixels: z.number().int() })
    .passthrough(),
});

export const CandidateEvent = z.object({
  ...base,
  type: z.literal("candidate"),
  data: CandidateRow,
});

export const DispatchEvent = z.object({
  ...base,
  type: z.literal("dispatch"),
  data: z.object({ candidate_id: z.number().int() }).passthrough(),
});

export const DispatchRejectedEvent = z.object({
  ...base,
  type: z.literal("dispatch_rejected"),
  data: z.object({ reason: z.string() }).passthrough(),
});

export const RetrieverEvent = z.object({
  ...base,
  type: z.literal("retriever"),
  data: z
    .object({
      phase: RetrieverPhase,
      lat_e7: z.number().int(),
      lon_e7: z.number().int(),
      grasped: z.boolean(),
    })
    .passthrough(),
});

export const TurbidityEvent = z.object({
  ...base,
  type: z.literal("turbidity"),
  data: z
    .object({
      sample_id: z.string(),
      first_turbid_t: z.number().nullable(),
      points: z.array(
        z.object({
          t_hours: z.number(),
          ratio: z.number().nullable(),
          classification: z.enum(["Clear", "Turbid"]).nullable(),
        }),
      ),
    })
    .passthrough(),
});

export const AckEvent = z.object({
  ...base,
  type: z.literal("ack"),
  data: z.object({ command: z.string() }).passthrough(),
});

export const OutcomeEvent = z.object({
  ...base,
  type: z.literal("outcome"),
  data: z.object({
    outcome: z.enum(["TargetRetrieved", "Timeout", "Fault"]),
  }),
});

export const DroppedEvent = z.object({
  ...base,
  type: z.literal("dropped"),
  data: z.object({}).passthrough(),
});

export const ErrorEvent = z.object({
  ...base,
  type: z.literal("error"),
  data: z.object({ reason: z.string() }).passthrough(),
});

export const GatewayEvent = z.discriminatedUnion("type", [
  HelloEvent,
  SnapshotEvent,
  AlarmEvent,
  GasEvent,
  DroneFixEvent,
  ThermalEvent,
  CandidateEvent,
  DispatchEvent,
  DispatchRejectedEvent,
  RetrieverEvent,
  TurbidityEvent,
  AckEvent,
  OutcomeEvent,
  DroppedEvent,
  ErrorEvent,
]);
export type GatewayEvent = z.infer<typeof GatewayEvent>;

/** Parse one NDJSON line into a gateway event. Throws on schema violation. */
export function parseEvent(line: string): GatewayEvent {
  return GatewayEvent.parse(JSON.parse(line));
}

// ---- commands (client -> server) ----------------------------------------

export type Command =
  | { type: "dispatch"; candidate_id: number }
  | { type: "reject"; candidate_id: number }
  | {
      type: "set_policy";
      mode?: "Scripted" | "Human";
      min_confidence?: number;
      gas_gate?: AlarmLevel;
    }
  | { type: "pause" }
  | { type: "resume" }
  | { type: "snapshot" };

export function serializeCommand(cmd: Command): string {
  return JSON.stringify(cmd) + "\n";
}
