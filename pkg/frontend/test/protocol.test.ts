/**
 * Protocol schema tests: the recorded golden gateway stream must parse
 * line-for-line, and malformed events must be rejected.
 */

import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";
import { GatewayEvent, parseEvent, serializeCommand } from "../src/protocol.js";

const FIXTURE = fileURLToPath(
  new URL("./fixtures/golden_gateway.ndjson", import.meta.url),
);

function fixtureLines(): string[] {
  return readFileSync(FIXTURE, "utf-8").split("\n").filter((l) => l.length > 0);
}

describe("gateway event parsing", () => {
  it("parses every line of the recorded golden stream", () => {
    const lines = fixtureLines();
    expect(lines.length).toBeGreaterThan(2000);
    for (const line of lines) {
      const ev = parseEvent(line);
      expect(ev.tick).toBeGreaterThanOrEqual(0);
    }
  });

  it("preserves the raw type tally of the stream", () => {
    // Oracle: count types on the raw JSON, independent of the zod layer.
    const raw = new Map<string, number>();
    const parsed = new Map<string, number>();
    for (const line of fixtureLines()) {
      const t = (JSON.parse(line) as { type: string }).type;
      raw.set(t, (raw.get(t) ?? 0) + 1);
      const ev = parseEvent(line);
      parsed.set(ev.type, (parsed.get(ev.type) ?? 0) + 1);
    }
    expect(Object.fromEntries(parsed)).toEqual(Object.fromEntries(raw));
    expect(raw.get("outcome")).toBe(1);
    expect(raw.get("dispatch")).toBe(1);
  });

  it("accepts the hello handshake", () => {
    const ev = parseEvent('{"data":{"schema":1},"tick":-1,"type":"hello"}');
    expect(ev).toEqual({ type: "hello", tick: -1, data: { schema: 1 } });
  });

  it("rejects unknown event types", () => {
    expect(() =>
      parseEvent('{"type":"mystery","tick":1,"data":{}}'),
    ).toThrow();
  });

  it("rejects structurally invalid events", () => {
    const bad = [
      '{"type":"gas","tick":"one","data":{"raw":1,"level":"NORMAL"}}',
      '{"type":"alarm","tick":1,"data":{"level":"PANIC"}}',
      '{"type":"candidate","tick":1,"data":{"id":1,"label":"dog","confidence":1.5,"lat_e7":0,"lon_e7":0,"first_seen_tick":0,"status":"Pending"}}',
      '{"type":"outcome","tick":1,"data":{"outcome":"Shrug"}}',
      '{"tick":1,"data":{}}',
      "not json at all",
    ];
    for (const line of bad) expect(() => parseEvent(line)).toThrow();
  });

  it("tolerates additive payload fields without failing", () => {
    const ev = parseEvent(
      '{"type":"gas","tick":9,"data":{"raw":3,"level":"NORMAL","sender_id":1,"future_field":true}}',
    );
    expect(ev.type).toBe("gas");
  });

  it("round-trips commands through the serializer", () => {
    const line = serializeCommand({ type: "dispatch", candidate_id: 7 });
    expect(line.endsWith("\n")).toBe(true);
    expect(JSON.parse(line)).toEqual({ type: "dispatch", candidate_id: 7 });
  });

  it("safeParse distinguishes good from bad without throwing", () => {
    expect(
      GatewayEvent.safeParse({ type: "pause", tick: 1, data: {} }).success,
    ).toBe(false);
    expect(
      GatewayEvent.safeParse({
        type: "ack",
        tick: 1,
        data: { command: "pause" },
      }).success,
    ).toBe(true);
  });
});
