/**
 * Plain-text renderer for the console state.
 *
 * Deliberately renderer-agnostic output: a string suitable for a terminal
 * refresh loop or a log. Rendering is a pure function of state, so tests
 * assert on the string directly.
 */

import type { ConsoleState } from "./state.js";
import { canDispatch, sortedCandidates } from "./state.js";

function fixed(e7: number): string {
  return (e7 / 1e7).toFixed(7);
}

export function render(s: ConsoleState): string {
  if (s.schemaMismatch) {
    return `!! incompatible gateway schema ${s.schema}; console supports 1 — not rendering\n`;
  }
  const lines: string[] = [];
  lines.push(`== pyrewatch console  tick ${s.tick} ==`);
  lines.push(
    `alarm: ${s.alarm.level} (since tick ${s.alarm.since_tick})` +
      (s.lastGas ? `   gas raw=${s.lastGas.raw}` : ""),
  );
  if (s.policy) {
    lines.push(
      `policy: ${s.policy.mode}  min_conf=${s.policy.min_confidence}  gate=${s.policy.gas_gate}`,
    );
  }
  if (s.droneFix) {
    lines.push(
      `drone: ${fixed(s.droneFix.lat_e7)}, ${fixed(s.droneFix.lon_e7)} @ ${(
        s.droneFix.alt_cm / 100
      ).toFixed(1)}m`,
    );
  }
  if (s.lastThermal) {
    lines.push(
      `thermal: ${(s.lastThermal.max_temp_dc / 10).toFixed(1)}C over ${s.lastThermal.hot_pixels}px`,
    );
  }
  lines.push(
    s.retriever
      ? `retriever: ${s.retriever.phase}  ${fixed(s.retriever.lat_e7)}, ${fixed(
          s.retriever.lon_e7,
        )}${s.retriever.grasped ? "  [grasped]" : ""}`
      : "retriever: (no telemetry)",
  );

  const rows = sortedCandidates(s);
  lines.push(`candidates (${rows.length}):`);
  for (const c of rows) {
    lines.push(
      `  #${c.id} ${c.label.padEnd(10)} conf=${c.confidence.toFixed(3)} ` +
        `${fixed(c.lat_e7)}, ${fixed(c.lon_e7)}  ${c.status}`,
    );
  }

  if (canDispatch(s)) {
    lines.push("dispatch: READY — `dispatch <id>` / `reject <id>`");
  } else {
    lines.push(`dispatch: DISABLED (${disableReason(s)})`);
  }
  for (const p of s.pending) {
    lines.push(`pending: ${JSON.stringify(p.command)} (awaiting ack)`);
  }
  if (s.lastRejection) lines.push(`rejected: ${s.lastRejection}`);
  for (const n of s.notices.slice(-3)) lines.push(n);
  if (s.outcome) lines.push(`outcome: ${s.outcome}`);
  return lines.join("\n") + "\n";
}

function disableReason(s: ConsoleState): string {
  if (s.outcome) return "run over";
  const order = { NORMAL: 0, ELEVATED: 1, THICK_SMOKE: 2 } as const;
  const gate = s.policy ? s.policy.gas_gate : "THICK_SMOKE";
  if (order[s.alarm.level] >= order[gate]) {
    return `alarm ${s.alarm.level} at gas gate`;
  }
  if (s.retriever && s.retriever.phase !== "Idle") {
    return `retriever busy (${s.retriever.phase})`;
  }
  if (s.pending.some((p) => p.command.type === "dispatch")) {
    return "dispatch pending ack";
  }
  return "no pending candidates";
}
