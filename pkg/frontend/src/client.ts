/**
 * TCP NDJSON gateway client.
 *
 * Wraps a node `net` socket: splits the byte stream into lines, parses
 * each into a gateway event, folds it into the console state, and invokes
 * an onChange callback. Commands are serialized out and recorded as
 * pending until acked. Reconnects with capped exponential backoff; the
 * first snapshot after a reconnect resyncs the derived state.
 */

import * as net from "node:net";
import { parseEvent, serializeCommand, type Command, type GatewayEvent } from "./protocol.js";
import {
  applyEvent,
  initialState,
  noteCommandSent,
  type ConsoleState,
} from "./state.js";

export interface GatewayClientOptions {
  host: string;
  port: number;
  /** Called after every state change with the new state. */
  onChange?: (state: ConsoleState, event: GatewayEvent | null) => void;
  /** Called for lines that fail to parse; default logs to stderr. */
  onBadLine?: (line: string, err: unknown) => void;
  reconnect?: boolean;
  /** Initial reconnect delay (ms); doubles up to 10x. */
  backoffMs?: number;
}

export class GatewayClient {
  private sock: net.Socket | null = null;
  private buf = "";
  private closed = false;
  private attempt = 0;
  state: ConsoleState = initialState();

  constructor(private readonly opts: GatewayClientOptions) {}

  connect(): void {
    this.closed = false;
    this.dial();
  }

  private dial(): void {
    const sock = net.connect(this.opts.port, this.opts.host);
    this.sock = sock;
    sock.setEncoding("utf8");
    sock.on("connect", () => {
      this.attempt = 0;
      this.buf = "";
      // Ask for an immediate snapshot so a reconnect resyncs quickly.
      this.send({ type: "snapshot" });
    });
    sock.on("data", (chunk: string) => this.feed(chunk));
    sock.on("error", () => {
      /* close handler decides whether to redial */
    });
    sock.on("close", () => {
      this.sock = null;
      if (this.closed || this.opts.reconnect === false) return;
      const base = this.opts.backoffMs ?? 250;
      const delay = Math.min(base * 2 ** this.attempt, base * 10);
      this.attempt += 1;
      setTimeout(() => !this.closed && this.dial(), delay).unref?.();
    });
  }

  /** Split buffered bytes into lines and fold each event. */
  feed(chunk: string): void {
    this.buf += chunk;
    let nl: number;
    while ((nl = this.buf.indexOf("\n")) >= 0) {
      const line = this.buf.slice(0, nl).trim();
      this.buf = this.buf.slice(nl + 1);
      if (!line) continue;
      let ev: GatewayEvent;
      try {
        ev = parseEvent(line);
      } catch (err) {
        (this.opts.onBadLine ?? defaultBadLine)(line, err);
        continue;
      }
      this.state = applyEvent(this.state, ev);
      this.opts.onChange?.(this.state, ev);
    }
  }

  send(cmd: Command): void {
    if (!this.sock || this.sock.destroyed) return;
    this.sock.write(serializeCommand(cmd));
    if (cmd.type !== "snapshot") {
      this.state = noteCommandSent(this.state, cmd);
      this.opts.onChange?.(this.state, null);
    }
  }

  close(): void {
    this.closed = true;
    this.sock?.destroy();
    this.sock = null;
  }
}

function defaultBadLine(line: string, err: unknown): void {
  process.stderr.write(`unparseable gateway line: ${String(err)}\n  ${line}\n`);
}
