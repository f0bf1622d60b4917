/**
 * Terminal console entry point.
 *
 * Usage:
 *   node dist/main.js [--host 127.0.0.1] [--port 8787] [--once]
 *
 * Connects to a running gateway (`pyrewatch serve`), renders the console
 * state on every change, and reads operator commands from stdin:
 *   dispatch <id> | reject <id> | policy <mode> | pause | resume | quit
 *
 * --once renders until the run's outcome event arrives, then exits 0
 * (useful for piping / smoke tests).
 */

import * as readline from "node:readline";
import { GatewayClient } from "./client.js";
import { render } from "./render.js";

function parseArgs(argv: string[]): { host: string; port: number; once: boolean } {
  let host = "127.0.0.1";
  let port = 8787;
  let once = false;
  for (let i = 0; i < argv.length; i++) {
    const a = argv[i];
    if (a === "--host") host = argv[++i] ?? host;
    else if (a === "--port") port = Number(argv[++i] ?? port);
    else if (a === "--once") once = true;
    else {
      process.stderr.write(`unknown argument: ${a}\n`);
      process.exit(1);
    }
  }
  if (!Number.isFinite(port) || port <= 0) {
    process.stderr.write("invalid --port\n");
    process.exit(1);
  }
  return { host, port, once };
}

function main(): void {
  const { host, port, once } = parseArgs(process.argv.slice(2));
  let lastFrame = "";
  const client = new GatewayClient({
    host,
    port,
    onChange: (state, ev) => {
      // Only repaint when something visible changed or a tick boundary hit.
      const frame = render(state);
      if (frame !== lastFrame) {
        lastFrame = frame;
        process.stdout.write("\x1b[2J\x1b[H" + frame);
      }
      if (ev?.type === "outcome" && once) {
        client.close();
        process.exit(0);
      }
    },
  });
  client.connect();

  const rl = readline.createInterface({ input: process.stdin });
  rl.on("line", (raw) => {
    const [verb, arg] = raw.trim().split(/\s+/);
    switch (verb) {
      case "dispatch":
        client.send({ type: "dispatch", candidate_id: Number(arg) });
        break;
      case "reject":
        client.send({ type: "reject", candidate_id: Number(arg) });
        break;
      case "policy":
        if (arg === "Scripted" || arg === "Human") {
          client.send({ type: "set_policy", mode: arg });
        } else {
          process.stderr.write("policy <Scripted|Human>\n");
        }
        break;
      case "pause":
        client.send({ type: "pause" });
        break;
      case "resume":
        client.send({ type: "resume" });
        break;
      case "snapshot":
        client.send({ type: "snapshot" });
        break;
      case "quit":
      case "q":
        client.close();
        process.exit(0);
        break;
      case undefined:
      case "":
        break;
      default:
        process.stderr.write(`unknown command: ${verb}\n`);
    }
  });
}

main();
