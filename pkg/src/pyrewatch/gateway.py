"""Console gateway: newline-delimited JSON over TCP.

The gateway never blocks the tick loop: the engine hands it a batch of
events after each tick and pulls queued commands at the next tick
boundary. Protocol details live in docs/gateway.md.
"""

import json
import socket
import threading
import time

SCHEMA_VERSION = 1


class GatewayServer:
    """Broadcasts event lines to every connected console and queues their
    inbound command lines for the engine."""

    def __init__(self, host="127.0.0.1", port=0, on_command=None):
        self.on_command = on_command
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._sock.bind((host, port))
        self._sock.listen(8)
        self.port = self._sock.getsockname()[1]
        self._clients = []
        self._lock = threading.Lock()
        self._closed = False
        self._accept_thread = threading.Thread(target=self._accept_loop,
                                               daemon=True)
        self._accept_thread.start()

    def _accept_loop(self):
        while not self._closed:
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return
            hello = json.dumps({"type": "hello", "tick": -1,
                                "data": {"schema": SCHEMA_VERSION}},
                               sort_keys=True, separators=(",", ":"))
            try:
                conn.sendall(hello.encode() + b"\n")
            except OSError:
                conn.close()
                continue
            with self._lock:
                self._clients.append(conn)
            threading.Thread(target=self._read_loop, args=(conn,),
                             daemon=True).start()

    def _read_loop(self, conn):
        buf = b""
        while not self._closed:
            try:
                chunk = conn.recv(4096)
            except OSError:
                break
            if not chunk:
                break
            buf += chunk
            while b"\n" in buf:
                line, buf = buf.split(b"\n", 1)
                if not line.strip():
                    continue
                try:
                    cmd = json.loads(line)
                except json.JSONDecodeError:
                    self._send(conn, {"type": "error", "tick": -1,
                                      "data": {"reason": "bad JSON command"}})
                    continue
                if self.on_command is not None:
                    self.on_command(cmd)
        with self._lock:
            if conn in self._clients:
                self._clients.remove(conn)
        conn.close()

    def _send(self, conn, event):
        line = json.dumps(event, sort_keys=True, separators=(",", ":"))
        try:
            conn.sendall(line.encode() + b"\n")
        except OSError:
            pass

    def broadcast_line(self, line: str):
        data = line.encode() + b"\n"
        with self._lock:
            clients = list(self._clients)
        for conn in clients:
            try:
                conn.sendall(data)
            except OSError:
                with self._lock:
                    if conn in self._clients:
                        self._clients.remove(conn)

    def broadcast(self, event: dict):
        self.broadcast_line(json.dumps(event, sort_keys=True,
                                       separators=(",", ":")))

    def close(self):
        self._closed = True
        try:
            self._sock.close()
        except OSError:
            pass
        with self._lock:
            for conn in self._clients:
                conn.close()
            self._clients.clear()


def serve_engine(engine, host="127.0.0.1", port=0, speed: float = 1.0,
                 stop_event: threading.Event = None, ready_cb=None):
    """Run a live simulation behind a gateway.

    `speed` throttles wall-clock pacing for human viewing only (0 = as
    fast as possible); tick logic is unaffected. Blocks until the run
    ends or stop_event is set.
    """
    server = GatewayServer(host=host, port=port,
                           on_command=engine.submit_command)
    if ready_cb is not None:
        ready_cb(server)
    try:
        delay = engine.cfg.dt_ms / 1000.0 / speed if speed > 0 else 0.0
        while engine.outcome is None:
            if stop_event is not None and stop_event.is_set():
                break
            for ev in engine.step():
                server.broadcast(ev)
            if delay:
                time.sleep(delay)
        return engine.outcome
    finally:
        server.close()


def serve_replay(log, host="127.0.0.1", port=0, speed: float = 1.0,
                 stop_event: threading.Event = None, ready_cb=None):
    """Stream a recorded gateway event log to connected consoles."""
    server = GatewayServer(host=host, port=port)
    if ready_cb is not None:
        ready_cb(server)
    try:
        delay = 0.1 / speed if speed > 0 else 0.0
        # give a console a beat to connect before the stream starts
        time.sleep(0.2 if speed > 0 else 0.0)
        for line in log.gateway_lines():
            if stop_event is not None and stop_event.is_set():
                return
            server.broadcast_line(line)
            if delay:
                time.sleep(delay)
    finally:
        server.close()
