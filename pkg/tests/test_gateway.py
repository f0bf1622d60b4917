"""Console gateway: hello handshake, event broadcast, inbound commands."""

import json
import socket
import threading
import time

import pytest

from pyrewatch import simengine as se
from pyrewatch.gateway import SCHEMA_VERSION, GatewayServer, serve_engine
from pyrewatch.retriever import Phase

SCENARIO = "scenarios/single_dog.json"


class LineClient:
    """Tiny blocking NDJSON client for tests."""

    def __init__(self, port):
        self.sock = socket.create_connection(("127.0.0.1", port), timeout=5)
        self.fh = self.sock.makefile("r", encoding="utf-8")

    def read_event(self, timeout=5):
        self.sock.settimeout(timeout)
        line = self.fh.readline()
        if not line:
            raise EOFError("gateway closed")
        return json.loads(line)

    def send(self, cmd):
        self.sock.sendall((json.dumps(cmd) + "\n").encode())

    def close(self):
        self.sock.close()


class TestGatewayServer:
    def test_hello_carries_schema_version(self):
        server = GatewayServer()
        try:
            client = LineClient(server.port)
            hello = client.read_event()
            assert hello == {"type": "hello", "tick": -1,
                             "data": {"schema": SCHEMA_VERSION}}
            client.close()
        finally:
            server.close()

    def test_broadcast_reaches_every_client(self):
        server = GatewayServer()
        try:
            a, b = LineClient(server.port), LineClient(server.port)
            a.read_event(), b.read_event()  # hellos
            time.sleep(0.05)
            server.broadcast({"type": "alarm", "tick": 3, "data": {}})
            assert a.read_event()["type"] == "alarm"
            assert b.read_event()["type"] == "alarm"
            a.close(), b.close()
        finally:
            server.close()

    def test_commands_forwarded_in_order(self):
        got = []
        server = GatewayServer(on_command=got.append)
        try:
            client = LineClient(server.port)
            client.read_event()
            for i in range(5):
                client.send({"type": "dispatch", "candidate_id": i})
            deadline = time.time() + 5
            while len(got) < 5 and time.time() < deadline:
                time.sleep(0.01)
            assert [c["candidate_id"] for c in got] == list(range(5))
            client.close()
        finally:
            server.close()

    def test_bad_json_command_answered_with_error(self):
        server = GatewayServer(on_command=lambda c: None)
        try:
            client = LineClient(server.port)
            client.read_event()
            client.sock.sendall(b"{nope\n")
            err = client.read_event()
            assert err["type"] == "error"
            client.close()
        finally:
            server.close()


class TestServeEngine:
    def test_live_run_streams_events_and_accepts_commands(self):
        cfg = se.load_scenario_file(SCENARIO)
        engine = se.Engine(cfg, max_ticks=1200)
        stop = threading.Event()
        ready = {}
        ready_evt = threading.Event()

        def on_ready(server):
            ready["port"] = server.port
            ready_evt.set()

        thread = threading.Thread(
            target=serve_engine,
            kwargs=dict(engine=engine, speed=0, stop_event=stop,
                        ready_cb=on_ready),
            daemon=True)
        thread.start()
        assert ready_evt.wait(5)
        client = LineClient(ready["port"])
        try:
            assert client.read_event()["type"] == "hello"
            # the live stream must include periodic snapshots
            seen = set()
            candidate_id = None
            for _ in range(10_000):
                ev = client.read_event()
                seen.add(ev["type"])
                if ev["type"] == "candidate" and candidate_id is None:
                    candidate_id = ev["data"]["id"]
                    client.send({"type": "dispatch",
                                 "candidate_id": candidate_id})
                if ev["type"] == "ack" and \
                        ev["data"].get("command") == "dispatch":
                    break
            else:
                pytest.fail("no dispatch acknowledgment")
            assert "snapshot" in seen
            # the engine accepted the operator dispatch: retriever leaves Idle
            deadline = time.time() + 10
            while engine.retr_state.phase is Phase.IDLE \
                    and time.time() < deadline:
                time.sleep(0.01)
            assert engine.retr_state.phase is not Phase.IDLE
        finally:
            stop.set()
            client.close()
            thread.join(timeout=5)
