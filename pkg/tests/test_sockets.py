"""Socket transport, session liveness, and WebSocket gateway integration."""

import json
import socket
import threading
import time

import pytest
from websockets.sync.client import connect as ws_connect

from fleettwin.harness import EventLog, compare_logs, run_lockstep, run_socket
from fleettwin.protocol import (
    ActivityState,
    FaultFrame,
    StatusFrame,
    decode_frame,
    encode_frame,
)
from fleettwin.scenario import load_scenario, parse_scenario
from fleettwin.server import TwinServer
from fleettwin.twin import ConnectionStatus
from tests.conftest import MINI_SCN


def wait_until(predicate, timeout=10.0, interval=0.02, message="condition"):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return
        time.sleep(interval)
    raise AssertionError(f"timed out waiting for {message}")


class FakeRobot:
    """Raw TCP client standing in for a robot process."""

    def __init__(self, host, port, platform_id):
        self.platform_id = platform_id
        self.sock = socket.create_connection((host, port), timeout=5.0)
        self.sock.settimeout(None)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.received = []
        self._lock = threading.Lock()
        self._thread = threading.Thread(target=self._reader, daemon=True)
        self._thread.start()

    def _reader(self):
        buffer = b""
        while True:
            try:
                data = self.sock.recv(4096)
            except OSError:
                return
            if not data:
                return
            buffer += data
            while b"\n" in buffer:
                line, _, buffer = buffer.partition(b"\n")
                with self._lock:
                    self.received.append(decode_frame(line + b"\n"))

    def frames(self):
        with self._lock:
            return list(self.received)

    def send(self, frame):
        self.sock.sendall(encode_frame(frame))

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


@pytest.fixture()
def slow_mini():
    # time_scale 2 keeps interactive windows wide enough for scripted clients
    return parse_scenario(MINI_SCN.replace("seed: 3", "seed: 3\ntime_scale: 2.0"))


def test_single_platform_config_single_listener(slow_mini):
    solo = slow_mini.without_platform("bravo")
    server = TwinServer(solo, port_base=0)
    server.start()
    try:
        assert list(server.ports) == ["alpha"]
        robot = FakeRobot("127.0.0.1", server.ports["alpha"], "alpha")
        wait_until(
            lambda: server.twin.sessions["alpha"].status is ConnectionStatus.CONNECTED,
            message="solo platform connected",
        )
        robot.close()
    finally:
        server.stop()


def test_socket_run_phase_equal_to_lockstep(failure_path):
    lock = run_lockstep(load_scenario(str(failure_path)))
    sock = run_socket(str(failure_path))
    assert sock.metrics.mission_completed
    assert sock.metrics.on_site_interventions == 0
    verdict = compare_logs(lock.log, sock.log, "phase")
    assert verdict.equal, verdict.detail


def test_isolation_disconnect_does_not_block_others(slow_mini):
    server = TwinServer(slow_mini, port_base=0)
    server.start()
    try:
        alpha = FakeRobot("127.0.0.1", server.ports["alpha"], "alpha")
        bravo = FakeRobot("127.0.0.1", server.ports["bravo"], "bravo")
        wait_until(
            lambda: all(
                s.status is ConnectionStatus.CONNECTED
                for s in server.twin.sessions.values()
            ),
            message="both sessions connected",
        )
        alpha.send(StatusFrame("alpha", 0.0, 0.0, 0.0, 99, ActivityState.IDLE))
        bravo.send(StatusFrame("bravo", 0.0, 2.0, 0.0, 99, ActivityState.IDLE))
        wait_until(
            lambda: len(server.twin.world.message_log) >= 2, message="frames ingested"
        )

        alpha.close()  # one platform drops mid-run
        wait_until(
            lambda: server.twin.sessions["alpha"].status is ConnectionStatus.DISCONNECTED,
            message="alpha disconnect noticed",
        )

        before = len(server.twin.world.message_log)
        for n in range(5):
            bravo.send(StatusFrame("bravo", n / 10, 2.0, 0.0, 98, ActivityState.IDLE))
            time.sleep(0.02)
        wait_until(
            lambda: len(server.twin.world.message_log) >= before + 5,
            message="bravo telemetry continues",
        )
        bravo.close()
    finally:
        server.stop()


def test_silent_session_goes_stale_and_warns(slow_mini):
    server = TwinServer(slow_mini, port_base=0)
    events = []
    server.twin.add_sink(lambda kind, payload: events.append((kind, payload)))
    server.start()
    try:
        alpha = FakeRobot("127.0.0.1", server.ports["alpha"], "alpha")
        bravo = FakeRobot("127.0.0.1", server.ports["bravo"], "bravo")
        alpha.send(StatusFrame("alpha", 0.0, 0.0, 0.0, 99, ActivityState.IDLE))

        def keep_bravo_fresh():
            bravo.send(StatusFrame("bravo", 0.0, 2.0, 0.0, 99, ActivityState.IDLE))
            return server.twin.sessions["alpha"].status is ConnectionStatus.STALE

        wait_until(keep_bravo_fresh, timeout=15.0, interval=0.2, message="alpha stale")
        assert any(
            k == "decision" and p.get("code") == "COMM" for k, p in events
        ), "stale session should raise a COMM warning"
        assert server.twin.sessions["bravo"].status is ConnectionStatus.CONNECTED
        alpha.close()
        bravo.close()
    finally:
        server.stop()


def test_gateway_snapshot_trigger_and_nack(slow_mini):
    server = TwinServer(slow_mini, port_base=0, gateway_port=0)
    server.start()
    try:
        alpha = FakeRobot("127.0.0.1", server.ports["alpha"], "alpha")
        alpha.send(StatusFrame("alpha", 0.0, 0.0, 0.0, 99, ActivityState.IDLE))
        with ws_connect(f"ws://127.0.0.1:{server.gateway.port}") as ws:
            first = json.loads(ws.recv(timeout=5))
            assert first["type"] == "snapshot"
            assert "alpha" in first["world"]["robots"]
            assert first["platforms"]["alpha"]["presets"] == {"S": "scan_plate"}

            ws.send(json.dumps({"type": "trigger", "platform": "alpha", "char": "S"}))
            wait_until(
                lambda: "alpha" in server.twin.pending_missions, message="trigger accepted"
            )
            wait_until(
                lambda: any(f == decode_frame(b"S\n") for f in alpha.frames()),
                message="trigger frame delivered",
            )

            # second trigger while busy -> NACK
            ws.send(json.dumps({"type": "trigger", "platform": "alpha", "char": "S"}))
            nack = None
            deadline = time.monotonic() + 5
            while time.monotonic() < deadline:
                message = json.loads(ws.recv(timeout=5))
                if message["type"] == "nack":
                    nack = message
                    break
            assert nack is not None and nack["request"] == "trigger"
        alpha.close()
    finally:
        server.stop()


def test_gateway_decision_request_and_approve(slow_mini):
    server = TwinServer(slow_mini, port_base=0, gateway_port=0, interactive=True)
    server.start()
    try:
        alpha = FakeRobot("127.0.0.1", server.ports["alpha"], "alpha")
        alpha.send(StatusFrame("alpha", 3.0, 0.0, 0.0, 40, ActivityState.IDLE))
        with ws_connect(f"ws://127.0.0.1:{server.gateway.port}") as ws:
            json.loads(ws.recv(timeout=5))  # snapshot
            alpha.send(FaultFrame("alpha", "BATF", "dead cell"))

            request = None
            deadline = time.monotonic() + 5
            while time.monotonic() < deadline:
                message = json.loads(ws.recv(timeout=5))
                if message["type"] == "decision_request":
                    request = message
                    break
            assert request is not None
            plan = request["plan"]
            assert plan["code"] == "BATF"
            assert any(t["verb"] == "Divert" for t in plan["tasks"])

            ws.send(json.dumps({"type": "approve", "plan_id": plan["plan_id"]}))
            wait_until(
                lambda: any(
                    getattr(f, "verb", None) is not None for f in alpha.frames()
                ),
                message="divert command after approval",
            )
        alpha.close()
    finally:
        server.stop()


def test_gateway_log_indices_monotonic_for_reconnect(slow_mini):
    server = TwinServer(slow_mini, port_base=0, gateway_port=0)
    server.start()
    try:
        alpha = FakeRobot("127.0.0.1", server.ports["alpha"], "alpha")

        def collect_indices():
            indices = []
            with ws_connect(f"ws://127.0.0.1:{server.gateway.port}") as ws:
                json.loads(ws.recv(timeout=5))
                alpha.send(StatusFrame("alpha", 0.0, 0.0, 0.0, 99, ActivityState.IDLE))
                deadline = time.monotonic() + 5
                while time.monotonic() < deadline and len(indices) < 1:
                    message = json.loads(ws.recv(timeout=5))
                    if message["type"] == "log":
                        indices.append(message["entry"]["index"])
            return indices

        first = collect_indices()
        second = collect_indices()  # reconnect: indices must continue, not restart
        assert first and second
        assert second[0] > first[-1]
    finally:
        server.stop()
