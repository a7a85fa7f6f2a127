"""Socket-mode twin server.

One TCP listener per platform port feeds decoded frames into a single
applier thread, so the world model keeps exactly one writer no matter how
many sessions are live. Sim time is wall time scaled by the scenario's
time_scale.
"""

from __future__ import annotations

import queue
import socket
import threading
import time

from .protocol import Frame, ProtocolError, decode_frame, encode_frame
from .scenario import Scenario
from .twin import PlatformDisconnected, PortInUse, TwinCore

_POLL_S = 0.25


class SocketTransport:
    def __init__(self):
        self._conns: dict[str, socket.socket] = {}
        self._lock = threading.Lock()

    def attach(self, platform_id: str, conn: socket.socket) -> None:
        with self._lock:
            old = self._conns.pop(platform_id, None)
            self._conns[platform_id] = conn
        if old is not None:
            _close_quietly(old)

    def detach(self, platform_id: str, conn: socket.socket | None = None) -> None:
        with self._lock:
            current = self._conns.get(platform_id)
            if conn is None or current is conn:
                self._conns.pop(platform_id, None)

    def send(self, platform_id: str, frame: Frame) -> None:
        with self._lock:
            conn = self._conns.get(platform_id)
        if conn is None:
            raise PlatformDisconnected(platform_id)
        try:
            conn.sendall(encode_frame(frame))
        except OSError:
            raise PlatformDisconnected(platform_id) from None


def _close_quietly(sock: socket.socket) -> None:
    try:
        sock.close()
    except OSError:
        pass


class TwinServer:
    """Owns the listeners, the applier thread and (optionally) the gateway."""

    def __init__(
        self,
        scenario: Scenario,
        interactive: bool | None = None,
        port_base: int | None = None,
        gateway_port: int | None = None,
        time_scale: float | None = None,
    ):
        self.scenario = scenario
        self.transport = SocketTransport()
        self.twin = TwinCore(scenario, self.transport, interactive=interactive)
        self.time_scale = scenario.time_scale if time_scale is None else time_scale
        self.queue: queue.Queue = queue.Queue()
        self.ports: dict[str, int] = {}
        self.gateway = None
        self.gateway_port_request = gateway_port
        self.driver = None
        self._port_base = port_base
        self._listeners: dict[str, socket.socket] = {}
        self._threads: list[threading.Thread] = []
        self._running = False
        self._start_wall = 0.0
        self._lock = threading.Lock()  # guards control access to twin via queue only

    # -- lifecycle --

    def start(self) -> None:
        for index, spec in enumerate(self.scenario.platforms):
            port = spec.port
            if self._port_base is not None:
                port = 0 if self._port_base == 0 else self._port_base + index
            listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            try:
                listener.bind(("127.0.0.1", port))
            except OSError as exc:
                for other in self._listeners.values():
                    _close_quietly(other)
                raise PortInUse(f"{spec.id}: port {port}: {exc}") from None
            listener.listen(2)
            self._listeners[spec.id] = listener
            self.ports[spec.id] = listener.getsockname()[1]

        self._running = True
        self._start_wall = time.monotonic()
        for pid, listener in self._listeners.items():
            thread = threading.Thread(
                target=self._accept_loop, args=(pid, listener), daemon=True
            )
            thread.start()
            self._threads.append(thread)
        applier = threading.Thread(target=self._applier_loop, daemon=True)
        applier.start()
        self._threads.append(applier)

        if self.gateway_port_request is not None:
            from .gateway import Gateway

            self.gateway = Gateway(self, self.gateway_port_request)
            self.gateway.start()

    def stop(self) -> None:
        self._running = False
        if self.gateway is not None:
            self.gateway.stop()
        for listener in self._listeners.values():
            _close_quietly(listener)
        self.queue.put(("halt", None, None))
        for thread in self._threads:
            thread.join(timeout=2.0)

    def sim_now(self) -> float:
        return (time.monotonic() - self._start_wall) * self.time_scale

    # -- control plane (thread-safe: runs on the applier) --

    def control(self, fn) -> None:
        """Queue a callable to run at the twin's single writer point."""
        self.queue.put(("control", fn, None))

    def attach_driver(self, driver) -> None:
        self.control(lambda twin: setattr(self, "driver", driver))

    def wait_connected(self, timeout_s: float = 10.0) -> bool:
        from .twin import ConnectionStatus

        deadline = time.monotonic() + timeout_s
        while time.monotonic() < deadline:
            if all(
                s.status is ConnectionStatus.CONNECTED
                for s in self.twin.sessions.values()
            ):
                return True
            time.sleep(0.02)
        return False

    # -- internals --

    def _accept_loop(self, platform_id: str, listener: socket.socket) -> None:
        while self._running:
            try:
                conn, _addr = listener.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            self.transport.attach(platform_id, conn)
            self.queue.put(("connect", platform_id, None))
            reader = threading.Thread(
                target=self._read_loop, args=(platform_id, conn), daemon=True
            )
            reader.start()

    def _read_loop(self, platform_id: str, conn: socket.socket) -> None:
        buffer = b""
        while self._running:
            try:
                data = conn.recv(4096)
            except OSError:
                break
            if not data:
                break
            buffer += data
            while b"\n" in buffer:
                line, _, buffer = buffer.partition(b"\n")
                self.queue.put(("line", platform_id, line + b"\n"))
        self.transport.detach(platform_id, conn)
        self.queue.put(("disconnect", platform_id, None))
        _close_quietly(conn)

    def _applier_loop(self) -> None:
        try:
            self._applier_loop_inner()
        except Exception:  # the writer must never die silently
            import traceback

            traceback.print_exc()
            self._running = False

    def _applier_loop_inner(self) -> None:
        dt_wall = self.scenario.tick_dt / self.time_scale
        next_tick = time.monotonic()
        while self._running:
            timeout = max(0.0, next_tick - time.monotonic())
            try:
                kind, pid, payload = self.queue.get(timeout=timeout)
            except queue.Empty:
                kind, pid, payload = None, None, None
            now = self.sim_now()
            if kind == "halt":
                return
            if kind == "connect":
                self.twin.connect(pid)
            elif kind == "disconnect":
                if self._running:
                    self.twin.disconnect(pid)
            elif kind == "line":
                try:
                    frame = decode_frame(payload)
                except ProtocolError as exc:
                    self.twin._log_effect(
                        "decode_error", platform=pid, reason=type(exc).__name__
                    )
                else:
                    self.twin.ingest_frame(frame, pid, now)
            elif kind == "control":
                try:
                    pid(self.twin)
                except Exception as exc:  # control errors must not kill the writer
                    self.twin._log_effect("control_error", reason=str(exc))
            if time.monotonic() >= next_tick:
                self.twin.on_tick(now)
                if self.driver is not None:
                    self.driver.on_tick(now)
                    self.driver.check_all_home(now)
                if self.gateway is not None:
                    self.gateway.maybe_push_snapshot(now)
                next_tick += dt_wall
                if time.monotonic() > next_tick + 50 * dt_wall:
                    next_tick = time.monotonic()  # fell far behind; resync
