"""WebSocket gateway for the operator console.

Pushes snapshots, log entries and decision requests as JSON; accepts
trigger/command/approve/reject actions and funnels them onto the twin's
single writer thread.
"""

from __future__ import annotations

import json
import threading

from websockets.sync.server import serve

from .twin import PlatformBusy, PlatformDisconnected, TwinError, UnknownTrigger

SNAPSHOT_PERIOD_S = 1.0  # sim seconds


class Gateway:
    def __init__(self, server, port: int):
        self.server = server
        self.requested_port = port
        self.port: int | None = None
        self._ws_server = None
        self._thread: threading.Thread | None = None
        self._clients: dict = {}  # connection -> send lock
        self._clients_lock = threading.Lock()
        self._log_index = 0
        self._last_snapshot = -1e9
        server.twin.add_sink(self._twin_sink)

    # -- lifecycle --

    def start(self) -> None:
        try:
            self._ws_server = serve(self._handler, "127.0.0.1", self.requested_port)
        except OSError as exc:
            from .twin import PortInUse

            raise PortInUse(f"gateway port {self.requested_port}: {exc}") from None
        self.port = self._ws_server.socket.getsockname()[1]
        self._thread = threading.Thread(target=self._ws_server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        if self._ws_server is not None:
            self._ws_server.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=2.0)

    # -- twin-side events (called on the applier thread) --

    def _twin_sink(self, kind: str, payload: dict) -> None:
        if kind == "frame":
            entry = {
                "index": self._log_index,
                "kind": "FRAME",
                "time": round(payload["time"], 3),
                "direction": payload["direction"],
                "platform": payload["platform"],
                "wire": payload["wire"],
            }
            self._log_index += 1
            self._broadcast({"type": "log", "entry": entry})
        elif kind in ("decision", "effect", "c3"):
            entry = {
                "index": self._log_index,
                "kind": kind.upper() if kind != "c3" else "C3",
                "time": round(payload.get("time", 0.0), 3),
            }
            entry.update({k: v for k, v in payload.items() if k != "time"})
            self._log_index += 1
            self._broadcast({"type": "log", "entry": entry})
        elif kind == "decision_request":
            plan = {k: v for k, v in payload.items() if k != "time"}
            self._broadcast({"type": "decision_request", "plan": plan})

    def maybe_push_snapshot(self, now: float) -> None:
        if now - self._last_snapshot < SNAPSHOT_PERIOD_S:
            return
        self._last_snapshot = now
        self._broadcast(self.server.twin.snapshot())

    def _broadcast(self, message: dict) -> None:
        data = json.dumps(message, sort_keys=True)
        with self._clients_lock:
            clients = list(self._clients.items())
        for conn, lock in clients:
            try:
                with lock:
                    conn.send(data)
            except Exception:
                with self._clients_lock:
                    self._clients.pop(conn, None)

    # -- client side --

    def _handler(self, conn) -> None:
        lock = threading.Lock()
        with self._clients_lock:
            self._clients[conn] = lock
        # fresh snapshot so a (re)connecting console can resync immediately
        self.server.control(
            lambda twin: self._send_one(conn, lock, twin.snapshot())
        )
        try:
            for raw in conn:
                self._handle_client_message(conn, lock, raw)
        except Exception:
            pass
        finally:
            with self._clients_lock:
                self._clients.pop(conn, None)

    def _send_one(self, conn, lock, message: dict) -> None:
        try:
            with lock:
                conn.send(json.dumps(message, sort_keys=True))
        except Exception:
            with self._clients_lock:
                self._clients.pop(conn, None)

    def _handle_client_message(self, conn, lock, raw) -> None:
        try:
            message = json.loads(raw)
            mtype = message["type"]
        except (ValueError, KeyError, TypeError):
            self._send_one(conn, lock, {"type": "nack", "reason": "bad json"})
            return

        def nack(reason: str) -> None:
            self._send_one(conn, lock, {"type": "nack", "request": mtype, "reason": reason})

        if mtype == "trigger":
            platform, char = str(message.get("platform")), str(message.get("char"))

            def do_trigger(twin):
                try:
                    twin.dispatch_mission(platform, char)
                except (UnknownTrigger, PlatformBusy, PlatformDisconnected) as exc:
                    nack(str(exc))

            self.server.control(do_trigger)
        elif mtype == "command":
            platform = str(message.get("platform"))
            verb = str(message.get("verb"))
            args = tuple(str(a) for a in message.get("args", []))

            def do_command(twin):
                try:
                    twin.send_command(platform, verb, args)
                except TwinError as exc:
                    nack(str(exc))

            self.server.control(do_command)
        elif mtype == "approve":
            plan_id = str(message.get("plan_id"))
            self.server.control(lambda twin: twin.approve_plan(plan_id))
        elif mtype == "reject":
            plan_id = str(message.get("plan_id"))
            self.server.control(lambda twin: twin.reject_plan(plan_id))
        else:
            nack(f"unknown type {mtype!r}")
