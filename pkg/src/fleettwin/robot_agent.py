"""Socket-mode robot process: one SimRobot speaking the wire protocol over TCP.

Runs the exact state machine lockstep mode uses; only the pacing differs
(wall-clock ticks scaled by --time-scale).
"""

from __future__ import annotations

import argparse
import queue
import socket
import sys
import threading
import time

from .protocol import ProtocolError, decode_frame, encode_frame
from .robots import SimRobot
from .scenario import load_scenario


def build_robot(scenario, platform_id: str, seed: int | None = None) -> SimRobot:
    spec = scenario.platform(platform_id)
    from .harness import _profile_from_spec

    return SimRobot(
        _profile_from_spec(spec),
        scenario.arena,
        scenario.scripts,
        injections=scenario.injections_for(platform_id),
        seed=scenario.seed if seed is None else seed,
        registry=scenario.registry,
    )


def _reader(conn: socket.socket, inbox: queue.Queue, stop: threading.Event) -> None:
    buffer = b""
    while not stop.is_set():
        try:
            data = conn.recv(4096)
        except OSError:
            break
        if not data:
            break
        buffer += data
        while b"\n" in buffer:
            line, _, buffer = buffer.partition(b"\n")
            try:
                inbox.put(decode_frame(line + b"\n"))
            except ProtocolError:
                continue  # garbage on the wire; robots just ignore it
    stop.set()


def run_agent(
    scenario_path: str,
    platform_id: str,
    host: str,
    port: int,
    seed: int | None,
    time_scale: float,
    connect_retries: int = 50,
) -> int:
    scenario = load_scenario(scenario_path)
    robot = build_robot(scenario, platform_id, seed)
    dt = scenario.tick_dt

    conn = None
    for _ in range(connect_retries):
        try:
            conn = socket.create_connection((host, port), timeout=2.0)
            break
        except OSError:
            time.sleep(0.1)
    if conn is None:
        print(f"{platform_id}: cannot reach twin at {host}:{port}", file=sys.stderr)
        return 1
    conn.settimeout(None)  # connect timeout must not linger on recv/send
    conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    inbox: queue.Queue = queue.Queue()
    stop = threading.Event()
    reader = threading.Thread(target=_reader, args=(conn, inbox, stop), daemon=True)
    reader.start()

    def send_all(frames) -> bool:
        for frame in frames:
            try:
                conn.sendall(encode_frame(frame))
            except OSError:
                stop.set()
                return False
        return True

    next_wall = time.monotonic()
    while not stop.is_set():
        while True:
            try:
                frame = inbox.get_nowait()
            except queue.Empty:
                break
            if not send_all(robot.handle_frame(frame)):
                break
        if not send_all(robot.tick(dt)):
            break
        next_wall += dt / time_scale
        delay = next_wall - time.monotonic()
        if delay > 0:
            time.sleep(delay)
        else:
            next_wall = time.monotonic()
    conn.close()
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="fleettwin-robot", description=__doc__)
    parser.add_argument("--id", required=True, help="platform id from the scenario")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, required=True)
    parser.add_argument("--scenario", required=True)
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--time-scale", type=float, default=None)
    args = parser.parse_args(argv)

    scenario = load_scenario(args.scenario)
    scale = args.time_scale if args.time_scale is not None else scenario.time_scale
    return run_agent(args.scenario, args.id, args.host, args.port, args.seed, scale)


if __name__ == "__main__":
    sys.exit(main())
