"""Command line: validate scenarios, run missions, serve the live twin.

Exit codes: 0 success, 1 mission-level failure, 2 usage/config error.
Output files are written atomically so CI never reads a partial log.
"""

from __future__ import annotations

import argparse
import json
import os
import signal
import sys
import tempfile
import threading
from dataclasses import replace
from pathlib import Path

from .harness import (
    EventLog,
    compare_logs,
    deviation_csv,
    emit_deviation_series,
    metrics_from_log,
    run_lockstep,
    run_socket,
)
from .scenario import ScenarioError, load_scenario
from .twin import PortInUse, TwinError

EXIT_OK = 0
EXIT_MISSION_FAILED = 1
EXIT_CONFIG = 2


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _write_outputs(out_dir: Path, name: str, log: EventLog, metrics, deviation) -> None:
    _atomic_write(out_dir / f"{name}.log", log.to_text())
    _atomic_write(out_dir / f"{name}.metrics.json", json.dumps(metrics.to_dict(), indent=2) + "\n")
    _atomic_write(out_dir / f"{name}.deviation.csv", deviation_csv(deviation))


def cmd_validate(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(
        f"ok: {scenario.name}: {len(scenario.platforms)} platforms, "
        f"{len(scenario.arena.assets)} assets, {len(scenario.injections)} injections",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        scenario = load_scenario(args.scenario)
        if args.seed is not None:
            scenario = replace(scenario, seed=args.seed)
        if args.mode == "lockstep":
            result = run_lockstep(scenario)
        else:
            port_base = _port_base_env(args.port_base)
            result = run_socket(
                args.scenario, port_base=port_base, seed=args.seed
            )
    except (ScenarioError, TwinError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    metrics = result.metrics
    if args.out is not None:
        _write_outputs(Path(args.out), scenario.name, result.log, metrics, result.deviation)
    else:
        sys.stdout.write(result.log.to_text())
    print(
        f"{scenario.name}: completed={metrics.mission_completed} "
        f"faults={metrics.faults_raised} interventions={metrics.on_site_interventions} "
        f"inspections={metrics.inspections_completed} sim={metrics.sim_duration:.1f}s",
        file=sys.stderr,
    )
    if metrics.mission_completed and metrics.on_site_interventions == 0:
        return EXIT_OK
    return EXIT_MISSION_FAILED


def cmd_serve(args) -> int:
    import subprocess

    from .server import TwinServer

    try:
        scenario = load_scenario(args.scenario)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    gateway_port = args.gateway_port
    if gateway_port is None:
        gateway_port = int(os.environ.get("FLEETTWIN_GATEWAY_PORT", "8765"))

    log = EventLog(
        {
            "scenario": scenario.name,
            "scenario_hash": scenario.source_hash,
            "seed": str(scenario.seed),
            "mode": "socket",
            "interactive": str(bool(args.interactive or scenario.interactive)).lower(),
        }
    )
    try:
        server = TwinServer(
            scenario,
            interactive=True if args.interactive else None,
            port_base=_port_base_env(args.port_base),
            gateway_port=gateway_port,
            time_scale=args.time_scale,
        )
        server.twin.add_sink(log.sink)
        server.start()
    except (PortInUse, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    print(
        f"twin up: platforms {server.ports}, gateway ws://127.0.0.1:{server.gateway.port}",
        file=sys.stderr,
    )

    procs = []
    if not args.no_robots:
        for spec in sorted(scenario.platforms, key=lambda s: s.id):
            procs.append(
                subprocess.Popen(
                    [
                        sys.executable, "-m", "fleettwin.robot_agent",
                        "--id", spec.id,
                        "--host", "127.0.0.1",
                        "--port", str(server.ports[spec.id]),
                        "--scenario", str(args.scenario),
                        "--seed", str(scenario.seed),
                        "--time-scale", str(server.time_scale),
                    ]
                )
            )

    stop_event = threading.Event()

    def handle_signal(_signum, _frame):
        stop_event.set()

    signal.signal(signal.SIGTERM, handle_signal)
    signal.signal(signal.SIGINT, handle_signal)
    stop_event.wait()

    for proc in procs:
        proc.terminate()
    for proc in procs:
        try:
            proc.wait(timeout=3.0)
        except subprocess.TimeoutExpired:
            proc.kill()
    server.stop()

    if args.out is not None:
        metrics = metrics_from_log(log, False, 0, "served")
        _write_outputs(Path(args.out), scenario.name, log, metrics, emit_deviation_series(log))
    print("twin stopped, log flushed", file=sys.stderr)
    return EXIT_OK


def cmd_compare(args) -> int:
    try:
        log_a = EventLog.parse(Path(args.log_a).read_text())
        log_b = EventLog.parse(Path(args.log_b).read_text())
    except (OSError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    verdict = compare_logs(log_a, log_b, args.mode)
    if verdict.equal:
        print(f"equal ({args.mode})", file=sys.stderr)
        return EXIT_OK
    print(f"not equal ({args.mode}): {verdict.detail}", file=sys.stderr)
    return EXIT_MISSION_FAILED


def cmd_export(args) -> int:
    try:
        log = EventLog.parse(Path(args.log).read_text())
    except (OSError, ValueError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    name = Path(args.log).stem
    completed = any(
        r.kind == "METRIC" and r.fields[0] == "mission_completed" and r.fields[1] == "True"
        for r in log.records
    )
    interventions = next(
        (
            int(r.fields[1])
            for r in log.records
            if r.kind == "METRIC" and r.fields[0] == "on_site_interventions"
        ),
        0,
    )
    metrics = metrics_from_log(log, completed, interventions, "exported")
    out_dir = Path(args.out)
    _atomic_write(out_dir / f"{name}.metrics.json", json.dumps(metrics.to_dict(), indent=2) + "\n")
    _atomic_write(out_dir / f"{name}.deviation.csv", deviation_csv(emit_deviation_series(log)))
    print(f"exported {name}.metrics.json and {name}.deviation.csv", file=sys.stderr)
    return EXIT_OK


def _port_base_env(flag_value: int | None) -> int | None:
    if flag_value is not None:
        return flag_value
    env = os.environ.get("FLEETTWIN_BASE_PORT")
    return int(env) if env else None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fleettwin", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="parse and cross-check a scenario file")
    p_validate.add_argument("scenario")
    p_validate.set_defaults(fn=cmd_validate)

    p_run = sub.add_parser("run", help="run a scenario headless and write artifacts")
    p_run.add_argument("scenario")
    p_run.add_argument("--mode", choices=("lockstep", "socket"), default="lockstep")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None, help="output directory (.log/.json/.csv)")
    p_run.add_argument("--port-base", type=int, default=None)
    p_run.set_defaults(fn=cmd_run)

    p_serve = sub.add_parser("serve", help="serve the live twin until signalled")
    p_serve.add_argument("scenario")
    p_serve.add_argument("--gateway-port", type=int, default=None)
    p_serve.add_argument("--interactive", action="store_true")
    p_serve.add_argument("--port-base", type=int, default=None)
    p_serve.add_argument("--time-scale", type=float, default=None)
    p_serve.add_argument("--no-robots", action="store_true")
    p_serve.add_argument("--out", default=None)
    p_serve.set_defaults(fn=cmd_serve)

    p_compare = sub.add_parser("compare", help="compare two canonical logs")
    p_compare.add_argument("log_a")
    p_compare.add_argument("log_b")
    p_compare.add_argument("--mode", choices=("strict", "phase"), default="strict")
    p_compare.set_defaults(fn=cmd_compare)

    p_export = sub.add_parser("export", help="derive metrics/deviation files from a log")
    p_export.add_argument("log")
    p_export.add_argument("--out", default=".")
    p_export.set_defaults(fn=cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code not in (0, None) else 0
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
