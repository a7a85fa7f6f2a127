"""Run orchestration: drive the canonical mission, record it, compare runs.

A run produces an EventLog (canonical, line-oriented, byte-comparable) and
RunMetrics. Lockstep runs are single-threaded and bit-reproducible; socket
runs reuse the same driver against the TCP server and are compared to
lockstep at phase granularity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .robots import SimRobot
from .scenario import Scenario
from .twin import PlatformBusy, PlatformDisconnected, TwinCore, TwinError, UnknownTrigger

HOME_TOLERANCE_M = 0.15


# --- canonical event log ---

_KINDS = ("FRAME", "EFFECT", "DECISION", "C3", "METRIC")


@dataclass(frozen=True)
class LogRecord:
    time: float
    kind: str
    fields: tuple[str, ...]

    def line(self) -> str:
        return "|".join([f"{self.time:.3f}", self.kind, *self.fields])


class EventLog:
    def __init__(self, header: dict[str, str]):
        self.header = dict(header)
        self.records: list[LogRecord] = []

    # twin sink interface
    def sink(self, kind: str, payload: dict) -> None:
        time = float(payload.get("time", 0.0))
        if kind == "frame":
            self.append(time, "FRAME", (payload["direction"], payload["platform"], payload["wire"]))
        elif kind == "decision":
            details = {k: v for k, v in payload.items() if k not in ("time", "name")}
            fields = (payload["name"],) + tuple(
                f"{k}={details[k]}" for k in sorted(details)
            )
            self.append(time, "DECISION", fields)
        elif kind == "effect":
            details = {k: v for k, v in payload.items() if k not in ("time", "name")}
            fields = (payload["name"],) + tuple(
                f"{k}={details[k]}" for k in sorted(details)
            )
            self.append(time, "EFFECT", fields)
        elif kind == "c3":
            self.append(
                time,
                "C3",
                (payload["level"], payload["actor"], payload["beneficiary"], payload["detail"]),
            )
        elif kind == "decision_request":
            self.append(
                time if payload.get("time") else 0.0,
                "DECISION",
                ("decision_request", f"plan_id={payload['plan_id']}"),
            )

    def append(self, time: float, kind: str, fields: tuple[str, ...]) -> None:
        assert kind in _KINDS
        self.records.append(LogRecord(time, kind, tuple(str(f) for f in fields)))

    def metric(self, time: float, name: str, value) -> None:
        self.append(time, "METRIC", (name, str(value)))

    def to_text(self) -> str:
        lines = [f"# {key}={self.header[key]}" for key in sorted(self.header)]
        lines.extend(record.line() for record in self.records)
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "EventLog":
        header: dict[str, str] = {}
        records = []
        for line in text.splitlines():
            if not line:
                continue
            if line.startswith("# "):
                key, _, value = line[2:].partition("=")
                header[key] = value
                continue
            parts = line.split("|")
            time_text, kind = parts[0], parts[1]
            if kind == "FRAME":
                fields = (parts[2], parts[3], "|".join(parts[4:]))
            else:
                fields = tuple(parts[2:])
            records.append(LogRecord(float(time_text), kind, fields))
        log = cls(header)
        log.records = records
        return log

    def phase_projection(self) -> list[tuple]:
        """Timing-independent view: decisions, C3 tags, DONE and FLT frames."""
        projection = []
        for record in self.records:
            if record.kind == "DECISION" or record.kind == "C3":
                projection.append((record.kind, *record.fields))
            elif record.kind == "FRAME":
                wire = record.fields[2]
                if wire.startswith("DONE|") or wire.startswith("FLT|"):
                    projection.append(("FRAME", record.fields[0], wire))
        return projection


@dataclass
class CompareVerdict:
    equal: bool
    mode: str
    detail: str = ""


def compare_logs(log_a: EventLog, log_b: EventLog, mode: str = "strict") -> CompareVerdict:
    if mode == "strict":
        a_text, b_text = log_a.to_text(), log_b.to_text()
        if a_text == b_text:
            return CompareVerdict(True, mode)
        for index, (la, lb) in enumerate(zip(a_text.splitlines(), b_text.splitlines())):
            if la != lb:
                return CompareVerdict(False, mode, f"line {index}: {la!r} != {lb!r}")
        return CompareVerdict(False, mode, "length mismatch")
    if mode == "phase":
        pa, pb = log_a.phase_projection(), log_b.phase_projection()
        if pa == pb:
            return CompareVerdict(True, mode)
        for index, (ea, eb) in enumerate(zip(pa, pb)):
            if ea != eb:
                return CompareVerdict(False, mode, f"entry {index}: {ea!r} != {eb!r}")
        return CompareVerdict(
            False, mode, f"length mismatch: {len(pa)} vs {len(pb)} phase entries"
        )
    raise ValueError(f"unknown compare mode: {mode!r}")


# --- metrics ---


@dataclass
class RunMetrics:
    mission_completed: bool = False
    inspections_completed: int = 0
    on_site_interventions: int = 0
    faults_raised: int = 0
    fault_to_remediation_latency: list[float] = field(default_factory=list)
    c3_counts: dict[str, int] = field(default_factory=dict)
    total_frames: int = 0
    max_frame_bytes: int = 0
    sim_duration: float = 0.0
    stop_reason: str = ""

    def to_dict(self) -> dict:
        return {
            "mission_completed": self.mission_completed,
            "inspections_completed": self.inspections_completed,
            "on_site_interventions": self.on_site_interventions,
            "faults_raised": self.faults_raised,
            "fault_to_remediation_latency": [round(v, 3) for v in self.fault_to_remediation_latency],
            "c3_counts": dict(sorted(self.c3_counts.items())),
            "total_frames": self.total_frames,
            "max_frame_bytes": self.max_frame_bytes,
            "sim_duration": round(self.sim_duration, 3),
            "stop_reason": self.stop_reason,
        }


def metrics_from_log(log: EventLog, mission_completed: bool, interventions: int,
                     stop_reason: str) -> RunMetrics:
    metrics = RunMetrics(
        mission_completed=mission_completed,
        on_site_interventions=interventions,
        stop_reason=stop_reason,
    )
    scanned_assets = set()
    fault_times = []
    for record in log.records:
        if record.kind == "FRAME":
            metrics.total_frames += 1
            wire = record.fields[2]
            metrics.max_frame_bytes = max(metrics.max_frame_bytes, len(wire) + 1)
            if wire.startswith("SCAN|"):
                scanned_assets.add(wire.split("|")[2])
            elif wire.startswith("FLT|"):
                metrics.faults_raised += 1
                fault_times.append(record.time)
            elif record.fields[0] == "tx" and wire.startswith("CMD|") and fault_times:
                metrics.fault_to_remediation_latency.append(record.time - fault_times.pop(0))
        elif record.kind == "C3":
            level = record.fields[0]
            metrics.c3_counts[level] = metrics.c3_counts.get(level, 0) + 1
        metrics.sim_duration = max(metrics.sim_duration, record.time)
    metrics.inspections_completed = len(scanned_assets)
    return metrics


# --- mission driver ---


class MissionDriver:
    """Sequences the preset mission phases and scripted operator actions.

    Recovery itself is the twin's job; the driver only watches for phase
    completion and declares failure when the phase owner is unrecoverable.
    """

    def __init__(self, twin: TwinCore, scenario: Scenario, emit) -> None:
        self.twin = twin
        self.scenario = scenario
        self.emit = emit  # callable(kind, payload) for log entries
        self.phases = list(scenario.mission_phases)
        self.index = -1
        self.phase_start = 0.0
        self.fired_actions: set[int] = set()
        self.state = "running" if self.phases else "completed"
        self.failure_reason = ""
        self._all_home_since: float | None = None

    def _decision(self, name: str, now: float, **details) -> None:
        self.emit("decision", {"time": now, "name": name, **details})

    def _dispatch_phase(self, now: float) -> None:
        phase = self.phases[self.index]
        self.phase_start = now
        self._decision("phase_started", now, phase=phase.name)
        for pid in sorted(phase.triggers):
            try:
                self.twin.dispatch_mission(pid, phase.triggers[pid])
            except (PlatformBusy, UnknownTrigger, PlatformDisconnected) as exc:
                self.state = "failed"
                self.failure_reason = f"dispatch {pid}: {exc}"
                self._decision("mission_failed", now, reason=self.failure_reason)
                return

    def _phase_complete(self, phase) -> bool:
        done = {
            (pid, trigger)
            for time, pid, trigger in self.twin.world.missions_done
            if time >= self.phase_start
        }
        return all((pid, char) in done for pid, char in phase.triggers.items())

    def _phase_stuck(self, phase) -> bool:
        if self.twin.active_run is not None or self.twin.event_queue:
            return False
        from .protocol import ActivityState

        for pid in phase.triggers:
            if pid in self.twin.pending_missions:
                continue
            if pid in self.twin.interrupted:
                robot = self.twin.world.robots[pid]
                if robot.state in (ActivityState.SAFETY_STOPPED, ActivityState.FAULTED):
                    return True
        return False

    def on_tick(self, now: float) -> None:
        if self.state != "running":
            return
        if self.index == -1:
            self.index = 0
            self._dispatch_phase(now)
            return
        phase = self.phases[self.index]

        for action_index, action in enumerate(self.scenario.operator_actions):
            if action_index in self.fired_actions or action.at_phase != phase.name:
                continue
            if now >= self.phase_start + action.delay_s:
                self.fired_actions.add(action_index)
                self._decision(
                    "operator_action",
                    now,
                    platform=action.platform,
                    command=action.command,
                )
                try:
                    self.twin.send_command(action.platform, action.command, action.args)
                except TwinError as exc:
                    self._decision("operator_action_failed", now, reason=str(exc))

        if self._phase_complete(phase):
            self._decision("phase_completed", now, phase=phase.name)
            self.index += 1
            if self.index >= len(self.phases):
                self.state = "homing"
            else:
                self._dispatch_phase(now)
            return

        if self._phase_stuck(phase):
            self.state = "failed"
            self.failure_reason = f"phase {phase.name}: platform unrecoverable"
            self._decision("mission_failed", now, reason=self.failure_reason)

    def check_all_home(self, now: float) -> None:
        if self.state != "homing":
            return
        from .protocol import ActivityState

        for spec in self.scenario.platforms:
            robot = self.twin.world.robots[spec.id]
            if robot.state is not ActivityState.IDLE:
                return
            if math.dist(robot.position, spec.home) > HOME_TOLERANCE_M:
                return
        if self.twin.active_run is not None or self.twin.pending_missions:
            return
        self.state = "completed"
        self._decision("mission_completed", now)


def count_interventions(twin: TwinCore) -> int:
    """Robots a human would have to walk out and recover at stop time."""
    from .protocol import ActivityState

    count = 0
    for pid in sorted(twin.world.robots):
        if twin.world.robots[pid].state in (
            ActivityState.SAFETY_STOPPED,
            ActivityState.FAULTED,
        ):
            count += 1
    return count


# --- lockstep execution ---


class LockstepTransport:
    """Delivers twin frames straight into per-robot inboxes."""

    def __init__(self):
        self.inboxes: dict[str, list] = {}

    def register(self, platform_id: str) -> None:
        self.inboxes[platform_id] = []

    def send(self, platform_id: str, frame) -> None:
        self.inboxes[platform_id].append(frame)


@dataclass
class RunResult:
    log: EventLog
    metrics: RunMetrics
    twin: TwinCore
    deviation: list[dict]


def run_lockstep(scenario: Scenario, interactive: bool | None = None) -> RunResult:
    transport = LockstepTransport()
    twin = TwinCore(scenario, transport, interactive=interactive)
    log = EventLog(
        {
            "scenario": scenario.name,
            "scenario_hash": scenario.source_hash,
            "seed": str(scenario.seed),
            "mode": "lockstep",
            "interactive": str(twin.interactive).lower(),
        }
    )
    twin.add_sink(log.sink)

    robots: dict[str, SimRobot] = {}
    for spec in sorted(scenario.platforms, key=lambda s: s.id):
        transport.register(spec.id)
        profile = _profile_from_spec(spec)
        robots[spec.id] = SimRobot(
            profile,
            scenario.arena,
            scenario.scripts,
            injections=scenario.injections_for(spec.id),
            seed=scenario.seed,
            registry=scenario.registry,
        )
        twin.connect(spec.id)

    driver = MissionDriver(twin, scenario, log.sink)

    dt = scenario.tick_dt
    steps = int(round(scenario.stop_timeout_s / dt))
    stop_reason = "timeout"
    now = 0.0
    for n in range(steps):
        now = n * dt
        twin.on_tick(now)
        driver.on_tick(now)
        driver.check_all_home(now)
        if driver.state in ("completed", "failed"):
            stop_reason = driver.state
            break

        emitted: list[tuple[str, list]] = []
        for pid in sorted(robots):
            robot = robots[pid]
            outs: list = []
            for frame in transport.inboxes[pid]:
                outs.extend(robot.handle_frame(frame))
            transport.inboxes[pid].clear()
            outs.extend(robot.tick(dt))
            emitted.append((pid, outs))

        now = (n + 1) * dt
        for pid, outs in emitted:
            for frame in outs:
                twin.ingest_frame(frame, pid, now)

    mission_completed = driver.state == "completed"
    interventions = count_interventions(twin)
    metrics = metrics_from_log(log, mission_completed, interventions, stop_reason)
    _append_metric_records(log, metrics, now)
    return RunResult(log, metrics, twin, emit_deviation_series(log))


def _profile_from_spec(spec):
    from .robots import PlatformProfile

    return PlatformProfile(
        id=spec.id,
        display_name=spec.display_name,
        capabilities=spec.capabilities,
        speed=spec.speed,
        home=spec.home,
        drain=dict(spec.drain),
        arm_joints=dict(spec.arm_joints),
        telemetry_period=spec.telemetry_period,
        presets=dict(spec.presets),
    )


def _append_metric_records(log: EventLog, metrics: RunMetrics, now: float) -> None:
    data = metrics.to_dict()
    for key in sorted(data):
        value = data[key]
        if key == "c3_counts":
            for level, count in value.items():
                log.metric(now, f"c3_{level.lower()}", count)
        elif key == "fault_to_remediation_latency":
            for index, latency in enumerate(value):
                log.metric(now, f"fault_latency_{index}", latency)
        else:
            log.metric(now, key, value)


# --- socket execution ---


def run_socket(
    scenario_path: str,
    interactive: bool | None = None,
    port_base: int | None = 0,
    wall_timeout_s: float | None = None,
    seed: int | None = None,
) -> RunResult:
    """Same mission, real transports: TCP twin server + robot subprocesses."""
    import subprocess
    import sys
    import time as _time
    from dataclasses import replace as _replace

    from .scenario import load_scenario
    from .server import TwinServer

    scenario = load_scenario(scenario_path)
    if seed is not None:
        scenario = _replace(scenario, seed=seed)
    server = TwinServer(scenario, interactive=interactive, port_base=port_base)
    log = EventLog(
        {
            "scenario": scenario.name,
            "scenario_hash": scenario.source_hash,
            "seed": str(scenario.seed),
            "mode": "socket",
            "interactive": str(server.twin.interactive).lower(),
        }
    )
    server.twin.add_sink(log.sink)
    server.start()

    procs = []
    try:
        for spec in sorted(scenario.platforms, key=lambda s: s.id):
            procs.append(
                subprocess.Popen(
                    [
                        sys.executable,
                        "-m",
                        "fleettwin.robot_agent",
                        "--id",
                        spec.id,
                        "--host",
                        "127.0.0.1",
                        "--port",
                        str(server.ports[spec.id]),
                        "--scenario",
                        str(scenario_path),
                        "--seed",
                        str(scenario.seed),
                        "--time-scale",
                        str(server.time_scale),
                    ],
                    stdout=subprocess.DEVNULL,
                    stderr=subprocess.DEVNULL,
                )
            )
        if not server.wait_connected(timeout_s=15.0):
            raise TwinError("robots failed to connect")

        driver = MissionDriver(server.twin, scenario, log.sink)
        server.attach_driver(driver)

        budget = wall_timeout_s
        if budget is None:
            budget = scenario.stop_timeout_s / server.time_scale + 20.0
        deadline = _time.monotonic() + budget
        stop_reason = "timeout"
        while _time.monotonic() < deadline:
            if driver.state in ("completed", "failed"):
                stop_reason = driver.state
                break
            _time.sleep(0.05)
    finally:
        for proc in procs:
            proc.terminate()
        for proc in procs:
            try:
                proc.wait(timeout=3.0)
            except subprocess.TimeoutExpired:
                proc.kill()
        server.stop()

    mission_completed = driver.state == "completed"
    interventions = count_interventions(server.twin)
    metrics = metrics_from_log(log, mission_completed, interventions, stop_reason)
    _append_metric_records(log, metrics, server.twin.now)
    return RunResult(log, metrics, server.twin, emit_deviation_series(log))


# --- deviation series (planned vs actual phase, with C3 level in effect) ---


def emit_deviation_series(log: EventLog) -> list[dict]:
    rows = []
    planned_phase = ""
    active_plan = ""
    last_c3 = ""

    def row(time: float) -> None:
        deviating = bool(active_plan)
        rows.append(
            {
                "sim_time": f"{time:.3f}",
                "c3_level": last_c3,
                "planned_phase": planned_phase,
                "actual": f"deviation:{active_plan}" if deviating else planned_phase,
                "deviating": str(deviating).lower(),
            }
        )

    for record in log.records:
        if record.kind == "DECISION":
            name = record.fields[0]
            details = dict(
                f.partition("=")[::2] for f in record.fields[1:] if "=" in f
            )
            if name == "phase_started":
                planned_phase = details.get("phase", "")
                row(record.time)
            elif name == "phase_completed":
                row(record.time)
                planned_phase = ""
            elif name == "plan_selected":
                active_plan = details.get("plan_id", "plan")
                row(record.time)
            elif name == "plan_completed":
                row(record.time)
                active_plan = ""
            elif name in ("mission_completed", "mission_failed"):
                row(record.time)
        elif record.kind == "C3":
            last_c3 = record.fields[0]
            row(record.time)
    return rows


DEVIATION_COLUMNS = ["sim_time", "c3_level", "planned_phase", "actual", "deviating"]


def deviation_csv(rows: list[dict]) -> str:
    lines = [",".join(DEVIATION_COLUMNS)]
    for row in rows:
        lines.append(",".join(row[c] for c in DEVIATION_COLUMNS))
    return "\n".join(lines) + "\n"
