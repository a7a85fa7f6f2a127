"""Twin core: the single place where fleet state changes.

Transport adapters (lockstep inboxes or TCP sessions) feed decoded frames
into ingest_frame(); everything the twin does in response — world effects,
remedial plans, outbound commands — happens synchronously here, so one
logical writer owns the world and runs are replayable.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Protocol

from . import engine
from .engine import (
    Approval,
    ApprovalState,
    CATCH_ALL_RULE,
    FaultEvent,
    FleetRobot,
    InteractionKind,
    InteractionRecord,
    RemedialPlan,
    Task,
    TaskStatus,
    TaskVerb,
    c3_tag,
    format_point,
)
from .protocol import (
    AckFrame,
    ActivityState,
    CommandFrame,
    CommandVerb,
    DoneFrame,
    FaultFrame,
    Frame,
    InvalidField,
    OversizeFrame,
    ScanFrame,
    StatusFrame,
    TextFrame,
    TriggerFrame,
    WarningFrame,
    fmt_num,
    quantize,
)
from .scenario import Scenario
from .world import (
    ClockTick,
    Effect,
    ItemPicked,
    ItemPlaced,
    LogAppend,
    LogEntry,
    MissionDone,
    Quarantine,
    RaiseFault,
    RecordScan,
    RobotState,
    UpdateArm,
    UpdateRobot,
    WorldModel,
)

STALE_TIMEOUT_S = 5.0
MISSION_TIMEOUT_S = 300.0


class TwinError(Exception):
    pass


class InvalidConfig(TwinError):
    pass


class UnknownTrigger(TwinError):
    pass


class PlatformBusy(TwinError):
    pass


class PlatformDisconnected(TwinError):
    pass


class InvalidArgs(TwinError):
    pass


class PortInUse(TwinError):
    pass


class ConnectionStatus(Enum):
    DISCONNECTED = "Disconnected"
    CONNECTED = "Connected"
    STALE = "Stale"


@dataclass
class SessionState:
    platform_id: str
    status: ConnectionStatus = ConnectionStatus.DISCONNECTED
    last_frame_time: float = 0.0


@dataclass
class PendingMission:
    trigger: str
    since: float
    deadline: float


class Transport(Protocol):
    def send(self, platform_id: str, frame: Frame) -> None: ...


EventSink = Callable[[str, dict], None]


@dataclass
class _Step:
    platform: str
    frame: Frame
    expect_ack: str | None = None  # ACK echo prefix
    expect_msg: str | None = None  # MSG text prefix


@dataclass
class _ExecTask:
    task: Task
    steps: list[_Step] = field(default_factory=list)
    idx: int = 0
    interaction: InteractionKind | None = None


class PlanRun:
    def __init__(self, plan: RemedialPlan):
        self.plan = plan
        self.tasks: list[_ExecTask] = []
        self.current = -1
        self.failed = False
        self.finished = False


_fmt_point = format_point


class TwinCore:
    def __init__(
        self,
        scenario: Scenario,
        transport: Transport,
        interactive: bool | None = None,
    ):
        ids = [p.id for p in scenario.platforms]
        if len(set(ids)) != len(ids):
            raise InvalidConfig("duplicate platform ids")
        ports = [p.port for p in scenario.platforms if p.port != 0]
        if len(set(ports)) != len(ports):
            raise InvalidConfig("duplicate platform ports")
        if not ids:
            raise InvalidConfig("scenario lists no platforms")

        self.scenario = scenario
        self.transport = transport
        self.interactive = scenario.interactive if interactive is None else interactive
        self.platforms = {p.id: p for p in scenario.platforms}
        self.registry = scenario.registry
        self.rules = scenario.rules
        self.world = WorldModel(
            scenario.arena, ids, {p.id: p.home for p in scenario.platforms}
        )
        self.sessions = {pid: SessionState(pid) for pid in ids}
        self.pending_missions: dict[str, PendingMission] = {}
        self.interrupted: dict[str, str] = {}
        self.requeue_after_plan: list[tuple[str, str]] = []
        self.plans: dict[str, RemedialPlan] = {}
        self.active_run: PlanRun | None = None
        self.event_queue: deque[FaultEvent] = deque()
        self.applied_effects: list[Effect] = []
        self.now = 0.0
        self._plan_seq = 0
        self._sinks: list[EventSink] = []
        self._expected_moves: dict[tuple[str, str, str], tuple[float, float]] = {}

    # -- wiring --

    def add_sink(self, sink: EventSink) -> None:
        self._sinks.append(sink)

    def _emit(self, kind: str, payload: dict) -> None:
        for sink in self._sinks:
            sink(kind, payload)

    def _apply(self, effect: Effect) -> None:
        self.world.apply(effect)
        self.applied_effects.append(effect)

    def _decision(self, name: str, **details) -> None:
        self._emit("decision", {"time": self.now, "name": name, **details})

    def _log_effect(self, name: str, **details) -> None:
        self._emit("effect", {"time": self.now, "name": name, **details})

    def _c3(self, record: InteractionRecord) -> None:
        level = c3_tag(record)
        self._emit(
            "c3",
            {
                "time": self.now,
                "level": level.value,
                "actor": record.actor,
                "beneficiary": record.beneficiary,
                "detail": record.detail,
            },
        )

    # -- sessions --

    def connect(self, platform_id: str) -> None:
        session = self.sessions[platform_id]
        session.status = ConnectionStatus.CONNECTED
        session.last_frame_time = self.now

    def disconnect(self, platform_id: str) -> None:
        self.sessions[platform_id].status = ConnectionStatus.DISCONNECTED

    # -- outbound --

    def _send(self, platform_id: str, frame: Frame) -> None:
        if self.sessions[platform_id].status is ConnectionStatus.DISCONNECTED:
            raise PlatformDisconnected(platform_id)
        self.transport.send(platform_id, frame)
        entry = LogEntry(self.now, "tx", platform_id, frame)
        self._apply(LogAppend(entry))
        self._emit(
            "frame",
            {
                "time": self.now,
                "direction": "tx",
                "platform": platform_id,
                "wire": entry.wire_text(),
            },
        )
        if isinstance(frame, CommandFrame) and frame.verb in (CommandVerb.PICK, CommandVerb.PLACE):
            item, at = frame.args[0], frame.args[1]
            x_text, _, y_text = at.partition(",")
            self._expected_moves[(platform_id, frame.verb.value, item)] = (
                float(x_text),
                float(y_text),
            )

    def dispatch_mission(self, platform_id: str, trigger: str) -> None:
        spec = self.platforms.get(platform_id)
        if spec is None or trigger not in spec.presets:
            raise UnknownTrigger(f"{platform_id} has no preset {trigger!r}")
        if platform_id in self.pending_missions:
            raise PlatformBusy(f"{platform_id} already executing a mission")
        self._send(platform_id, TriggerFrame(trigger))
        self.pending_missions[platform_id] = PendingMission(
            trigger, self.now, self.now + self.scenario.mission_timeout_s
        )
        self._decision("mission_dispatched", platform=platform_id, trigger=trigger)

    def send_command(self, platform_id: str, verb: str, args: tuple[str, ...] = ()) -> None:
        verb_enum = {v.value: v for v in CommandVerb}.get(verb)
        if verb_enum is None:
            raise InvalidArgs(f"unknown verb {verb!r}")
        frame = CommandFrame(verb_enum, tuple(args))
        try:
            from .protocol import encode_frame

            encode_frame(frame)
        except (InvalidField, OversizeFrame) as exc:
            raise InvalidArgs(str(exc)) from None
        self._send(platform_id, frame)

    # -- inbound --

    def ingest_frame(self, frame: Frame, source: str, now: float) -> list[Effect]:
        self.now = max(self.now, now)
        session = self.sessions.get(source)
        if session is None:
            raise TwinError(f"no session for {source!r}")
        session.last_frame_time = self.now
        if session.status is not ConnectionStatus.CONNECTED:
            session.status = ConnectionStatus.CONNECTED

        entry = LogEntry(self.now, "rx", source, frame)
        claimed = getattr(frame, "platform_id", None)
        effects: list[Effect] = [LogAppend(entry)]

        if claimed is None or claimed != source:
            reason = "twin-bound kind" if claimed is None else f"claimed id {claimed!r}"
            effects.append(Quarantine(self.now, source, reason, entry.wire_text()))
            for effect in effects:
                self._apply(effect)
            self._emit_frame_entry(entry)
            self._log_effect("quarantine", platform=source, reason=reason)
            return effects

        effects.extend(self._frame_effects(frame))
        for effect in effects:
            self._apply(effect)
        self._emit_frame_entry(entry)
        self._post_ingest(frame)
        return effects

    def _emit_frame_entry(self, entry: LogEntry) -> None:
        self._emit(
            "frame",
            {
                "time": entry.time,
                "direction": entry.direction,
                "platform": entry.platform_id,
                "wire": entry.wire_text(),
            },
        )

    def _frame_effects(self, frame: Frame) -> list[Effect]:
        effects: list[Effect] = []
        if isinstance(frame, StatusFrame):
            effects.append(
                UpdateRobot(
                    self.now,
                    RobotState(
                        frame.platform_id,
                        (frame.x, frame.y),
                        frame.heading,
                        frame.battery,
                        frame.state,
                        frame.mission,
                        last_update=self.now,
                    ),
                )
            )
        elif isinstance(frame, ScanFrame):
            effects.append(RecordScan(self.now, frame.asset_id, frame.severity, frame.platform_id))
        elif isinstance(frame, (FaultFrame, WarningFrame)):
            robot = self.world.robots[frame.platform_id]
            pending = self.pending_missions.get(frame.platform_id)
            phase = f"mission {pending.trigger}" if pending else "idle"
            event = engine.classify_event(
                frame, self.registry, self.now, robot.position, phase
            )
            effects.append(RaiseFault(event))
        elif isinstance(frame, DoneFrame):
            effects.append(MissionDone(self.now, frame.platform_id, frame.trigger))
            pending = self.pending_missions.get(frame.platform_id)
            if pending is not None and pending.trigger == frame.trigger:
                # the robot reports its script finished; reflect idleness now
                # rather than waiting out the telemetry period
                from dataclasses import replace as _replace

                prior = self.world.robots[frame.platform_id]
                effects.append(
                    UpdateRobot(
                        self.now,
                        _replace(
                            prior,
                            state=ActivityState.IDLE,
                            mission=None,
                            arm_angles=(),
                            last_update=self.now,
                        ),
                    )
                )
        elif isinstance(frame, AckFrame):
            effects.extend(self._ack_effects(frame))
        return effects

    def _ack_effects(self, frame: AckFrame) -> list[Effect]:
        effects: list[Effect] = []
        words = frame.echo.split()
        if len(words) >= 2 and words[0] in ("PICK", "PLACE"):
            item = words[1]
            expected = self._expected_moves.pop((frame.platform_id, words[0], item), None)
            if words[0] == "PICK":
                effects.append(ItemPicked(self.now, item, frame.platform_id))
            elif expected is not None:
                effects.append(ItemPlaced(self.now, item, expected))
        elif len(words) >= 2 and words[0] == "ARM":
            angles = []
            for part in words[1].split(","):
                joint, _, angle = part.partition("=")
                try:
                    angles.append((joint, float(angle)))
                except ValueError:
                    continue
            effects.append(UpdateArm(self.now, frame.platform_id, tuple(angles)))
        return effects

    def _post_ingest(self, frame: Frame) -> None:
        pid = frame.platform_id
        if isinstance(frame, (FaultFrame, WarningFrame)):
            event = self.world.fault_events[-1]
            severity = self.registry.lookup(frame.code).severity.value
            self._decision(
                "fault_classified", platform=pid, code=frame.code, severity=severity
            )
            pending = self.pending_missions.pop(pid, None)
            if pending is not None and severity == "Fault":
                self.interrupted[pid] = pending.trigger
                self._decision("mission_interrupted", platform=pid, trigger=pending.trigger)
            elif pending is not None:
                self.pending_missions[pid] = pending  # warnings do not abort missions
            self.event_queue.append(event)
            self._maybe_start_next_plan()
        elif isinstance(frame, DoneFrame):
            pending = self.pending_missions.get(pid)
            if pending is not None and pending.trigger == frame.trigger:
                del self.pending_missions[pid]
                self._decision("mission_done", platform=pid, trigger=frame.trigger)
                self._c3(
                    InteractionRecord(
                        InteractionKind.TELEMETRY_SHARE,
                        pid,
                        "twin",
                        f"mission {frame.trigger} telemetry and results",
                    )
                )
            else:
                self._decision("unexpected_done", platform=pid, trigger=frame.trigger)
        elif isinstance(frame, TextFrame):
            if frame.text == "battery replaced":
                self._log_effect("battery_swap", platform=pid)
            elif frame.text.startswith("preempted "):
                trigger = frame.text.split()[-1]
                pending = self.pending_missions.pop(pid, None)
                if pending is not None:
                    self.requeue_after_plan.append((pid, pending.trigger))
                    self._decision("mission_preempted", platform=pid, trigger=trigger)
        if self.active_run is not None and isinstance(frame, (AckFrame, TextFrame)):
            self._executor_on_frame(pid, frame)

    # -- periodic housekeeping --

    def on_tick(self, now: float) -> None:
        self.now = max(self.now, now)
        self._apply(ClockTick(self.now))

        for plan in list(self.plans.values()):
            if engine.expire_approval(plan, self.now):
                self._decision("approval_expired", plan_id=plan.plan_id)
                self._start_plan(plan)

        for pid in sorted(self.sessions):
            session = self.sessions[pid]
            if (
                session.status is ConnectionStatus.CONNECTED
                and self.now - session.last_frame_time > self.scenario.stale_timeout_s
            ):
                session.status = ConnectionStatus.STALE
                self._log_effect("session_stale", platform=pid)
                robot = self.world.robots[pid]
                synthetic = WarningFrame(pid, "COMM", "telemetry silent")
                event = engine.classify_event(
                    synthetic, self.registry, self.now, robot.position, "stale session"
                )
                self._apply(RaiseFault(event))
                self._decision(
                    "fault_classified", platform=pid, code="COMM", severity="Warning"
                )
                self.event_queue.append(event)
                self._maybe_start_next_plan()

        for pid in sorted(self.pending_missions):
            pending = self.pending_missions[pid]
            if self.now >= pending.deadline:
                del self.pending_missions[pid]
                self._decision("mission_timeout", platform=pid, trigger=pending.trigger)

    # -- plans --

    def _fleet_view(self, faulted_id: str) -> dict[str, FleetRobot]:
        view = {}
        for pid in sorted(self.world.robots):
            robot = self.world.robots[pid]
            spec = self.platforms[pid]
            pending = pid in self.pending_missions
            idle = robot.state is ActivityState.IDLE and not pending
            preemptible = pending and robot.state not in (
                ActivityState.SAFETY_STOPPED,
                ActivityState.FAULTED,
            )
            view[pid] = FleetRobot(
                pid,
                spec.capabilities,
                robot.position,
                idle,
                preemptible,
                faulted=pid == faulted_id,
            )
        return view

    def _item_positions(self) -> dict[str, tuple[float, float]]:
        positions = {}
        for iid, item in self.world.items.items():
            if item.position is not None:
                positions[iid] = item.position
            elif item.carried_by is not None:
                positions[iid] = self.world.robots[item.carried_by].position
        return positions

    def _maybe_start_next_plan(self) -> None:
        if self.active_run is not None or not self.event_queue:
            return
        event = self.event_queue.popleft()
        self._plan_seq += 1
        plan_id = f"plan-{self._plan_seq}"
        plan = engine.select_plan(
            event,
            self.rules,
            self._fleet_view(event.platform_id),
            self.scenario.arena.locations,
            self._item_positions(),
            plan_id,
            engine.initial_approval(self.interactive, self.now, self.scenario.approval_timeout_s),
        )
        self.plans[plan_id] = plan
        self._decision(
            "plan_selected",
            plan_id=plan_id,
            rule=plan.rule_name,
            platform=event.platform_id,
            code=event.code,
            degraded=str(plan.degraded).lower(),
            tasks=";".join(
                f"{t.verb.value}->{t.assignee or 'operator'}" for t in plan.tasks
            ),
        )
        if plan.approval.state is ApprovalState.PENDING:
            self._emit("decision_request", {"time": self.now, **self.plan_payload(plan)})
        else:
            self._start_plan(plan)

    def plan_payload(self, plan: RemedialPlan) -> dict:
        return {
            "plan_id": plan.plan_id,
            "rule": plan.rule_name,
            "platform": plan.event.platform_id,
            "code": plan.event.code,
            "degraded": plan.degraded,
            "deadline": plan.approval.deadline,
            "approval": plan.approval.state.value,
            "tasks": [
                {
                    "verb": t.verb.value,
                    "assignee": t.assignee,
                    "params": dict(t.params),
                    "status": t.status.value,
                }
                for t in plan.tasks
            ],
        }

    def approve_plan(self, plan_id: str, by: str = "operator") -> None:
        plan = self.plans.get(plan_id)
        if plan is None:
            self._decision("unknown_plan_decision", plan_id=plan_id)
            return
        if not engine.operator_decision(plan, approve=True, now=self.now):
            self._decision("double_decision_ignored", plan_id=plan_id, decision="approve")
            return
        self._decision("plan_approved", plan_id=plan_id, by=by)
        self._start_plan(plan)

    def reject_plan(self, plan_id: str) -> None:
        plan = self.plans.get(plan_id)
        if plan is None:
            self._decision("unknown_plan_decision", plan_id=plan_id)
            return
        if not engine.operator_decision(plan, approve=False, now=self.now):
            self._decision("double_decision_ignored", plan_id=plan_id, decision="reject")
            return
        self._decision("plan_rejected", plan_id=plan_id)
        # fail safe: fall back to the catch-all stop plan, no approval needed
        self._plan_seq += 1
        fallback_id = f"plan-{self._plan_seq}"
        fallback = engine.select_plan(
            plan.event,
            [CATCH_ALL_RULE],
            self._fleet_view(plan.event.platform_id),
            self.scenario.arena.locations,
            self._item_positions(),
            fallback_id,
            Approval(ApprovalState.AUTO_APPROVED),
        )
        self.plans[fallback_id] = fallback
        self._decision(
            "plan_selected",
            plan_id=fallback_id,
            rule=fallback.rule_name,
            platform=fallback.event.platform_id,
            code=fallback.event.code,
            degraded=str(fallback.degraded).lower(),
            tasks=";".join(
                f"{t.verb.value}->{t.assignee or 'operator'}" for t in fallback.tasks
            ),
        )
        self._start_plan(fallback)

    # -- plan execution --

    def _start_plan(self, plan: RemedialPlan) -> None:
        if self.active_run is not None and self.active_run.plan is not plan:
            return  # already busy; queued events run later
        run = PlanRun(plan)
        for task in plan.tasks:
            run.tasks.append(_ExecTask(task))
        self.active_run = run
        self._advance_run()

    def _compile_task(self, exec_task: _ExecTask) -> None:
        task = exec_task.task
        plan = self.active_run.plan
        faulted = plan.event.platform_id
        assignee = task.assignee
        steps: list[_Step] = []
        if task.verb is TaskVerb.DIVERT:
            to = task.params["to"]
            steps.append(_Step(assignee, CommandFrame(CommandVerb.GOTO, (to,)), expect_ack="GOTO"))
        elif task.verb is TaskVerb.SCOUT:
            target = task.params["target"]
            start = _fmt_point(plan.event.position)
            home = _fmt_point(self.platforms[assignee].home)
            steps.append(_Step(assignee, CommandFrame(CommandVerb.GOTO, (start,)), expect_ack="GOTO"))
            steps.append(_Step(assignee, CommandFrame(CommandVerb.SCOUT, (target,)), expect_msg="path "))
            steps.append(_Step(assignee, CommandFrame(CommandVerb.GOTO, (home,)), expect_ack="GOTO"))
            exec_task.interaction = InteractionKind.VERIFICATION
        elif task.verb is TaskVerb.DELIVER:
            item = task.params["item"]
            to = task.params["to"]
            pickup = self._item_positions().get(item)
            pickup_text = _fmt_point(pickup) if pickup else to
            home = _fmt_point(self.platforms[assignee].home)
            steps.append(_Step(assignee, CommandFrame(CommandVerb.GOTO, (pickup_text,)), expect_ack="GOTO"))
            steps.append(_Step(assignee, CommandFrame(CommandVerb.PICK, (item, pickup_text)), expect_ack=f"PICK {item}"))
            steps.append(_Step(assignee, CommandFrame(CommandVerb.GOTO, (to,)), expect_ack="GOTO"))
            steps.append(_Step(assignee, CommandFrame(CommandVerb.PLACE, (item, to)), expect_ack=f"PLACE {item}"))
            steps.append(_Step(assignee, CommandFrame(CommandVerb.GOTO, (home,)), expect_ack="GOTO"))
            exec_task.interaction = InteractionKind.PHYSICAL_ASSIST
        elif task.verb is TaskVerb.ASSIST:
            target = task.params.get("target", _fmt_point(plan.event.position))
            steps.append(_Step(assignee, CommandFrame(CommandVerb.GOTO, (target,)), expect_ack="GOTO"))
            exec_task.interaction = InteractionKind.PHYSICAL_ASSIST
        elif task.verb is TaskVerb.SAFETY_STOP:
            steps.append(_Step(assignee, CommandFrame(CommandVerb.STOP), expect_ack="STOP"))
        elif task.verb is TaskVerb.RESUME:
            take = task.params.get("take")
            if take and take in self.world.items:
                at = self._item_positions().get(take)
                if at is not None:
                    steps.append(
                        _Step(assignee, CommandFrame(CommandVerb.PICK, (take, _fmt_point(at))), expect_ack=f"PICK {take}")
                    )
            steps.append(_Step(assignee, CommandFrame(CommandVerb.RESUME), expect_ack="RESUME"))
        elif task.verb is TaskVerb.NOTIFY:
            pass  # no robot legwork; resolves immediately
        exec_task.steps = steps

    def _advance_run(self) -> None:
        run = self.active_run
        while run is not None and not run.finished:
            if run.current >= 0 and run.current < len(run.tasks):
                exec_task = run.tasks[run.current]
                if exec_task.idx < len(exec_task.steps):
                    return  # waiting on a step completion
                self._finish_task(exec_task)
            run.current += 1
            if run.current >= len(run.tasks):
                self._finish_plan(run)
                return
            exec_task = run.tasks[run.current]
            exec_task.task.status = TaskStatus.ACTIVE
            self._compile_task(exec_task)
            self._decision(
                "task_started",
                plan_id=run.plan.plan_id,
                verb=exec_task.task.verb.value,
                assignee=exec_task.task.assignee or "operator",
            )
            if exec_task.task.verb is TaskVerb.NOTIFY:
                self._decision(
                    "operator_notified",
                    plan_id=run.plan.plan_id,
                    reason=exec_task.task.params.get("reason", ""),
                    escalated=exec_task.task.params.get("escalated", "false"),
                )
                continue
            if not self._send_current_step(exec_task):
                return

    def _send_current_step(self, exec_task: _ExecTask) -> bool:
        step = exec_task.steps[exec_task.idx]
        try:
            self._send(step.platform, step.frame)
        except PlatformDisconnected:
            self._fail_task(exec_task, "platform disconnected")
            return False
        return True

    def _executor_on_frame(self, source: str, frame: AckFrame | TextFrame) -> None:
        run = self.active_run
        if run is None or run.current < 0 or run.current >= len(run.tasks):
            return
        exec_task = run.tasks[run.current]
        if exec_task.idx >= len(exec_task.steps):
            return
        step = exec_task.steps[exec_task.idx]
        if source != step.platform:
            return
        if isinstance(frame, AckFrame) and step.expect_ack:
            if not frame.echo.startswith(step.expect_ack):
                return
        elif isinstance(frame, TextFrame) and step.expect_msg:
            if not frame.text.startswith(step.expect_msg):
                if frame.text.startswith("rejected"):
                    self._fail_task(exec_task, frame.text)
                return
            if step.expect_msg == "path ":
                verdict = frame.text
                self._decision(
                    "scout_verdict",
                    plan_id=run.plan.plan_id,
                    platform=source,
                    verdict=verdict,
                )
                if verdict == "path blocked":
                    self._decision(
                        "operator_notified",
                        plan_id=run.plan.plan_id,
                        reason="scouted path blocked",
                        escalated="true",
                    )
        elif isinstance(frame, TextFrame) and frame.text.startswith("rejected"):
            self._fail_task(exec_task, frame.text)
            return
        else:
            return
        exec_task.idx += 1
        if exec_task.idx < len(exec_task.steps):
            self._send_current_step(exec_task)
        else:
            self._advance_run()

    def _finish_task(self, exec_task: _ExecTask) -> None:
        run = self.active_run
        task = exec_task.task
        if task.status is TaskStatus.ACTIVE:
            task.status = TaskStatus.DONE
            self._decision(
                "task_completed",
                plan_id=run.plan.plan_id,
                verb=task.verb.value,
                assignee=task.assignee or "operator",
            )
            if exec_task.interaction is not None:
                self._c3(
                    InteractionRecord(
                        exec_task.interaction,
                        task.assignee,
                        run.plan.event.platform_id,
                        f"{task.verb.value} for {run.plan.event.platform_id}",
                    )
                )
            if task.verb is TaskVerb.RESUME:
                trigger = self.interrupted.pop(run.plan.event.platform_id, None)
                if trigger is not None:
                    self._decision(
                        "mission_redispatched",
                        platform=run.plan.event.platform_id,
                        trigger=trigger,
                    )
                    self.dispatch_mission(run.plan.event.platform_id, trigger)

    def _fail_task(self, exec_task: _ExecTask, reason: str) -> None:
        run = self.active_run
        exec_task.task.status = TaskStatus.FAILED
        run.failed = True
        self._decision(
            "task_failed",
            plan_id=run.plan.plan_id,
            verb=exec_task.task.verb.value,
            assignee=exec_task.task.assignee or "operator",
            reason=reason,
        )
        # abandon the remaining recovery; stop the faulted robot instead
        faulted = run.plan.event.platform_id
        exec_task.steps = []
        run.tasks = run.tasks[: run.current + 1]
        if exec_task.task.verb is not TaskVerb.SAFETY_STOP:
            stop = Task(TaskVerb.SAFETY_STOP, faulted, None, {})
            notify = Task(
                TaskVerb.NOTIFY,
                None,
                None,
                {"reason": f"plan failed: {reason}", "escalated": "true"},
            )
            run.tasks.extend([_ExecTask(stop), _ExecTask(notify)])
        self._advance_run()

    def _finish_plan(self, run: PlanRun) -> None:
        run.finished = True
        self.active_run = None
        self._decision(
            "plan_completed",
            plan_id=run.plan.plan_id,
            failed=str(run.failed).lower(),
        )
        for pid, trigger in self.requeue_after_plan:
            try:
                self.dispatch_mission(pid, trigger)
            except (PlatformBusy, PlatformDisconnected, UnknownTrigger):
                self._decision("requeue_failed", platform=pid, trigger=trigger)
        self.requeue_after_plan.clear()
        self._maybe_start_next_plan()

    # -- snapshots --

    def snapshot(self) -> dict:
        arena = self.scenario.arena
        snap = {
            "type": "snapshot",
            "arena": {
                "width": arena.width,
                "height": arena.height,
                "locations": {k: list(v) for k, v in sorted(arena.locations.items())},
                "obstacles": [[r.x0, r.y0, r.x1, r.y1] for r in arena.obstacles],
            },
            "world": self.world.snapshot(),
            "sessions": {
                pid: self.sessions[pid].status.value for pid in sorted(self.sessions)
            },
            "pending_missions": {
                pid: pm.trigger for pid, pm in sorted(self.pending_missions.items())
            },
            "plans": [
                self.plan_payload(self.plans[pid]) for pid in sorted(self.plans)
            ],
            "interactive": self.interactive,
            "platforms": {
                pid: {
                    "display_name": spec.display_name,
                    "presets": dict(spec.presets),
                    "capabilities": sorted(c.value for c in spec.capabilities),
                    "home": list(spec.home),
                    "arm_joints": {j: list(r) for j, r in spec.arm_joints.items()},
                }
                for pid, spec in sorted(self.platforms.items())
            },
            "mission_phases": [
                {"name": ph.name, "triggers": dict(ph.triggers)}
                for ph in self.scenario.mission_phases
            ],
        }
        return snap
