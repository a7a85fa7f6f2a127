"""Simulated robot platforms.

Each SimRobot owns its state exclusively and talks to the world only through
wire frames: triggers and commands in, telemetry and events out. The same
state machine runs in-process (lockstep) and inside a socket-mode robot
process, so the two modes can only differ in timing, never in behavior.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

from .arena import Arena, Point, distance, scan_severity, scan_subsurface
from .engine import Capability
from .protocol import (
    AckFrame,
    ActivityState,
    CommandFrame,
    CommandVerb,
    DoneFrame,
    FaultFrame,
    FaultRegistry,
    Frame,
    ScanFrame,
    Severity,
    StatusFrame,
    TextFrame,
    TriggerFrame,
    WarningFrame,
    quantize,
)

PICKUP_RADIUS_M = 0.5
SCAN_RADIUS_M = 1.0
SCAN_DURATION_S = 3.0
ARM_DURATION_S = 2.0
LOW_BATTERY_WARN_PCT = 10.0

DEFAULT_DRAIN = {
    ActivityState.IDLE: 0.01,
    ActivityState.MOVING: 0.2,
    ActivityState.MANIPULATING: 0.3,
    ActivityState.INSPECTING: 0.1,
}


@dataclass(frozen=True)
class PlatformProfile:
    id: str
    display_name: str
    capabilities: frozenset[Capability]
    speed: float
    home: Point
    drain: dict[ActivityState, float] = field(default_factory=lambda: dict(DEFAULT_DRAIN))
    arm_joints: dict[str, tuple[float, float]] = field(default_factory=dict)
    telemetry_period: float = 1.0
    presets: dict[str, str] = field(default_factory=dict)  # trigger char -> script name

    def drain_rate(self, state: ActivityState) -> float:
        if state is ActivityState.CHARGING:
            return 0.0
        return self.drain.get(state, self.drain.get(ActivityState.IDLE, 0.0))


# --- mission script steps ---


@dataclass(frozen=True)
class Goto:
    target: Point
    label: str = ""


@dataclass(frozen=True)
class Inspect:
    asset: str
    duration: float


@dataclass(frozen=True)
class ScanStep:
    asset: str


@dataclass(frozen=True)
class Hold:
    duration: float


@dataclass(frozen=True)
class Wait:
    duration: float


@dataclass(frozen=True)
class Return:
    pass


Step = Goto | Inspect | ScanStep | Hold | Wait | Return
Script = tuple[Step, ...]


def script_time_bound(profile: PlatformProfile, script: Script, arena: Arena) -> float:
    """Worst-case completion time: leg distances at full speed plus every
    fixed task duration."""
    pos = profile.home
    total = 0.0
    for step in script:
        if isinstance(step, Goto):
            total += distance(pos, step.target) / profile.speed
            pos = step.target
        elif isinstance(step, Return):
            total += distance(pos, profile.home) / profile.speed
            pos = profile.home
        elif isinstance(step, Inspect):
            total += step.duration
        elif isinstance(step, ScanStep):
            total += SCAN_DURATION_S
        elif isinstance(step, (Hold, Wait)):
            total += step.duration
    return total


@dataclass
class FaultInjection:
    """Scripted failure: fires once, optionally latching the robot into the
    Faulted state (aborting whatever it was doing)."""

    code: str
    detail: str
    on_command: str | None = None  # CommandVerb name
    at_time: float | None = None
    at_phase: str | None = None  # script name
    latch: bool = True
    fired: bool = False


@dataclass(frozen=True)
class ScanResult:
    asset_id: str
    severity: float
    subsurface_flag: bool


class OutOfRange(Exception):
    """Scan attempted beyond the sensor radius."""


def simulate_scan(arena: Arena, asset_id: str, seed: int, position: Point) -> ScanResult:
    asset = arena.assets[asset_id]
    if distance(position, asset.position) > SCAN_RADIUS_M:
        raise OutOfRange(f"{asset_id} beyond {SCAN_RADIUS_M} m")
    return ScanResult(asset_id, scan_severity(asset, seed), scan_subsurface(asset, seed))


# --- executable jobs (compiled from steps or commands) ---


@dataclass
class _MoveJob:
    target: Point
    done_frames: list[Frame] = field(default_factory=list)


@dataclass
class _TimedJob:
    remaining: float
    activity: ActivityState
    scan_asset: str | None = None
    inspect_asset: str | None = None
    arm_setpoints: dict[str, float] | None = None
    done_frames: list[Frame] = field(default_factory=list)


class SimRobot:
    """One platform: pose, battery, job queue, pending fault injections."""

    def __init__(
        self,
        profile: PlatformProfile,
        arena: Arena,
        scripts: dict[str, Script],
        injections: list[FaultInjection] | None = None,
        seed: int = 0,
        registry: FaultRegistry | None = None,
    ):
        self.profile = profile
        self.arena = arena
        self.scripts = scripts
        self.injections = injections or []
        self.seed = seed
        self.registry = registry or FaultRegistry()

        self.x, self.y = profile.home
        self.heading = 0.0
        self.battery = 100.0
        self.mission: str | None = None
        self.fault_code: str | None = None
        self.stopped = False
        self.carrying: set[str] = set()
        self.arm_angles: dict[str, float] = {j: 0.0 for j in profile.arm_joints}
        self.time = 0.0
        self._jobs: deque[_MoveJob | _TimedJob] = deque()
        self._telem_elapsed = profile.telemetry_period  # emit a STAT on the first tick
        self._low_warned = False

    # -- derived state --

    @property
    def id(self) -> str:
        return self.profile.id

    @property
    def position(self) -> Point:
        return (self.x, self.y)

    @property
    def state(self) -> ActivityState:
        if self.stopped:
            return ActivityState.SAFETY_STOPPED
        if self._jobs:
            job = self._jobs[0]
            return ActivityState.MOVING if isinstance(job, _MoveJob) else job.activity
        if self.fault_code:
            return ActivityState.FAULTED
        return ActivityState.IDLE

    @property
    def busy(self) -> bool:
        return bool(self._jobs) or self.mission is not None

    def has(self, capability: Capability) -> bool:
        return capability in self.profile.capabilities

    # -- frame handling (twin -> robot) --

    def handle_frame(self, frame: Frame) -> list[Frame]:
        if isinstance(frame, TriggerFrame):
            return self._run_preset(frame.char)
        if isinstance(frame, CommandFrame):
            return self._execute_command(frame)
        return [self._msg(f"rejected frame {frame.kind}")]

    def _run_preset(self, char: str) -> list[Frame]:
        if self.fault_code or self.stopped or self.busy:
            return [self._msg("busy")]
        script_name = self.profile.presets.get(char)
        if script_name is None or script_name not in self.scripts:
            return [self._msg(f"unknown trigger {char}")]
        self.mission = char
        out: list[Frame] = []
        fired = self._fire_injections(out, at_phase=script_name)
        if fired and self.fault_code:
            self.mission = None
            return out
        for step in self.scripts[script_name]:
            self._jobs.append(self._compile_step(step))
        return out

    def _compile_step(self, step: Step) -> _MoveJob | _TimedJob:
        if isinstance(step, Goto):
            return _MoveJob(step.target)
        if isinstance(step, Return):
            return _MoveJob(self.profile.home)
        if isinstance(step, Inspect):
            return _TimedJob(step.duration, ActivityState.INSPECTING, inspect_asset=step.asset)
        if isinstance(step, ScanStep):
            return _TimedJob(SCAN_DURATION_S, ActivityState.INSPECTING, scan_asset=step.asset)
        if isinstance(step, Hold):
            return _TimedJob(step.duration, ActivityState.INSPECTING)
        if isinstance(step, Wait):
            return _TimedJob(step.duration, ActivityState.IDLE)
        raise TypeError(f"unknown step: {step!r}")

    def _execute_command(self, frame: CommandFrame) -> list[Frame]:
        out: list[Frame] = []
        self._fire_injections(out, on_command=frame.verb.value)
        if out and self.fault_code:
            return out  # latched before the command took effect

        verb = frame.verb
        if verb is CommandVerb.STOP:
            self.stopped = True
            out.append(self._ack("STOP"))
            return out
        if verb is CommandVerb.RESUME:
            self.stopped = False
            out.append(self._ack("RESUME"))
            return out
        if self.stopped:
            out.append(self._msg(f"rejected {verb.value} while stopped"))
            return out

        if verb is CommandVerb.GOTO:
            self._preempt_mission(out)
            target = _parse_xy(frame.args[0])
            self._jobs.append(_MoveJob(target, [self._ack(f"GOTO {frame.args[0]}")]))
            return out

        if verb is CommandVerb.SCOUT:
            if not self.has(Capability.FLY):
                out.append(self._msg("rejected SCOUT"))
                return out
            self._preempt_mission(out)
            target = _parse_xy(frame.args[0])
            verdict = "path blocked" if self.arena.path_blocked(self.position, target) else "path clear"
            self._jobs.append(_MoveJob(target, [self._msg(verdict)]))
            return out

        if verb is CommandVerb.ARM:
            if not self.profile.arm_joints:
                out.append(self._msg("rejected ARM"))
                return out
            setpoints: dict[str, float] = {}
            for part in frame.args[0].split(","):
                joint, _, angle_text = part.partition("=")
                limits = self.profile.arm_joints.get(joint)
                angle = float(angle_text)
                if limits is None or not limits[0] <= angle <= limits[1]:
                    out.append(self._msg(f"rejected ARM {joint}"))
                    return out
                setpoints[joint] = angle
            self._jobs.append(
                _TimedJob(
                    ARM_DURATION_S,
                    ActivityState.MANIPULATING,
                    arm_setpoints=setpoints,
                    done_frames=[self._ack(f"ARM {frame.args[0]}")],
                )
            )
            return out

        if verb in (CommandVerb.PICK, CommandVerb.PLACE):
            if not self.has(Capability.PICK_AND_PLACE):
                out.append(self._msg(f"rejected {verb.value}"))
                return out
            item, at = frame.args[0], _parse_xy(frame.args[1])
            if distance(self.position, at) > PICKUP_RADIUS_M:
                out.append(self._msg(f"rejected {verb.value} out of range"))
                return out
            if verb is CommandVerb.PICK:
                self.carrying.add(item)
                out.extend(self._battery_swap(item))
                out.append(self._ack(f"PICK {item}"))
            else:
                if item not in self.carrying:
                    out.append(self._msg(f"rejected PLACE not carrying {item}"))
                    return out
                self.carrying.discard(item)
                out.append(self._ack(f"PLACE {item}"))
            return out

        out.append(self._msg(f"rejected {verb.value}"))
        return out

    def _preempt_mission(self, out: list[Frame]) -> None:
        """Direct navigation takes over: the active preset (if any) is
        dropped and the twin re-queues it."""
        if self.mission is not None:
            out.append(self._msg(f"preempted {self.mission}"))
            self.mission = None
            self._jobs.clear()

    def _battery_swap(self, item: str) -> list[Frame]:
        """Taking possession of a battery item while battery-faulted swaps it
        in; anything else has no effect."""
        spec = self.arena.items.get(item)
        if spec is None or spec.kind != "battery" or self.fault_code != "BATF":
            return []
        self.battery = 100.0
        self.fault_code = None
        self._low_warned = False
        return [self._msg("battery replaced")]

    # -- time advance --

    def tick(self, dt: float) -> list[Frame]:
        if dt <= 0:
            raise ValueError("dt must be positive")
        out: list[Frame] = []
        state_before = self.state
        self.time += dt
        self._fire_injections(out, now=self.time)

        if not self.stopped and self._jobs:
            self._advance_job(dt, out)

        rate = self.profile.drain_rate(state_before)
        self.battery = max(0.0, self.battery - rate * dt)

        if self.battery < LOW_BATTERY_WARN_PCT and not self._low_warned and self.fault_code is None:
            self._low_warned = True
            out.append(WarningFrame(self.id, "LOWB", f"battery at {int(round(self.battery))}%"))

        self._telem_elapsed += dt
        if self._telem_elapsed >= self.profile.telemetry_period:
            self._telem_elapsed = 0.0
            out.append(self.status_frame())
        return out

    def _advance_job(self, dt: float, out: list[Frame]) -> None:
        job = self._jobs[0]
        if isinstance(job, _MoveJob):
            remaining = distance(self.position, job.target)
            step = self.profile.speed * dt
            if step >= remaining:
                self.x, self.y = job.target
                self._complete_job(out)
            else:
                dx = job.target[0] - self.x
                dy = job.target[1] - self.y
                self.heading = math.atan2(dy, dx)
                self.x += dx / remaining * step
                self.y += dy / remaining * step
        else:
            job.remaining -= dt
            if job.remaining <= 1e-12:
                self._complete_job(out)

    def _complete_job(self, out: list[Frame]) -> None:
        job = self._jobs.popleft()
        if isinstance(job, _TimedJob):
            if job.arm_setpoints:
                self.arm_angles.update(job.arm_setpoints)
            if job.scan_asset:
                try:
                    result = simulate_scan(self.arena, job.scan_asset, self.seed, self.position)
                    out.append(ScanFrame(self.id, result.asset_id, result.severity))
                except OutOfRange:
                    out.append(self._msg(f"scan out of range {job.scan_asset}"))
            if job.inspect_asset:
                out.append(self._msg(f"inspected {job.inspect_asset}"))
        out.extend(job.done_frames)
        if not self._jobs and self.mission is not None:
            out.append(DoneFrame(self.id, self.mission))
            self.mission = None

    # -- emissions --

    def status_frame(self) -> StatusFrame:
        return StatusFrame(
            self.id,
            quantize(self.x),
            quantize(self.y),
            quantize(self.heading),
            int(round(self.battery)),
            self.state,
            self.mission,
        )

    def _msg(self, text: str) -> TextFrame:
        return TextFrame(self.id, text)

    def _ack(self, echo: str) -> AckFrame:
        return AckFrame(self.id, echo)

    def _fire_injections(
        self,
        out: list[Frame],
        on_command: str | None = None,
        at_phase: str | None = None,
        now: float | None = None,
    ) -> bool:
        fired_any = False
        for injection in self.injections:
            if injection.fired:
                continue
            if on_command is not None and injection.on_command == on_command:
                pass
            elif at_phase is not None and injection.at_phase == at_phase:
                pass
            elif now is not None and injection.at_time is not None and now >= injection.at_time:
                pass
            else:
                continue
            injection.fired = True
            fired_any = True
            severity = self.registry.lookup(injection.code).severity
            frame_cls = FaultFrame if severity is Severity.FAULT else WarningFrame
            out.append(frame_cls(self.id, injection.code, injection.detail))
            if injection.latch:
                self.fault_code = injection.code
                self._jobs.clear()
                self.mission = None
        return fired_any


def _parse_xy(text: str) -> Point:
    x_text, _, y_text = text.partition(",")
    return (float(x_text), float(y_text))
