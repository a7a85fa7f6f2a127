"""Mission-resilience decision making.

Pure functions over immutable fleet snapshots: classify a fault or warning,
pick the first matching remedial rule, bind its placeholders, and assign
each task to a capable robot. The twin calls these from its single effect
application point; nothing here holds mutable state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

from .protocol import FaultFrame, FaultRegistry, Severity, WarningFrame, fmt_num, quantize

Point = tuple[float, float]


class Capability(Enum):
    GROUND_TRAVERSE = "GroundTraverse"
    FLY = "Fly"
    INSPECT_AT_HEIGHT = "InspectAtHeight"
    FMCW_SCAN = "FmcwScan"
    MANIPULATE = "Manipulate"
    PICK_AND_PLACE = "PickAndPlace"
    CAMERA = "Camera"


CAPABILITY_BY_NAME = {c.value: c for c in Capability}


class TaskVerb(Enum):
    DIVERT = "Divert"
    SCOUT = "Scout"
    DELIVER = "Deliver"
    ASSIST = "Assist"
    SAFETY_STOP = "SafetyStop"
    NOTIFY = "Notify"
    RESUME = "Resume"


VERB_BY_NAME = {v.value: v for v in TaskVerb}

# Verbs the faulted platform performs on itself; everything else must go to
# another robot.
SELF_VERBS = frozenset({TaskVerb.DIVERT, TaskVerb.SAFETY_STOP, TaskVerb.RESUME})


class C3Level(Enum):
    COOPERATION = "Cooperation"
    CORROBORATION = "Corroboration"
    COLLABORATION = "Collaboration"


class InteractionKind(Enum):
    TELEMETRY_SHARE = "telemetry_share"
    VERIFICATION = "verification"
    PHYSICAL_ASSIST = "physical_assist"


@dataclass(frozen=True)
class InteractionRecord:
    """A closed fleet interaction, ready for governance tagging."""

    kind: InteractionKind
    actor: str
    beneficiary: str
    detail: str = ""


_C3_BY_KIND = {
    InteractionKind.TELEMETRY_SHARE: C3Level.COOPERATION,
    InteractionKind.VERIFICATION: C3Level.CORROBORATION,
    InteractionKind.PHYSICAL_ASSIST: C3Level.COLLABORATION,
}


def c3_tag(record: InteractionRecord) -> C3Level:
    return _C3_BY_KIND[record.kind]


@dataclass(frozen=True)
class FaultEvent:
    platform_id: str
    code: str
    severity: Severity
    sim_time: float
    phase: str
    position: Point


@dataclass(frozen=True)
class FleetRobot:
    """The engine's view of one platform at decision time."""

    id: str
    capabilities: frozenset[Capability]
    position: Point
    idle: bool
    preemptible: bool
    faulted: bool = False


@dataclass(frozen=True)
class TaskTemplate:
    verb: TaskVerb
    required_capability: Capability | None = None
    params: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class RuleTrigger:
    code: str = "*"  # exact mnemonic or "*"
    severity: str = "any"  # "Fault" | "Warning" | "any"
    platform: str = "any"  # platform id or "any"

    def matches(self, event: FaultEvent) -> bool:
        if self.code != "*" and self.code != event.code:
            return False
        if self.severity != "any" and self.severity != event.severity.value:
            return False
        if self.platform != "any" and self.platform != event.platform_id:
            return False
        return True


@dataclass(frozen=True)
class RemedialRule:
    name: str
    trigger: RuleTrigger
    plan_template: tuple[TaskTemplate, ...]


CATCH_ALL_RULE = RemedialRule(
    name="catch_all",
    trigger=RuleTrigger(),
    plan_template=(
        TaskTemplate(TaskVerb.SAFETY_STOP),
        TaskTemplate(TaskVerb.NOTIFY, params={"reason": "unhandled fault"}),
    ),
)


class TaskStatus(Enum):
    PENDING = "Pending"
    ACTIVE = "Active"
    DONE = "Done"
    SKIPPED = "Skipped"
    FAILED = "Failed"


UNASSIGNABLE = "<unassignable>"


@dataclass
class Task:
    verb: TaskVerb
    assignee: str | None  # None for Notify, UNASSIGNABLE marker otherwise
    required_capability: Capability | None
    params: dict[str, str]
    status: TaskStatus = TaskStatus.PENDING


class ApprovalState(Enum):
    AUTO_APPROVED = "AutoApproved"
    OPERATOR_APPROVED = "OperatorApproved"
    OPERATOR_REJECTED = "OperatorRejected"
    PENDING = "Pending"


@dataclass
class Approval:
    state: ApprovalState
    deadline: float | None = None

    @property
    def resolved(self) -> bool:
        return self.state is not ApprovalState.PENDING


@dataclass
class RemedialPlan:
    plan_id: str
    event: FaultEvent
    rule_name: str
    tasks: list[Task]
    approval: Approval
    degraded: bool = False
    skipped_verbs: tuple[TaskVerb, ...] = ()


def classify_event(
    frame: FaultFrame | WarningFrame,
    registry: FaultRegistry,
    sim_time: float,
    position: Point,
    phase: str,
) -> FaultEvent:
    """Severity always comes from the registry, not from the frame tag."""
    severity = registry.lookup(frame.code).severity
    return FaultEvent(
        platform_id=frame.platform_id,
        code=frame.code,
        severity=severity,
        sim_time=sim_time,
        phase=phase,
        position=position,
    )


def _distance(a: Point, b: Point) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def first_waypoint(
    template: TaskTemplate,
    event: FaultEvent,
    item_positions: Mapping[str, Point],
) -> Point | None:
    """Where the assignee must travel first; None for stationary verbs."""
    if template.verb in (TaskVerb.SCOUT, TaskVerb.ASSIST, TaskVerb.DIVERT):
        return event.position
    if template.verb is TaskVerb.DELIVER:
        item = template.params.get("item", "")
        return item_positions.get(item)
    return None


def eligible_robots(
    template: TaskTemplate,
    event: FaultEvent,
    fleet: Mapping[str, FleetRobot],
) -> list[FleetRobot]:
    robots = []
    for robot in fleet.values():
        if robot.id == event.platform_id:
            continue
        if template.required_capability is not None and (
            template.required_capability not in robot.capabilities
        ):
            continue
        if not (robot.idle or robot.preemptible):
            continue
        robots.append(robot)
    return robots


def assign_tasks(
    plan_template: tuple[TaskTemplate, ...],
    fleet: Mapping[str, FleetRobot],
    event: FaultEvent,
    locations: Mapping[str, Point],
    item_positions: Mapping[str, Point],
) -> list[tuple[TaskTemplate, str | None]]:
    """Pick an assignee per template.

    Idle robots beat preemptible ones; ties break on straight-line distance
    to the task's first waypoint, then lexicographic platform id. Tasks with
    no eligible robot get the UNASSIGNABLE marker.
    """
    assignments: list[tuple[TaskTemplate, str | None]] = []
    for template in plan_template:
        if template.verb is TaskVerb.NOTIFY:
            assignments.append((template, None))
            continue
        if template.verb in SELF_VERBS:
            assignments.append((template, event.platform_id))
            continue
        candidates = eligible_robots(template, event, fleet)
        if not candidates:
            assignments.append((template, UNASSIGNABLE))
            continue
        waypoint = first_waypoint(template, event, item_positions)

        def rank(robot: FleetRobot) -> tuple:
            dist = _distance(robot.position, waypoint) if waypoint else 0.0
            return (0 if robot.idle else 1, dist, robot.id)

        assignments.append((template, min(candidates, key=rank).id))
    return assignments


def _bind(value: str, event: FaultEvent, locations: Mapping[str, Point]) -> str:
    """Resolve $-placeholders to concrete values at selection time."""
    if not value.startswith("$"):
        return value
    name = value[1:]
    if name == "faulted.id":
        return event.platform_id
    if name == "faulted.position":
        return _fmt_point(event.position)
    if name in locations:
        return _fmt_point(locations[name])
    raise KeyError(f"unresolvable placeholder: {value}")


def format_point(point: Point) -> str:
    """Wire-ready 'x,y' text, integers rendered bare ('5,1' not '5.0,1.0')."""

    def one(v: float) -> str:
        q = quantize(v)
        return str(int(q)) if q == int(q) else fmt_num(q)

    return f"{one(point[0])},{one(point[1])}"


_fmt_point = format_point


def select_plan(
    event: FaultEvent,
    rules: list[RemedialRule],
    fleet: Mapping[str, FleetRobot],
    locations: Mapping[str, Point],
    item_positions: Mapping[str, Point],
    plan_id: str,
    approval: Approval,
) -> RemedialPlan:
    """First-match rule selection; total thanks to the catch-all.

    If any load-bearing task is unassignable the plan degrades to the safety
    fallback (stop the faulted platform, escalate the notification) instead
    of pretending a capability exists.
    """
    rule = next((r for r in rules if r.trigger.matches(event)), CATCH_ALL_RULE)
    assignments = assign_tasks(rule.plan_template, fleet, event, locations, item_positions)

    unassignable = [t.verb for t, who in assignments if who == UNASSIGNABLE]
    if unassignable:
        tasks = [
            Task(TaskVerb.SAFETY_STOP, event.platform_id, None, {}),
            Task(
                TaskVerb.NOTIFY,
                None,
                None,
                {
                    "reason": "plan degraded, no robot for "
                    + ",".join(v.value for v in unassignable),
                    "escalated": "true",
                },
            ),
        ]
        return RemedialPlan(
            plan_id,
            event,
            rule.name,
            tasks,
            approval,
            degraded=True,
            skipped_verbs=tuple(unassignable),
        )

    tasks = []
    for template, assignee in assignments:
        params = {k: _bind(v, event, locations) for k, v in template.params.items()}
        tasks.append(Task(template.verb, assignee, template.required_capability, params))
    return RemedialPlan(plan_id, event, rule.name, tasks, approval)


APPROVAL_TIMEOUT_S = 5.0


def initial_approval(interactive: bool, now: float, timeout: float = APPROVAL_TIMEOUT_S) -> Approval:
    if interactive:
        return Approval(ApprovalState.PENDING, deadline=now + timeout)
    return Approval(ApprovalState.AUTO_APPROVED)


def operator_decision(plan: RemedialPlan, approve: bool, now: float) -> bool:
    """Apply an operator verdict; late decisions are ignored (and logged by
    the caller). Returns whether the decision took effect."""
    if plan.approval.resolved:
        return False
    plan.approval.state = (
        ApprovalState.OPERATOR_APPROVED if approve else ApprovalState.OPERATOR_REJECTED
    )
    return True


def expire_approval(plan: RemedialPlan, now: float) -> bool:
    """Auto-approve once the decision window lapses (fail-operational)."""
    if plan.approval.state is ApprovalState.PENDING and now >= plan.approval.deadline:
        plan.approval.state = ApprovalState.AUTO_APPROVED
        return True
    return False
