"""Decision engine tests: rule matching, assignment, approval, governance tags."""

import itertools
import math

import pytest
from hypothesis import given, strategies as st

from fleettwin.engine import (
    Approval,
    ApprovalState,
    C3Level,
    CATCH_ALL_RULE,
    Capability,
    FaultEvent,
    FleetRobot,
    InteractionKind,
    InteractionRecord,
    RemedialRule,
    RuleTrigger,
    SELF_VERBS,
    Task,
    TaskTemplate,
    TaskVerb,
    UNASSIGNABLE,
    assign_tasks,
    c3_tag,
    classify_event,
    expire_approval,
    initial_approval,
    operator_decision,
    select_plan,
)
from fleettwin.protocol import FaultFrame, FaultRegistry, Severity, WarningFrame

LOCATIONS = {
    "layby": (5.0, 1.0),
    "battery_depot": (2.0, 3.0),
    "husky_home": (1.0, 1.0),
    "spot_home": (1.0, 3.0),
    "tello_home": (1.0, 5.0),
}

BATF_RULE = RemedialRule(
    "battery_fault_recovery",
    RuleTrigger(code="BATF", severity="Fault"),
    (
        TaskTemplate(TaskVerb.DIVERT, None, {"to": "$layby"}),
        TaskTemplate(TaskVerb.SCOUT, Capability.FLY, {"target": "$layby"}),
        TaskTemplate(
            TaskVerb.DELIVER,
            Capability.PICK_AND_PLACE,
            {"item": "battery_box", "to": "$layby"},
        ),
        TaskTemplate(TaskVerb.RESUME, None, {"take": "battery_box"}),
        TaskTemplate(TaskVerb.NOTIFY, None, {"reason": "battery fault recovery"}),
    ),
)

WARNING_RULE = RemedialRule(
    "warning_assist",
    RuleTrigger(severity="Warning"),
    (
        TaskTemplate(TaskVerb.ASSIST, Capability.GROUND_TRAVERSE, {"target": "$faulted.position"}),
        TaskTemplate(TaskVerb.NOTIFY, None, {"reason": "warning assist"}),
    ),
)

RULES = [BATF_RULE, WARNING_RULE, CATCH_ALL_RULE]


def fleet_robot(pid, caps, pos=(0.0, 0.0), idle=True, preemptible=False, faulted=False):
    return FleetRobot(pid, frozenset(caps), pos, idle, preemptible, faulted)


def canonical_fleet(husky_pos=(4.0, 1.5)):
    return {
        "husky": fleet_robot(
            "husky",
            {Capability.GROUND_TRAVERSE, Capability.FMCW_SCAN, Capability.MANIPULATE,
             Capability.PICK_AND_PLACE, Capability.CAMERA},
            husky_pos,
            idle=False,
            faulted=True,
        ),
        "spot": fleet_robot(
            "spot",
            {Capability.GROUND_TRAVERSE, Capability.MANIPULATE, Capability.PICK_AND_PLACE,
             Capability.CAMERA},
            (1.0, 3.0),
        ),
        "tello": fleet_robot(
            "tello",
            {Capability.FLY, Capability.INSPECT_AT_HEIGHT, Capability.CAMERA},
            (1.0, 5.0),
        ),
    }


ITEMS = {"battery_box": (2.0, 3.0)}
REGISTRY = FaultRegistry()


def batf_event(pos=(4.0, 1.5)):
    return FaultEvent("husky", "BATF", Severity.FAULT, 12.0, "arm reposition", pos)


def test_classify_fault_uses_registry_severity():
    frame = FaultFrame("husky", "BATF", "arm reposition")
    event = classify_event(frame, REGISTRY, 12.0, (4.0, 1.5), "mission B")
    assert event.severity == Severity.FAULT
    assert event.platform_id == "husky"
    assert event.position == (4.0, 1.5)
    assert event.phase == "mission B"


def test_classify_warning():
    frame = WarningFrame("tello", "LOWB", "battery at 9%")
    event = classify_event(frame, REGISTRY, 3.0, (1.0, 5.0), "idle")
    assert event.severity == Severity.WARNING


def test_classify_unknown_code_is_fault():
    frame = FaultFrame("spot", "ZZZZ", "odd")
    event = classify_event(frame, REGISTRY, 1.0, (0.0, 0.0), "idle")
    assert event.severity == Severity.FAULT

    # even a WRN-tagged unknown code classifies as Fault: conservative default
    frame = WarningFrame("spot", "QQQQ", "odd")
    event = classify_event(frame, REGISTRY, 1.0, (0.0, 0.0), "idle")
    assert event.severity == Severity.FAULT


def test_select_plan_battery_chain():
    plan = select_plan(
        batf_event(), RULES, canonical_fleet(), LOCATIONS, ITEMS,
        "plan-1", Approval(ApprovalState.AUTO_APPROVED),
    )
    assert plan.rule_name == "battery_fault_recovery"
    assert not plan.degraded
    verbs = [(t.verb, t.assignee) for t in plan.tasks]
    assert verbs == [
        (TaskVerb.DIVERT, "husky"),
        (TaskVerb.SCOUT, "tello"),
        (TaskVerb.DELIVER, "spot"),
        (TaskVerb.RESUME, "husky"),
        (TaskVerb.NOTIFY, None),
    ]
    divert = plan.tasks[0]
    assert divert.params["to"] == "5,1"


def test_select_plan_warning_assist():
    event = FaultEvent("tello", "LOWB", Severity.WARNING, 3.0, "idle", (7.0, 7.0))
    fleet = canonical_fleet()
    fleet["husky"] = fleet_robot("husky", {Capability.GROUND_TRAVERSE}, (1.0, 1.0))
    plan = select_plan(
        event, RULES, fleet, LOCATIONS, ITEMS, "plan-2",
        Approval(ApprovalState.AUTO_APPROVED),
    )
    assert plan.rule_name == "warning_assist"
    assert plan.tasks[0].verb is TaskVerb.ASSIST
    assert plan.tasks[0].params["target"] == "7,7"
    # nearest capable ground robot: spot at (1,3) vs husky at (1,1) to (7,7)
    assert plan.tasks[0].assignee == "spot"


def test_select_plan_catch_all():
    event = FaultEvent("spot", "ZZZZ", Severity.FAULT, 9.0, "idle", (1.0, 3.0))
    plan = select_plan(
        event, RULES, canonical_fleet(), LOCATIONS, ITEMS, "plan-3",
        Approval(ApprovalState.AUTO_APPROVED),
    )
    assert plan.rule_name == "catch_all"
    assert [t.verb for t in plan.tasks] == [TaskVerb.SAFETY_STOP, TaskVerb.NOTIFY]
    assert plan.tasks[0].assignee == "spot"


def test_select_plan_degrades_without_fly():
    fleet = canonical_fleet()
    del fleet["tello"]
    plan = select_plan(
        batf_event(), RULES, fleet, LOCATIONS, ITEMS, "plan-4",
        Approval(ApprovalState.AUTO_APPROVED),
    )
    assert plan.degraded
    assert plan.skipped_verbs == (TaskVerb.SCOUT,)
    assert [t.verb for t in plan.tasks] == [TaskVerb.SAFETY_STOP, TaskVerb.NOTIFY]
    assert plan.tasks[0].assignee == "husky"
    assert plan.tasks[1].params["escalated"] == "true"


def test_assign_marks_unassignable():
    fleet = {
        "husky": fleet_robot("husky", {Capability.GROUND_TRAVERSE}, (0.0, 0.0), idle=False, faulted=True),
        "spot": fleet_robot("spot", {Capability.GROUND_TRAVERSE, Capability.PICK_AND_PLACE}, (1.0, 1.0)),
    }
    assignments = assign_tasks(BATF_RULE.plan_template, fleet, batf_event((0.0, 0.0)), LOCATIONS, ITEMS)
    by_verb = {t.verb: who for t, who in assignments}
    assert by_verb[TaskVerb.SCOUT] == UNASSIGNABLE
    assert by_verb[TaskVerb.DELIVER] == "spot"


def test_assign_prefers_idle_over_preemptible():
    template = (TaskTemplate(TaskVerb.ASSIST, Capability.GROUND_TRAVERSE, {}),)
    event = FaultEvent("x", "LOWB", Severity.WARNING, 0.0, "idle", (0.0, 0.0))
    fleet = {
        "x": fleet_robot("x", set(), (0.0, 0.0), idle=False, faulted=True),
        "near_busy": fleet_robot("near_busy", {Capability.GROUND_TRAVERSE}, (0.1, 0.0), idle=False, preemptible=True),
        "far_idle": fleet_robot("far_idle", {Capability.GROUND_TRAVERSE}, (9.0, 0.0)),
    }
    [(_, who)] = assign_tasks(template, fleet, event, LOCATIONS, {})
    assert who == "far_idle"


def test_assign_tie_break_lexicographic():
    template = (TaskTemplate(TaskVerb.ASSIST, Capability.GROUND_TRAVERSE, {}),)
    event = FaultEvent("x", "LOWB", Severity.WARNING, 0.0, "idle", (0.0, 0.0))
    fleet = {
        "x": fleet_robot("x", set(), (0.0, 0.0), idle=False, faulted=True),
        "beta": fleet_robot("beta", {Capability.GROUND_TRAVERSE}, (3.0, 0.0)),
        "alpha": fleet_robot("alpha", {Capability.GROUND_TRAVERSE}, (0.0, 3.0)),
    }
    [(_, who)] = assign_tasks(template, fleet, event, LOCATIONS, {})
    assert who == "alpha"


def brute_force_choice(template, event, fleet, items):
    """Independent assignment oracle: scan every robot, apply the documented
    ordering by exhaustive pairwise comparison."""
    best = None
    for robot in fleet.values():
        if robot.id == event.platform_id:
            continue
        if template.required_capability and template.required_capability not in robot.capabilities:
            continue
        if not (robot.idle or robot.preemptible):
            continue
        if template.verb is TaskVerb.DELIVER:
            wp = items.get(template.params.get("item", ""))
        else:
            wp = event.position
        dist = math.hypot(robot.position[0] - wp[0], robot.position[1] - wp[1]) if wp else 0.0
        key = (not robot.idle, dist, robot.id)
        if best is None or key < best[0]:
            best = (key, robot.id)
    return best[1] if best else UNASSIGNABLE


@given(
    positions=st.lists(
        st.tuples(st.integers(0, 10), st.integers(0, 8)).map(lambda p: (float(p[0]), float(p[1]))),
        min_size=1,
        max_size=5,
    ),
    caps=st.lists(
        st.sets(st.sampled_from(list(Capability)), max_size=4), min_size=1, max_size=5
    ),
    idles=st.lists(st.booleans(), min_size=1, max_size=5),
)
def test_assignment_matches_brute_force(positions, caps, idles):
    n = min(len(positions), len(caps), len(idles))
    fleet = {
        f"r{i}": fleet_robot(f"r{i}", caps[i], positions[i], idle=idles[i], preemptible=not idles[i])
        for i in range(n)
    }
    fleet["faulty"] = fleet_robot("faulty", set(), (5.0, 5.0), idle=False, faulted=True)
    event = FaultEvent("faulty", "BATF", Severity.FAULT, 0.0, "x", (5.0, 5.0))
    for template in BATF_RULE.plan_template:
        if template.verb in SELF_VERBS or template.verb is TaskVerb.NOTIFY:
            continue
        [(_, got)] = assign_tasks((template,), fleet, event, LOCATIONS, ITEMS)
        assert got == brute_force_choice(template, event, fleet, ITEMS)


@given(
    caps=st.lists(st.sets(st.sampled_from(list(Capability)), max_size=5), min_size=2, max_size=6),
    code=st.sampled_from(["BATF", "LOWB", "ZZZZ", "LWMF", "COMM"]),
)
def test_capability_soundness_and_self_rescue(caps, code):
    fleet = {
        f"r{i}": fleet_robot(f"r{i}", c, (float(i), 0.0)) for i, c in enumerate(caps)
    }
    faulted_id = "r0"
    fleet[faulted_id] = fleet_robot(faulted_id, caps[0], (0.0, 0.0), idle=False, faulted=True)
    frame = FaultFrame(faulted_id, code, "injected")
    event = classify_event(frame, REGISTRY, 0.0, (0.0, 0.0), "x")
    plan = select_plan(event, RULES, fleet, LOCATIONS, ITEMS, "p", Approval(ApprovalState.AUTO_APPROVED))
    for task in plan.tasks:
        if task.required_capability is not None and task.assignee:
            assert task.required_capability in fleet[task.assignee].capabilities
        if task.verb in (TaskVerb.SCOUT, TaskVerb.DELIVER, TaskVerb.ASSIST):
            assert task.assignee != faulted_id


def test_rule_totality_over_code_platform_grid():
    codes = REGISTRY.known_codes() + ["ZZZZ"]
    platforms = ["husky", "spot", "tello"]
    for code, platform, frame_cls in itertools.product(
        codes, platforms, (FaultFrame, WarningFrame)
    ):
        frame = frame_cls(platform, code, "grid")
        event = classify_event(frame, REGISTRY, 0.0, (1.0, 1.0), "grid")
        plan = select_plan(
            event, RULES, canonical_fleet(), LOCATIONS, ITEMS, "p",
            Approval(ApprovalState.AUTO_APPROVED),
        )
        assert plan.tasks, f"no plan for {code} on {platform}"


def test_rule_order_sensitivity():
    broad = RemedialRule(
        "broad_fault",
        RuleTrigger(severity="Fault"),
        (TaskTemplate(TaskVerb.SAFETY_STOP), TaskTemplate(TaskVerb.NOTIFY)),
    )
    event = batf_event()
    fleet = canonical_fleet()
    plan_a = select_plan(event, [BATF_RULE, broad, CATCH_ALL_RULE], fleet, LOCATIONS, ITEMS,
                         "p", Approval(ApprovalState.AUTO_APPROVED))
    plan_b = select_plan(event, [broad, BATF_RULE, CATCH_ALL_RULE], fleet, LOCATIONS, ITEMS,
                         "p", Approval(ApprovalState.AUTO_APPROVED))
    assert plan_a.rule_name == "battery_fault_recovery"
    assert plan_b.rule_name == "broad_fault"


def test_assignment_deterministic():
    args = (batf_event(), RULES, canonical_fleet(), LOCATIONS, ITEMS)
    plan_a = select_plan(*args, "p", Approval(ApprovalState.AUTO_APPROVED))
    plan_b = select_plan(*args, "p", Approval(ApprovalState.AUTO_APPROVED))
    assert [(t.verb, t.assignee, t.params) for t in plan_a.tasks] == [
        (t.verb, t.assignee, t.params) for t in plan_b.tasks
    ]


def test_approval_autonomous():
    approval = initial_approval(interactive=False, now=10.0)
    assert approval.state is ApprovalState.AUTO_APPROVED


def test_approval_interactive_flow():
    plan = select_plan(
        batf_event(), RULES, canonical_fleet(), LOCATIONS, ITEMS, "p",
        initial_approval(interactive=True, now=10.0),
    )
    assert plan.approval.state is ApprovalState.PENDING
    assert plan.approval.deadline == 15.0

    assert not expire_approval(plan, 12.0)
    assert operator_decision(plan, approve=True, now=12.0)
    assert plan.approval.state is ApprovalState.OPERATOR_APPROVED

    # late second decision is ignored
    assert not operator_decision(plan, approve=False, now=13.0)
    assert plan.approval.state is ApprovalState.OPERATOR_APPROVED


def test_approval_expires_to_auto():
    plan = select_plan(
        batf_event(), RULES, canonical_fleet(), LOCATIONS, ITEMS, "p",
        initial_approval(interactive=True, now=10.0),
    )
    assert expire_approval(plan, 15.0)
    assert plan.approval.state is ApprovalState.AUTO_APPROVED
    assert not operator_decision(plan, approve=False, now=15.5)


def test_approval_reject():
    plan = select_plan(
        batf_event(), RULES, canonical_fleet(), LOCATIONS, ITEMS, "p",
        initial_approval(interactive=True, now=0.0),
    )
    assert operator_decision(plan, approve=False, now=1.0)
    assert plan.approval.state is ApprovalState.OPERATOR_REJECTED


def test_c3_tags():
    assert c3_tag(InteractionRecord(InteractionKind.VERIFICATION, "tello", "husky")) is C3Level.CORROBORATION
    assert c3_tag(InteractionRecord(InteractionKind.PHYSICAL_ASSIST, "spot", "husky")) is C3Level.COLLABORATION
    assert c3_tag(InteractionRecord(InteractionKind.TELEMETRY_SHARE, "husky", "twin")) is C3Level.COOPERATION
