"""Declarative scenario files (.scn).

A scenario is one YAML document describing the arena, the fleet, preset
mission scripts, remedial rules, fault injections and the mission phase
sequence. Everything is cross-referenced at load time so a run can never
chase a name that does not resolve.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, replace

import yaml

from .arena import Arena, Asset, ItemSpec, Point, Rect
from .engine import (
    CAPABILITY_BY_NAME,
    CATCH_ALL_RULE,
    Capability,
    RemedialRule,
    RuleTrigger,
    TaskTemplate,
    VERB_BY_NAME,
)
from .protocol import ActivityState, FaultCode, FaultRegistry, Severity
from .robots import (
    DEFAULT_DRAIN,
    FaultInjection,
    Goto,
    Hold,
    Inspect,
    Return,
    ScanStep,
    Script,
    Wait,
)


class ScenarioError(Exception):
    pass


class ParseError(ScenarioError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")


class DanglingReference(ScenarioError):
    def __init__(self, name: str, context: str = ""):
        self.name = name
        suffix = f" in {context}" if context else ""
        super().__init__(f"unresolved reference {name!r}{suffix}")


@dataclass(frozen=True)
class PlatformSpec:
    id: str
    display_name: str
    port: int
    capabilities: frozenset[Capability]
    speed: float
    home: Point
    drain: dict[ActivityState, float]
    arm_joints: dict[str, tuple[float, float]]
    telemetry_period: float
    presets: dict[str, str]


@dataclass(frozen=True)
class MissionPhase:
    name: str
    triggers: dict[str, str]  # platform id -> trigger char


@dataclass(frozen=True)
class OperatorAction:
    at_phase: str
    delay_s: float
    platform: str
    command: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class InjectionSpec:
    platform: str
    code: str
    detail: str
    on_command: str | None = None
    at_time: float | None = None
    at_phase: str | None = None
    latch: bool = True

    def build(self) -> FaultInjection:
        return FaultInjection(
            self.code,
            self.detail,
            on_command=self.on_command,
            at_time=self.at_time,
            at_phase=self.at_phase,
            latch=self.latch,
        )


@dataclass(frozen=True)
class Scenario:
    name: str
    source_hash: str
    arena: Arena
    platforms: tuple[PlatformSpec, ...]
    scripts: dict[str, Script]
    rules: list[RemedialRule]
    registry: FaultRegistry
    injections: tuple[InjectionSpec, ...]
    mission_phases: tuple[MissionPhase, ...]
    operator_actions: tuple[OperatorAction, ...]
    interactive: bool
    seed: int
    tick_dt: float
    stop_timeout_s: float
    mission_timeout_s: float
    stale_timeout_s: float
    approval_timeout_s: float
    time_scale: float
    base_port: int

    def platform(self, pid: str) -> PlatformSpec:
        for spec in self.platforms:
            if spec.id == pid:
                return spec
        raise KeyError(pid)

    def injections_for(self, pid: str) -> list[FaultInjection]:
        return [i.build() for i in self.injections if i.platform == pid]

    def without_platform(self, pid: str) -> "Scenario":
        """Derived scenario minus one platform (degradation experiments)."""
        platforms = tuple(p for p in self.platforms if p.id != pid)
        phases = []
        for phase in self.mission_phases:
            triggers = {k: v for k, v in phase.triggers.items() if k != pid}
            if triggers:
                phases.append(MissionPhase(phase.name, triggers))
        return replace(
            self,
            platforms=platforms,
            injections=tuple(i for i in self.injections if i.platform != pid),
            operator_actions=tuple(a for a in self.operator_actions if a.platform != pid),
            mission_phases=tuple(phases),
            source_hash=hashlib.sha256(
                (self.source_hash + f"-without-{pid}").encode()
            ).hexdigest(),
        )


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise ParseError(f"missing {key!r} in {context}")
    return mapping[key]


def _point(value, locations: dict[str, Point], context: str) -> Point:
    if isinstance(value, str):
        if value not in locations:
            raise DanglingReference(value, context)
        return locations[value]
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return (float(value[0]), float(value[1]))
    raise ParseError(f"bad point {value!r} in {context}")


def load_scenario(path) -> Scenario:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc}") from None
    return parse_scenario(raw, name_hint=str(path))


def parse_scenario(raw: bytes | str, name_hint: str = "<memory>") -> Scenario:
    if isinstance(raw, str):
        raw = raw.encode("utf-8")
    try:
        doc = yaml.safe_load(raw)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark else None
        raise ParseError(f"invalid scenario syntax: {exc.problem}", line) from None
    except yaml.YAMLError as exc:
        raise ParseError(f"invalid scenario syntax: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("scenario must be a mapping")

    name = str(doc.get("name", name_hint))
    source_hash = hashlib.sha256(raw).hexdigest()

    arena_doc = _require(doc, "arena", "scenario")
    locations = {
        str(k): (float(v[0]), float(v[1]))
        for k, v in (arena_doc.get("locations") or {}).items()
    }
    obstacles = tuple(
        Rect(float(o[0]), float(o[1]), float(o[2]), float(o[3]))
        for o in (arena_doc.get("obstacles") or [])
    )

    assets = {}
    for aid, spec in (doc.get("assets") or {}).items():
        position = _point(_require(spec, "at", f"asset {aid}"), locations, f"asset {aid}")
        severity = spec.get("severity")
        if severity is not None and not 0.0 <= float(severity) <= 1.0:
            raise ParseError(f"asset {aid}: severity must be in [0,1]")
        assets[str(aid)] = Asset(
            str(aid), str(spec.get("kind", "asset")), position,
            None if severity is None else float(severity),
        )

    items = {}
    for iid, spec in (doc.get("items") or {}).items():
        position = _point(_require(spec, "at", f"item {iid}"), locations, f"item {iid}")
        items[str(iid)] = ItemSpec(str(iid), str(spec.get("kind", "item")), position)

    arena = Arena(
        width=float(_require(arena_doc, "width", "arena")),
        height=float(_require(arena_doc, "height", "arena")),
        locations=locations,
        obstacles=obstacles,
        assets=assets,
        items=items,
    )

    scripts = {}
    for sname, steps_doc in (doc.get("scripts") or {}).items():
        scripts[str(sname)] = _parse_script(str(sname), steps_doc, locations, assets)

    base_port = int(doc.get("base_port", 9001))
    platforms = []
    for index, pdoc in enumerate(_require(doc, "platforms", "scenario")):
        pid = str(_require(pdoc, "id", "platform"))
        caps = set()
        for cname in pdoc.get("capabilities") or []:
            cap = CAPABILITY_BY_NAME.get(str(cname))
            if cap is None:
                raise ParseError(f"platform {pid}: unknown capability {cname!r}")
            caps.add(cap)
        presets = {}
        for char, sname in (pdoc.get("presets") or {}).items():
            char = str(char)
            if len(char) != 1 or not "A" <= char <= "Z":
                raise ParseError(f"platform {pid}: preset trigger must be A-Z, got {char!r}")
            if str(sname) not in scripts:
                raise DanglingReference(str(sname), f"platform {pid} presets")
            presets[char] = str(sname)
        drain = dict(DEFAULT_DRAIN)
        for state_name, rate in (pdoc.get("drain") or {}).items():
            state = next((s for s in ActivityState if s.value == state_name), None)
            if state is None:
                raise ParseError(f"platform {pid}: unknown drain state {state_name!r}")
            drain[state] = float(rate)
        arm_joints = {
            str(j): (float(r[0]), float(r[1]))
            for j, r in (pdoc.get("arm_joints") or {}).items()
        }
        speed = float(pdoc.get("speed", 1.0))
        if speed <= 0:
            raise ParseError(f"platform {pid}: speed must be positive")
        port = int(pdoc.get("port", 0 if base_port == 0 else base_port + index))
        platforms.append(
            PlatformSpec(
                id=pid,
                display_name=str(pdoc.get("display_name", pid)),
                port=port,
                capabilities=frozenset(caps),
                speed=speed,
                home=_point(_require(pdoc, "home", f"platform {pid}"), locations, f"platform {pid}"),
                drain=drain,
                arm_joints=arm_joints,
                telemetry_period=float(pdoc.get("telemetry_period", 1.0)),
                presets=presets,
            )
        )
    ids = [p.id for p in platforms]
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate platform ids")
    nonzero_ports = [p.port for p in platforms if p.port != 0]
    if len(set(nonzero_ports)) != len(nonzero_ports):
        raise ParseError("duplicate platform ports")

    registry = FaultRegistry()
    for code, cdoc in (doc.get("fault_codes") or {}).items():
        severity = Severity.WARNING if str(cdoc.get("severity", "Fault")) == "Warning" else Severity.FAULT
        registry.register(FaultCode(str(code), severity, str(cdoc.get("description", ""))))

    rules = _parse_rules(doc.get("rules") or [], locations)

    injections = []
    for idoc in doc.get("injections") or []:
        pid = str(_require(idoc, "platform", "injection"))
        if pid not in ids:
            raise DanglingReference(pid, "injections")
        at_phase = idoc.get("at_phase")
        if at_phase is not None and str(at_phase) not in scripts:
            raise DanglingReference(str(at_phase), "injection at_phase")
        injections.append(
            InjectionSpec(
                platform=pid,
                code=str(_require(idoc, "code", "injection")),
                detail=str(idoc.get("detail", "")),
                on_command=None if idoc.get("on_command") is None else str(idoc["on_command"]),
                at_time=None if idoc.get("at_time") is None else float(idoc["at_time"]),
                at_phase=None if at_phase is None else str(at_phase),
                latch=bool(idoc.get("latch", True)),
            )
        )

    phases = []
    mission_doc = doc.get("mission") or {}
    for phdoc in mission_doc.get("phases") or []:
        pname = str(_require(phdoc, "name", "mission phase"))
        triggers = {}
        for pid, char in _require(phdoc, "triggers", f"phase {pname}").items():
            pid = str(pid)
            if pid not in ids:
                raise DanglingReference(pid, f"phase {pname}")
            spec = next(p for p in platforms if p.id == pid)
            if str(char) not in spec.presets:
                raise DanglingReference(f"{pid}:{char}", f"phase {pname} trigger")
            triggers[pid] = str(char)
        phases.append(MissionPhase(pname, triggers))

    actions = []
    phase_names = {ph.name for ph in phases}
    for adoc in doc.get("operator_actions") or []:
        phase = str(_require(adoc, "at_phase", "operator action"))
        if phase not in phase_names:
            raise DanglingReference(phase, "operator_actions")
        pid = str(_require(adoc, "platform", "operator action"))
        if pid not in ids:
            raise DanglingReference(pid, "operator_actions")
        actions.append(
            OperatorAction(
                at_phase=phase,
                delay_s=float(adoc.get("delay_s", 0.0)),
                platform=pid,
                command=str(_require(adoc, "command", "operator action")),
                args=tuple(str(a) for a in (adoc.get("args") or [])),
            )
        )

    mode = str(doc.get("mode", "autonomous"))
    if mode not in ("autonomous", "interactive"):
        raise ParseError(f"mode must be autonomous or interactive, got {mode!r}")

    return Scenario(
        name=name,
        source_hash=source_hash,
        arena=arena,
        platforms=tuple(platforms),
        scripts=scripts,
        rules=rules,
        registry=registry,
        injections=tuple(injections),
        mission_phases=tuple(phases),
        operator_actions=tuple(actions),
        interactive=mode == "interactive",
        seed=int(doc.get("seed", 0)),
        tick_dt=float(doc.get("tick_dt", 0.1)),
        stop_timeout_s=float(doc.get("stop_timeout_s", 600.0)),
        mission_timeout_s=float(doc.get("mission_timeout_s", 300.0)),
        stale_timeout_s=float(doc.get("stale_timeout_s", 5.0)),
        approval_timeout_s=float(doc.get("approval_timeout_s", 5.0)),
        time_scale=float(doc.get("time_scale", 20.0)),
        base_port=base_port,
    )


def _parse_script(name: str, steps_doc, locations, assets) -> Script:
    if not isinstance(steps_doc, list):
        raise ParseError(f"script {name} must be a list of steps")
    steps = []
    for step in steps_doc:
        if step == "return" or step == {"return": None}:
            steps.append(Return())
            continue
        if not isinstance(step, dict) or len(step) != 1:
            raise ParseError(f"script {name}: bad step {step!r}")
        key, value = next(iter(step.items()))
        if key == "goto":
            point = _point(value, locations, f"script {name}")
            label = value if isinstance(value, str) else ""
            steps.append(Goto(point, label))
        elif key == "inspect":
            asset = str(_require(value, "asset", f"script {name} inspect"))
            if asset not in assets:
                raise DanglingReference(asset, f"script {name}")
            steps.append(Inspect(asset, float(value.get("duration", 3.0))))
        elif key == "scan":
            asset = str(value)
            if asset not in assets:
                raise DanglingReference(asset, f"script {name}")
            steps.append(ScanStep(asset))
        elif key == "hold":
            steps.append(Hold(float(value)))
        elif key == "wait":
            steps.append(Wait(float(value)))
        else:
            raise ParseError(f"script {name}: unknown step kind {key!r}")
    return tuple(steps)


def _parse_rules(rules_doc, locations) -> list[RemedialRule]:
    rules = []
    for rdoc in rules_doc:
        rname = str(_require(rdoc, "name", "rule"))
        when = rdoc.get("when") or {}
        trigger = RuleTrigger(
            code=str(when.get("code", "*")),
            severity=str(when.get("severity", "any")),
            platform=str(when.get("platform", "any")),
        )
        if trigger.severity not in ("any", "Fault", "Warning"):
            raise ParseError(f"rule {rname}: bad severity {trigger.severity!r}")
        templates = []
        for tdoc in _require(rdoc, "plan", f"rule {rname}"):
            verb = VERB_BY_NAME.get(str(_require(tdoc, "verb", f"rule {rname} task")))
            if verb is None:
                raise ParseError(f"rule {rname}: unknown verb {tdoc.get('verb')!r}")
            requires = tdoc.get("requires")
            capability = None
            if requires is not None:
                capability = CAPABILITY_BY_NAME.get(str(requires))
                if capability is None:
                    raise ParseError(f"rule {rname}: unknown capability {requires!r}")
            params = {str(k): str(v) for k, v in (tdoc.get("params") or {}).items()}
            for value in params.values():
                if value.startswith("$") and value not in ("$faulted.id", "$faulted.position"):
                    if value[1:] not in locations:
                        raise DanglingReference(value[1:], f"rule {rname} params")
            templates.append(TaskTemplate(verb, capability, params))
        rules.append(RemedialRule(rname, trigger, tuple(templates)))

    if not any(
        r.trigger.code == "*" and r.trigger.severity == "any" and r.trigger.platform == "any"
        for r in rules
    ):
        rules.append(CATCH_ALL_RULE)
    return rules
