"""The twin's authoritative world model.

All mutation goes through apply(): ingest computes effect values, one writer
applies them in a total order, and replaying the same effect list from the
initial state reproduces the final snapshot byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from .arena import Arena, Point
from .engine import FaultEvent
from .protocol import ActivityState, Frame, encode_frame


@dataclass(frozen=True)
class RobotState:
    platform_id: str
    position: Point
    heading: float
    battery: int
    state: ActivityState
    mission: str | None = None
    arm_angles: tuple[tuple[str, float], ...] = ()
    last_update: float = 0.0


@dataclass(frozen=True)
class AssetState:
    id: str
    kind: str
    position: Point
    last_scan_severity: float | None = None
    scanned_by: str | None = None
    scanned_at: float | None = None


@dataclass(frozen=True)
class ItemState:
    """An item is on the ground at a position XOR carried by one robot."""

    id: str
    kind: str
    position: Point | None
    carried_by: str | None = None

    def __post_init__(self):
        if (self.position is None) == (self.carried_by is None):
            raise ValueError(f"item {self.id}: position xor carrier required")


@dataclass(frozen=True)
class LogEntry:
    time: float
    direction: str  # "rx" | "tx"
    platform_id: str
    frame: Frame

    def wire_text(self) -> str:
        return encode_frame(self.frame)[:-1].decode("ascii")


# --- effects ---


@dataclass(frozen=True)
class LogAppend:
    entry: LogEntry


@dataclass(frozen=True)
class UpdateRobot:
    time: float
    state: RobotState


@dataclass(frozen=True)
class UpdateArm:
    time: float
    platform_id: str
    angles: tuple[tuple[str, float], ...]


@dataclass(frozen=True)
class RecordScan:
    time: float
    asset_id: str
    severity: float
    platform_id: str


@dataclass(frozen=True)
class RaiseFault:
    event: FaultEvent


@dataclass(frozen=True)
class MissionDone:
    time: float
    platform_id: str
    trigger: str


@dataclass(frozen=True)
class ItemPicked:
    time: float
    item_id: str
    platform_id: str


@dataclass(frozen=True)
class ItemPlaced:
    time: float
    item_id: str
    position: Point


@dataclass(frozen=True)
class Quarantine:
    time: float
    source: str
    reason: str
    wire: str


@dataclass(frozen=True)
class ClockTick:
    time: float


Effect = (
    LogAppend
    | UpdateRobot
    | UpdateArm
    | RecordScan
    | RaiseFault
    | MissionDone
    | ItemPicked
    | ItemPlaced
    | Quarantine
    | ClockTick
)


class WorldModel:
    def __init__(self, arena: Arena, robot_ids: list[str], homes: dict[str, Point]):
        self.arena = arena
        self.sim_time = 0.0
        self.robots: dict[str, RobotState] = {
            pid: RobotState(pid, homes[pid], 0.0, 100, ActivityState.IDLE)
            for pid in sorted(robot_ids)
        }
        self.assets: dict[str, AssetState] = {
            aid: AssetState(a.id, a.kind, a.position) for aid, a in sorted(arena.assets.items())
        }
        self.items: dict[str, ItemState] = {
            iid: ItemState(i.id, i.kind, i.position) for iid, i in sorted(arena.items.items())
        }
        self.message_log: list[LogEntry] = []
        self.fault_events: list[FaultEvent] = []
        self.missions_done: list[tuple[float, str, str]] = []
        self.quarantined: list[Quarantine] = []

    def apply(self, effect: Effect) -> None:
        if isinstance(effect, LogAppend):
            self.message_log.append(effect.entry)
            self.sim_time = max(self.sim_time, effect.entry.time)
        elif isinstance(effect, UpdateRobot):
            prior = self.robots[effect.state.platform_id]
            self.robots[effect.state.platform_id] = replace(
                effect.state, arm_angles=prior.arm_angles
            )
            self.sim_time = max(self.sim_time, effect.time)
        elif isinstance(effect, UpdateArm):
            prior = self.robots[effect.platform_id]
            self.robots[effect.platform_id] = replace(prior, arm_angles=effect.angles)
        elif isinstance(effect, RecordScan):
            prior = self.assets[effect.asset_id]
            self.assets[effect.asset_id] = replace(
                prior,
                last_scan_severity=effect.severity,
                scanned_by=effect.platform_id,
                scanned_at=effect.time,
            )
        elif isinstance(effect, RaiseFault):
            self.fault_events.append(effect.event)
        elif isinstance(effect, MissionDone):
            self.missions_done.append((effect.time, effect.platform_id, effect.trigger))
        elif isinstance(effect, ItemPicked):
            prior = self.items[effect.item_id]
            self.items[effect.item_id] = replace(
                prior, position=None, carried_by=effect.platform_id
            )
        elif isinstance(effect, ItemPlaced):
            prior = self.items[effect.item_id]
            self.items[effect.item_id] = replace(
                prior, position=effect.position, carried_by=None
            )
        elif isinstance(effect, Quarantine):
            self.quarantined.append(effect)
        elif isinstance(effect, ClockTick):
            self.sim_time = max(self.sim_time, effect.time)
        else:
            raise TypeError(f"unknown effect: {effect!r}")

    def snapshot(self) -> dict:
        """Plain-dict copy with sorted keys; json-stable for byte comparison."""
        return {
            "sim_time": round(self.sim_time, 3),
            "robots": {
                pid: {
                    "position": [r.position[0], r.position[1]],
                    "heading": r.heading,
                    "battery": r.battery,
                    "state": r.state.value,
                    "mission": r.mission,
                    "arm_angles": {k: v for k, v in r.arm_angles},
                    "last_update": round(r.last_update, 3),
                }
                for pid, r in sorted(self.robots.items())
            },
            "assets": {
                aid: {
                    "kind": a.kind,
                    "position": [a.position[0], a.position[1]],
                    "last_scan_severity": a.last_scan_severity,
                    "scanned_by": a.scanned_by,
                }
                for aid, a in sorted(self.assets.items())
            },
            "items": {
                iid: {
                    "kind": i.kind,
                    "position": None if i.position is None else [i.position[0], i.position[1]],
                    "carried_by": i.carried_by,
                }
                for iid, i in sorted(self.items.items())
            },
            "log_length": len(self.message_log),
            "faults": len(self.fault_events),
        }

    def snapshot_bytes(self) -> bytes:
        return json.dumps(self.snapshot(), sort_keys=True, separators=(",", ":")).encode()
