"""Line protocol spoken between the twin and each robot platform.

Every message is one ASCII line of at most 256 bytes ending in '\\n'.
Fields are '|'-separated and the first token selects the frame kind;
mission triggers are the degenerate case of a bare capital letter.
Encoding is canonical: a given frame always produces the same bytes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum

MAX_FRAME_BYTES = 256

_ID_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.-]*\Z", re.ASCII)
_NUM_RE = re.compile(r"-?\d+(\.\d{1,3})?\Z", re.ASCII)
_INT_RE = re.compile(r"\d{1,3}\Z", re.ASCII)
_CODE_RE = re.compile(r"[A-Z]{4}\Z", re.ASCII)
_TEXT_RE = re.compile(r"[\x20-\x7e]*\Z")  # printable ASCII; '|' checked separately


class ProtocolError(Exception):
    """Base class for all wire protocol errors."""


class MalformedFrame(ProtocolError):
    """Line violates the grammar (separators, terminator, field shape)."""


class UnknownKind(ProtocolError):
    """Leading token does not name a known frame kind."""


class OversizeFrame(ProtocolError):
    """Encoded frame would exceed MAX_FRAME_BYTES."""


class InvalidField(ProtocolError):
    """Frame field violates the grammar and cannot be encoded."""


class Severity(Enum):
    FAULT = "Fault"
    WARNING = "Warning"


@dataclass(frozen=True)
class FaultCode:
    code: str
    severity: Severity
    description: str


class FaultRegistry:
    """Maps 4-letter fault mnemonics to severity and description.

    Lookup is total: unregistered codes synthesize a Fault-severity entry
    so that unknown conditions always take the conservative path.
    """

    def __init__(self, extra: dict[str, FaultCode] | None = None):
        self._codes: dict[str, FaultCode] = dict(_BUILTIN_CODES)
        if extra:
            for code, entry in extra.items():
                self.register(entry if entry.code == code else
                              FaultCode(code, entry.severity, entry.description))

    def register(self, entry: FaultCode) -> None:
        if not _CODE_RE.match(entry.code):
            raise ValueError(f"fault code must be 4 uppercase letters: {entry.code!r}")
        self._codes[entry.code] = entry

    def lookup(self, code: str) -> FaultCode:
        known = self._codes.get(code)
        if known is not None:
            return known
        return FaultCode(code, Severity.FAULT, "unknown")

    def known_codes(self) -> list[str]:
        return sorted(self._codes)


_BUILTIN_CODES = {
    "LWMF": FaultCode("LWMF", Severity.FAULT, "left wheel motor fault"),
    "RWMF": FaultCode("RWMF", Severity.FAULT, "right wheel motor fault"),
    "BATF": FaultCode("BATF", Severity.FAULT, "battery fault"),
    "LOWB": FaultCode("LOWB", Severity.WARNING, "low battery"),
    "COMM": FaultCode("COMM", Severity.WARNING, "comms degradation"),
}

DEFAULT_REGISTRY = FaultRegistry()


def registry_lookup(code: str) -> FaultCode:
    return DEFAULT_REGISTRY.lookup(code)


class ActivityState(Enum):
    IDLE = "Idle"
    MOVING = "Moving"
    INSPECTING = "Inspecting"
    MANIPULATING = "Manipulating"
    SAFETY_STOPPED = "SafetyStopped"
    FAULTED = "Faulted"
    CHARGING = "Charging"


_STATE_BY_NAME = {s.value: s for s in ActivityState}


class CommandVerb(Enum):
    GOTO = "GOTO"
    ARM = "ARM"
    STOP = "STOP"
    RESUME = "RESUME"
    SCOUT = "SCOUT"
    PICK = "PICK"
    PLACE = "PLACE"


_VERB_BY_NAME = {v.value: v for v in CommandVerb}


@dataclass(frozen=True)
class TriggerFrame:
    """Single-character mission trigger, twin -> robot (addressed by connection)."""

    char: str
    kind = "Trigger"
    platform_id = None


@dataclass(frozen=True)
class CommandFrame:
    """Imperative command, twin -> robot (addressed by connection)."""

    verb: CommandVerb
    args: tuple[str, ...] = ()
    kind = "Command"
    platform_id = None


@dataclass(frozen=True)
class StatusFrame:
    """Periodic telemetry, robot -> twin."""

    platform_id: str
    x: float
    y: float
    heading: float
    battery: int
    state: ActivityState
    mission: str | None = None
    kind = "Status"


@dataclass(frozen=True)
class FaultFrame:
    platform_id: str
    code: str
    detail: str
    kind = "Fault"


@dataclass(frozen=True)
class WarningFrame:
    platform_id: str
    code: str
    detail: str
    kind = "Warning"


@dataclass(frozen=True)
class TextFrame:
    platform_id: str
    text: str
    kind = "Text"


@dataclass(frozen=True)
class DoneFrame:
    platform_id: str
    trigger: str
    kind = "Done"


@dataclass(frozen=True)
class ScanFrame:
    platform_id: str
    asset_id: str
    severity: float
    kind = "Scan"


@dataclass(frozen=True)
class AckFrame:
    platform_id: str
    echo: str
    kind = "Ack"


Frame = (
    TriggerFrame
    | CommandFrame
    | StatusFrame
    | FaultFrame
    | WarningFrame
    | TextFrame
    | DoneFrame
    | ScanFrame
    | AckFrame
)


def fmt_num(value: float) -> str:
    """Canonical decimal rendering: <= 3 fraction digits, at least one kept.

    Values must already be quantized to the millimetre/milliradian grid;
    frames are built with quantize() so encoding round-trips exactly.
    """
    if value != value or value in (float("inf"), float("-inf")):
        raise InvalidField(f"non-finite number: {value!r}")
    text = f"{value:.3f}"
    while text.endswith("0") and not text.endswith(".0"):
        text = text[:-1]
    return text


def quantize(value: float) -> float:
    """Snap a value onto the wire grid (3 fraction digits)."""
    return round(value + 0.0, 3)


def _parse_num(field: str) -> float:
    if not _NUM_RE.match(field):
        raise MalformedFrame(f"bad number: {field!r}")
    return float(field)


def _check_id(value: str, what: str) -> str:
    if not _ID_RE.match(value):
        raise InvalidField(f"bad {what}: {value!r}")
    return value


def _check_text(value: str, what: str) -> str:
    if "|" in value or "\n" in value or not _TEXT_RE.match(value):
        raise InvalidField(f"bad {what}: {value!r}")
    return value


def _check_trigger_char(char: str) -> str:
    if len(char) != 1 or not "A" <= char <= "Z":
        raise InvalidField(f"trigger must be one of A-Z: {char!r}")
    return char


def _check_num(value: float, what: str) -> str:
    text = fmt_num(value)
    if float(text) != value:
        raise InvalidField(f"{what} not on the 3-decimal wire grid: {value!r}")
    return text


# Per-verb argument shapes: (field count, validator).

def _check_xy(field: str) -> None:
    parts = field.split(",")
    if len(parts) != 2:
        raise MalformedFrame(f"expected x,y: {field!r}")
    for part in parts:
        _parse_num(part)


def _check_arm_args(field: str) -> None:
    if not field:
        raise MalformedFrame("empty ARM setpoints")
    for setpoint in field.split(","):
        joint, eq, angle = setpoint.partition("=")
        if not eq or not _ID_RE.match(joint):
            raise MalformedFrame(f"bad ARM setpoint: {setpoint!r}")
        _parse_num(angle)


def _check_item(field: str) -> None:
    if not _ID_RE.match(field):
        raise MalformedFrame(f"bad item id: {field!r}")


_VERB_ARG_CHECKS: dict[CommandVerb, list] = {
    CommandVerb.GOTO: [_check_xy],
    CommandVerb.ARM: [_check_arm_args],
    CommandVerb.STOP: [],
    CommandVerb.RESUME: [],
    CommandVerb.SCOUT: [_check_xy],
    CommandVerb.PICK: [_check_item, _check_xy],
    CommandVerb.PLACE: [_check_item, _check_xy],
}


def _check_command_args(verb: CommandVerb, args: tuple[str, ...]) -> None:
    checks = _VERB_ARG_CHECKS[verb]
    if len(args) != len(checks):
        raise MalformedFrame(
            f"{verb.value} takes {len(checks)} arg field(s), got {len(args)}"
        )
    for check, arg in zip(checks, args):
        check(arg)


def encode_frame(frame: Frame) -> bytes:
    """Render a frame to its canonical wire line (terminator included)."""
    if isinstance(frame, TriggerFrame):
        line = _check_trigger_char(frame.char)
    elif isinstance(frame, CommandFrame):
        try:
            _check_command_args(frame.verb, tuple(frame.args))
        except MalformedFrame as exc:
            raise InvalidField(str(exc)) from None
        for arg in frame.args:
            _check_text(arg, "command arg")
        line = "|".join(["CMD", frame.verb.value, *frame.args])
    elif isinstance(frame, StatusFrame):
        if not 0 <= frame.battery <= 100 or not isinstance(frame.battery, int):
            raise InvalidField(f"battery out of range: {frame.battery!r}")
        fields = [
            "STAT",
            _check_id(frame.platform_id, "platform id"),
            ",".join(_check_num(v, "pose") for v in (frame.x, frame.y, frame.heading)),
            str(frame.battery),
            frame.state.value,
        ]
        if frame.mission is not None:
            fields.append(_check_trigger_char(frame.mission))
        line = "|".join(fields)
    elif isinstance(frame, (FaultFrame, WarningFrame)):
        tag = "FLT" if isinstance(frame, FaultFrame) else "WRN"
        if not _CODE_RE.match(frame.code):
            raise InvalidField(f"bad fault code: {frame.code!r}")
        line = "|".join([
            tag,
            _check_id(frame.platform_id, "platform id"),
            frame.code,
            _check_text(frame.detail, "detail"),
        ])
    elif isinstance(frame, TextFrame):
        line = "|".join([
            "MSG",
            _check_id(frame.platform_id, "platform id"),
            _check_text(frame.text, "text"),
        ])
    elif isinstance(frame, DoneFrame):
        line = "|".join([
            "DONE",
            _check_id(frame.platform_id, "platform id"),
            _check_trigger_char(frame.trigger),
        ])
    elif isinstance(frame, ScanFrame):
        if not 0.0 <= frame.severity <= 1.0:
            raise InvalidField(f"severity out of range: {frame.severity!r}")
        line = "|".join([
            "SCAN",
            _check_id(frame.platform_id, "platform id"),
            _check_id(frame.asset_id, "asset id"),
            _check_num(frame.severity, "severity"),
        ])
    elif isinstance(frame, AckFrame):
        line = "|".join([
            "ACK",
            _check_id(frame.platform_id, "platform id"),
            _check_text(frame.echo, "echo"),
        ])
    else:
        raise InvalidField(f"not a frame: {frame!r}")

    data = (line + "\n").encode("ascii")
    if len(data) > MAX_FRAME_BYTES:
        raise OversizeFrame(f"{len(data)} bytes exceeds {MAX_FRAME_BYTES}")
    return data


def _split_line(line: bytes | str) -> list[str]:
    if isinstance(line, str):
        line = line.encode("latin-1", errors="replace")
    if len(line) > MAX_FRAME_BYTES:
        raise MalformedFrame(f"line exceeds {MAX_FRAME_BYTES} bytes")
    if not line.endswith(b"\n"):
        raise MalformedFrame("missing newline terminator")
    body = line[:-1]
    if b"\n" in body:
        raise MalformedFrame("embedded newline")
    try:
        text = body.decode("ascii")
    except UnicodeDecodeError:
        raise MalformedFrame("non-ASCII byte") from None
    if not text:
        raise MalformedFrame("empty line")
    if not _TEXT_RE.match(text):
        raise MalformedFrame("non-printable byte")
    return text.split("|")


def decode_frame(line: bytes | str) -> Frame:
    """Parse one wire line into a frame.

    Total over arbitrary byte input: every outcome is either a frame or a
    ProtocolError subclass; nothing else escapes.
    """
    fields = _split_line(line)
    head = fields[0]

    if len(fields) == 1:
        if len(head) == 1 and "A" <= head <= "Z":
            return TriggerFrame(head)
        raise UnknownKind(f"unrecognized token: {head!r}")

    if head == "CMD":
        if len(fields) < 2:
            raise MalformedFrame("CMD without verb")
        verb = _VERB_BY_NAME.get(fields[1])
        if verb is None:
            raise MalformedFrame(f"unknown verb: {fields[1]!r}")
        args = tuple(fields[2:])
        _check_command_args(verb, args)
        return CommandFrame(verb, args)

    if head == "STAT":
        if len(fields) not in (5, 6):
            raise MalformedFrame("STAT needs 4 or 5 payload fields")
        platform = _decode_id(fields[1])
        pose = fields[2].split(",")
        if len(pose) != 3:
            raise MalformedFrame(f"bad pose: {fields[2]!r}")
        x, y, heading = (_parse_num(p) for p in pose)
        if not _INT_RE.match(fields[3]):
            raise MalformedFrame(f"bad battery: {fields[3]!r}")
        battery = int(fields[3])
        if battery > 100:
            raise MalformedFrame(f"battery out of range: {battery}")
        state = _STATE_BY_NAME.get(fields[4])
        if state is None:
            raise MalformedFrame(f"unknown state: {fields[4]!r}")
        mission = None
        if len(fields) == 6:
            mission = fields[5]
            if len(mission) != 1 or not "A" <= mission <= "Z":
                raise MalformedFrame(f"bad mission trigger: {mission!r}")
        return StatusFrame(platform, x, y, heading, battery, state, mission)

    if head in ("FLT", "WRN"):
        if len(fields) != 4:
            raise MalformedFrame(f"{head} needs 3 payload fields")
        platform = _decode_id(fields[1])
        if not _CODE_RE.match(fields[2]):
            raise MalformedFrame(f"bad fault code: {fields[2]!r}")
        cls = FaultFrame if head == "FLT" else WarningFrame
        return cls(platform, fields[2], fields[3])

    if head == "MSG":
        if len(fields) != 3:
            raise MalformedFrame("MSG needs 2 payload fields")
        return TextFrame(_decode_id(fields[1]), fields[2])

    if head == "DONE":
        if len(fields) != 3:
            raise MalformedFrame("DONE needs 2 payload fields")
        trigger = fields[2]
        if len(trigger) != 1 or not "A" <= trigger <= "Z":
            raise MalformedFrame(f"bad trigger: {trigger!r}")
        return DoneFrame(_decode_id(fields[1]), trigger)

    if head == "SCAN":
        if len(fields) != 4:
            raise MalformedFrame("SCAN needs 3 payload fields")
        platform = _decode_id(fields[1])
        asset = _decode_id(fields[2])
        severity = _parse_num(fields[3])
        if not 0.0 <= severity <= 1.0:
            raise MalformedFrame(f"severity out of range: {fields[3]!r}")
        return ScanFrame(platform, asset, severity)

    if head == "ACK":
        if len(fields) != 3:
            raise MalformedFrame("ACK needs 2 payload fields")
        return AckFrame(_decode_id(fields[1]), fields[2])

    raise UnknownKind(f"unrecognized token: {head!r}")


def _decode_id(field: str) -> str:
    if not _ID_RE.match(field):
        raise MalformedFrame(f"bad identifier: {field!r}")
    return field
