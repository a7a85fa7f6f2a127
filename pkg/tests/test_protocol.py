"""Codec tests: canonical vectors, grammar edges, round-trip and fuzz properties."""

import pytest
from hypothesis import given, strategies as st

from fleettwin.protocol import (
    AckFrame,
    ActivityState,
    CommandFrame,
    CommandVerb,
    DoneFrame,
    FaultFrame,
    FaultRegistry,
    InvalidField,
    MalformedFrame,
    OversizeFrame,
    ProtocolError,
    ScanFrame,
    Severity,
    StatusFrame,
    TextFrame,
    TriggerFrame,
    UnknownKind,
    WarningFrame,
    decode_frame,
    encode_frame,
    registry_lookup,
)

LINE_CHECKS = [
    (TriggerFrame("A"), b"A\n"),
    (TriggerFrame("Z"), b"Z\n"),
    (FaultFrame("husky", "LWMF", "left wheel motor"), b"FLT|husky|LWMF|left wheel motor\n"),
    (FaultFrame("husky", "BATF", "arm reposition"), b"FLT|husky|BATF|arm reposition\n"),
    (WarningFrame("tello", "LOWB", "battery at 9%"), b"WRN|tello|LOWB|battery at 9%\n"),
    (TextFrame("spot", ""), b"MSG|spot|\n"),
    (TextFrame("spot", "battery replaced"), b"MSG|spot|battery replaced\n"),
    (CommandFrame(CommandVerb.GOTO, ("5,1",)), b"CMD|GOTO|5,1\n"),
    (CommandFrame(CommandVerb.ARM, ("right_shoulder=45",)), b"CMD|ARM|right_shoulder=45\n"),
    (CommandFrame(CommandVerb.STOP), b"CMD|STOP\n"),
    (CommandFrame(CommandVerb.RESUME), b"CMD|RESUME\n"),
    (CommandFrame(CommandVerb.SCOUT, ("5.5,1",)), b"CMD|SCOUT|5.5,1\n"),
    (CommandFrame(CommandVerb.PICK, ("battery_box", "2,3")), b"CMD|PICK|battery_box|2,3\n"),
    (CommandFrame(CommandVerb.PLACE, ("battery_box", "5,1")), b"CMD|PLACE|battery_box|5,1\n"),
    (
        StatusFrame("tello", 2.0, 3.5, 0.0, 87, ActivityState.MOVING, "A"),
        b"STAT|tello|2.0,3.5,0.0|87|Moving|A\n",
    ),
    (
        StatusFrame("spot", 1.0, 3.0, 0.0, 95, ActivityState.IDLE),
        b"STAT|spot|1.0,3.0,0.0|95|Idle\n",
    ),
    (DoneFrame("tello", "A"), b"DONE|tello|A\n"),
    (ScanFrame("husky", "metal_sheet", 0.8), b"SCAN|husky|metal_sheet|0.8\n"),
    (AckFrame("spot", "PICK battery_box"), b"ACK|spot|PICK battery_box\n"),
]


def test_encode_vectors():
    for frame, data in LINE_CHECKS:
        assert encode_frame(frame) == data


def test_decode_vectors():
    for frame, data in LINE_CHECKS:
        assert decode_frame(data) == frame


def test_all_trigger_chars_decode():
    for n in range(26):
        char = chr(ord("A") + n)
        assert decode_frame(f"{char}\n".encode()) == TriggerFrame(char)


def test_no_other_two_byte_line_is_a_trigger():
    for byte in range(256):
        line = bytes([byte, ord("\n")])
        if ord("A") <= byte <= ord("Z"):
            continue
        with pytest.raises(ProtocolError):
            decode_frame(line)


@pytest.mark.parametrize(
    "line,error",
    [
        (b"FLT|husky\n", MalformedFrame),  # too few fields
        (b"FLT|husky|BATF|a|b\n", MalformedFrame),
        (b"XYZW|husky|BATF|x\n", UnknownKind),
        (b"stat|tello|1,1,0|50|Idle\n", UnknownKind),
        (b"STAT|tello|1,1|50|Idle\n", MalformedFrame),  # 2-component pose
        (b"STAT|tello|1,1,0|101|Idle\n", MalformedFrame),
        (b"STAT|tello|1,1,0|-5|Idle\n", MalformedFrame),
        (b"STAT|tello|1,1,0|50|Cruising\n", MalformedFrame),
        (b"STAT|tello|1,1,0|50|Idle|AA\n", MalformedFrame),
        (b"STAT|tello|1.2345,1,0|50|Idle\n", MalformedFrame),  # 4 fraction digits
        (b"SCAN|husky|metal_sheet|1.5\n", MalformedFrame),
        (b"FLT|husky|bat|x\n", MalformedFrame),  # lowercase code
        (b"FLT|husky|BATTERY|x\n", MalformedFrame),  # 7-char code
        (b"CMD|LAUNCH\n", MalformedFrame),
        (b"CMD|GOTO|5\n", MalformedFrame),
        (b"CMD|GOTO|5,1|extra\n", MalformedFrame),
        (b"CMD|STOP|now\n", MalformedFrame),
        (b"CMD|ARM|=45\n", MalformedFrame),
        (b"DONE|tello|a\n", MalformedFrame),
        (b"A", MalformedFrame),  # missing terminator
        (b"\n", MalformedFrame),
        (b"FLT|husky|BATF|x", MalformedFrame),
        (b"FLT|hu\nsky|BATF|x\n", MalformedFrame),
        ("FLT|h\xfcsky|BATF|x\n", MalformedFrame),  # non-ASCII
        (b"MSG|spot|\x07beep\n", MalformedFrame),  # control byte
        (b"", MalformedFrame),
    ],
)
def test_decode_rejects(line, error):
    with pytest.raises(error):
        decode_frame(line)


def test_encode_rejects_separator_in_text():
    with pytest.raises(InvalidField):
        encode_frame(TextFrame("spot", "a|b"))
    with pytest.raises(InvalidField):
        encode_frame(FaultFrame("husky", "BATF", "line1\nline2"))


def test_encode_allows_commas_in_detail():
    data = encode_frame(FaultFrame("husky", "BATF", "cell 3, bank 1"))
    assert data == b"FLT|husky|BATF|cell 3, bank 1\n"


def test_encode_rejects_bad_trigger():
    for char in ("a", "1", "", "AB", "?"):
        with pytest.raises(InvalidField):
            encode_frame(TriggerFrame(char))


def test_encode_oversize():
    with pytest.raises(OversizeFrame):
        encode_frame(TextFrame("spot", "x" * 300))


def test_decode_oversize_line():
    with pytest.raises(MalformedFrame):
        decode_frame(b"MSG|spot|" + b"x" * 300 + b"\n")


def test_encode_rejects_offgrid_number():
    with pytest.raises(InvalidField):
        encode_frame(StatusFrame("spot", 0.12345, 0.0, 0.0, 50, ActivityState.IDLE))


def test_registry_builtin_and_unknown():
    lwmf = registry_lookup("LWMF")
    assert (lwmf.severity, lwmf.description) == (Severity.FAULT, "left wheel motor fault")
    assert registry_lookup("BATF").severity == Severity.FAULT
    assert registry_lookup("LOWB").severity == Severity.WARNING
    unknown = registry_lookup("ZZZZ")
    assert unknown.severity == Severity.FAULT
    assert unknown.description == "unknown"


def test_registry_extension():
    registry = FaultRegistry()
    from fleettwin.protocol import FaultCode

    registry.register(FaultCode("GPSF", Severity.WARNING, "gps degraded"))
    assert registry.lookup("GPSF").severity == Severity.WARNING
    with pytest.raises(ValueError):
        registry.register(FaultCode("gps", Severity.FAULT, "bad"))


# --- generated-frame strategies ---

ids = st.from_regex(r"[a-z][a-z0-9_]{0,11}", fullmatch=True)
grid = st.integers(-20000, 20000).map(lambda n: n / 1000)
battery = st.integers(0, 100)
trigger_chars = st.sampled_from([chr(ord("A") + n) for n in range(26)])
texts = st.text(
    alphabet=st.characters(min_codepoint=0x20, max_codepoint=0x7E, exclude_characters="|"),
    max_size=60,
)
num_strings = st.from_regex(r"-?[0-9]{1,3}(\.[0-9]{1,3})?", fullmatch=True)
xy_strings = st.tuples(num_strings, num_strings).map(lambda p: f"{p[0]},{p[1]}")
arm_strings = st.lists(
    st.tuples(ids, num_strings).map(lambda p: f"{p[0]}={p[1]}"), min_size=1, max_size=4
).map(",".join)


def command_frames():
    return st.one_of(
        xy_strings.map(lambda xy: CommandFrame(CommandVerb.GOTO, (xy,))),
        xy_strings.map(lambda xy: CommandFrame(CommandVerb.SCOUT, (xy,))),
        arm_strings.map(lambda a: CommandFrame(CommandVerb.ARM, (a,))),
        st.just(CommandFrame(CommandVerb.STOP)),
        st.just(CommandFrame(CommandVerb.RESUME)),
        st.tuples(ids, xy_strings).map(lambda p: CommandFrame(CommandVerb.PICK, p)),
        st.tuples(ids, xy_strings).map(lambda p: CommandFrame(CommandVerb.PLACE, p)),
    )


def frames():
    return st.one_of(
        trigger_chars.map(TriggerFrame),
        command_frames(),
        st.builds(
            StatusFrame,
            platform_id=ids,
            x=grid,
            y=grid,
            heading=grid,
            battery=battery,
            state=st.sampled_from(ActivityState),
            mission=st.none() | trigger_chars,
        ),
        st.builds(FaultFrame, platform_id=ids, code=st.from_regex(r"[A-Z]{4}", fullmatch=True), detail=texts),
        st.builds(WarningFrame, platform_id=ids, code=st.from_regex(r"[A-Z]{4}", fullmatch=True), detail=texts),
        st.builds(TextFrame, platform_id=ids, text=texts),
        st.builds(DoneFrame, platform_id=ids, trigger=trigger_chars),
        st.builds(
            ScanFrame,
            platform_id=ids,
            asset_id=ids,
            severity=st.integers(0, 1000).map(lambda n: n / 1000),
        ),
        st.builds(AckFrame, platform_id=ids, echo=texts),
    )


@given(frames())
def test_roundtrip_identity(frame):
    data = encode_frame(frame)
    assert len(data) <= 256
    assert data.endswith(b"\n")
    assert decode_frame(data) == frame


@given(frames())
def test_encode_deterministic(frame):
    assert encode_frame(frame) == encode_frame(frame)


@given(st.binary(max_size=300))
def test_decode_total_on_arbitrary_bytes(data):
    try:
        decode_frame(data)
    except ProtocolError:
        pass


@given(frames(), st.integers(0, 255), st.integers(0, 300))
def test_decode_total_on_mutated_lines(frame, byte, pos):
    data = bytearray(encode_frame(frame))
    data[pos % len(data)] = byte
    try:
        decode_frame(bytes(data))
    except ProtocolError:
        pass
