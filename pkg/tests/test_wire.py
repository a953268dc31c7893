import random
import struct

import pytest

from gfcx import wire
from testutil import random_message

# Hand-encoded from the payload grammar: 16-byte request id, u8 length
# prefix + code bytes, absent-requester presence flag.
GOLDEN_REQUEST = wire.Request(bytes(16), "Wa10", None)
GOLDEN_FRAME = (
    b"GFCX"  # magic
    + bytes([1])  # version
    + bytes([0x01])  # msg_type REQUEST
    + struct.pack("!I", 22)  # payload length
    + bytes(16)  # request id
    + bytes([0x04])
    + b"Wa10"
    + bytes([0x00])  # requester_code absent
)


def test_golden_request_frame_bytes():
    assert wire.encode_frame(GOLDEN_REQUEST) == GOLDEN_FRAME
    assert wire.decode_frame(GOLDEN_FRAME) == GOLDEN_REQUEST
    assert bytes([0x04]) + b"Wa10" in GOLDEN_FRAME


def test_codec_identity_over_randomized_messages():
    rng = random.Random(2024)
    for _ in range(100_000):
        msg = random_message(rng)
        assert wire.decode_frame(wire.encode_frame(msg)) == msg


def test_decode_never_raises_anything_but_wire_errors():
    rng = random.Random(5150)
    valid = wire.encode_frame(GOLDEN_REQUEST)
    for i in range(20_000):
        if i % 3 == 0:
            data = rng.randbytes(rng.randint(0, 64))
        else:
            mutated = bytearray(valid)
            for _ in range(rng.randint(1, 5)):
                mutated[rng.randrange(len(mutated))] = rng.randrange(256)
            data = bytes(mutated)
        try:
            wire.decode_frame(data)
        except wire.WireError:
            pass


def test_bad_magic():
    with pytest.raises(wire.BadMagic):
        wire.decode_frame(b"GFCY" + GOLDEN_FRAME[4:])


def test_unknown_version_rejected_before_payload_inspection():
    # Garbage payload after a version-2 header: must fail on the version.
    frame = b"GFCX" + bytes([2, 0x01]) + struct.pack("!I", 3) + b"\xff\xff\xff"
    with pytest.raises(wire.UnsupportedVersion):
        wire.decode_frame(frame)


def test_unknown_msg_type():
    frame = b"GFCX" + bytes([1, 0x7A]) + struct.pack("!I", 0)
    with pytest.raises(wire.UnknownMsgType):
        wire.decode_frame(frame)


def test_truncated_header_and_payload():
    with pytest.raises(wire.Truncated):
        wire.decode_frame(GOLDEN_FRAME[:5])
    with pytest.raises(wire.Truncated):
        wire.decode_frame(GOLDEN_FRAME[:-3])


def test_trailing_bytes_rejected():
    with pytest.raises(wire.MalformedPayload):
        wire.decode_frame(GOLDEN_FRAME + b"x")


def test_payload_too_large_both_ways():
    big = wire.Response(bytes(16), b"x" * (wire.MAX_PAYLOAD + 1))
    with pytest.raises(wire.PayloadTooLarge):
        wire.encode_frame(big)
    header = b"GFCX" + bytes([1, 0x02]) + struct.pack("!I", wire.MAX_PAYLOAD + 1)
    with pytest.raises(wire.PayloadTooLarge):
        wire.decode_frame(header + b"x")


def test_invalid_code_on_wire_rejected():
    # A REQUEST whose embedded code is one character long.
    payload = bytes(16) + bytes([0x01]) + b"A" + bytes([0x00])
    frame = b"GFCX" + bytes([1, 0x01]) + struct.pack("!I", len(payload)) + payload
    with pytest.raises(wire.MalformedPayload):
        wire.decode_frame(frame)


def test_bad_presence_flag_rejected():
    payload = bytes(16) + bytes([0x04]) + b"Wa10" + bytes([0x07])
    frame = b"GFCX" + bytes([1, 0x01]) + struct.pack("!I", len(payload)) + payload
    with pytest.raises(wire.MalformedPayload):
        wire.decode_frame(frame)


def test_api_error_doc_shape():
    frame = wire.encode_frame(wire.ApiErr("NotFound", "no such entry"))
    decoded = wire.decode_frame(frame)
    assert decoded == wire.ApiErr("NotFound", "no such entry")


def test_api_error_sanitizes_delimiters():
    frame = wire.encode_frame(wire.ApiErr("Validation", "bad|detail\nwith newline"))
    decoded = wire.decode_frame(frame)
    assert decoded.detail == "bad/detail with newline"
