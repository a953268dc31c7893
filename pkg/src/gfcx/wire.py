"""Binary framing and the message codec used on every wire surface.

Frame layout, big-endian::

    offset  size  field
    0       4     magic, b"GFCX"
    4       1     version (currently 1)
    5       1     msg_type
    6       4     payload length (the payload itself is capped at 65535)
    10      -     payload

Frames with an unknown version are rejected before the payload is looked
at. Payload grammar: codes and short strings are u8-length-prefixed UTF-8,
byte blobs are u32-length-prefixed, request/room/challenge ids are raw
16 bytes, endpoint addresses raw 8 bytes, and optional fields start with a
one-byte presence flag. decode_frame(encode_frame(m)) == m for every valid
message, and decoding arbitrary bytes only ever raises WireError.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Callable, Union

from .codes import CodeError, validate_code
from .profiles import PhoneNumber

MAGIC = b"GFCX"
VERSION = 1
HEADER = struct.Struct("!4sBBI")
HEADER_LEN = HEADER.size
MAX_PAYLOAD = 65535

# msg_type assignments: 0x0X/0x1X peer exchange, 0x2X registry,
# 0x40..0x5F node local API.
REQUEST = 0x01
RESPONSE = 0x02
DENY = 0x03
ACK = 0x04
ROOM_OPEN = 0x10
ROOM_JOIN = 0x11
ROOM_CARD = 0x12
REG_BEGIN = 0x20
REG_CHALLENGE = 0x21
REG_COMPLETE = 0x22
REG_OK = 0x23
RESOLVE = 0x24
RESOLVE_OK = 0x25
REG_ERROR = 0x2F
API_MIN = 0x40
API_MAX = 0x5D
API_OK = 0x5E
API_ERROR = 0x5F

DENY_REFUSED = 0x01
DENY_UNKNOWN_CODE = 0x02
DENY_BUSY = 0x03

DENY_REASON_NAMES = {
    DENY_REFUSED: "refused",
    DENY_UNKNOWN_CODE: "unknown-code",
    DENY_BUSY: "busy",
}


class WireError(ValueError):
    """A byte sequence is not a well-formed frame or message."""


class BadMagic(WireError):
    pass


class UnsupportedVersion(WireError):
    pass


class Truncated(WireError):
    pass


class UnknownMsgType(WireError):
    pass


class PayloadTooLarge(WireError):
    pass


class MalformedPayload(WireError):
    pass


@dataclass(frozen=True)
class Request:
    request_id: bytes
    target_code: str
    requester_code: str | None = None


@dataclass(frozen=True)
class Response:
    request_id: bytes
    gfc_bytes: bytes


@dataclass(frozen=True)
class Deny:
    request_id: bytes
    reason: int


@dataclass(frozen=True)
class Ack:
    request_id: bytes


@dataclass(frozen=True)
class RoomOpen:
    room_id: bytes
    host_code: str


@dataclass(frozen=True)
class RoomJoin:
    room_id: bytes
    member_endpoint: bytes


@dataclass(frozen=True)
class RoomCard:
    room_id: bytes
    seq: int
    gfc_bytes: bytes


@dataclass(frozen=True)
class RegBegin:
    code: str
    phone: str
    endpoint: bytes


@dataclass(frozen=True)
class RegChallenge:
    challenge_id: bytes
    expires_at: int
    attempts_left: int


@dataclass(frozen=True)
class RegComplete:
    challenge_id: bytes
    otp: str


@dataclass(frozen=True)
class RegOk:
    code: str
    verified_at: int


@dataclass(frozen=True)
class Resolve:
    code: str


@dataclass(frozen=True)
class ResolveOk:
    code: str
    endpoint: bytes
    phone_hint: str


@dataclass(frozen=True)
class RegError:
    err_code: int
    detail: str


@dataclass(frozen=True)
class ApiCall:
    msg_type: int
    doc: str


@dataclass(frozen=True)
class ApiOk:
    doc: str


@dataclass(frozen=True)
class ApiErr:
    code: str
    detail: str


Message = Union[
    Request, Response, Deny, Ack,
    RoomOpen, RoomJoin, RoomCard,
    RegBegin, RegChallenge, RegComplete, RegOk, Resolve, ResolveOk, RegError,
    ApiCall, ApiOk, ApiErr,
]


class _Writer:
    def __init__(self) -> None:
        self.parts: list[bytes] = []

    def u8(self, value: int) -> None:
        if not 0 <= value <= 0xFF:
            raise MalformedPayload(f"u8 out of range: {value}")
        self.parts.append(bytes([value]))

    def u32(self, value: int) -> None:
        if not 0 <= value <= 0xFFFFFFFF:
            raise MalformedPayload(f"u32 out of range: {value}")
        self.parts.append(struct.pack("!I", value))

    def u64(self, value: int) -> None:
        if not 0 <= value <= 0xFFFFFFFFFFFFFFFF:
            raise MalformedPayload(f"u64 out of range: {value}")
        self.parts.append(struct.pack("!Q", value))

    def raw(self, value: bytes, size: int) -> None:
        if len(value) != size:
            raise MalformedPayload(f"expected exactly {size} bytes, got {len(value)}")
        self.parts.append(value)

    def code(self, text: str) -> None:
        try:
            validate_code(text)
        except CodeError as exc:
            raise MalformedPayload(f"invalid code on the wire: {exc}") from exc
        encoded = text.encode("ascii")
        self.u8(len(encoded))
        self.parts.append(encoded)

    def opt_code(self, text: str | None) -> None:
        if text is None:
            self.u8(0)
        else:
            self.u8(1)
            self.code(text)

    def short_str(self, value: str) -> None:
        encoded = value.encode("utf-8")
        if len(encoded) > 0xFF:
            raise MalformedPayload("short string exceeds 255 bytes")
        self.u8(len(encoded))
        self.parts.append(encoded)

    def blob(self, value: bytes) -> None:
        self.u32(len(value))
        self.parts.append(value)

    def tail_str(self, value: str) -> None:
        self.parts.append(value.encode("utf-8"))

    def payload(self) -> bytes:
        return b"".join(self.parts)


class _Reader:
    def __init__(self, data: bytes) -> None:
        self.data = data
        self.pos = 0

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise Truncated(f"payload ended {self.pos + size - len(self.data)} bytes early")
        chunk = self.data[self.pos : self.pos + size]
        self.pos += size
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack("!I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("!Q", self.take(8))[0]

    def code(self) -> str:
        raw = self.take(self.u8())
        try:
            text = raw.decode("ascii")
            validate_code(text)
        except (UnicodeDecodeError, CodeError) as exc:
            raise MalformedPayload(f"invalid code on the wire: {exc}") from exc
        return text

    def opt_code(self) -> str | None:
        flag = self.u8()
        if flag == 0:
            return None
        if flag == 1:
            return self.code()
        raise MalformedPayload(f"presence flag must be 0 or 1, got {flag}")

    def short_str(self) -> str:
        raw = self.take(self.u8())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedPayload("short string is not UTF-8") from exc

    def blob(self) -> bytes:
        return self.take(self.u32())

    def tail_str(self) -> str:
        raw = self.data[self.pos :]
        self.pos = len(self.data)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise MalformedPayload("detail text is not UTF-8") from exc

    def done(self) -> None:
        if self.pos != len(self.data):
            raise MalformedPayload(f"{len(self.data) - self.pos} trailing payload bytes")


def _sanitize_line(text: str) -> str:
    return text.replace("|", "/").replace("\n", " ").replace("\r", " ")


def _encode_payload(msg: Message) -> tuple[int, bytes]:
    w = _Writer()
    if isinstance(msg, Request):
        w.raw(msg.request_id, 16)
        w.code(msg.target_code)
        w.opt_code(msg.requester_code)
        return REQUEST, w.payload()
    if isinstance(msg, Response):
        w.raw(msg.request_id, 16)
        w.blob(msg.gfc_bytes)
        return RESPONSE, w.payload()
    if isinstance(msg, Deny):
        w.raw(msg.request_id, 16)
        w.u8(msg.reason)
        return DENY, w.payload()
    if isinstance(msg, Ack):
        w.raw(msg.request_id, 16)
        return ACK, w.payload()
    if isinstance(msg, RoomOpen):
        w.raw(msg.room_id, 16)
        w.code(msg.host_code)
        return ROOM_OPEN, w.payload()
    if isinstance(msg, RoomJoin):
        w.raw(msg.room_id, 16)
        w.raw(msg.member_endpoint, 8)
        return ROOM_JOIN, w.payload()
    if isinstance(msg, RoomCard):
        w.raw(msg.room_id, 16)
        w.u32(msg.seq)
        w.blob(msg.gfc_bytes)
        return ROOM_CARD, w.payload()
    if isinstance(msg, RegBegin):
        _check_phone(msg.phone)
        w.code(msg.code)
        w.short_str(msg.phone)
        w.raw(msg.endpoint, 8)
        return REG_BEGIN, w.payload()
    if isinstance(msg, RegChallenge):
        w.raw(msg.challenge_id, 16)
        w.u64(msg.expires_at)
        w.u8(msg.attempts_left)
        return REG_CHALLENGE, w.payload()
    if isinstance(msg, RegComplete):
        w.raw(msg.challenge_id, 16)
        w.short_str(msg.otp)
        return REG_COMPLETE, w.payload()
    if isinstance(msg, RegOk):
        w.code(msg.code)
        w.u64(msg.verified_at)
        return REG_OK, w.payload()
    if isinstance(msg, Resolve):
        w.code(msg.code)
        return RESOLVE, w.payload()
    if isinstance(msg, ResolveOk):
        w.code(msg.code)
        w.raw(msg.endpoint, 8)
        w.short_str(msg.phone_hint)
        return RESOLVE_OK, w.payload()
    if isinstance(msg, RegError):
        w.u8(msg.err_code)
        w.tail_str(msg.detail)
        return REG_ERROR, w.payload()
    if isinstance(msg, ApiCall):
        if not API_MIN <= msg.msg_type <= API_MAX:
            raise MalformedPayload(f"api msg_type out of range: {msg.msg_type:#x}")
        w.tail_str(msg.doc)
        return msg.msg_type, w.payload()
    if isinstance(msg, ApiOk):
        w.tail_str(msg.doc)
        return API_OK, w.payload()
    if isinstance(msg, ApiErr):
        w.tail_str(f"ERROR|{_sanitize_line(msg.code)}|{_sanitize_line(msg.detail)}")
        return API_ERROR, w.payload()
    raise MalformedPayload(f"cannot encode {type(msg).__name__}")


def _check_phone(text: str) -> None:
    try:
        PhoneNumber(text)
    except ValueError as exc:
        raise MalformedPayload(f"invalid phone number on the wire: {exc}") from exc


def _decode_request(r: _Reader) -> Request:
    return Request(r.take(16), r.code(), r.opt_code())


def _decode_response(r: _Reader) -> Response:
    return Response(r.take(16), r.blob())


def _decode_deny(r: _Reader) -> Deny:
    return Deny(r.take(16), r.u8())


def _decode_ack(r: _Reader) -> Ack:
    return Ack(r.take(16))


def _decode_room_open(r: _Reader) -> RoomOpen:
    return RoomOpen(r.take(16), r.code())


def _decode_room_join(r: _Reader) -> RoomJoin:
    return RoomJoin(r.take(16), r.take(8))


def _decode_room_card(r: _Reader) -> RoomCard:
    return RoomCard(r.take(16), r.u32(), r.blob())


def _decode_reg_begin(r: _Reader) -> RegBegin:
    code = r.code()
    phone = r.short_str()
    _check_phone(phone)
    return RegBegin(code, phone, r.take(8))


def _decode_reg_challenge(r: _Reader) -> RegChallenge:
    return RegChallenge(r.take(16), r.u64(), r.u8())


def _decode_reg_complete(r: _Reader) -> RegComplete:
    return RegComplete(r.take(16), r.short_str())


def _decode_reg_ok(r: _Reader) -> RegOk:
    return RegOk(r.code(), r.u64())


def _decode_resolve(r: _Reader) -> Resolve:
    return Resolve(r.code())


def _decode_resolve_ok(r: _Reader) -> ResolveOk:
    return ResolveOk(r.code(), r.take(8), r.short_str())


def _decode_reg_error(r: _Reader) -> RegError:
    return RegError(r.u8(), r.tail_str())


def _decode_api_err(r: _Reader) -> ApiErr:
    parts = r.tail_str().split("|", 2)
    if len(parts) != 3 or parts[0] != "ERROR":
        raise MalformedPayload("api error payloads are ERROR|<code>|<detail>")
    return ApiErr(parts[1], parts[2])


_DECODERS: dict[int, Callable[[_Reader], Message]] = {
    REQUEST: _decode_request,
    RESPONSE: _decode_response,
    DENY: _decode_deny,
    ACK: _decode_ack,
    ROOM_OPEN: _decode_room_open,
    ROOM_JOIN: _decode_room_join,
    ROOM_CARD: _decode_room_card,
    REG_BEGIN: _decode_reg_begin,
    REG_CHALLENGE: _decode_reg_challenge,
    REG_COMPLETE: _decode_reg_complete,
    REG_OK: _decode_reg_ok,
    RESOLVE: _decode_resolve,
    RESOLVE_OK: _decode_resolve_ok,
    REG_ERROR: _decode_reg_error,
    API_ERROR: _decode_api_err,
}


def encode_frame(msg: Message) -> bytes:
    msg_type, payload = _encode_payload(msg)
    if len(payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    return HEADER.pack(MAGIC, VERSION, msg_type, len(payload)) + payload


def decode_frame(data: bytes) -> Message:
    if len(data) < HEADER_LEN:
        raise Truncated(f"frame header needs {HEADER_LEN} bytes, got {len(data)}")
    magic, version, msg_type, payload_len = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise BadMagic(f"bad frame magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersion(f"cannot read frame version {version}")
    if payload_len > MAX_PAYLOAD:
        raise PayloadTooLarge(f"declared payload of {payload_len} bytes exceeds {MAX_PAYLOAD}")
    if len(data) < HEADER_LEN + payload_len:
        raise Truncated("frame shorter than declared payload length")
    if len(data) > HEADER_LEN + payload_len:
        raise MalformedPayload("bytes after the end of the frame")
    return decode_payload(msg_type, data[HEADER_LEN:])


def decode_payload(msg_type: int, payload: bytes) -> Message:
    reader = _Reader(payload)
    if API_MIN <= msg_type <= API_MAX:
        msg: Message = ApiCall(msg_type, reader.tail_str())
    elif msg_type == API_OK:
        msg = ApiOk(reader.tail_str())
    else:
        decoder = _DECODERS.get(msg_type)
        if decoder is None:
            raise UnknownMsgType(f"unknown msg_type {msg_type:#04x}")
        msg = decoder(reader)
    reader.done()
    return msg
