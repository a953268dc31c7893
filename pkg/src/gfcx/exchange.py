"""Exchange sessions and room broadcast state.

The requesting side is a small retry machine: one initial send plus two
retries at two second intervals, then the attempt times out. A RESPONSE or
DENY is terminal, and terminal states absorb every later event, so a late
reply after a timeout changes nothing. The responding side is stateless
apart from the idempotency cache: a duplicate request id seen inside the
60 second window gets the byte-identical prior reply without the policy
being consulted again.
"""

from __future__ import annotations

import enum
import threading
from dataclasses import dataclass, field

from .codes import GcCode
from .netsim import Endpoint
from .transport import TransportClass

RETRY_INTERVAL_MS = 2000.0
MAX_RETRIES = 2
IDEMPOTENCY_WINDOW_MS = 60_000.0


class SessionState(enum.Enum):
    SENT = "sent"
    COMPLETED = "completed"
    DENIED = "denied"
    TIMED_OUT = "timed_out"


TERMINAL_STATES = frozenset(
    {SessionState.COMPLETED, SessionState.DENIED, SessionState.TIMED_OUT}
)


@dataclass
class ExchangeSession:
    """One outbound exchange attempt, driven by replies and timer events."""

    request_id: bytes
    target_code: GcCode
    requester_code: GcCode | None
    transport: TransportClass
    started_at_ms: float
    peer_endpoint: Endpoint | None = None
    state: SessionState = SessionState.SENT
    retries_used: int = 0
    next_timer_ms: float | None = None
    gfc_bytes: bytes | None = None
    deny_reason: int | None = None
    saved_entry_id: str | None = None
    done: threading.Event = field(default_factory=threading.Event)

    def __post_init__(self) -> None:
        if self.next_timer_ms is None:
            self.next_timer_ms = self.started_at_ms + RETRY_INTERVAL_MS

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL_STATES

    def on_response(self, gfc_bytes: bytes) -> bool:
        """Returns True when the event took effect (i.e. not already terminal)."""
        if self.terminal:
            return False
        self.gfc_bytes = gfc_bytes
        self.state = SessionState.COMPLETED
        self.done.set()
        return True

    def on_deny(self, reason: int) -> bool:
        if self.terminal:
            return False
        self.deny_reason = reason
        self.state = SessionState.DENIED
        self.done.set()
        return True

    def on_timer(self, now_ms: float) -> bool:
        """Returns True when the caller should retransmit.

        Once the retry budget is spent, the session flips to TIMED_OUT
        instead, making the total send count 1 + MAX_RETRIES.
        """
        if self.terminal or self.next_timer_ms is None or now_ms < self.next_timer_ms:
            return False
        if self.retries_used < MAX_RETRIES:
            self.retries_used += 1
            self.next_timer_ms = now_ms + RETRY_INTERVAL_MS
            return True
        self.state = SessionState.TIMED_OUT
        self.next_timer_ms = None
        self.done.set()
        return False


@dataclass
class _CacheSlot:
    reply_bytes: bytes | None  # None while an ask-first decision is pending
    cached_at_ms: float


class ReplyCache:
    """Idempotency cache keyed by request id, bounded by a time window."""

    def __init__(self, window_ms: float = IDEMPOTENCY_WINDOW_MS) -> None:
        self.window_ms = window_ms
        self._slots: dict[bytes, _CacheSlot] = {}

    def lookup(self, request_id: bytes, now_ms: float) -> tuple[bool, bytes | None]:
        """(known, reply). known with a None reply means a decision is pending."""
        slot = self._slots.get(request_id)
        if slot is None:
            return False, None
        if now_ms - slot.cached_at_ms > self.window_ms:
            del self._slots[request_id]
            return False, None
        return True, slot.reply_bytes

    def put_pending(self, request_id: bytes, now_ms: float) -> None:
        self._slots[request_id] = _CacheSlot(None, now_ms)

    def put(self, request_id: bytes, reply_bytes: bytes, now_ms: float) -> None:
        self._slots[request_id] = _CacheSlot(reply_bytes, now_ms)

    def forget(self, request_id: bytes) -> None:
        self._slots.pop(request_id, None)


class RoomError(Exception):
    pass


class UnknownRoom(RoomError):
    pass


class RoomClosed(RoomError):
    pass


@dataclass
class RoomHostState:
    """Host-side view of one broadcast room: member list in join order."""

    room_id: bytes
    host_code: GcCode
    opened_at_ms: float
    members: list[Endpoint] = field(default_factory=list)
    member_ids: set[bytes] = field(default_factory=set)
    next_seq: int = 1
    open: bool = True

    def admit(self, member: Endpoint) -> bool:
        """Add a member; returns False for duplicates. Raises when closed."""
        if not self.open:
            raise RoomClosed(f"room {self.room_id.hex()} is closed")
        if member.id in self.member_ids:
            return False
        self.member_ids.add(member.id)
        self.members.append(member)
        return True


@dataclass(frozen=True)
class BroadcastReport:
    """Per-member delivery outcome of one room broadcast."""

    room_id: bytes
    seq: int
    delivered: tuple[Endpoint, ...]
    lost: tuple[Endpoint, ...]

    @property
    def delivered_count(self) -> int:
        return len(self.delivered)

    @property
    def total(self) -> int:
        return len(self.delivered) + len(self.lost)
