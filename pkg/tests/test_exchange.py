import itertools

import pytest

from gfcx.codes import GcCode
from gfcx.exchange import (
    IDEMPOTENCY_WINDOW_MS,
    MAX_RETRIES,
    RETRY_INTERVAL_MS,
    ExchangeSession,
    ReplyCache,
    RoomClosed,
    RoomHostState,
    SessionState,
)
from gfcx.transport import TransportClass


def make_session():
    return ExchangeSession(
        request_id=bytes(16),
        target_code=GcCode("Wa10"),
        requester_code=None,
        transport=TransportClass.WIDE_AREA,
        started_at_ms=0.0,
    )


EVENTS = ("response", "deny", "timer")


def apply_event(session, event, clock):
    """Feed one event; returns (took_effect, new_clock)."""
    if event == "response":
        return session.on_response(b"doc"), clock
    if event == "deny":
        return session.on_deny(0x01), clock
    clock = session.next_timer_ms if session.next_timer_ms is not None else clock + RETRY_INTERVAL_MS
    session.on_timer(clock)
    return None, clock


def test_terminal_states_absorb_every_event_sequence():
    """Model check: every event sequence up to depth 6 never leaves a
    terminal state once entered."""
    for depth in range(1, 7):
        for sequence in itertools.product(EVENTS, repeat=depth):
            session = make_session()
            clock = 0.0
            for event in sequence:
                before_terminal = session.terminal
                before_state = session.state
                took_effect, clock = apply_event(session, event, clock)
                if before_terminal:
                    assert session.state is before_state
                    if took_effect is not None:
                        assert took_effect is False


def test_timeout_after_exactly_three_transmissions():
    session = make_session()
    transmissions = 1  # the initial send
    clock = 0.0
    while not session.terminal:
        clock = session.next_timer_ms
        if session.on_timer(clock):
            transmissions += 1
    assert session.state is SessionState.TIMED_OUT
    assert transmissions == 1 + MAX_RETRIES == 3
    assert clock == pytest.approx(3 * RETRY_INTERVAL_MS)


def test_timer_before_deadline_is_ignored():
    session = make_session()
    assert session.on_timer(RETRY_INTERVAL_MS - 1) is False
    assert session.retries_used == 0
    assert not session.terminal


def test_response_completes_and_sets_event():
    session = make_session()
    assert session.on_response(b"doc")
    assert session.state is SessionState.COMPLETED
    assert session.gfc_bytes == b"doc"
    assert session.done.is_set()
    # A later deny changes nothing.
    assert session.on_deny(0x01) is False
    assert session.state is SessionState.COMPLETED


def test_deny_records_reason():
    session = make_session()
    assert session.on_deny(0x02)
    assert session.state is SessionState.DENIED
    assert session.deny_reason == 0x02


class TestReplyCache:
    def test_miss_then_hit(self):
        cache = ReplyCache()
        known, reply = cache.lookup(b"r" * 16, 0.0)
        assert not known
        cache.put(b"r" * 16, b"bytes", 0.0)
        known, reply = cache.lookup(b"r" * 16, 1.0)
        assert known and reply == b"bytes"

    def test_window_expiry(self):
        cache = ReplyCache()
        cache.put(b"r" * 16, b"bytes", 0.0)
        known, _ = cache.lookup(b"r" * 16, IDEMPOTENCY_WINDOW_MS)
        assert known
        known, _ = cache.lookup(b"r" * 16, IDEMPOTENCY_WINDOW_MS + 1)
        assert not known

    def test_pending_slot(self):
        cache = ReplyCache()
        cache.put_pending(b"r" * 16, 0.0)
        known, reply = cache.lookup(b"r" * 16, 1.0)
        assert known and reply is None

    def test_forget(self):
        cache = ReplyCache()
        cache.put(b"r" * 16, b"bytes", 0.0)
        cache.forget(b"r" * 16)
        known, _ = cache.lookup(b"r" * 16, 0.0)
        assert not known


class TestRoomHostState:
    def make_room(self):
        from gfcx.netsim import Simulator

        sim = Simulator()
        room = RoomHostState(b"r" * 16, GcCode("Wa10"), 0.0)
        return room, sim

    def test_admit_deduplicates(self):
        room, sim = self.make_room()
        member = sim.add_endpoint()
        assert room.admit(member) is True
        assert room.admit(member) is False
        assert len(room.members) == 1

    def test_closed_room_rejects_admission(self):
        room, sim = self.make_room()
        room.open = False
        with pytest.raises(RoomClosed):
            room.admit(sim.add_endpoint())

    def test_members_keep_join_order(self):
        room, sim = self.make_room()
        members = [sim.add_endpoint() for _ in range(5)]
        for member in members:
            room.admit(member)
        assert room.members == members
