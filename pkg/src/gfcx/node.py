"""The per-user node: profile storage, auto-send policy, received contacts.

A node owns one simulated endpoint. Inbound frames drive the responder
(policy decisions, ask-first approvals, room membership); outbound flows
(code registration, exchange requests, room broadcasts) are initiated
through the same methods the local API exposes. Every mutation is written
to plain files under the node directory and fsynced before the call
returns, so a killed node restarts into exactly the state its callers saw.

Layout of a node directory::

    token           bearer token for the local API
    identity        CODE|... / PHONE|... once a code is active
    policy.cfg      R|<rule_id>|<matcher>|<profile_id>|<mode> per rule
    profiles/       one canonical profile document per profile
    contacts.log    append-only receipt log (wire bytes + metadata lines)
"""

from __future__ import annotations

import enum
import os
import secrets
import threading
import uuid
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import TYPE_CHECKING, Iterable

from . import gfcdoc, wire
from .codes import CODE_ALPHABET, GcCode, validate_code
from .exchange import (
    BroadcastReport,
    ExchangeSession,
    ReplyCache,
    RoomClosed,
    RoomHostState,
    SessionState,
    UnknownRoom,
)
from .netsim import Delivery, Endpoint, UnknownEndpoint
from .profiles import (
    ContactCard,
    PhoneNumber,
    Profile,
    ProfileField,
    check_classification,
)
from .registry import REG_ERR_NAMES
from .transport import TransportClass

if TYPE_CHECKING:
    from .world import World

APPROVAL_TIMEOUT_MS = 120_000.0
REGISTRY_RETRY_INTERVAL_MS = 2000.0
REGISTRY_MAX_RETRIES = 2


class NodeError(Exception):
    pass


class NotFoundError(NodeError):
    pass


class ValidationError(NodeError):
    pass


# -- auto-send policy ---------------------------------------------------------


class MatcherKind(enum.Enum):
    ANY = "ANY"
    PREFIX = "PREFIX"
    CODE = "CODE"


@dataclass(frozen=True)
class Matcher:
    kind: MatcherKind
    arg: str | None = None

    def __post_init__(self) -> None:
        if self.kind is MatcherKind.ANY:
            if self.arg is not None:
                raise ValueError("ANY matchers take no argument")
        elif self.kind is MatcherKind.PREFIX:
            if not self.arg or len(self.arg) > 6:
                raise ValueError("PREFIX matchers take 1..6 characters")
            for char in self.arg:
                if char not in CODE_ALPHABET:
                    raise ValueError(f"disallowed character {char!r} in prefix")
        else:
            if self.arg is None:
                raise ValueError("CODE matchers take a code argument")
            validate_code(self.arg)

    def matches(self, requester_code: str | None) -> bool:
        if self.kind is MatcherKind.ANY:
            return True
        if requester_code is None:
            return False
        if self.kind is MatcherKind.PREFIX:
            return requester_code.startswith(self.arg or "")
        return requester_code == self.arg

    @property
    def token(self) -> str:
        return self.kind.value if self.arg is None else f"{self.kind.value}({self.arg})"

    @classmethod
    def from_token(cls, token: str) -> "Matcher":
        if token == "ANY":
            return cls(MatcherKind.ANY)
        for kind in (MatcherKind.PREFIX, MatcherKind.CODE):
            prefix = kind.value + "("
            if token.startswith(prefix) and token.endswith(")"):
                return cls(kind, token[len(prefix) : -1])
        raise ValueError(f"unknown matcher {token!r}")


class RuleMode(enum.Enum):
    AUTO = "AUTO"
    ASK_FIRST = "ASK"


@dataclass(frozen=True)
class PolicyRule:
    rule_id: str
    matcher: Matcher
    profile_id: str | None
    mode: RuleMode


@dataclass(frozen=True)
class AutoSend:
    profile: Profile


@dataclass(frozen=True)
class AskFirst:
    suggested_profile_id: str | None


@dataclass(frozen=True)
class Refuse:
    pass


Decision = AutoSend | AskFirst | Refuse


def select_profile_for(
    rules: Iterable[PolicyRule],
    profiles: dict[str, Profile],
    requester_code: str | None,
) -> Decision:
    """First matching rule decides; an AUTO rule whose profile is gone refuses."""
    for rule in rules:
        if not rule.matcher.matches(requester_code):
            continue
        if rule.mode is RuleMode.ASK_FIRST:
            return AskFirst(rule.profile_id)
        profile = profiles.get(rule.profile_id) if rule.profile_id else None
        if profile is None:
            return Refuse()
        return AutoSend(profile)
    return Refuse()


# -- received contacts --------------------------------------------------------


@dataclass(frozen=True)
class ContactQuery:
    text: str | None = None
    classification: str | None = None
    source_code: str | None = None
    since_ms: int | None = None
    until_ms: int | None = None


@dataclass
class ContactEntry:
    entry_id: str
    seq: int
    card: ContactCard


class ContactStore:
    """Append-only receipt history; classification is the only mutable bit."""

    def __init__(self, log_path: Path | None) -> None:
        self._log_path = log_path
        self._entries: list[ContactEntry] = []
        self._by_id: dict[str, ContactEntry] = {}
        self._log_file = None
        if log_path is not None:
            if log_path.exists():
                self._load(log_path)
            self._log_file = log_path.open("ab")

    def _load(self, log_path: Path) -> None:
        with log_path.open("rb") as handle:
            while True:
                header = handle.readline()
                if not header:
                    break
                parts = header.decode("utf-8").rstrip("\n").split("|")
                if parts[0] == "C" and len(parts) == 7:
                    _, entry_id, code, received, transport, classification, size = parts
                    doc = handle.read(int(size))
                    if handle.read(1) != b"\n":
                        raise ValueError("contacts log is corrupt: missing terminator")
                    card = ContactCard(
                        GcCode(code),
                        gfcdoc.parse_profile(doc),
                        int(received),
                        TransportClass.from_token(transport),
                        classification or None,
                    )
                    self._store(entry_id, card)
                elif parts[0] == "L" and len(parts) == 3:
                    entry = self._by_id[parts[1]]
                    entry.card = replace(entry.card, classification=parts[2])
                else:
                    raise ValueError(f"contacts log is corrupt: {header!r}")

    def _store(self, entry_id: str, card: ContactCard) -> ContactEntry:
        entry = ContactEntry(entry_id, len(self._entries), card)
        self._entries.append(entry)
        self._by_id[entry_id] = entry
        return entry

    def _write(self, text: str, doc: bytes = b"") -> None:
        if self._log_file is None:
            return
        self._log_file.write(text.encode("utf-8") + doc)
        self._log_file.flush()
        os.fsync(self._log_file.fileno())

    def append(self, card: ContactCard) -> ContactEntry:
        entry_id = uuid.uuid4().hex
        doc = gfcdoc.serialize_profile(card.profile_snapshot)
        header = (
            f"C|{entry_id}|{card.source_code.text}|{card.received_at}"
            f"|{card.transport.value}|{card.classification or ''}|{len(doc)}\n"
        )
        self._write(header, doc + b"\n")
        return self._store(entry_id, card)

    def classify(self, entry_id: str, label: str) -> ContactEntry:
        check_classification(label)
        entry = self._by_id.get(entry_id)
        if entry is None:
            raise NotFoundError(f"no contact entry {entry_id!r}")
        entry.card = replace(entry.card, classification=label)
        self._write(f"L|{entry_id}|{label}\n")
        return entry

    def get(self, entry_id: str) -> ContactEntry:
        entry = self._by_id.get(entry_id)
        if entry is None:
            raise NotFoundError(f"no contact entry {entry_id!r}")
        return entry

    def all(self) -> list[ContactEntry]:
        return sorted(self._entries, key=lambda e: (e.card.received_at, e.seq), reverse=True)

    def search(self, query: ContactQuery) -> list[ContactEntry]:
        """Conjunctive filter, newest first; text search is case-insensitive."""
        needle = query.text.casefold() if query.text is not None else None

        def matches(entry: ContactEntry) -> bool:
            card = entry.card
            if query.classification is not None and card.classification != query.classification:
                return False
            if query.source_code is not None and card.source_code.text != query.source_code:
                return False
            if query.since_ms is not None and card.received_at < query.since_ms:
                return False
            if query.until_ms is not None and card.received_at > query.until_ms:
                return False
            if needle is not None:
                haystacks = [card.profile_snapshot.name]
                haystacks.extend(f.value for f in card.profile_snapshot.fields)
                if not any(needle in hay.casefold() for hay in haystacks):
                    return False
            return True

        return [entry for entry in self.all() if matches(entry)]

    def close(self) -> None:
        if self._log_file is not None:
            self._log_file.close()
            self._log_file = None


# -- pending approvals and registration ----------------------------------------


class ApprovalState(enum.Enum):
    WAITING = "waiting"
    APPROVED = "approved"
    REFUSED = "refused"


@dataclass
class PendingApproval:
    request_id: bytes
    requester_code: str | None
    requester_endpoint: Endpoint
    transport: TransportClass
    arrived_at_ms: float
    suggested_profile_id: str | None
    state: ApprovalState = ApprovalState.WAITING
    resolved_profile_id: str | None = None


class RegistrationPhase(enum.Enum):
    BEGIN_SENT = "begin_sent"
    CHALLENGED = "challenged"
    COMPLETE_SENT = "complete_sent"
    ACTIVE = "active"
    FAILED = "failed"


@dataclass
class RegistrationFlow:
    code: GcCode
    phone: PhoneNumber
    phase: RegistrationPhase = RegistrationPhase.BEGIN_SENT
    challenge_id: bytes | None = None
    expires_at: int | None = None
    otp: str | None = None
    fail_code: str | None = None
    detail: str = ""
    retries_used: int = 0
    next_timer_ms: float | None = None
    challenged: threading.Event = field(default_factory=threading.Event)
    done: threading.Event = field(default_factory=threading.Event)

    def fail(self, code: str, detail: str) -> None:
        self.phase = RegistrationPhase.FAILED
        self.fail_code = code
        self.detail = detail
        self.next_timer_ms = None
        self.challenged.set()
        self.done.set()


@dataclass
class JoinedRoom:
    room_id: bytes
    host_endpoint: Endpoint
    host_code: GcCode | None = None
    joined: threading.Event = field(default_factory=threading.Event)


# -- the node itself -----------------------------------------------------------


class Node:
    """One user's daemon state machine, attached to a world's simulator."""

    def __init__(
        self,
        world: "World",
        name: str = "node",
        data_dir: str | Path | None = None,
        epoch_s: int = 0,
    ) -> None:
        self.world = world
        self.sim = world.sim
        self.name = name
        self.endpoint = self.sim.add_endpoint()
        self.registry_endpoint = world.registry_endpoint
        self._epoch_s = int(epoch_s)
        self.data_dir = Path(data_dir) if data_dir is not None else None

        self.my_code: GcCode | None = None
        self.my_phone: PhoneNumber | None = None
        self._profiles: dict[str, Profile] = {}
        self._rules: list[PolicyRule] = []
        self._sessions: dict[bytes, ExchangeSession] = {}
        self._approvals: dict[bytes, PendingApproval] = {}
        self._reply_cache = ReplyCache()
        self._rooms_hosted: dict[bytes, RoomHostState] = {}
        self._rooms_joined: dict[bytes, JoinedRoom] = {}
        self._registration: RegistrationFlow | None = None
        self._last_received_ms = -1

        if self.data_dir is not None:
            self.data_dir.mkdir(parents=True, exist_ok=True)
            (self.data_dir / "profiles").mkdir(exist_ok=True)
            self.token = self._load_or_create_token()
            self.contacts = ContactStore(self.data_dir / "contacts.log")
            self._load_profiles()
            self._load_policy()
            self._load_identity()
        else:
            self.token = secrets.token_hex(16)
            self.contacts = ContactStore(None)
        if not self._rules:
            self._rules = [PolicyRule("default", Matcher(MatcherKind.ANY), None, RuleMode.AUTO)]
            self._persist_policy()

    # -- clocks --

    def now_ms(self) -> float:
        return self.sim.now_ms

    def now_s(self) -> int:
        return self._epoch_s + int(self.sim.now_ms // 1000)

    def _next_received_ms(self, now_ms: float) -> int:
        stamp = self._epoch_s * 1000 + int(now_ms)
        if stamp <= self._last_received_ms:
            stamp = self._last_received_ms + 1
        self._last_received_ms = stamp
        return stamp

    # -- persistence helpers --

    def _write_file(self, path: Path, data: bytes) -> None:
        tmp = path.with_name(path.name + ".tmp")
        with tmp.open("wb") as handle:
            handle.write(data)
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(tmp, path)
        dir_fd = os.open(path.parent, os.O_DIRECTORY)
        try:
            os.fsync(dir_fd)
        finally:
            os.close(dir_fd)

    def _load_or_create_token(self) -> str:
        token_path = self.data_dir / "token"
        if token_path.exists():
            return token_path.read_text(encoding="utf-8").strip()
        token = secrets.token_hex(16)
        self._write_file(token_path, (token + "\n").encode("utf-8"))
        os.chmod(token_path, 0o600)
        return token

    def _profile_path(self, profile_id: str) -> Path:
        return self.data_dir / "profiles" / f"{profile_id}.gfc"

    def _load_profiles(self) -> None:
        loaded = []
        for path in sorted((self.data_dir / "profiles").glob("*.gfc")):
            loaded.append(gfcdoc.parse_profile(path.read_bytes()))
        loaded.sort(key=lambda p: (p.created_at, p.profile_id))
        self._profiles = {p.profile_id: p for p in loaded}

    def _persist_profile(self, profile: Profile) -> None:
        if self.data_dir is not None:
            self._write_file(self._profile_path(profile.profile_id), gfcdoc.serialize_profile(profile))

    def _load_policy(self) -> None:
        policy_path = self.data_dir / "policy.cfg"
        if not policy_path.exists():
            return
        rules = []
        for line in policy_path.read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            parts = line.split("|")
            if len(parts) != 5 or parts[0] != "R":
                raise ValueError(f"policy.cfg is corrupt: {line!r}")
            rules.append(
                PolicyRule(parts[1], Matcher.from_token(parts[2]), parts[3] or None, RuleMode(parts[4]))
            )
        self._rules = rules

    def _persist_policy(self) -> None:
        if self.data_dir is None:
            return
        lines = [
            f"R|{r.rule_id}|{r.matcher.token}|{r.profile_id or ''}|{r.mode.value}" for r in self._rules
        ]
        self._write_file(self.data_dir / "policy.cfg", ("\n".join(lines) + "\n").encode("utf-8"))

    def _load_identity(self) -> None:
        identity_path = self.data_dir / "identity"
        if not identity_path.exists():
            return
        for line in identity_path.read_text(encoding="utf-8").splitlines():
            key, _, value = line.partition("|")
            if key == "CODE" and value:
                self.my_code = GcCode(value)
            elif key == "PHONE" and value:
                self.my_phone = PhoneNumber(value)

    def _persist_identity(self) -> None:
        if self.data_dir is None:
            return
        lines = [f"CODE|{self.my_code.text if self.my_code else ''}"]
        lines.append(f"PHONE|{self.my_phone.digits if self.my_phone else ''}")
        self._write_file(self.data_dir / "identity", ("\n".join(lines) + "\n").encode("utf-8"))

    # -- profiles --

    def list_profiles(self) -> list[Profile]:
        with self.world.lock:
            return sorted(self._profiles.values(), key=lambda p: (p.created_at, p.profile_id))

    def profile_by_ref(self, ref: str) -> Profile:
        """Look up by id first, then by (unique) display name."""
        with self.world.lock:
            profile = self._profiles.get(ref)
            if profile is not None:
                return profile
            for candidate in self._profiles.values():
                if candidate.name == ref:
                    return candidate
            raise NotFoundError(f"no profile {ref!r}")

    def create_profile(self, name: str, fields: Iterable[ProfileField] = ()) -> Profile:
        with self.world.lock:
            if any(p.name == name for p in self._profiles.values()):
                raise ValidationError(f"a profile named {name!r} already exists")
            profile = Profile.new(name, fields, self.now_s())
            self._profiles[profile.profile_id] = profile
            self._persist_profile(profile)
            self._maybe_bind_default_rule(profile.profile_id)
            return profile

    def update_profile(
        self,
        profile_id: str,
        name: str | None = None,
        fields: Iterable[ProfileField] | None = None,
    ) -> Profile:
        with self.world.lock:
            profile = self._profiles.get(profile_id)
            if profile is None:
                raise NotFoundError(f"no profile {profile_id!r}")
            new_name = name if name is not None else profile.name
            if any(p.name == new_name and p.profile_id != profile_id for p in self._profiles.values()):
                raise ValidationError(f"a profile named {new_name!r} already exists")
            new_fields = tuple(fields) if fields is not None else profile.fields
            updated = profile.with_content(new_name, new_fields, self.now_s())
            self._profiles[profile_id] = updated
            self._persist_profile(updated)
            return updated

    def delete_profile(self, profile_id: str) -> None:
        with self.world.lock:
            if self._profiles.pop(profile_id, None) is None:
                raise NotFoundError(f"no profile {profile_id!r}")
            if self.data_dir is not None:
                path = self._profile_path(profile_id)
                if path.exists():
                    path.unlink()

    def _maybe_bind_default_rule(self, profile_id: str) -> None:
        # The first profile a user creates becomes the default auto-send target.
        for index, rule in enumerate(self._rules):
            if rule.rule_id == "default" and rule.profile_id is None:
                self._rules[index] = replace(rule, profile_id=profile_id)
                self._persist_policy()
                return

    # -- policy --

    def list_rules(self) -> list[PolicyRule]:
        with self.world.lock:
            return list(self._rules)

    def set_rules(self, rules: Iterable[PolicyRule]) -> list[PolicyRule]:
        with self.world.lock:
            new_rules = list(rules)
            if not any(r.matcher.kind is MatcherKind.ANY for r in new_rules):
                raise ValidationError("the rule list needs an ANY rule so every requester matches")
            seen: set[str] = set()
            for rule in new_rules:
                if rule.rule_id in seen:
                    raise ValidationError(f"duplicate rule id {rule.rule_id!r}")
                seen.add(rule.rule_id)
            self._rules = new_rules
            self._persist_policy()
            return list(self._rules)

    # -- code registration --

    def begin_code_registration(self, code_text: str, phone_text: str) -> RegistrationFlow:
        with self.world.lock:
            code = validate_code(code_text)
            try:
                phone = PhoneNumber(phone_text)
            except ValueError as exc:
                raise ValidationError(str(exc)) from exc
            flow = RegistrationFlow(code, phone)
            flow.next_timer_ms = self.now_ms() + REGISTRY_RETRY_INTERVAL_MS
            self._registration = flow
            self._send(
                self.registry_endpoint,
                TransportClass.WIDE_AREA,
                wire.RegBegin(code.text, phone.digits, self.endpoint.id),
            )
            return flow

    def submit_registration_otp(self, otp: str) -> RegistrationFlow:
        with self.world.lock:
            flow = self._registration
            if flow is None or flow.phase is not RegistrationPhase.CHALLENGED:
                raise ValidationError("no registration is waiting for an OTP")
            flow.otp = otp
            flow.phase = RegistrationPhase.COMPLETE_SENT
            flow.retries_used = 0
            flow.next_timer_ms = self.now_ms() + REGISTRY_RETRY_INTERVAL_MS
            self._send(
                self.registry_endpoint,
                TransportClass.WIDE_AREA,
                wire.RegComplete(flow.challenge_id, otp),
            )
            return flow

    def registration_status(self) -> tuple[str | None, str]:
        with self.world.lock:
            if self.my_code is not None:
                return self.my_code.text, "active"
            if self._registration is not None:
                return self._registration.code.text, self._registration.phase.value
            return None, "unregistered"

    # -- exchange (requester side) --

    def request_exchange(
        self,
        code_text: str,
        transport: TransportClass = TransportClass.WIDE_AREA,
        peer_endpoint: Endpoint | None = None,
    ) -> ExchangeSession:
        with self.world.lock:
            code = validate_code(code_text)
            if transport is TransportClass.PROXIMITY and peer_endpoint is None:
                raise ValidationError("proximity exchange addresses the peer directly")
            session = ExchangeSession(
                request_id=secrets.token_bytes(16),
                target_code=code,
                requester_code=self.my_code,
                transport=transport,
                started_at_ms=self.now_ms(),
                peer_endpoint=peer_endpoint,
            )
            self._sessions[session.request_id] = session
            self._transmit_session(session)
            return session

    def _transmit_session(self, session: ExchangeSession) -> None:
        if session.peer_endpoint is None:
            self._send(
                self.registry_endpoint,
                TransportClass.WIDE_AREA,
                wire.Resolve(session.target_code.text),
            )
        else:
            requester = session.requester_code.text if session.requester_code else None
            self._send(
                session.peer_endpoint,
                session.transport,
                wire.Request(session.request_id, session.target_code.text, requester),
            )

    def session_for(self, request_id: bytes) -> ExchangeSession | None:
        with self.world.lock:
            return self._sessions.get(request_id)

    # -- approvals --

    def list_approvals(self) -> list[PendingApproval]:
        with self.world.lock:
            waiting = [a for a in self._approvals.values() if a.state is ApprovalState.WAITING]
            return sorted(waiting, key=lambda a: a.arrived_at_ms)

    def approve_request(self, request_id: bytes, profile_id: str | None = None) -> PendingApproval:
        with self.world.lock:
            approval = self._approvals.get(request_id)
            if approval is None:
                raise NotFoundError("no such pending request")
            if approval.state is not ApprovalState.WAITING:
                raise ValidationError("the request was already resolved")
            chosen = profile_id or approval.suggested_profile_id
            if chosen is None:
                raise ValidationError("approval needs a profile to send")
            profile = self._profiles.get(chosen)
            if profile is None:
                raise NotFoundError(f"no profile {chosen!r}")
            approval.state = ApprovalState.APPROVED
            approval.resolved_profile_id = chosen
            reply = wire.Response(request_id, gfcdoc.serialize_profile(profile))
            self._cache_and_send(request_id, reply, approval.requester_endpoint, approval.transport)
            return approval

    def refuse_request(self, request_id: bytes) -> PendingApproval:
        with self.world.lock:
            approval = self._approvals.get(request_id)
            if approval is None:
                raise NotFoundError("no such pending request")
            if approval.state is not ApprovalState.WAITING:
                raise ValidationError("the request was already resolved")
            self._refuse(approval)
            return approval

    def _refuse(self, approval: PendingApproval) -> None:
        approval.state = ApprovalState.REFUSED
        reply = wire.Deny(approval.request_id, wire.DENY_REFUSED)
        self._cache_and_send(
            approval.request_id, reply, approval.requester_endpoint, approval.transport
        )

    # -- rooms --

    def host_room(self) -> RoomHostState:
        with self.world.lock:
            if self.my_code is None:
                raise ValidationError("register a code before hosting a room")
            room = RoomHostState(secrets.token_bytes(16), self.my_code, self.now_ms())
            self._rooms_hosted[room.room_id] = room
            self.sim.join_room(room.room_id, self.endpoint)
            return room

    def admit_member(self, room_id: bytes, member: Endpoint) -> None:
        """Host-side direct admission (the member walked up and was let in)."""
        with self.world.lock:
            room = self._rooms_hosted.get(room_id)
            if room is None:
                raise UnknownRoom(f"no room {room_id.hex()}")
            room.admit(member)

    def attach_room(self, room_id: bytes, host_code_text: str, host_endpoint: Endpoint) -> None:
        """Member-side out-of-band bookkeeping matching a direct admission."""
        with self.world.lock:
            joined = JoinedRoom(room_id, host_endpoint, GcCode(host_code_text))
            joined.joined.set()
            self._rooms_joined[room_id] = joined
            self.sim.join_room(room_id, self.endpoint)

    def join_room(self, room_id: bytes, host_endpoint: Endpoint) -> JoinedRoom:
        """Wire path: walk into the room, then ask the host to admit us."""
        with self.world.lock:
            joined = JoinedRoom(room_id, host_endpoint)
            self._rooms_joined[room_id] = joined
            self.sim.join_room(room_id, self.endpoint)
            self._send(
                host_endpoint,
                TransportClass.PROXIMITY,
                wire.RoomJoin(room_id, self.endpoint.id),
            )
            return joined

    def broadcast_room(self, room_id: bytes, profile_ref: str) -> BroadcastReport:
        with self.world.lock:
            room = self._rooms_hosted.get(room_id)
            if room is None:
                raise UnknownRoom(f"no room {room_id.hex()}")
            if not room.open:
                raise RoomClosed(f"room {room_id.hex()} is closed")
            profile = self.profile_by_ref(profile_ref)
            doc = gfcdoc.serialize_profile(profile)
            seq = room.next_seq
            room.next_seq += 1
            frame = wire.encode_frame(wire.RoomCard(room_id, seq, doc))
            delivered: list[Endpoint] = []
            lost: list[Endpoint] = []
            for member in room.members:
                outcome = self.sim.send(self.endpoint, member, TransportClass.PROXIMITY, frame)
                (delivered if outcome.delivered else lost).append(member)
            return BroadcastReport(room_id, seq, tuple(delivered), tuple(lost))

    def close_room(self, room_id: bytes) -> None:
        with self.world.lock:
            room = self._rooms_hosted.get(room_id)
            if room is None:
                raise UnknownRoom(f"no room {room_id.hex()}")
            room.open = False

    def room_status(self, room_id: bytes) -> RoomHostState:
        with self.world.lock:
            room = self._rooms_hosted.get(room_id)
            if room is None:
                raise UnknownRoom(f"no room {room_id.hex()}")
            return room

    # -- contacts --

    def classify_contact(self, entry_id: str, label: str) -> ContactEntry:
        with self.world.lock:
            try:
                return self.contacts.classify(entry_id, label)
            except ValueError as exc:
                raise ValidationError(str(exc)) from exc

    def search_contacts(self, query: ContactQuery) -> list[ContactEntry]:
        with self.world.lock:
            return self.contacts.search(query)

    def export_vcard_entry(self, entry_id: str) -> str:
        from .vcard import export_vcard

        with self.world.lock:
            return export_vcard(self.contacts.get(entry_id).card)

    # -- wire plumbing --

    def _send(self, dst: Endpoint, transport: TransportClass, msg: wire.Message) -> None:
        self.sim.send(self.endpoint, dst, transport, wire.encode_frame(msg))

    def _send_raw(self, dst: Endpoint, transport: TransportClass, data: bytes) -> None:
        self.sim.send(self.endpoint, dst, transport, data)

    def _cache_and_send(
        self, request_id: bytes, msg: wire.Message, dst: Endpoint, transport: TransportClass
    ) -> None:
        data = wire.encode_frame(msg)
        self._reply_cache.put(request_id, data, self.now_ms())
        self._send_raw(dst, transport, data)

    def handle_frame(self, delivery: Delivery) -> None:
        with self.world.lock:
            try:
                msg = wire.decode_frame(delivery.data)
            except wire.WireError:
                return  # malformed traffic is dropped, never fatal
            if isinstance(msg, wire.Request):
                self._on_request(msg, delivery)
            elif isinstance(msg, wire.Response):
                self._on_response(msg, delivery)
            elif isinstance(msg, wire.Deny):
                self._on_deny(msg)
            elif isinstance(msg, wire.Ack):
                self._reply_cache.forget(msg.request_id)
            elif isinstance(msg, wire.RoomJoin):
                self._on_room_join(msg)
            elif isinstance(msg, wire.RoomOpen):
                self._on_room_open(msg, delivery)
            elif isinstance(msg, wire.RoomCard):
                self._on_room_card(msg, delivery)
            elif isinstance(msg, wire.RegChallenge):
                self._on_reg_challenge(msg)
            elif isinstance(msg, wire.RegOk):
                self._on_reg_ok(msg)
            elif isinstance(msg, wire.ResolveOk):
                self._on_resolve_ok(msg)
            elif isinstance(msg, wire.RegError):
                self._on_reg_error(msg)

    # responder side

    def _on_request(self, msg: wire.Request, delivery: Delivery) -> None:
        now = self.now_ms()
        known, cached = self._reply_cache.lookup(msg.request_id, now)
        if known:
            if cached is not None:
                self._send_raw(delivery.src, delivery.transport, cached)
            return  # decision still pending: stay silent
        if self.my_code is None or msg.target_code != self.my_code.text:
            reply = wire.Deny(msg.request_id, wire.DENY_UNKNOWN_CODE)
            self._cache_and_send(msg.request_id, reply, delivery.src, delivery.transport)
            return
        decision = select_profile_for(self._rules, self._profiles, msg.requester_code)
        if isinstance(decision, AutoSend):
            reply = wire.Response(msg.request_id, gfcdoc.serialize_profile(decision.profile))
            self._cache_and_send(msg.request_id, reply, delivery.src, delivery.transport)
        elif isinstance(decision, AskFirst):
            self._reply_cache.put_pending(msg.request_id, now)
            self._approvals[msg.request_id] = PendingApproval(
                msg.request_id,
                msg.requester_code,
                delivery.src,
                delivery.transport,
                now,
                decision.suggested_profile_id,
            )
        else:
            reply = wire.Deny(msg.request_id, wire.DENY_REFUSED)
            self._cache_and_send(msg.request_id, reply, delivery.src, delivery.transport)

    # requester side

    def _on_response(self, msg: wire.Response, delivery: Delivery) -> None:
        session = self._sessions.get(msg.request_id)
        if session is None or session.terminal:
            return
        try:
            profile = gfcdoc.parse_profile(msg.gfc_bytes)
        except gfcdoc.GfcDocError:
            return  # unusable reply; the retry schedule keeps running
        card = ContactCard(
            session.target_code,
            profile,
            self._next_received_ms(delivery.arrival_ms),
            session.transport,
        )
        entry = self.contacts.append(card)
        session.saved_entry_id = entry.entry_id
        # Completing last: anyone woken by the done event sees the entry id.
        session.on_response(msg.gfc_bytes)
        self._send(delivery.src, session.transport, wire.Ack(session.request_id))

    def _on_deny(self, msg: wire.Deny) -> None:
        session = self._sessions.get(msg.request_id)
        if session is not None:
            session.on_deny(msg.reason)

    # rooms

    def _on_room_join(self, msg: wire.RoomJoin) -> None:
        room = self._rooms_hosted.get(msg.room_id)
        if room is None or not room.open:
            return
        try:
            member = self.sim.endpoint(msg.member_endpoint)
        except UnknownEndpoint:
            return
        room.admit(member)
        self._send(member, TransportClass.PROXIMITY, wire.RoomOpen(msg.room_id, room.host_code.text))

    def _on_room_open(self, msg: wire.RoomOpen, delivery: Delivery) -> None:
        joined = self._rooms_joined.get(msg.room_id)
        if joined is None:
            joined = JoinedRoom(msg.room_id, delivery.src)
            self._rooms_joined[msg.room_id] = joined
            self.sim.join_room(msg.room_id, self.endpoint)
        joined.host_code = GcCode(msg.host_code)
        joined.host_endpoint = delivery.src
        joined.joined.set()

    def _on_room_card(self, msg: wire.RoomCard, delivery: Delivery) -> None:
        joined = self._rooms_joined.get(msg.room_id)
        if joined is None or joined.host_code is None:
            return
        try:
            profile = gfcdoc.parse_profile(msg.gfc_bytes)
        except gfcdoc.GfcDocError:
            return
        card = ContactCard(
            joined.host_code,
            profile,
            self._next_received_ms(delivery.arrival_ms),
            TransportClass.PROXIMITY,
        )
        self.contacts.append(card)

    # registry client

    def _on_reg_challenge(self, msg: wire.RegChallenge) -> None:
        flow = self._registration
        if flow is None or flow.phase is not RegistrationPhase.BEGIN_SENT:
            return
        flow.phase = RegistrationPhase.CHALLENGED
        flow.challenge_id = msg.challenge_id
        flow.expires_at = msg.expires_at
        flow.retries_used = 0
        flow.next_timer_ms = None
        flow.challenged.set()

    def _on_reg_ok(self, msg: wire.RegOk) -> None:
        flow = self._registration
        if flow is None or flow.phase is not RegistrationPhase.COMPLETE_SENT:
            return
        flow.phase = RegistrationPhase.ACTIVE
        flow.next_timer_ms = None
        self.my_code = GcCode(msg.code)
        self.my_phone = flow.phone
        self._persist_identity()
        flow.done.set()

    def _on_resolve_ok(self, msg: wire.ResolveOk) -> None:
        for session in self._sessions.values():
            if session.terminal or session.peer_endpoint is not None:
                continue
            if session.target_code.text != msg.code:
                continue
            try:
                session.peer_endpoint = self.sim.endpoint(msg.endpoint)
            except UnknownEndpoint:
                continue
            self._transmit_session(session)

    def _on_reg_error(self, msg: wire.RegError) -> None:
        name = REG_ERR_NAMES.get(msg.err_code, "RegistryError")
        flow = self._registration
        if flow is not None and flow.phase in (
            RegistrationPhase.BEGIN_SENT,
            RegistrationPhase.COMPLETE_SENT,
        ):
            flow.fail(name, msg.detail)
            return
        # A failed resolve: deny the oldest session still waiting on one.
        waiting = [
            s for s in self._sessions.values() if not s.terminal and s.peer_endpoint is None
        ]
        if waiting:
            oldest = min(waiting, key=lambda s: s.started_at_ms)
            oldest.on_deny(wire.DENY_UNKNOWN_CODE)

    # -- timers --

    def next_timer_ms(self) -> float | None:
        with self.world.lock:
            candidates: list[float] = []
            for session in self._sessions.values():
                if not session.terminal and session.next_timer_ms is not None:
                    candidates.append(session.next_timer_ms)
            flow = self._registration
            if flow is not None and flow.next_timer_ms is not None:
                candidates.append(flow.next_timer_ms)
            for approval in self._approvals.values():
                if approval.state is ApprovalState.WAITING:
                    candidates.append(approval.arrived_at_ms + APPROVAL_TIMEOUT_MS)
            return min(candidates) if candidates else None

    def poll(self, now_ms: float) -> None:
        """Fire due timers: session retries, registry retries, approval expiry."""
        with self.world.lock:
            for session in list(self._sessions.values()):
                if session.on_timer(now_ms):
                    self._transmit_session(session)
            flow = self._registration
            if (
                flow is not None
                and flow.next_timer_ms is not None
                and now_ms >= flow.next_timer_ms
                and flow.phase in (RegistrationPhase.BEGIN_SENT, RegistrationPhase.COMPLETE_SENT)
            ):
                if flow.retries_used < REGISTRY_MAX_RETRIES:
                    flow.retries_used += 1
                    flow.next_timer_ms = now_ms + REGISTRY_RETRY_INTERVAL_MS
                    if flow.phase is RegistrationPhase.BEGIN_SENT:
                        self._send(
                            self.registry_endpoint,
                            TransportClass.WIDE_AREA,
                            wire.RegBegin(flow.code.text, flow.phone.digits, self.endpoint.id),
                        )
                    else:
                        self._send(
                            self.registry_endpoint,
                            TransportClass.WIDE_AREA,
                            wire.RegComplete(flow.challenge_id, flow.otp or ""),
                        )
                else:
                    flow.fail("TimedOut", "no reply from the registry")
            for approval in self._approvals.values():
                if (
                    approval.state is ApprovalState.WAITING
                    and now_ms - approval.arrived_at_ms >= APPROVAL_TIMEOUT_MS
                ):
                    self._refuse(approval)

    def close(self) -> None:
        self.contacts.close()
