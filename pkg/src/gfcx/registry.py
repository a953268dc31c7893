"""The code registry: phone-verified ownership of short identity codes.

Verifying a claim means completing a 6-digit one-time password challenge
with a 300 second lifetime and three attempts. OTPs travel only through a
pluggable delivery sink (tests read an in-memory inbox standing in for
SMS); they never appear in a wire reply. Uniqueness is first-verified-wins:
any number of claims may be pending for a code, the first correct
completion owns it, later completions fail with CodeTaken.

All operations are atomic under one lock, so the observable contract (at
most one active binding per code text) holds under any interleaving of
concurrent callers. The optional transition log makes bindings durable and
doubles as the linearization record.
"""

from __future__ import annotations

import enum
import os
import random
import secrets
import threading
from collections import defaultdict, deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from .codes import GcCode
from .netsim import Endpoint
from .profiles import PhoneNumber
from .transport import TransportClass

_FULL_REACH = frozenset({TransportClass.PROXIMITY, TransportClass.WIDE_AREA})

OTP_TTL_S = 300
OTP_ATTEMPTS = 3
RATE_LIMIT_WINDOW_S = 3600
RATE_LIMIT_MAX_BEGINS = 5


class RegistryError(Exception):
    pass


class CodeTaken(RegistryError):
    pass


class PhoneRateLimited(RegistryError):
    pass


class InvalidOtp(RegistryError):
    pass


class Expired(RegistryError):
    pass


class UnknownChallenge(RegistryError):
    pass


class NotFound(RegistryError):
    pass


# Error bytes for REG_ERROR payloads; 0 is the generic validation bucket.
REG_ERR_BYTES: dict[type, int] = {
    CodeTaken: 1,
    PhoneRateLimited: 2,
    InvalidOtp: 3,
    Expired: 4,
    UnknownChallenge: 5,
    NotFound: 6,
}
REG_ERR_NAMES: dict[int, str] = {0: "Validation"} | {
    byte: cls.__name__ for cls, byte in REG_ERR_BYTES.items()
}


class BindingStatus(enum.Enum):
    PENDING_VERIFICATION = "PENDING"
    ACTIVE = "ACTIVE"
    REVOKED = "REVOKED"


@dataclass(frozen=True)
class Binding:
    code: GcCode
    phone: PhoneNumber
    endpoint: Endpoint
    status: BindingStatus
    verified_at: int | None = None


@dataclass
class VerificationChallenge:
    challenge_id: bytes
    code: GcCode
    phone: PhoneNumber
    otp: str
    expires_at: int
    attempts_left: int = OTP_ATTEMPTS


@dataclass(frozen=True)
class Resolution:
    endpoint: Endpoint
    phone_hint: str


@dataclass(frozen=True)
class TransitionEvent:
    code: str
    phone: str
    status: BindingStatus
    timestamp: int
    endpoint_hex: str

    def log_line(self) -> str:
        return f"B|{self.code}|{self.phone}|{self.status.value}|{self.timestamp}|{self.endpoint_hex}\n"


class OtpInbox:
    """In-memory OTP sink: the test hook standing in for SMS delivery."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._messages: dict[str, list[tuple[str, str]]] = defaultdict(list)

    def __call__(self, phone: PhoneNumber, otp: str, code: GcCode) -> None:
        with self._lock:
            self._messages[phone.digits].append((code.text, otp))

    def latest(self, phone: PhoneNumber) -> str | None:
        with self._lock:
            messages = self._messages.get(phone.digits)
            return messages[-1][1] if messages else None

    def messages(self, phone: PhoneNumber) -> list[tuple[str, str]]:
        with self._lock:
            return list(self._messages.get(phone.digits, ()))


OtpSink = Callable[[PhoneNumber, str, GcCode], None]


@dataclass
class _PendingClaim:
    challenge: VerificationChallenge
    endpoint: Endpoint


class Registry:
    """Directory service allocating codes and resolving them to endpoints."""

    def __init__(
        self,
        otp_sink: OtpSink | None = None,
        log_path: str | Path | None = None,
        rng: random.Random | None = None,
    ) -> None:
        # Every OTP lands in the inbox (the designated test hook); an extra
        # sink, when given, is notified as well (e.g. printing in a demo).
        self.otp_inbox = OtpInbox()
        self._extra_sink = otp_sink
        self._rng = rng
        self._lock = threading.Lock()
        self._active: dict[str, Binding] = {}
        self._phone_to_code: dict[str, str] = {}
        self._claims: dict[bytes, _PendingClaim] = {}
        self._revocations: dict[str, VerificationChallenge] = {}
        self._begin_window: dict[str, deque[int]] = defaultdict(deque)
        self._events: list[TransitionEvent] = []
        self._log_path = Path(log_path) if log_path is not None else None
        self._log_file = None
        if self._log_path is not None:
            if self._log_path.exists():
                self._replay_log(self._log_path.read_text(encoding="utf-8"))
            self._log_file = self._log_path.open("a", encoding="utf-8")

    # -- randomness (injectable for bulk simulation runs) --

    def _new_otp(self) -> str:
        if self._rng is not None:
            return f"{self._rng.randrange(10**6):06d}"
        return f"{secrets.randbelow(10**6):06d}"

    def _new_id(self) -> bytes:
        if self._rng is not None:
            return self._rng.getrandbits(128).to_bytes(16, "big")
        return secrets.token_bytes(16)

    def _deliver(self, phone: PhoneNumber, otp: str, code: GcCode) -> None:
        self.otp_inbox(phone, otp, code)
        if self._extra_sink is not None:
            self._extra_sink(phone, otp, code)

    # -- persistence --

    def _replay_log(self, text: str) -> None:
        latest: dict[str, TransitionEvent] = {}
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line:
                continue
            parts = line.split("|")
            if len(parts) != 6 or parts[0] != "B":
                raise ValueError(f"registry log line {lineno} is corrupt")
            event = TransitionEvent(
                parts[1], parts[2], BindingStatus(parts[3]), int(parts[4]), parts[5]
            )
            latest[event.code] = event
        for code_text, event in latest.items():
            if event.status is not BindingStatus.ACTIVE:
                continue
            endpoint = Endpoint(bytes.fromhex(event.endpoint_hex), _FULL_REACH)
            binding = Binding(
                GcCode(code_text),
                PhoneNumber(event.phone),
                endpoint,
                BindingStatus.ACTIVE,
                verified_at=event.timestamp,
            )
            self._active[code_text] = binding
            self._phone_to_code[event.phone] = code_text

    def _record(self, code: str, phone: str, status: BindingStatus, now: int, endpoint_hex: str) -> None:
        event = TransitionEvent(code, phone, status, now, endpoint_hex)
        self._events.append(event)
        if self._log_file is not None:
            self._log_file.write(event.log_line())
            self._log_file.flush()
            os.fsync(self._log_file.fileno())

    def close(self) -> None:
        if self._log_file is not None:
            self._log_file.close()
            self._log_file = None

    # -- operations --

    def begin_registration(
        self, code: GcCode, phone: PhoneNumber, endpoint: Endpoint, now: int
    ) -> VerificationChallenge:
        """Open a claim on ``code`` and deliver an OTP to ``phone``.

        An active binding blocks new claimants with CodeTaken, except the
        owner phone itself, which may re-register to refresh its endpoint.
        """
        with self._lock:
            window = self._begin_window[phone.digits]
            while window and window[0] <= now - RATE_LIMIT_WINDOW_S:
                window.popleft()
            if len(window) >= RATE_LIMIT_MAX_BEGINS:
                raise PhoneRateLimited(
                    f"more than {RATE_LIMIT_MAX_BEGINS} registration attempts in an hour"
                )
            active = self._active.get(code.text)
            if active is not None and active.phone != phone:
                raise CodeTaken(f"code {code.text!r} already has a verified owner")
            window.append(now)
            otp = self._new_otp()
            challenge = VerificationChallenge(self._new_id(), code, phone, otp, now + OTP_TTL_S)
            self._claims[challenge.challenge_id] = _PendingClaim(challenge, endpoint)
            self._record(code.text, phone.digits, BindingStatus.PENDING_VERIFICATION, now, endpoint.hex)
        self._deliver(phone, otp, code)
        return challenge

    def complete_registration(self, challenge_id: bytes, otp: str, now: int) -> Binding:
        with self._lock:
            claim = self._claims.get(challenge_id)
            if claim is None:
                raise UnknownChallenge("no such challenge")
            challenge = claim.challenge
            if now > challenge.expires_at:
                del self._claims[challenge_id]
                raise Expired("the challenge has expired")
            if otp != challenge.otp:
                challenge.attempts_left -= 1
                if challenge.attempts_left <= 0:
                    del self._claims[challenge_id]
                raise InvalidOtp("wrong one-time password")
            del self._claims[challenge_id]
            code_text = challenge.code.text
            active = self._active.get(code_text)
            if active is not None and active.phone != challenge.phone:
                raise CodeTaken(f"another phone verified {code_text!r} first")
            old_code = self._phone_to_code.get(challenge.phone.digits)
            if old_code is not None and old_code != code_text:
                # One active code per phone: a new activation releases the old code.
                self._drop_active(old_code, now)
            binding = Binding(
                challenge.code, challenge.phone, claim.endpoint, BindingStatus.ACTIVE, verified_at=now
            )
            self._active[code_text] = binding
            self._phone_to_code[challenge.phone.digits] = code_text
            self._record(code_text, challenge.phone.digits, BindingStatus.ACTIVE, now, claim.endpoint.hex)
            return binding

    def resolve(self, code: GcCode) -> Resolution:
        with self._lock:
            binding = self._active.get(code.text)
            if binding is None:
                raise NotFound(f"code {code.text!r} has no active binding")
            return Resolution(binding.endpoint, binding.phone.masked())

    def request_revocation_otp(self, code: GcCode, now: int) -> VerificationChallenge:
        """Deliver a re-auth OTP to the owning phone so revoke() can be called."""
        with self._lock:
            binding = self._active.get(code.text)
            if binding is None:
                raise NotFound(f"code {code.text!r} has no active binding")
            otp = self._new_otp()
            challenge = VerificationChallenge(
                self._new_id(), binding.code, binding.phone, otp, now + OTP_TTL_S
            )
            self._revocations[code.text] = challenge
            phone = binding.phone
        self._deliver(phone, otp, code)
        return challenge

    def revoke(self, code: GcCode, otp_reauth: str, now: int) -> None:
        """Release an active binding; the code is immediately claimable again."""
        with self._lock:
            binding = self._active.get(code.text)
            if binding is None:
                raise NotFound(f"code {code.text!r} has no active binding")
            challenge = self._revocations.get(code.text)
            if challenge is None:
                raise InvalidOtp("no revocation challenge outstanding")
            if now > challenge.expires_at:
                del self._revocations[code.text]
                raise InvalidOtp("the revocation challenge has expired")
            if otp_reauth != challenge.otp:
                challenge.attempts_left -= 1
                if challenge.attempts_left <= 0:
                    del self._revocations[code.text]
                raise InvalidOtp("wrong one-time password")
            del self._revocations[code.text]
            self._drop_active(code.text, now)

    def _drop_active(self, code_text: str, now: int) -> None:
        binding = self._active.pop(code_text)
        self._phone_to_code.pop(binding.phone.digits, None)
        self._record(code_text, binding.phone.digits, BindingStatus.REVOKED, now, binding.endpoint.hex)

    # -- introspection --

    def binding_for(self, code_text: str) -> Binding | None:
        with self._lock:
            return self._active.get(code_text)

    def active_codes(self) -> list[str]:
        with self._lock:
            return sorted(self._active)

    def events(self) -> tuple[TransitionEvent, ...]:
        """This run's transitions in linearization order."""
        with self._lock:
            return tuple(self._events)
