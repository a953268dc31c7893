"""Profile documents and contact cards: the vocabulary of exchanged data.

All types here are immutable values; operations on them are pure functions,
so they are safe to share across threads without synchronization. Because
the serialized formats are pipe-delimited line documents, '|' and control
characters are rejected everywhere a value could end up on such a line.
"""

from __future__ import annotations

import re
import uuid
from dataclasses import dataclass, replace
from typing import Iterable

from .codes import CODE_ALPHABET, GcCode
from .transport import TransportClass

MAX_FIELDS_PER_PROFILE = 64
MAX_VALUE_BYTES = 512
MAX_CUSTOM_LABEL_LEN = 32
MAX_NAME_LEN = 64
MAX_CLASSIFICATION_LEN = 64

BUILTIN_KIND_TOKENS = (
    "MOBILENUMBER",
    "EMAIL",
    "SKYPE",
    "FACEBOOK",
    "TWITTER",
    "NAME",
    "ORGANIZATION",
    "TITLE",
    "ADDRESS",
    "WEBSITE",
    "NOTE",
)

_LABEL_ALPHABET = CODE_ALPHABET | {" "}
_CUSTOM_RE = re.compile(r"^CUSTOM\((.*)\)$")
_PHONE_RE = re.compile(r"^\+[0-9]{7,15}$")
_HEX32_RE = re.compile(r"^[0-9a-f]{32}$")


def _check_custom_label(label: str) -> None:
    if not label:
        raise ValueError("custom field labels must be nonempty")
    if len(label) > MAX_CUSTOM_LABEL_LEN:
        raise ValueError(f"custom field labels are capped at {MAX_CUSTOM_LABEL_LEN} characters")
    for char in label:
        if char not in _LABEL_ALPHABET:
            raise ValueError(f"disallowed character {char!r} in custom field label")


@dataclass(frozen=True)
class FieldKind:
    """One category of personal data: a builtin kind, or CUSTOM with a label."""

    name: str
    label: str | None = None

    def __post_init__(self) -> None:
        if self.name == "CUSTOM":
            if self.label is None:
                raise ValueError("custom field kinds need a label")
            _check_custom_label(self.label)
        else:
            if self.name not in BUILTIN_KIND_TOKENS:
                raise ValueError(f"unknown field kind {self.name!r}")
            if self.label is not None:
                raise ValueError("only custom field kinds carry a label")

    @classmethod
    def custom(cls, label: str) -> "FieldKind":
        return cls("CUSTOM", label)

    @property
    def token(self) -> str:
        return self.name if self.label is None else f"CUSTOM({self.label})"

    @classmethod
    def from_token(cls, token: str) -> "FieldKind":
        if token in BUILTIN_KIND_TOKENS:
            return cls(token)
        match = _CUSTOM_RE.match(token)
        if match:
            return cls.custom(match.group(1))
        # Unknown kinds survive as custom entries so foreign documents keep
        # their data through a round trip.
        return cls.custom(token)


MOBILE_NUMBER = FieldKind("MOBILENUMBER")
EMAIL = FieldKind("EMAIL")
SKYPE = FieldKind("SKYPE")
FACEBOOK = FieldKind("FACEBOOK")
TWITTER = FieldKind("TWITTER")
NAME = FieldKind("NAME")
ORGANIZATION = FieldKind("ORGANIZATION")
TITLE = FieldKind("TITLE")
ADDRESS = FieldKind("ADDRESS")
WEBSITE = FieldKind("WEBSITE")
NOTE = FieldKind("NOTE")


def _check_value(value: str) -> None:
    if not value:
        raise ValueError("field values must be nonempty")
    if len(value.encode("utf-8")) > MAX_VALUE_BYTES:
        raise ValueError(f"field values are capped at {MAX_VALUE_BYTES} UTF-8 bytes")
    for char in value:
        if ord(char) < 0x20:
            raise ValueError("field values must not contain control characters")
        if char == "|":
            raise ValueError("field values must not contain '|'")


@dataclass(frozen=True)
class ProfileField:
    kind: FieldKind
    value: str

    def __post_init__(self) -> None:
        _check_value(self.value)


def check_profile_name(name: str) -> None:
    if not name:
        raise ValueError("profile names must be nonempty")
    if len(name) > MAX_NAME_LEN:
        raise ValueError(f"profile names are capped at {MAX_NAME_LEN} characters")
    for char in name:
        if ord(char) < 0x20 or char == "|":
            raise ValueError("profile names must not contain '|' or control characters")


def check_classification(label: str) -> None:
    if not label:
        raise ValueError("classification labels must be nonempty")
    if len(label) > MAX_CLASSIFICATION_LEN:
        raise ValueError(f"classification labels are capped at {MAX_CLASSIFICATION_LEN} characters")
    for char in label:
        if ord(char) < 0x20 or char == "|":
            raise ValueError("classification labels must not contain '|' or control characters")


@dataclass(frozen=True)
class Profile:
    """One named bundle of personal-data fields.

    Field order is significant and survives serialization exactly.
    Timestamps are UTC integer seconds.
    """

    profile_id: str
    name: str
    fields: tuple[ProfileField, ...]
    created_at: int
    updated_at: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "fields", tuple(self.fields))
        if not _HEX32_RE.match(self.profile_id):
            raise ValueError("profile ids are 32 lowercase hex characters")
        check_profile_name(self.name)
        if len(self.fields) > MAX_FIELDS_PER_PROFILE:
            raise ValueError(f"profiles are capped at {MAX_FIELDS_PER_PROFILE} fields")
        if self.created_at < 0 or self.updated_at < 0:
            raise ValueError("timestamps are UTC seconds >= 0")

    @classmethod
    def new(cls, name: str, fields: Iterable[ProfileField] = (), now: int = 0) -> "Profile":
        return cls(uuid.uuid4().hex, name, tuple(fields), int(now), int(now))

    def with_content(self, name: str, fields: Iterable[ProfileField], now: int) -> "Profile":
        return replace(self, name=name, fields=tuple(fields), updated_at=int(now))


@dataclass(frozen=True, order=True)
class PhoneNumber:
    """E.164-style number: '+' followed by 7..15 decimal digits."""

    digits: str

    def __post_init__(self) -> None:
        if not _PHONE_RE.match(self.digits):
            raise ValueError("phone numbers are '+' followed by 7..15 decimal digits")

    def masked(self) -> str:
        """All but the last two digits replaced with '*'; keeps the '+'."""
        body = self.digits[1:]
        return "+" + "*" * (len(body) - 2) + body[-2:]

    def __str__(self) -> str:
        return self.digits


@dataclass(frozen=True)
class ContactCard:
    """A received profile snapshot plus provenance and a user classification.

    Snapshots are immutable after receipt; receiving again from the same code
    creates a new card, preserving history. received_at is UTC milliseconds.
    """

    source_code: GcCode
    profile_snapshot: Profile
    received_at: int
    transport: TransportClass
    classification: str | None = None

    def __post_init__(self) -> None:
        if self.received_at < 0:
            raise ValueError("received_at is UTC milliseconds >= 0")
        if self.classification is not None:
            check_classification(self.classification)
