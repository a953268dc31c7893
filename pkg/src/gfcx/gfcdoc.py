"""The canonical GFC/1 profile document: a byte-exact, line-oriented format.

Layout (UTF-8, LF line endings)::

    GFC/1
    ID|<32 lowercase hex>|<created_at>|<updated_at>
    NAME|<profile name>
    F|<KIND>|<value>        zero or more, order significant
    END

Serialization is deterministic: equal profiles produce identical bytes.
Values never contain '|' or control characters (enforced by the domain
types), so no escaping is needed anywhere.
"""

from __future__ import annotations

import re

from .profiles import (
    MAX_FIELDS_PER_PROFILE,
    FieldKind,
    Profile,
    ProfileField,
    check_profile_name,
)

MAGIC = "GFC/1"

_VERSIONED_RE = re.compile(r"^GFC/[0-9]+$")
_HEX32_RE = re.compile(r"^[0-9a-f]{32}$")
_DECIMAL_RE = re.compile(r"^[0-9]+$")


class GfcDocError(ValueError):
    """A byte sequence is not a well-formed GFC/1 document."""


class BadMagic(GfcDocError):
    pass


class UnsupportedVersion(GfcDocError):
    pass


class MalformedLine(GfcDocError):
    def __init__(self, lineno: int, reason: str) -> None:
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno


class TooManyFields(GfcDocError):
    pass


def serialize_profile(profile: Profile) -> bytes:
    lines = [
        MAGIC,
        f"ID|{profile.profile_id}|{profile.created_at}|{profile.updated_at}",
        f"NAME|{profile.name}",
    ]
    lines.extend(f"F|{f.kind.token}|{f.value}" for f in profile.fields)
    lines.append("END")
    return ("\n".join(lines) + "\n").encode("utf-8")


def parse_profile(data: bytes) -> Profile:
    """Reconstruct a profile from document bytes.

    parse_profile(serialize_profile(p)) == p for every valid profile; ids
    and timestamps travel inside the document. Unknown field kinds come
    back as CUSTOM entries.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        lineno = data[: exc.start].count(b"\n") + 1
        raise MalformedLine(lineno, "invalid UTF-8") from exc

    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()  # canonical trailing newline
    if not lines:
        raise MalformedLine(1, "empty document")

    header = lines[0]
    if header != MAGIC:
        if _VERSIONED_RE.match(header):
            raise UnsupportedVersion(f"cannot read {header!r} documents")
        raise BadMagic(f"expected {MAGIC!r} header")

    if len(lines) < 2:
        raise MalformedLine(2, "missing ID line")
    id_parts = lines[1].split("|")
    if len(id_parts) != 4 or id_parts[0] != "ID":
        raise MalformedLine(2, "expected ID|<hex32>|<created_at>|<updated_at>")
    profile_id, created_text, updated_text = id_parts[1], id_parts[2], id_parts[3]
    if not _HEX32_RE.match(profile_id):
        raise MalformedLine(2, "profile ids are 32 lowercase hex characters")
    if not _DECIMAL_RE.match(created_text) or not _DECIMAL_RE.match(updated_text):
        raise MalformedLine(2, "timestamps are decimal integers")

    if len(lines) < 3:
        raise MalformedLine(3, "missing NAME line")
    name_parts = lines[2].split("|", 1)
    if len(name_parts) != 2 or name_parts[0] != "NAME":
        raise MalformedLine(3, "expected NAME|<profile name>")
    name = name_parts[1]
    try:
        check_profile_name(name)
    except ValueError as exc:
        raise MalformedLine(3, str(exc)) from exc

    fields: list[ProfileField] = []
    ended = False
    for index in range(3, len(lines)):
        line = lines[index]
        lineno = index + 1
        if line == "END":
            if index + 1 != len(lines):
                raise MalformedLine(index + 2, "content after END")
            ended = True
            break
        parts = line.split("|")
        if len(parts) != 3 or parts[0] != "F":
            raise MalformedLine(lineno, "expected F|<KIND>|<value>")
        if len(fields) >= MAX_FIELDS_PER_PROFILE:
            raise TooManyFields(f"profiles are capped at {MAX_FIELDS_PER_PROFILE} fields")
        try:
            fields.append(ProfileField(FieldKind.from_token(parts[1]), parts[2]))
        except ValueError as exc:
            raise MalformedLine(lineno, str(exc)) from exc
    if not ended:
        raise MalformedLine(len(lines) + 1, "missing END line")

    return Profile(profile_id, name, tuple(fields), int(created_text), int(updated_text))
