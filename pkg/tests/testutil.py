"""Seeded random builders shared by module tests and the acceptance suite."""

from __future__ import annotations

import random

from gfcx import wire
from gfcx.codes import CODE_ALPHABET, GcCode
from gfcx.profiles import (
    BUILTIN_KIND_TOKENS,
    ContactCard,
    FieldKind,
    Profile,
    ProfileField,
)
from gfcx.transport import TransportClass

ALPHABET = sorted(CODE_ALPHABET)
LABEL_ALPHABET = ALPHABET + [" "]
VALUE_POOL = ALPHABET + [" ", "é", "Ω", "中", "\U0001f642"]


def random_code_text(rng: random.Random, length: int | None = None) -> str:
    k = length if length is not None else rng.randint(2, 6)
    return "".join(rng.choice(ALPHABET) for _ in range(k))


def random_phone_text(rng: random.Random) -> str:
    return "+" + "".join(rng.choice("0123456789") for _ in range(rng.randint(7, 15)))


def random_value(rng: random.Random, max_len: int = 40) -> str:
    while True:
        text = "".join(rng.choice(VALUE_POOL) for _ in range(rng.randint(1, max_len)))
        if len(text.encode("utf-8")) <= 512:
            return text


def random_kind(rng: random.Random) -> FieldKind:
    if rng.random() < 0.25:
        label = "".join(rng.choice(LABEL_ALPHABET) for _ in range(rng.randint(1, 32)))
        return FieldKind.custom(label)
    return FieldKind(rng.choice(BUILTIN_KIND_TOKENS))


def random_profile(rng: random.Random, max_fields: int = 8) -> Profile:
    name = "".join(rng.choice(LABEL_ALPHABET) for _ in range(rng.randint(1, 16)))
    fields = tuple(
        ProfileField(random_kind(rng), random_value(rng)) for _ in range(rng.randint(0, max_fields))
    )
    return Profile(
        f"{rng.getrandbits(128):032x}",
        name,
        fields,
        rng.randint(0, 2**31),
        rng.randint(0, 2**31),
    )


def random_card(rng: random.Random) -> ContactCard:
    classification = None
    if rng.random() < 0.5:
        classification = "".join(rng.choice(ALPHABET) for _ in range(rng.randint(1, 12)))
    return ContactCard(
        GcCode(random_code_text(rng)),
        random_profile(rng),
        rng.randint(0, 2**40),
        rng.choice(list(TransportClass)),
        classification,
    )


def random_message(rng: random.Random) -> wire.Message:
    choice = rng.randrange(17)
    rid = rng.randbytes(16)
    if choice == 0:
        requester = random_code_text(rng) if rng.random() < 0.5 else None
        return wire.Request(rid, random_code_text(rng), requester)
    if choice == 1:
        return wire.Response(rid, rng.randbytes(rng.randint(0, 256)))
    if choice == 2:
        return wire.Deny(rid, rng.randrange(256))
    if choice == 3:
        return wire.Ack(rid)
    if choice == 4:
        return wire.RoomOpen(rid, random_code_text(rng))
    if choice == 5:
        return wire.RoomJoin(rid, rng.randbytes(8))
    if choice == 6:
        return wire.RoomCard(rid, rng.randrange(2**32), rng.randbytes(rng.randint(0, 256)))
    if choice == 7:
        return wire.RegBegin(random_code_text(rng), random_phone_text(rng), rng.randbytes(8))
    if choice == 8:
        return wire.RegChallenge(rid, rng.randrange(2**64), rng.randrange(256))
    if choice == 9:
        return wire.RegComplete(rid, "".join(rng.choice("0123456789") for _ in range(6)))
    if choice == 10:
        return wire.RegOk(random_code_text(rng), rng.randrange(2**64))
    if choice == 11:
        return wire.Resolve(random_code_text(rng))
    if choice == 12:
        return wire.ResolveOk(random_code_text(rng), rng.randbytes(8), random_value(rng, 20))
    if choice == 13:
        return wire.RegError(rng.randrange(256), random_value(rng, 30))
    if choice == 14:
        return wire.ApiCall(rng.randint(wire.API_MIN, wire.API_MAX), random_value(rng, 60))
    if choice == 15:
        return wire.ApiOk(random_value(rng, 60))
    safe = "".join(rng.choice(ALPHABET) for _ in range(rng.randint(1, 20)))
    return wire.ApiErr("Validation", safe)
