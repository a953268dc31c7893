"""Short identity codes: allowed alphabet, validation, namespace sizing."""

from __future__ import annotations

from dataclasses import dataclass

MIN_CODE_LEN = 2
MAX_CODE_LEN = 6

# Printable ASCII 0x21..0x7E minus the three characters reserved as
# delimiters by the line formats (':', '|', '"'). 91 symbols.
RESERVED_CHARS = frozenset(':|"')
CODE_ALPHABET = frozenset(chr(b) for b in range(0x21, 0x7F)) - RESERVED_CHARS
CODE_ALPHABET_SIZE = len(CODE_ALPHABET)


class CodeError(ValueError):
    """A string failed identity-code validation."""


class TooShort(CodeError):
    pass


class TooLong(CodeError):
    pass


class BadCharacter(CodeError):
    def __init__(self, char: str, offset: int) -> None:
        super().__init__(f"disallowed character {char!r} at offset {offset}")
        self.char = char
        self.offset = offset


class InvalidRange(ValueError):
    pass


@dataclass(frozen=True, order=True)
class GcCode:
    """A self-assigned identity code, 2..6 characters from CODE_ALPHABET.

    Comparison is byte-wise and case-sensitive: "Wa10" and "wa10" are two
    different codes. No normalization is ever applied.
    """

    text: str

    def __post_init__(self) -> None:
        _check_code_text(self.text)

    def __str__(self) -> str:
        return self.text


def _check_code_text(raw: str) -> None:
    if len(raw) < MIN_CODE_LEN:
        raise TooShort(f"code needs at least {MIN_CODE_LEN} characters, got {len(raw)}")
    if len(raw) > MAX_CODE_LEN:
        raise TooLong(f"code allows at most {MAX_CODE_LEN} characters, got {len(raw)}")
    for offset, char in enumerate(raw):
        if char not in CODE_ALPHABET:
            raise BadCharacter(char, offset)


def validate_code(raw: str) -> GcCode:
    """Return a GcCode whose text equals ``raw`` unchanged, or raise CodeError."""
    return GcCode(raw)


def code_space_size(min_len: int, max_len: int, alphabet_size: int) -> int:
    """Count distinct codes with lengths in [min_len, max_len], exactly.

    Uses the geometric closed form on arbitrary-precision integers.
    """
    if not (1 <= min_len <= max_len <= 8):
        raise InvalidRange(f"need 1 <= min_len <= max_len <= 8, got {min_len}..{max_len}")
    if alphabet_size < 1:
        raise InvalidRange(f"alphabet_size must be >= 1, got {alphabet_size}")
    if alphabet_size == 1:
        return max_len - min_len + 1
    a = alphabet_size
    return (a ** (max_len + 1) - a ** min_len) // (a - 1)
