"""Transport class tags shared by the simulator, wire protocol, and stored cards."""

import enum


class TransportClass(enum.Enum):
    """The two delivery paths: short-range proximity links and wide-area links."""

    PROXIMITY = "proximity"
    WIDE_AREA = "wide_area"

    @classmethod
    def from_token(cls, token: str) -> "TransportClass":
        for t in cls:
            if t.value == token:
                return t
        raise ValueError(f"unknown transport class {token!r}")
