"""Deterministic in-process network: two transport classes, seeded loss and latency.

One random.Random(seed) drives all randomness. Every send consumes exactly
one uniform draw for the loss decision and, only when the frame survives,
one more draw for its latency. Replaying that discipline against the same
seed predicts delivery outcomes exactly, which is what the seed-replay
oracles in the tests do.

Proximity delivery additionally requires the two endpoints to share a room
(short range modeled as co-location, not radio physics). Delivery per
directed endpoint pair is FIFO: a later frame never overtakes an earlier
one, enforced by clamping arrival times.
"""

from __future__ import annotations

import csv
import heapq
import io
import random
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .transport import TransportClass


class NetSimError(Exception):
    pass


class UnknownEndpoint(NetSimError):
    pass


class NotInRange(NetSimError):
    pass


@dataclass(frozen=True)
class LinkConfig:
    latency_min_ms: float
    latency_max_ms: float
    loss_rate: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.loss_rate <= 1.0:
            raise ValueError("loss_rate must be in [0, 1]")
        if self.latency_min_ms < 0 or self.latency_min_ms > self.latency_max_ms:
            raise ValueError("need 0 <= latency_min_ms <= latency_max_ms")


def _default_proximity() -> LinkConfig:
    return LinkConfig(5.0, 50.0, 0.01)


def _default_wide_area() -> LinkConfig:
    return LinkConfig(80.0, 300.0, 0.005)


@dataclass(frozen=True)
class NetConfig:
    """Simulation parameters; loadable from ``key = value`` config files."""

    seed: int = 0
    proximity: LinkConfig = field(default_factory=_default_proximity)
    wide_area: LinkConfig = field(default_factory=_default_wide_area)

    def link(self, transport: TransportClass) -> LinkConfig:
        return self.proximity if transport is TransportClass.PROXIMITY else self.wide_area

    @classmethod
    def from_text(cls, text: str) -> "NetConfig":
        values: dict[str, float] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"config line {lineno}: expected key = value")
            key, _, value = line.partition("=")
            values[key.strip()] = float(value.strip())

        def link_from(prefix: str, default: LinkConfig) -> LinkConfig:
            return LinkConfig(
                values.pop(f"{prefix}.latency_min_ms", default.latency_min_ms),
                values.pop(f"{prefix}.latency_max_ms", default.latency_max_ms),
                values.pop(f"{prefix}.loss_rate", default.loss_rate),
            )

        seed = int(values.pop("seed", 0))
        config = cls(
            seed=seed,
            proximity=link_from("proximity", _default_proximity()),
            wide_area=link_from("wide_area", _default_wide_area()),
        )
        if values:
            raise ValueError(f"unknown config keys: {sorted(values)}")
        return config

    @classmethod
    def from_file(cls, path: str | Path) -> "NetConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def to_text(self) -> str:
        lines = [f"seed = {self.seed}"]
        for prefix, link in (("proximity", self.proximity), ("wide_area", self.wide_area)):
            lines.append(f"{prefix}.latency_min_ms = {link.latency_min_ms}")
            lines.append(f"{prefix}.latency_max_ms = {link.latency_max_ms}")
            lines.append(f"{prefix}.loss_rate = {link.loss_rate}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Endpoint:
    """An addressable simulation participant: 8-byte id plus reachable classes."""

    id: bytes
    reachability: frozenset[TransportClass]

    def __post_init__(self) -> None:
        if len(self.id) != 8:
            raise ValueError("endpoint ids are exactly 8 bytes")
        if not self.reachability:
            raise ValueError("endpoints must be reachable on at least one class")

    @property
    def hex(self) -> str:
        return self.id.hex()


@dataclass(frozen=True)
class SendOutcome:
    delivered: bool
    arrival_ms: float | None


@dataclass(frozen=True)
class Delivery:
    src: Endpoint
    dst: Endpoint
    transport: TransportClass
    data: bytes
    sent_at_ms: float
    arrival_ms: float


@dataclass(frozen=True)
class TraceRow:
    send_time_ms: float
    src_hex: str
    dst_hex: str
    transport: TransportClass
    arrival_ms: float | None  # None means the frame was dropped

    def csv_row(self) -> list[str]:
        arrival = "DROP" if self.arrival_ms is None else f"{self.arrival_ms:.6f}"
        return [f"{self.send_time_ms:.6f}", self.src_hex, self.dst_hex, self.transport.value, arrival]


TRACE_CSV_HEADER = ["send_time", "from", "to", "class", "arrival_time_or_DROP"]

_BOTH_CLASSES = frozenset({TransportClass.PROXIMITY, TransportClass.WIDE_AREA})


class Simulator:
    """Seeded discrete-event transport simulation with a millisecond clock."""

    def __init__(self, config: NetConfig | None = None) -> None:
        self.config = config or NetConfig()
        self._rng = random.Random(self.config.seed)
        self._now = 0.0
        self._next_endpoint = 1
        self._endpoints: dict[bytes, Endpoint] = {}
        self._rooms: dict[bytes, set[bytes]] = {}
        self._queue: list[tuple[float, int, Delivery]] = []
        self._seq = 0
        self._last_arrival: dict[tuple[bytes, bytes], float] = {}
        self._trace: list[TraceRow] = []

    @property
    def now_ms(self) -> float:
        return self._now

    def add_endpoint(self, reachability: Iterable[TransportClass] = _BOTH_CLASSES) -> Endpoint:
        endpoint_id = struct.pack("!Q", self._next_endpoint)
        self._next_endpoint += 1
        endpoint = Endpoint(endpoint_id, frozenset(reachability))
        self._endpoints[endpoint_id] = endpoint
        return endpoint

    def endpoint(self, endpoint_id: bytes) -> Endpoint:
        try:
            return self._endpoints[endpoint_id]
        except KeyError:
            raise UnknownEndpoint(endpoint_id.hex()) from None

    def join_room(self, room_key: bytes, endpoint: Endpoint) -> None:
        self._require(endpoint)
        self._rooms.setdefault(room_key, set()).add(endpoint.id)

    def leave_room(self, room_key: bytes, endpoint: Endpoint) -> None:
        members = self._rooms.get(room_key)
        if members is not None:
            members.discard(endpoint.id)

    def room_members(self, room_key: bytes) -> frozenset[bytes]:
        return frozenset(self._rooms.get(room_key, frozenset()))

    def _require(self, endpoint: Endpoint) -> None:
        if endpoint.id not in self._endpoints:
            raise UnknownEndpoint(endpoint.hex)

    def _share_room(self, a: Endpoint, b: Endpoint) -> bool:
        return any(a.id in members and b.id in members for members in self._rooms.values())

    def send(
        self, src: Endpoint, dst: Endpoint, transport: TransportClass, data: bytes
    ) -> SendOutcome:
        """Schedule one frame: lost silently, or delivered after seeded latency."""
        self._require(src)
        self._require(dst)
        if transport not in src.reachability or transport not in dst.reachability:
            raise NotInRange(f"{transport.value} is not reachable for both endpoints")
        if transport is TransportClass.PROXIMITY and not self._share_room(src, dst):
            raise NotInRange("proximity delivery needs a shared room")

        link = self.config.link(transport)
        if self._rng.random() < link.loss_rate:
            self._trace.append(TraceRow(self._now, src.hex, dst.hex, transport, None))
            return SendOutcome(False, None)
        latency = self._rng.uniform(link.latency_min_ms, link.latency_max_ms)
        arrival = self._now + latency
        pair = (src.id, dst.id)
        previous = self._last_arrival.get(pair)
        if previous is not None and arrival < previous:
            arrival = previous  # keep per-pair delivery FIFO
        self._last_arrival[pair] = arrival
        self._seq += 1
        delivery = Delivery(src, dst, transport, data, self._now, arrival)
        heapq.heappush(self._queue, (arrival, self._seq, delivery))
        self._trace.append(TraceRow(self._now, src.hex, dst.hex, transport, arrival))
        return SendOutcome(True, arrival)

    def advance(self, clock_ms: float) -> list[Delivery]:
        """Move the clock to ``clock_ms`` and return everything that arrived.

        Deliveries come back in arrival-time order, ties broken by send
        order. The clock never moves backwards.
        """
        if clock_ms < self._now:
            raise ValueError("the simulation clock cannot move backwards")
        delivered: list[Delivery] = []
        while self._queue and self._queue[0][0] <= clock_ms:
            _, _, delivery = heapq.heappop(self._queue)
            delivered.append(delivery)
        self._now = float(clock_ms)
        return delivered

    def next_arrival_ms(self) -> float | None:
        return self._queue[0][0] if self._queue else None

    def trace_rows(self) -> tuple[TraceRow, ...]:
        return tuple(self._trace)

    def trace_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(TRACE_CSV_HEADER)
        for row in self._trace:
            writer.writerow(row.csv_row())
        return out.getvalue()

    def write_trace_csv(self, path: str | Path) -> None:
        Path(path).write_text(self.trace_csv(), encoding="utf-8")
