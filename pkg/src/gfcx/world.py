"""Deterministic harness: one simulator, one registry service, many nodes.

The world advances simulated time in exact steps: it always stops at the
next frame arrival or node timer, dispatches deliveries to the owning
actor, then lets every node fire due timers. Two runs with the same seed
and the same call sequence produce identical traces.

A single re-entrant lock guards the whole world. Single-threaded tests
never contend on it; the live daemon's pump thread and its API threads
serialize through it.
"""

from __future__ import annotations

import threading
from pathlib import Path

from . import wire
from .codes import CodeError, GcCode, validate_code
from .netsim import Delivery, NetConfig, Simulator, UnknownEndpoint
from .node import Node
from .profiles import PhoneNumber
from .registry import REG_ERR_BYTES, Registry, RegistryError
from .transport import TransportClass


class RegistryService:
    """Wire adapter translating registry frames into registry calls."""

    def __init__(self, registry: Registry, sim: Simulator, epoch_s: int = 0) -> None:
        self.registry = registry
        self.sim = sim
        self.endpoint = sim.add_endpoint({TransportClass.WIDE_AREA})
        self._epoch_s = int(epoch_s)

    def _now_s(self, now_ms: float) -> int:
        return self._epoch_s + int(now_ms // 1000)

    def handle_frame(self, delivery: Delivery) -> None:
        try:
            msg = wire.decode_frame(delivery.data)
        except wire.WireError:
            return
        now = self._now_s(delivery.arrival_ms)
        reply: wire.Message | None = None
        try:
            if isinstance(msg, wire.RegBegin):
                code = validate_code(msg.code)
                phone = PhoneNumber(msg.phone)
                endpoint = self.sim.endpoint(msg.endpoint)
                challenge = self.registry.begin_registration(code, phone, endpoint, now)
                reply = wire.RegChallenge(
                    challenge.challenge_id, challenge.expires_at, challenge.attempts_left
                )
            elif isinstance(msg, wire.RegComplete):
                binding = self.registry.complete_registration(msg.challenge_id, msg.otp, now)
                reply = wire.RegOk(binding.code.text, binding.verified_at or now)
            elif isinstance(msg, wire.Resolve):
                resolution = self.registry.resolve(GcCode(msg.code))
                reply = wire.ResolveOk(msg.code, resolution.endpoint.id, resolution.phone_hint)
        except (RegistryError, CodeError, UnknownEndpoint, ValueError) as exc:
            reply = wire.RegError(REG_ERR_BYTES.get(type(exc), 0), str(exc))
        if reply is not None:
            self.sim.send(
                self.endpoint, delivery.src, TransportClass.WIDE_AREA, wire.encode_frame(reply)
            )


class World:
    def __init__(
        self,
        config: NetConfig | None = None,
        registry: Registry | None = None,
        epoch_s: int = 0,
    ) -> None:
        self.lock = threading.RLock()
        self.sim = Simulator(config)
        self.registry = registry if registry is not None else Registry()
        self.registry_service = RegistryService(self.registry, self.sim, epoch_s)
        self.registry_endpoint = self.registry_service.endpoint
        self.epoch_s = int(epoch_s)
        self.nodes: list[Node] = []
        self._handlers = {self.registry_endpoint.id: self.registry_service.handle_frame}

    def add_node(self, name: str = "node", data_dir: str | Path | None = None) -> Node:
        with self.lock:
            node = Node(self, name=name, data_dir=data_dir, epoch_s=self.epoch_s)
            self.nodes.append(node)
            self._handlers[node.endpoint.id] = node.handle_frame
            return node

    def run_until(self, t_ms: float) -> None:
        """Advance simulated time to ``t_ms``, stopping at every event."""
        with self.lock:
            while True:
                target = t_ms
                arrival = self.sim.next_arrival_ms()
                if arrival is not None and arrival < target:
                    target = arrival
                for node in self.nodes:
                    timer = node.next_timer_ms()
                    if timer is not None and timer < target:
                        target = timer
                target = max(target, self.sim.now_ms)
                for delivery in self.sim.advance(target):
                    handler = self._handlers.get(delivery.dst.id)
                    if handler is not None:
                        handler(delivery)
                for node in self.nodes:
                    node.poll(target)
                if target >= t_ms:
                    return

    def run_for(self, ms: float) -> None:
        with self.lock:
            self.run_until(self.sim.now_ms + ms)

    def _next_event_ms(self) -> float | None:
        times = [self.sim.next_arrival_ms()]
        times.extend(node.next_timer_ms() for node in self.nodes)
        pending = [t for t in times if t is not None]
        return min(pending) if pending else None

    def run_until_idle(self, limit_ms: float) -> None:
        """Advance until no traffic or timers remain, or the limit is hit."""
        with self.lock:
            while True:
                upcoming = self._next_event_ms()
                if upcoming is None or upcoming > limit_ms:
                    return
                self.run_until(max(upcoming, self.sim.now_ms))
