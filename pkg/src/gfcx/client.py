"""Socket client for a node's local API, shared by the CLI and tests."""

from __future__ import annotations

import socket

from . import wire
from .api import read_frame


class ClientError(Exception):
    pass


class ApiFailureError(ClientError):
    """The node answered with ERROR|<code>|<detail>."""

    def __init__(self, code: str, detail: str) -> None:
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


class TransportFailure(ClientError):
    """The node could not be reached or the connection broke."""


class NodeClient:
    def __init__(self, address: str, token: str, timeout_s: float = 15.0) -> None:
        host, _, port_text = address.rpartition(":")
        if not host or not port_text.isdigit():
            raise ValueError(f"node address must be host:port, got {address!r}")
        self.host = host
        self.port = int(port_text)
        self.token = token
        self.timeout_s = timeout_s

    def call(self, msg_type: int, lines: list[str] | None = None) -> str:
        doc = "\n".join([f"TOKEN|{self.token}", *(lines or [])])
        frame = wire.encode_frame(wire.ApiCall(msg_type, doc))
        try:
            with socket.create_connection((self.host, self.port), timeout=self.timeout_s) as sock:
                sock.sendall(frame)
                reply_frame = read_frame(sock)
        except OSError as exc:
            raise TransportFailure(f"cannot reach the node at {self.host}:{self.port}: {exc}") from exc
        if reply_frame is None:
            raise TransportFailure("the node closed the connection mid-reply")
        try:
            reply = wire.decode_frame(reply_frame)
        except wire.WireError as exc:
            raise TransportFailure(f"unreadable reply: {exc}") from exc
        if isinstance(reply, wire.ApiOk):
            return reply.doc
        if isinstance(reply, wire.ApiErr):
            raise ApiFailureError(reply.code, reply.detail)
        raise TransportFailure(f"unexpected reply frame {type(reply).__name__}")


def rows(doc: str) -> list[list[str]]:
    """Split a reply document into pipe-separated rows, skipping blanks."""
    return [line.split("|") for line in doc.split("\n") if line]
