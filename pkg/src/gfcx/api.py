"""Local API for one node: framed line documents over a loopback socket.

Every request is one frame (msg types 0x40..0x53, one per endpoint) whose
payload is a line document starting with ``TOKEN|<hex>``. Replies are
API_OK frames carrying a line document, or API_ERROR frames carrying
``ERROR|<code>|<detail>``. The HTTP bridge exposes the same documents at
``POST /api/<endpoint>`` and serves the web client's static assets, so a
browser can drive the node without speaking the socket framing.
"""

from __future__ import annotations

import hmac
import socket
import socketserver
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable

from . import wire
from .codes import CodeError
from .exchange import RoomClosed, SessionState, UnknownRoom
from .netsim import NotInRange, UnknownEndpoint
from .node import (
    ApprovalState,
    ContactQuery,
    Matcher,
    Node,
    NotFoundError,
    PolicyRule,
    ProfileField,
    RegistrationPhase,
    RuleMode,
    ValidationError,
)
from .profiles import FieldKind, Profile
from .transport import TransportClass

PROFILE_LIST = 0x40
PROFILE_CREATE = 0x41
PROFILE_UPDATE = 0x42
PROFILE_DELETE = 0x43
PROFILE_SHOW = 0x44
POLICY_LIST = 0x45
POLICY_SET = 0x46
CODE_REGISTER = 0x47
CODE_VERIFY = 0x48
CODE_STATUS = 0x49
EXCHANGE = 0x4A
APPROVAL_LIST = 0x4B
APPROVAL_RESOLVE = 0x4C
ROOM_HOST = 0x4D
ROOM_JOIN = 0x4E
ROOM_CAST = 0x4F
CONTACT_LIST = 0x50
CONTACT_SEARCH = 0x51
CONTACT_CLASSIFY = 0x52
EXPORT_VCARD = 0x53
ROOM_STATUS = 0x54

ENDPOINT_NAMES: dict[int, str] = {
    PROFILE_LIST: "profile_list",
    PROFILE_CREATE: "profile_create",
    PROFILE_UPDATE: "profile_update",
    PROFILE_DELETE: "profile_delete",
    PROFILE_SHOW: "profile_show",
    POLICY_LIST: "policy_list",
    POLICY_SET: "policy_set",
    CODE_REGISTER: "code_register",
    CODE_VERIFY: "code_verify",
    CODE_STATUS: "code_status",
    EXCHANGE: "exchange",
    APPROVAL_LIST: "approval_list",
    APPROVAL_RESOLVE: "approval_resolve",
    ROOM_HOST: "room_host",
    ROOM_JOIN: "room_join",
    ROOM_CAST: "room_cast",
    CONTACT_LIST: "contact_list",
    CONTACT_SEARCH: "contact_search",
    CONTACT_CLASSIFY: "contact_classify",
    EXPORT_VCARD: "export_vcard",
    ROOM_STATUS: "room_status",
}
ENDPOINT_TYPES: dict[str, int] = {name: msg_type for msg_type, name in ENDPOINT_NAMES.items()}


class ApiFailure(Exception):
    def __init__(self, code: str, detail: str) -> None:
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail


def _parse_request(doc: str) -> tuple[str, list[str]]:
    lines = [line for line in doc.split("\n") if line != ""]
    if not lines or not lines[0].startswith("TOKEN|"):
        raise ApiFailure("Unauthorized", "the first payload line must be TOKEN|<hex>")
    return lines[0][len("TOKEN|") :], lines[1:]


def _args(lines: list[str]) -> dict[str, str]:
    """First occurrence wins for single-valued keys."""
    out: dict[str, str] = {}
    for line in lines:
        key, _, value = line.partition("|")
        out.setdefault(key, value)
    return out


def _require(args: dict[str, str], key: str) -> str:
    value = args.get(key)
    if not value:
        raise ApiFailure("Validation", f"missing {key}| line")
    return value


def _fields_from_lines(lines: list[str]) -> list[ProfileField]:
    fields = []
    for line in lines:
        if not line.startswith("F|"):
            continue
        parts = line.split("|")
        if len(parts) != 3:
            raise ApiFailure("Validation", "field lines are F|<KIND>|<value>")
        fields.append(ProfileField(FieldKind.from_token(parts[1]), parts[2]))
    return fields


def _profile_line(profile: Profile) -> str:
    return (
        f"PROFILE|{profile.profile_id}|{profile.name}|{len(profile.fields)}"
        f"|{profile.created_at}|{profile.updated_at}"
    )


def _hex_bytes(value: str, size: int, what: str) -> bytes:
    try:
        raw = bytes.fromhex(value)
    except ValueError as exc:
        raise ApiFailure("Validation", f"{what} must be hex") from exc
    if len(raw) != size:
        raise ApiFailure("Validation", f"{what} must be {size} bytes of hex")
    return raw


class NodeApi:
    """Dispatches one API call against a node; every handler returns a doc."""

    def __init__(self, node: Node, wait_timeout_s: float = 10.0) -> None:
        self.node = node
        self.wait_timeout_s = wait_timeout_s
        self._handlers: dict[int, Callable[[list[str]], str]] = {
            PROFILE_LIST: self._profile_list,
            PROFILE_CREATE: self._profile_create,
            PROFILE_UPDATE: self._profile_update,
            PROFILE_DELETE: self._profile_delete,
            PROFILE_SHOW: self._profile_show,
            POLICY_LIST: self._policy_list,
            POLICY_SET: self._policy_set,
            CODE_REGISTER: self._code_register,
            CODE_VERIFY: self._code_verify,
            CODE_STATUS: self._code_status,
            EXCHANGE: self._exchange,
            APPROVAL_LIST: self._approval_list,
            APPROVAL_RESOLVE: self._approval_resolve,
            ROOM_HOST: self._room_host,
            ROOM_JOIN: self._room_join,
            ROOM_CAST: self._room_cast,
            CONTACT_LIST: self._contact_list,
            CONTACT_SEARCH: self._contact_search,
            CONTACT_CLASSIFY: self._contact_classify,
            EXPORT_VCARD: self._export_vcard,
            ROOM_STATUS: self._room_status,
        }

    def dispatch(self, call: wire.ApiCall) -> wire.ApiOk | wire.ApiErr:
        try:
            token, lines = _parse_request(call.doc)
            if not hmac.compare_digest(token, self.node.token):
                raise ApiFailure("Unauthorized", "bad bearer token")
            handler = self._handlers.get(call.msg_type)
            if handler is None:
                raise ApiFailure("Validation", f"unknown endpoint {call.msg_type:#04x}")
            return wire.ApiOk(handler(lines))
        except ApiFailure as exc:
            return wire.ApiErr(exc.code, exc.detail)
        except CodeError as exc:
            return wire.ApiErr(type(exc).__name__, str(exc))
        except NotFoundError as exc:
            return wire.ApiErr("NotFound", str(exc))
        except UnknownRoom as exc:
            return wire.ApiErr("UnknownRoom", str(exc))
        except RoomClosed as exc:
            return wire.ApiErr("RoomClosed", str(exc))
        except UnknownEndpoint as exc:
            return wire.ApiErr("NotFound", str(exc))
        except NotInRange as exc:
            return wire.ApiErr("Transport", str(exc))
        except (ValidationError, ValueError) as exc:
            return wire.ApiErr("Validation", str(exc))

    # -- profiles --

    def _profile_list(self, lines: list[str]) -> str:
        return "\n".join(_profile_line(p) for p in self.node.list_profiles())

    def _profile_create(self, lines: list[str]) -> str:
        args = _args(lines)
        profile = self.node.create_profile(_require(args, "NAME"), _fields_from_lines(lines))
        return _profile_line(profile)

    def _profile_update(self, lines: list[str]) -> str:
        args = _args(lines)
        profile = self.node.update_profile(
            _require(args, "ID"), _require(args, "NAME"), _fields_from_lines(lines)
        )
        return _profile_line(profile)

    def _profile_delete(self, lines: list[str]) -> str:
        profile_id = _require(_args(lines), "ID")
        self.node.delete_profile(profile_id)
        return f"DELETED|{profile_id}"

    def _profile_show(self, lines: list[str]) -> str:
        from . import gfcdoc

        profile = self.node.profile_by_ref(_require(_args(lines), "REF"))
        return gfcdoc.serialize_profile(profile).decode("utf-8")

    # -- policy --

    def _policy_list(self, lines: list[str]) -> str:
        return "\n".join(
            f"RULE|{r.rule_id}|{r.matcher.token}|{r.profile_id or ''}|{r.mode.value}"
            for r in self.node.list_rules()
        )

    def _policy_set(self, lines: list[str]) -> str:
        rules = []
        counter = 0
        for line in lines:
            if not line.startswith("RULE|"):
                continue
            parts = line.split("|")
            if len(parts) != 5:
                raise ApiFailure("Validation", "rule lines are RULE|<id>|<matcher>|<profile>|<mode>")
            rule_id = parts[1]
            if not rule_id or rule_id == "-":
                counter += 1
                rule_id = f"rule{counter:02d}"
            mode = {"AUTO": RuleMode.AUTO, "ASK": RuleMode.ASK_FIRST}.get(parts[4])
            if mode is None:
                raise ApiFailure("Validation", "rule mode must be AUTO or ASK")
            rules.append(PolicyRule(rule_id, Matcher.from_token(parts[2]), parts[3] or None, mode))
        self.node.set_rules(rules)
        return self._policy_list([])

    # -- registration --

    def _code_register(self, lines: list[str]) -> str:
        args = _args(lines)
        flow = self.node.begin_code_registration(_require(args, "CODE"), _require(args, "PHONE"))
        if not flow.challenged.wait(self.wait_timeout_s):
            raise ApiFailure("TimedOut", "no challenge arrived from the registry")
        if flow.phase is RegistrationPhase.FAILED:
            raise ApiFailure(flow.fail_code or "Transport", flow.detail)
        challenge_id = flow.challenge_id or b""
        return f"CHALLENGE|{challenge_id.hex()}|{flow.expires_at}"

    def _code_verify(self, lines: list[str]) -> str:
        args = _args(lines)
        flow = self.node.submit_registration_otp(_require(args, "OTP"))
        if not flow.done.wait(self.wait_timeout_s):
            raise ApiFailure("TimedOut", "no confirmation arrived from the registry")
        if flow.phase is RegistrationPhase.FAILED:
            raise ApiFailure(flow.fail_code or "Transport", flow.detail)
        return f"ACTIVE|{flow.code.text}"

    def _code_status(self, lines: list[str]) -> str:
        code, status = self.node.registration_status()
        return f"CODE|{code or ''}|{status}"

    # -- exchange --

    def _exchange(self, lines: list[str]) -> str:
        args = _args(lines)
        code = _require(args, "CODE")
        transport = TransportClass.WIDE_AREA
        if "TRANSPORT" in args:
            transport = TransportClass.from_token(args["TRANSPORT"])
        peer = None
        if "PEER" in args:
            peer = self.node.sim.endpoint(_hex_bytes(args["PEER"], 8, "PEER"))
        session = self.node.request_exchange(code, transport, peer)
        if not session.done.wait(self.wait_timeout_s):
            raise ApiFailure("TimedOut", "the exchange did not finish in time")
        if session.state is SessionState.COMPLETED:
            return f"SAVED|{session.saved_entry_id}|{session.target_code.text}"
        if session.state is SessionState.DENIED:
            reason = wire.DENY_REASON_NAMES.get(session.deny_reason or 0, "refused")
            raise ApiFailure("Denied", f"the peer denied the request ({reason})")
        raise ApiFailure("TimedOut", "no reply from the peer")

    # -- approvals --

    def _approval_list(self, lines: list[str]) -> str:
        out = []
        for approval in self.node.list_approvals():
            out.append(
                f"APPROVAL|{approval.request_id.hex()}|{approval.requester_code or ''}"
                f"|{int(approval.arrived_at_ms)}|{approval.suggested_profile_id or ''}"
            )
        return "\n".join(out)

    def _approval_resolve(self, lines: list[str]) -> str:
        args = _args(lines)
        request_id = _hex_bytes(_require(args, "REQUEST"), 16, "REQUEST")
        action = _require(args, "ACTION")
        if action == "approve":
            self.node.approve_request(request_id, args.get("PROFILE") or None)
        elif action == "refuse":
            self.node.refuse_request(request_id)
        else:
            raise ApiFailure("Validation", "ACTION must be approve or refuse")
        return f"RESOLVED|{request_id.hex()}|{action}"

    # -- rooms --

    def _room_host(self, lines: list[str]) -> str:
        room = self.node.host_room()
        return f"ROOM|{room.room_id.hex()}|{self.node.endpoint.hex}"

    def _room_join(self, lines: list[str]) -> str:
        args = _args(lines)
        room_id = _hex_bytes(_require(args, "ROOM"), 16, "ROOM")
        host = self.node.sim.endpoint(_hex_bytes(_require(args, "HOST"), 8, "HOST"))
        joined = self.node.join_room(room_id, host)
        if not joined.joined.wait(self.wait_timeout_s):
            raise ApiFailure("TimedOut", "the room host did not answer")
        host_code = joined.host_code.text if joined.host_code else ""
        return f"JOINED|{room_id.hex()}|{host_code}"

    def _room_cast(self, lines: list[str]) -> str:
        args = _args(lines)
        room_id = _hex_bytes(_require(args, "ROOM"), 16, "ROOM")
        report = self.node.broadcast_room(room_id, _require(args, "PROFILE"))
        return f"CAST|{room_id.hex()}|{report.seq}|{report.delivered_count}|{report.total}"

    def _room_status(self, lines: list[str]) -> str:
        room_id = _hex_bytes(_require(_args(lines), "ROOM"), 16, "ROOM")
        room = self.node.room_status(room_id)
        open_flag = "open" if room.open else "closed"
        return f"ROOMSTAT|{room_id.hex()}|{len(room.members)}|{room.next_seq}|{open_flag}"

    # -- contacts --

    def _entry_lines(self, entries) -> str:
        out = []
        for entry in entries:
            card = entry.card
            out.append(
                f"ENTRY|{entry.entry_id}|{card.source_code.text}|{card.received_at}"
                f"|{card.transport.value}|{card.classification or ''}|{card.profile_snapshot.name}"
            )
        return "\n".join(out)

    def _contact_list(self, lines: list[str]) -> str:
        return self._entry_lines(self.node.contacts.all())

    def _contact_search(self, lines: list[str]) -> str:
        args = _args(lines)

        def int_arg(key: str) -> int | None:
            if key not in args:
                return None
            try:
                return int(args[key])
            except ValueError as exc:
                raise ApiFailure("Validation", f"{key} must be an integer") from exc

        query = ContactQuery(
            text=args.get("TEXT") or None,
            classification=args.get("CLASS") or None,
            source_code=args.get("CODE") or None,
            since_ms=int_arg("SINCE"),
            until_ms=int_arg("UNTIL"),
        )
        return self._entry_lines(self.node.search_contacts(query))

    def _contact_classify(self, lines: list[str]) -> str:
        args = _args(lines)
        entry_id = _require(args, "ENTRY")
        label = _require(args, "CLASS")
        self.node.classify_contact(entry_id, label)
        return f"CLASSIFIED|{entry_id}|{label}"

    def _export_vcard(self, lines: list[str]) -> str:
        return self.node.export_vcard_entry(_require(_args(lines), "ENTRY"))


# -- socket server ---------------------------------------------------------


def recv_exact(sock: socket.socket, size: int) -> bytes | None:
    buf = b""
    while len(buf) < size:
        chunk = sock.recv(size - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def read_frame(sock: socket.socket) -> bytes | None:
    header = recv_exact(sock, wire.HEADER_LEN)
    if header is None:
        return None
    _, _, _, payload_len = wire.HEADER.unpack(header)
    if payload_len > wire.MAX_PAYLOAD:
        raise wire.PayloadTooLarge(f"declared payload of {payload_len} bytes")
    payload = recv_exact(sock, payload_len) if payload_len else b""
    if payload is None and payload_len:
        return None
    return header + (payload or b"")


class ApiServer:
    """Threaded loopback TCP server speaking the framed API."""

    def __init__(self, api: NodeApi, host: str = "127.0.0.1", port: int = 0) -> None:
        self.api = api
        dispatch = self.api.dispatch

        class Handler(socketserver.BaseRequestHandler):
            def handle(self) -> None:
                sock = self.request
                while True:
                    try:
                        frame = read_frame(sock)
                    except (wire.WireError, OSError):
                        return
                    if frame is None:
                        return
                    try:
                        msg = wire.decode_frame(frame)
                    except wire.WireError as exc:
                        reply: wire.Message = wire.ApiErr("Validation", str(exc))
                    else:
                        if isinstance(msg, wire.ApiCall):
                            reply = dispatch(msg)
                        else:
                            reply = wire.ApiErr("Validation", "expected an API call frame")
                    try:
                        sock.sendall(wire.encode_frame(reply))
                    except OSError:
                        return

        class Server(socketserver.ThreadingTCPServer):
            allow_reuse_address = True
            daemon_threads = True

        self._server = Server((host, port), Handler)
        self.host, self.port = self._server.server_address
        self._thread: threading.Thread | None = None

    def start(self) -> None:
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5.0)


# -- HTTP bridge for the web client ----------------------------------------


_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".map": "application/json",
    ".json": "application/json",
    ".svg": "image/svg+xml",
}

_HTTP_STATUS = {
    "Unauthorized": 401,
    "NotFound": 404,
    "UnknownRoom": 404,
    "TimedOut": 504,
    "Denied": 409,
}


def build_http_server(
    api: NodeApi, static_dir: str | Path | None, host: str = "127.0.0.1", port: int = 0
) -> ThreadingHTTPServer:
    root = Path(static_dir).resolve() if static_dir is not None else None

    class Bridge(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt: str, *args) -> None:
            pass

        def _send_text(self, status: int, body: str, content_type: str = "text/plain; charset=utf-8") -> None:
            data = body.encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(data)))
            self._cors()
            self.end_headers()
            self.wfile.write(data)

        def _cors(self) -> None:
            # Loopback-only service; the bearer token is the actual gate.
            self.send_header("Access-Control-Allow-Origin", "*")
            self.send_header("Access-Control-Allow-Headers", "Content-Type")
            self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")

        def do_OPTIONS(self) -> None:
            self.send_response(204)
            self.send_header("Content-Length", "0")
            self._cors()
            self.end_headers()

        def do_POST(self) -> None:
            if not self.path.startswith("/api/"):
                self._send_text(404, "ERROR|NotFound|unknown path")
                return
            name = self.path[len("/api/") :]
            msg_type = ENDPOINT_TYPES.get(name)
            if msg_type is None:
                self._send_text(404, f"ERROR|NotFound|unknown endpoint {name}")
                return
            length = int(self.headers.get("Content-Length", "0"))
            body = self.rfile.read(length).decode("utf-8", errors="replace")
            reply = api.dispatch(wire.ApiCall(msg_type, body))
            if isinstance(reply, wire.ApiOk):
                self._send_text(200, reply.doc)
            else:
                status = _HTTP_STATUS.get(reply.code, 400)
                self._send_text(status, f"ERROR|{reply.code}|{reply.detail}")

        def do_GET(self) -> None:
            if self.path == "/api/health":
                self._send_text(200, "OK")
                return
            if root is None:
                self._send_text(404, "no static assets configured")
                return
            rel = self.path.lstrip("/") or "index.html"
            rel = rel.split("?", 1)[0]
            target = (root / rel).resolve()
            if not str(target).startswith(str(root)) or not target.is_file():
                self._send_text(404, "not found")
                return
            data = target.read_bytes()
            content_type = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
            self.send_response(200)
            self.send_header("Content-Type", content_type)
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

    server = ThreadingHTTPServer((host, port), Bridge)
    server.daemon_threads = True
    return server
