"""Command-line client for a running node daemon.

Every subcommand is a thin shim over one local API endpoint: the document
the node returns is what gets printed (with ``--format plain`` rendering
pipes as columns). Exit codes: 0 success, 1 validation errors and protocol
refusals, 2 transport failures (node unreachable, timeouts). Errors go to
stderr as one ``ERROR|<code>|<detail>`` line.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import api
from .client import ApiFailureError, NodeClient, TransportFailure

DEFAULT_NODE = "127.0.0.1:7801"

# These failure codes mean "the network, not your input".
TRANSPORT_CODES = frozenset({"Transport", "TimedOut"})


class CliError(Exception):
    def __init__(self, code: str, detail: str, exit_code: int) -> None:
        super().__init__(f"{code}: {detail}")
        self.code = code
        self.detail = detail
        self.exit_code = exit_code


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise CliError("Usage", message, 1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="gfcx", description="Exchange contact cards through short codes.")
    parser.add_argument("--node", default=None, help="node address host:port (env GFCX_NODE)")
    parser.add_argument("--token", default=None, help="path to the node token file (env GFCX_TOKEN)")
    parser.add_argument("--format", choices=("plain", "lines"), default="lines")
    sub = parser.add_subparsers(dest="command", metavar="command")

    profile = sub.add_parser("profile", parents=[], help="manage profiles").add_subparsers(
        dest="action", metavar="action"
    )
    create = profile.add_parser("create", help="create a profile")
    create.add_argument("--name", required=True)
    create.add_argument("--field", action="append", default=[], metavar="KIND=VALUE")
    profile.add_parser("list", help="list profiles")
    show = profile.add_parser("show", help="print one profile document")
    show.add_argument("ref", help="profile id or name")
    update = profile.add_parser("update", help="replace a profile's name and fields")
    update.add_argument("--id", required=True)
    update.add_argument("--name", required=True)
    update.add_argument("--field", action="append", default=[], metavar="KIND=VALUE")
    delete = profile.add_parser("delete", help="delete a profile")
    delete.add_argument("id")

    code = sub.add_parser("code", help="manage my identity code").add_subparsers(
        dest="action", metavar="action"
    )
    register = code.add_parser("register", help="claim a code for this node")
    register.add_argument("code")
    register.add_argument("phone")
    register.add_argument("--otp", default=None, help="one-time password (read from stdin otherwise)")
    code.add_parser("status", help="show registration status")

    exchange = sub.add_parser("exchange", help="request a peer's card by code")
    exchange.add_argument("code")
    exchange.add_argument("--transport", choices=("proximity", "wide_area"), default=None)
    exchange.add_argument("--peer", default=None, help="peer endpoint hex (proximity)")

    room = sub.add_parser("room", help="broadcast rooms").add_subparsers(dest="action", metavar="action")
    room.add_parser("host", help="open a room hosted by this node")
    join = room.add_parser("join", help="join a hosted room")
    join.add_argument("room", help="room id hex")
    join.add_argument("host", help="host endpoint hex")
    cast = room.add_parser("cast", help="broadcast a profile to a room")
    cast.add_argument("room", help="room id hex")
    cast.add_argument("profile", help="profile id or name")

    contacts = sub.add_parser("contacts", help="received cards").add_subparsers(
        dest="action", metavar="action"
    )
    contacts.add_parser("list", help="list received cards")
    search = contacts.add_parser("search", help="filter received cards")
    search.add_argument("--text", default=None)
    search.add_argument("--class", dest="classification", default=None)
    search.add_argument("--code", default=None)
    search.add_argument("--since", type=int, default=None)
    search.add_argument("--until", type=int, default=None)
    classify = contacts.add_parser("classify", help="label a received card")
    classify.add_argument("entry")
    classify.add_argument("label")

    export = sub.add_parser("export", help="export data").add_subparsers(dest="action", metavar="action")
    vcard = export.add_parser("vcard", help="print a received card as vCard 3.0")
    vcard.add_argument("entry")

    return parser


def _client(args: argparse.Namespace) -> NodeClient:
    address = args.node or os.environ.get("GFCX_NODE") or DEFAULT_NODE
    token_path = args.token or os.environ.get("GFCX_TOKEN")
    if not token_path:
        raise CliError("Config", "no token file: pass --token or set GFCX_TOKEN", 1)
    try:
        token = Path(token_path).read_text(encoding="utf-8").strip()
    except OSError as exc:
        raise CliError("Config", f"cannot read token file: {exc}", 1) from exc
    return NodeClient(address, token)


def _field_lines(specs: list[str]) -> list[str]:
    lines = []
    for spec in specs:
        kind, sep, value = spec.partition("=")
        if not sep or not kind or not value:
            raise CliError("Usage", f"fields are KIND=VALUE, got {spec!r}", 1)
        lines.append(f"F|{kind}|{value}")
    return lines


def _emit(doc: str, fmt: str, raw: bool = False) -> None:
    if raw:
        sys.stdout.write(doc)
        if not doc.endswith("\n"):
            sys.stdout.write("\n")
        return
    for line in doc.split("\n"):
        if not line:
            continue
        print(line if fmt == "lines" else "  ".join(line.split("|")))


def _run(args: argparse.Namespace) -> int:
    fmt = args.format
    command = args.command
    action = getattr(args, "action", None)

    if command == "profile":
        client = _client(args)
        if action == "create":
            doc = client.call(api.PROFILE_CREATE, [f"NAME|{args.name}", *_field_lines(args.field)])
        elif action == "list":
            doc = client.call(api.PROFILE_LIST)
        elif action == "show":
            _emit(client.call(api.PROFILE_SHOW, [f"REF|{args.ref}"]), fmt, raw=True)
            return 0
        elif action == "update":
            doc = client.call(
                api.PROFILE_UPDATE,
                [f"ID|{args.id}", f"NAME|{args.name}", *_field_lines(args.field)],
            )
        elif action == "delete":
            doc = client.call(api.PROFILE_DELETE, [f"ID|{args.id}"])
        else:
            raise CliError("Usage", "profile needs an action (create|list|show|update|delete)", 1)
        _emit(doc, fmt)
        return 0

    if command == "code":
        client = _client(args)
        if action == "register":
            doc = client.call(api.CODE_REGISTER, [f"CODE|{args.code}", f"PHONE|{args.phone}"])
            _emit(doc, fmt)
            otp = args.otp if args.otp is not None else sys.stdin.readline().strip()
            if not otp:
                raise CliError("Validation", "no OTP provided", 1)
            _emit(client.call(api.CODE_VERIFY, [f"OTP|{otp}"]), fmt)
            return 0
        if action == "status":
            _emit(client.call(api.CODE_STATUS), fmt)
            return 0
        raise CliError("Usage", "code needs an action (register|status)", 1)

    if command == "exchange":
        client = _client(args)
        lines = [f"CODE|{args.code}"]
        if args.transport:
            lines.append(f"TRANSPORT|{args.transport}")
        if args.peer:
            lines.append(f"PEER|{args.peer}")
        _emit(client.call(api.EXCHANGE, lines), fmt)
        return 0

    if command == "room":
        client = _client(args)
        if action == "host":
            doc = client.call(api.ROOM_HOST)
        elif action == "join":
            doc = client.call(api.ROOM_JOIN, [f"ROOM|{args.room}", f"HOST|{args.host}"])
        elif action == "cast":
            doc = client.call(api.ROOM_CAST, [f"ROOM|{args.room}", f"PROFILE|{args.profile}"])
        else:
            raise CliError("Usage", "room needs an action (host|join|cast)", 1)
        _emit(doc, fmt)
        return 0

    if command == "contacts":
        client = _client(args)
        if action == "list":
            doc = client.call(api.CONTACT_LIST)
        elif action == "search":
            lines = []
            for key, value in (
                ("TEXT", args.text),
                ("CLASS", args.classification),
                ("CODE", args.code),
                ("SINCE", args.since),
                ("UNTIL", args.until),
            ):
                if value is not None:
                    lines.append(f"{key}|{value}")
            doc = client.call(api.CONTACT_SEARCH, lines)
        elif action == "classify":
            doc = client.call(api.CONTACT_CLASSIFY, [f"ENTRY|{args.entry}", f"CLASS|{args.label}"])
        else:
            raise CliError("Usage", "contacts needs an action (list|search|classify)", 1)
        _emit(doc, fmt)
        return 0

    if command == "export":
        if action != "vcard":
            raise CliError("Usage", "export needs an action (vcard)", 1)
        client = _client(args)
        _emit(client.call(api.EXPORT_VCARD, [f"ENTRY|{args.entry}"]), fmt, raw=True)
        return 0

    raise CliError("Usage", "no command given (see --help)", 1)


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _run(args)
    except CliError as exc:
        print(f"ERROR|{exc.code}|{exc.detail}", file=sys.stderr)
        return exc.exit_code
    except ApiFailureError as exc:
        print(f"ERROR|{exc.code}|{exc.detail}", file=sys.stderr)
        return 2 if exc.code in TRANSPORT_CODES else 1
    except TransportFailure as exc:
        print(f"ERROR|Transport|{exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
