#!/usr/bin/env python3
"""Two-node demo world: node B owns code Wa10 and auto-sends a work profile.

Node A is the requesting side; its API (and optionally the HTTP bridge for
the web client) is what you point the CLI or browser at. B's registration
happens before the clock starts, so `gfcx exchange Wa10` works right away.

Prints:
    READY|A|<api_port>|<token_path>|<endpoint_hex>
    READY|B|<api_port>|<token_path>|<endpoint_hex>
    HTTP|<port>                      (when --http-port is given)
"""

import argparse
import signal
import sys
import threading
import time
from pathlib import Path

try:
    import gfcx  # noqa: F401
except ImportError:
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from gfcx.api import ApiServer, NodeApi, build_http_server
from gfcx.netsim import NetConfig
from gfcx.node import RegistrationPhase
from gfcx.profiles import EMAIL, MOBILE_NUMBER, NAME, ProfileField
from gfcx.registry import Registry
from gfcx.world import World

from run_node import start_pump


def register_code(world: World, node, code: str, phone: str) -> None:
    flow = node.begin_code_registration(code, phone)
    world.run_until_idle(world.sim.now_ms + 10_000)
    if flow.phase is not RegistrationPhase.CHALLENGED:
        raise RuntimeError(f"no challenge for {code}: {flow.phase}")
    otp = world.registry.otp_inbox.latest(node.my_phone or flow.phone)
    node.submit_registration_otp(otp)
    world.run_until_idle(world.sim.now_ms + 10_000)
    if flow.phase is not RegistrationPhase.ACTIVE:
        raise RuntimeError(f"registration failed for {code}: {flow.detail}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dir", required=True, help="base directory for both node dirs")
    parser.add_argument("--http-port", type=int, default=None, help="HTTP bridge for node A")
    parser.add_argument("--http-port-b", type=int, default=None, help="HTTP bridge for node B")
    parser.add_argument("--static", default=None, help="static assets served on the HTTP port")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--ask-first", action="store_true", help="node B asks before sending")
    parser.add_argument("--print-otp", action="store_true", help="surface registry OTPs on stdout")
    args = parser.parse_args()

    base = Path(args.dir)
    otp_sink = None
    if args.print_otp:
        otp_sink = lambda phone, otp, code: print(
            f"OTP|{phone.digits}|{otp}|{code.text}", flush=True
        )
    world = World(
        NetConfig(seed=args.seed), registry=Registry(otp_sink=otp_sink), epoch_s=int(time.time())
    )
    node_a = world.add_node(name="alice", data_dir=base / "a")
    node_b = world.add_node(name="bob", data_dir=base / "b")

    work = node_b.create_profile(
        "work",
        [
            ProfileField(NAME, "Bob Host"),
            ProfileField(MOBILE_NUMBER, "+15550001111"),
            ProfileField(EMAIL, "bob@example.org"),
        ],
    )
    if args.ask_first:
        from gfcx.node import Matcher, MatcherKind, PolicyRule, RuleMode

        node_b.set_rules(
            [PolicyRule("default", Matcher(MatcherKind.ANY), work.profile_id, RuleMode.ASK_FIRST)]
        )
    register_code(world, node_b, "Wa10", "+15550001111")

    server_a = ApiServer(NodeApi(node_a))
    server_b = ApiServer(NodeApi(node_b))
    server_a.start()
    server_b.start()

    http_server = None
    if args.http_port is not None:
        http_server = build_http_server(NodeApi(node_a), args.static, port=args.http_port)
        threading.Thread(target=http_server.serve_forever, daemon=True).start()
    http_server_b = None
    if args.http_port_b is not None:
        http_server_b = build_http_server(NodeApi(node_b), None, port=args.http_port_b)
        threading.Thread(target=http_server_b.serve_forever, daemon=True).start()

    stop = threading.Event()
    start_pump(world, stop)

    print(f"READY|A|{server_a.port}|{base / 'a' / 'token'}|{node_a.endpoint.hex}", flush=True)
    print(f"READY|B|{server_b.port}|{base / 'b' / 'token'}|{node_b.endpoint.hex}", flush=True)
    if http_server is not None:
        print(f"HTTP|{http_server.server_address[1]}", flush=True)
    if http_server_b is not None:
        print(f"HTTPB|{http_server_b.server_address[1]}", flush=True)

    signal.signal(signal.SIGTERM, lambda s, f: stop.set())
    signal.signal(signal.SIGINT, lambda s, f: stop.set())
    while not stop.wait(0.2):
        pass
    server_a.stop()
    server_b.stop()
    if http_server is not None:
        http_server.shutdown()
    if http_server_b is not None:
        http_server_b.shutdown()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
