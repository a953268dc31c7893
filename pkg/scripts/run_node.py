#!/usr/bin/env python3
"""Run one node with its local API on a loopback port.

The node lives inside an embedded deterministic world (simulator plus
registry); a pump thread advances simulated time in lockstep with wall
time, so timers and simulated latencies behave naturally. Prints one
READY|<api_port>|<endpoint_hex> line once the API is accepting calls.
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
from gfcx.world import World


def start_pump(world: World, stop: threading.Event, tick_s: float = 0.02) -> threading.Thread:
    offset_ms = world.sim.now_ms
    start = time.monotonic()

    def run() -> None:
        while not stop.wait(tick_s):
            target_ms = offset_ms + (time.monotonic() - start) * 1000.0
            world.run_until(target_ms)

    thread = threading.Thread(target=run, daemon=True)
    thread.start()
    return thread


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dir", required=True, help="node data directory")
    parser.add_argument("--api-port", type=int, default=0, help="0 picks an ephemeral port")
    parser.add_argument("--http-port", type=int, default=None, help="enable the HTTP bridge")
    parser.add_argument("--static", default=None, help="static asset directory for the web client")
    parser.add_argument("--net-config", default=None, help="key = value network config file")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--registry-log", default=None)
    parser.add_argument("--print-otp", action="store_true", help="surface registry OTPs on stdout")
    args = parser.parse_args()

    if args.net_config:
        config = NetConfig.from_file(args.net_config)
    else:
        config = NetConfig(seed=args.seed)

    from gfcx.registry import Registry

    otp_sink = None
    if args.print_otp:
        otp_sink = lambda phone, otp, code: print(
            f"OTP|{phone.digits}|{otp}|{code.text}", flush=True
        )
    registry = Registry(otp_sink=otp_sink, log_path=args.registry_log)

    world = World(config, registry=registry, epoch_s=int(time.time()))
    node = world.add_node(name="node", data_dir=args.dir)

    server = ApiServer(NodeApi(node), port=args.api_port)
    server.start()

    http_server = None
    if args.http_port is not None:
        http_server = build_http_server(NodeApi(node), args.static, port=args.http_port)
        threading.Thread(target=http_server.serve_forever, daemon=True).start()

    stop = threading.Event()
    start_pump(world, stop)

    print(f"READY|{server.port}|{node.endpoint.hex}", flush=True)
    if http_server is not None:
        print(f"HTTP|{http_server.server_address[1]}", flush=True)

    def shutdown(signum, frame) -> None:
        stop.set()

    signal.signal(signal.SIGTERM, shutdown)
    signal.signal(signal.SIGINT, shutdown)
    while not stop.wait(0.2):
        pass
    server.stop()
    if http_server is not None:
        http_server.shutdown()
    node.close()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
