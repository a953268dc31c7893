"""Acceptance suite: every criterion at its stated tolerance and budget.

Each test prints one PASS line (visible with ``pytest -s`` or ``-v``);
failures surface as ordinary assertion errors.
"""

import itertools
import math
import random
import subprocess
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from gfcx import api
from gfcx.client import NodeClient, rows
from gfcx.codes import CodeError, GcCode, validate_code
from gfcx.exchange import SessionState
from gfcx.gfcdoc import GfcDocError, parse_profile, serialize_profile
from gfcx.netsim import LinkConfig, NetConfig
from gfcx.node import RegistrationPhase
from gfcx.profiles import PhoneNumber, ProfileField, MOBILE_NUMBER, NAME
from gfcx.registry import BindingStatus, CodeTaken, Registry
from gfcx.vcard import export_vcard
from gfcx.world import World
from testutil import ALPHABET, random_card, random_profile
from vcard_check import check_vcard

REPO = Path(__file__).resolve().parents[1]
RUN_NODE = REPO / "scripts" / "run_node.py"


def report(name: str, started: float, budget_s: float) -> None:
    elapsed = time.monotonic() - started
    assert elapsed < budget_s, f"{name} took {elapsed:.1f}s, budget {budget_s}s"
    print(f"ACCEPTANCE {name}: PASS ({elapsed:.2f}s)")


def independent_code_rule(raw: str) -> bool:
    allowed = {chr(b) for b in range(0x21, 0x7F)} - set(':|"')
    return 2 <= len(raw) <= 6 and all(c in allowed for c in raw)


def test_code_validity_suite():
    started = time.monotonic()
    # 16 symbols: valid ones, the three reserved delimiters, space, a
    # control character, and a non-ASCII letter.
    reduced = ["W", "a", "1", "0", "Z", "9", "~", "!", ".", "-", ":", "|", '"', " ", "\x1f", "é"]
    assert len(reduced) == 16
    checked = 0
    for length in range(3):
        for combo in itertools.product(reduced, repeat=length):
            raw = "".join(combo)
            try:
                code = validate_code(raw)
                accepted = True
                assert code.text == raw
            except CodeError:
                accepted = False
            assert accepted == independent_code_rule(raw), repr(raw)
            checked += 1
    assert checked == 1 + 16 + 256

    rng = random.Random(20240001)
    pool = ALPHABET + [":", "|", '"', " ", "\t", "\x00", "é", "中", "\U0001f642"]
    for _ in range(100_000):
        raw = "".join(rng.choice(pool) for _ in range(rng.randint(3, 7)))
        try:
            validate_code(raw)
            accepted = True
        except CodeError:
            accepted = False
        assert accepted == independent_code_rule(raw), repr(raw)
    report("code-validity", started, 10.0)


def test_gfc_round_trip_and_fuzz():
    started = time.monotonic()
    rng = random.Random(20240002)
    for _ in range(10_000):
        profile = random_profile(rng, max_fields=6)
        assert parse_profile(serialize_profile(profile)) == profile

    bases = [serialize_profile(random_profile(rng, max_fields=4)) for _ in range(20)]
    for _ in range(100_000):
        data = bytearray(rng.choice(bases))
        for _ in range(rng.randint(1, 5)):
            op = rng.randrange(4)
            if op == 0 and data:
                data[rng.randrange(len(data))] = rng.randrange(256)
            elif op == 1 and data:
                del data[rng.randrange(len(data))]
            elif op == 2:
                data.insert(rng.randrange(len(data) + 1), rng.randrange(256))
            elif data:
                del data[rng.randrange(len(data)) :]
        try:
            parse_profile(bytes(data))
        except GfcDocError:
            pass  # rejecting is fine; crashing is not
    report("gfc-round-trip", started, 60.0)


def test_end_to_end_exchange():
    started = time.monotonic()
    world = World(NetConfig(seed=1))  # default latencies and loss rates
    requester = world.add_node("requester")
    owner = world.add_node("owner")
    owner.create_profile(
        "work", [ProfileField(NAME, "Bob"), ProfileField(MOBILE_NUMBER, "+15550001111")]
    )
    flow = owner.begin_code_registration("Wa10", "+15550001111")
    world.run_until_idle(world.sim.now_ms + 60_000)
    assert flow.phase is RegistrationPhase.CHALLENGED
    owner.submit_registration_otp(world.registry.otp_inbox.latest(flow.phone))
    world.run_until_idle(world.sim.now_ms + 60_000)
    assert flow.phase is RegistrationPhase.ACTIVE

    request_start = world.sim.now_ms
    session = requester.request_exchange("Wa10")
    while not session.terminal and world.sim.now_ms < request_start + 10_000:
        world.run_until(world.sim.now_ms + 5.0)
    assert session.state is SessionState.COMPLETED
    entries = requester.contacts.all()
    assert len(entries) == 1
    assert entries[0].card.source_code == GcCode("Wa10")
    assert entries[0].entry_id == session.saved_entry_id
    elapsed_sim = world.sim.now_ms - request_start
    assert elapsed_sim < 2000.0, f"exchange took {elapsed_sim:.0f} simulated ms"
    report("end-to-end-exchange", started, 5.0)


def _run_broadcast(members: int, loss: float, seed: int):
    config = NetConfig(
        seed=seed,
        proximity=LinkConfig(5.0, 50.0, loss),
        wide_area=LinkConfig(80.0, 300.0, 0.0),
    )
    world = World(config)
    host = world.add_node("host")
    host.my_code = GcCode("Wa10")
    profile = host.create_profile("stage", [ProfileField(NAME, "Room Host")])
    room = host.host_room()
    member_nodes = [world.add_node(f"m{i}") for i in range(members)]
    for member in member_nodes:
        host.admit_member(room.room_id, member.endpoint)
        member.attach_room(room.room_id, "Wa10", host.endpoint)
    report_ = host.broadcast_room(room.room_id, profile.profile_id)
    world.run_until_idle(world.sim.now_ms + 120_000)
    return world, profile, member_nodes, report_


def test_room_broadcast_at_scale():
    started = time.monotonic()
    # Lossless: every one of the 200 members stores the identical card.
    world, profile, member_nodes, report_ = _run_broadcast(200, 0.0, seed=20240004)
    assert report_.delivered_count == report_.total == 200
    docs = set()
    for member in member_nodes:
        entries = member.contacts.all()
        assert len(entries) == 1
        assert entries[0].card.source_code == GcCode("Wa10")
        docs.add(serialize_profile(entries[0].card.profile_snapshot))
    assert docs == {serialize_profile(profile)}

    # Seeded 10% loss: delivered count must equal the independent replay
    # of the draw discipline (one loss draw per send, one latency draw per
    # surviving frame).
    seed = 20240005
    world, profile, member_nodes, report_ = _run_broadcast(200, 0.10, seed=seed)
    rng = random.Random(seed)
    expected = 0
    for _ in range(200):
        if rng.random() >= 0.10:
            expected += 1
            rng.uniform(5.0, 50.0)
    assert report_.delivered_count == expected
    stored = sum(len(m.contacts.all()) for m in member_nodes)
    assert stored == expected
    report("room-broadcast-200", started, 30.0)


def test_registry_uniqueness_under_concurrency():
    started = time.monotonic()
    from gfcx.netsim import Simulator

    registry = Registry()
    endpoint = Simulator().add_endpoint()
    codes = [f"c{i:03d}" for i in range(100)]

    def claim(code_text: str, phone_text: str) -> str:
        try:
            challenge = registry.begin_registration(
                GcCode(code_text), PhoneNumber(phone_text), endpoint, now=0
            )
        except CodeTaken:
            return "taken"
        try:
            registry.complete_registration(challenge.challenge_id, challenge.otp, now=0)
            return "won"
        except CodeTaken:
            return "taken"

    tasks = [
        (code, f"+1{idx:010d}")
        for idx, (code, _) in enumerate((c, k) for c in codes for k in range(64))
    ]
    with ThreadPoolExecutor(max_workers=32) as pool:
        outcomes = list(pool.map(lambda t: (t[0], claim(*t)), tasks))

    winners: dict[str, int] = {code: 0 for code in codes}
    for code, outcome in outcomes:
        if outcome == "won":
            winners[code] += 1
    assert all(count == 1 for count in winners.values()), winners

    # Sequential model over the linearized transition record.
    active: dict[str, str] = {}
    activations: dict[str, int] = {code: 0 for code in codes}
    for event in registry.events():
        if event.status is BindingStatus.ACTIVE:
            assert event.code not in active, f"double activation of {event.code}"
            active[event.code] = event.phone
            activations[event.code] += 1
        elif event.status is BindingStatus.REVOKED:
            active.pop(event.code, None)
    assert sorted(active) == sorted(codes)
    assert all(count == 1 for count in activations.values())
    assert registry.active_codes() == sorted(codes)
    for code in codes:
        binding = registry.binding_for(code)
        assert binding is not None and binding.status is BindingStatus.ACTIVE
        assert binding.phone.digits == active[code]
    report("registry-uniqueness", started, 30.0)


def test_birthday_collision_statistic():
    started = time.monotonic()
    users = 2000
    trials = 200
    space = 91**4
    rng = random.Random(20240006)
    from gfcx.netsim import Simulator

    endpoint = Simulator().add_endpoint()

    hits = 0
    for _ in range(trials):
        registry = Registry(rng=rng)
        collided = False
        for index in range(users):
            code = GcCode("".join(rng.choices(ALPHABET, k=4)))
            phone = PhoneNumber(f"+1{5000000000 + index}")
            try:
                challenge = registry.begin_registration(code, phone, endpoint, now=0)
            except CodeTaken:
                collided = True
                continue
            registry.complete_registration(challenge.challenge_id, challenge.otp, now=0)
        hits += collided

    empirical = hits / trials
    predicted = 1.0 - math.exp(-users * (users - 1) / (2.0 * space))
    stderr = math.sqrt(predicted * (1.0 - predicted) / trials)
    assert abs(empirical - predicted) <= 3.0 * stderr, (
        f"empirical {empirical:.4f} vs predicted {predicted:.4f} "
        f"(3SE = {3 * stderr:.4f})"
    )
    report("birthday-collision", started, 60.0)


def _spawn_node(data_dir: Path) -> tuple[subprocess.Popen, int]:
    proc = subprocess.Popen(
        [sys.executable, str(RUN_NODE), "--dir", str(data_dir), "--api-port", "0"],
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
        text=True,
    )
    line = proc.stdout.readline().strip()
    if not line.startswith("READY|"):
        proc.kill()
        raise RuntimeError(f"node host failed to start: {line!r} / {proc.stderr.read()}")
    return proc, int(line.split("|")[1])


def test_durability_across_kill(tmp_path):
    started = time.monotonic()
    data_dir = tmp_path / "node"
    proc, port = _spawn_node(data_dir)
    try:
        token = (data_dir / "token").read_text(encoding="utf-8").strip()
        client = NodeClient(f"127.0.0.1:{port}", token)
        rng = random.Random(20240007)
        counter = 0

        def profile_ids():
            return [row[1] for row in rows(client.call(api.PROFILE_LIST))]

        for _ in range(50):
            op = rng.choice(["create", "create", "update", "delete", "policy"])
            ids = profile_ids()
            if op == "create" or (op in ("update", "delete") and not ids):
                counter += 1
                fields = [f"F|EMAIL|user{counter}@example.org"]
                if rng.random() < 0.5:
                    fields.append(f"F|NOTE|note {counter}")
                client.call(api.PROFILE_CREATE, [f"NAME|p{counter:03d}", *fields])
            elif op == "update":
                counter += 1
                client.call(
                    api.PROFILE_UPDATE,
                    [f"ID|{rng.choice(ids)}", f"NAME|p{counter:03d}", f"F|NOTE|edit {counter}"],
                )
            elif op == "delete":
                client.call(api.PROFILE_DELETE, [f"ID|{rng.choice(ids)}"])
            else:
                target = rng.choice(ids) if ids else ""
                client.call(
                    api.POLICY_SET,
                    [f"RULE|vip|PREFIX(W)|{target}|ASK", f"RULE|default|ANY|{target}|AUTO"],
                )

        def snapshot():
            listing = client.call(api.PROFILE_LIST)
            docs = [
                client.call(api.PROFILE_SHOW, [f"REF|{pid}"]) for pid in sorted(profile_ids())
            ]
            policy = client.call(api.POLICY_LIST)
            return (listing, docs, policy)

        journal = snapshot()
        proc.kill()  # SIGKILL: no shutdown path runs
        proc.wait(timeout=10)

        proc2, port2 = _spawn_node(data_dir)
        try:
            client = NodeClient(f"127.0.0.1:{port2}", token)
            recovered = snapshot()
            assert recovered == journal
        finally:
            proc2.kill()
            proc2.wait(timeout=10)
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.wait(timeout=10)
    report("durability-kill-restart", started, 30.0)


def test_vcard_export_grammar():
    started = time.monotonic()
    rng = random.Random(20240008)
    for _ in range(1000):
        properties = check_vcard(export_vcard(random_card(rng)))
        assert any(name == "FN" for name, _ in properties)
    report("vcard-export", started, 30.0)
