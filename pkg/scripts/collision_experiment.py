#!/usr/bin/env python3
"""How often do self-assigned codes collide as the user base grows?

Each trial registers N users, every one drawing a uniform random length-4
code (91^4 possible), and records whether anyone hit CodeTaken. The
empirical collision fraction is compared against the birthday
approximation 1 - exp(-N(N-1)/(2*91^4)).
"""

import argparse
import math
import random
import sys
from pathlib import Path

try:
    import gfcx  # noqa: F401
except ImportError:
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from gfcx.codes import CODE_ALPHABET, GcCode
from gfcx.netsim import Simulator
from gfcx.profiles import PhoneNumber
from gfcx.registry import CodeTaken, Registry

ALPHABET = sorted(CODE_ALPHABET)
SPACE = len(ALPHABET) ** 4


def trial_has_collision(users: int, rng: random.Random, endpoint) -> bool:
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
    return collided


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--users", type=int, nargs="+", default=[500, 1000, 2000, 4000])
    parser.add_argument("--trials", type=int, default=100)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    rng = random.Random(args.seed)
    endpoint = Simulator().add_endpoint()

    print(f"{'users':>6}  {'empirical':>9}  {'predicted':>9}  {'z':>6}")
    for users in args.users:
        hits = sum(trial_has_collision(users, rng, endpoint) for _ in range(args.trials))
        empirical = hits / args.trials
        predicted = 1.0 - math.exp(-users * (users - 1) / (2.0 * SPACE))
        stderr = math.sqrt(max(predicted * (1.0 - predicted), 1e-12) / args.trials)
        z = (empirical - predicted) / stderr if stderr else 0.0
        print(f"{users:>6}  {empirical:>9.4f}  {predicted:>9.4f}  {z:>6.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
