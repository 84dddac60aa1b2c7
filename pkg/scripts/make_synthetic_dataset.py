#!/usr/bin/env python3
"""Generate the bundled synthetic event dataset (data/synthetic/).

~500 quadruples over 30 entities, 12 relations and 54 days, with planted
temporal regularities so rule mining has something to find:

  * express_intent_to_cooperate(a, b, t) is usually followed by
    sign_agreement(a, b, t+d) within a few days;
  * consult(a, b, t1) then make_a_visit(b, c, t2) is usually followed by
    cooperate_economically(a, c, t3);
  * appeal_for_aid(a, b, t) is usually answered by provide_aid(b, a, t+d).

Split chronologically: days 0-39 historical, 40-46 current, 47-53 future.
Deterministic given the seed.
"""

import argparse
from pathlib import Path

import numpy as np

RELATIONS = [
    "consult",
    "make_a_visit",
    "host_a_visit",
    "provide_aid",
    "sign_agreement",
    "express_intent_to_cooperate",
    "criticize",
    "threaten",
    "impose_sanctions",
    "demand",
    "appeal_for_aid",
    "cooperate_economically",
]

N_ENTITIES = 30
LAST_DAY = 53
HIST_END, CURR_END = 39, 46


def generate(seed: int) -> list[tuple[str, str, str, int]]:
    rng = np.random.default_rng(seed)
    entities = [f"e{i:02d}" for i in range(N_ENTITIES)]
    facts: set[tuple[str, str, str, int]] = set()

    def add(s, r, o, t):
        if s != o and 0 <= t <= LAST_DAY:
            facts.add((s, r, o, t))

    def pick_pair():
        a, b = rng.choice(N_ENTITIES, size=2, replace=False)
        return entities[a], entities[b]

    # pattern: intent -> agreement
    for _ in range(75):
        a, b = pick_pair()
        t = int(rng.integers(0, LAST_DAY - 3))
        add(a, "express_intent_to_cooperate", b, t)
        if rng.random() < 0.85:
            add(a, "sign_agreement", b, t + int(rng.integers(1, 4)))

    # pattern: consult then visit -> economic cooperation
    for _ in range(58):
        a, b = pick_pair()
        c = entities[int(rng.integers(N_ENTITIES))]
        t1 = int(rng.integers(0, LAST_DAY - 5))
        t2 = t1 + int(rng.integers(0, 3))
        add(a, "consult", b, t1)
        add(b, "make_a_visit", c, t2)
        if c != a and rng.random() < 0.7:
            add(a, "cooperate_economically", c, t2 + int(rng.integers(1, 4)))

    # pattern: appeal -> aid (reversed direction)
    for _ in range(50):
        a, b = pick_pair()
        t = int(rng.integers(0, LAST_DAY - 3))
        add(a, "appeal_for_aid", b, t)
        if rng.random() < 0.8:
            add(b, "provide_aid", a, t + int(rng.integers(1, 4)))

    # background noise over all relations
    for _ in range(120):
        a, b = pick_pair()
        r = RELATIONS[int(rng.integers(len(RELATIONS)))]
        add(a, r, b, int(rng.integers(0, LAST_DAY + 1)))

    return sorted(facts, key=lambda f: (f[3], f[0], f[1], f[2]))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=20240601)
    parser.add_argument("--out", default="data/synthetic")
    args = parser.parse_args()

    facts = generate(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    splits = {
        "historical.txt": [f for f in facts if f[3] <= HIST_END],
        "current.txt": [f for f in facts if HIST_END < f[3] <= CURR_END],
        "future.txt": [f for f in facts if f[3] > CURR_END],
    }
    for name, rows in splits.items():
        with open(out / name, "w", encoding="utf-8") as fh:
            for s, r, o, t in rows:
                fh.write(f"{s}\t{r}\t{o}\t{t}\n")
        print(f"{name}: {len(rows)} quadruples")
    print(f"total: {len(facts)}")


if __name__ == "__main__":
    main()
