#!/usr/bin/env python3
"""Audit the propagation engine against a brute-force closure oracle on
randomized environments, and time it.

    python3 scripts/impact_audit.py [cases] [seed]
"""

import pathlib
import random
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parent.parent / "src"))

from deltapoe import impact, model  # noqa: E402


def random_environment(rng, max_domains=10, max_links=30):
    n_dom = rng.randint(1, max_domains)
    phens = [f"p{i}" for i in range(rng.randint(1, 3 * max_domains))]
    owner = {p: rng.randrange(-1, n_dom) for p in phens}
    budget = max_links
    domains = []
    for i in range(n_dom):
        name = f"d{i}"
        controlled = frozenset(p for p, o in owner.items() if o == i)
        rest = [p for p in phens if p not in controlled]
        observed = frozenset(p for p in rest if rng.random() < 0.35)
        universe = sorted(controlled | observed)
        links = set()
        if len(universe) >= 2:
            for _ in range(rng.randint(0, min(4, budget))):
                cause, effect = rng.choice(universe), rng.choice(universe)
                if cause != effect:
                    links.add(model.CausalLink(cause, effect, name))
        budget -= len(links)
        domains.append(
            model.Domain(name, observed=observed, controlled=controlled, links=frozenset(links))
        )
    return model.Environment(tuple(domains))


def closure_oracle(env, seeds, structural, buffers):
    edges = {
        (link.cause, link.effect)
        for dom in env
        if dom.name not in buffers
        for link in dom.links
        if link.cause in dom.observed
    }
    affected = set(seeds)
    while True:
        grown = {q for p, q in edges if p in affected}
        if grown <= affected:
            break
        affected |= grown
    return {d.name for d in env if d.name not in structural and d.observed & affected}


def main() -> int:
    cases = int(sys.argv[1]) if len(sys.argv) > 1 else 1000
    seed = int(sys.argv[2]) if len(sys.argv) > 2 else 0
    rng = random.Random(seed)
    started = time.perf_counter()
    disagreements = 0
    reached_total = 0
    for _ in range(cases):
        env = random_environment(rng)
        names = list(env.names())
        buffers = frozenset(n for n in names if rng.random() < 0.25)
        target = rng.choice(names)
        pool = sorted(env.domain(target).phenomena())
        if len(pool) >= 2 and rng.random() < 0.5:
            cause, effect = rng.sample(pool, 2)
            edit = impact.NewLink(target, cause, effect)
        else:
            edit = model.Cancel(target)
        report = impact.propagate(env, edit, buffers)
        expected = closure_oracle(env, report.seed_phenomena, report.structural, buffers)
        reached_total += len(report.behavioural)
        if report.behavioural != expected:
            disagreements += 1
            print(f"disagreement on seed={seed}: {report} vs {sorted(expected)}")
    elapsed = time.perf_counter() - started
    print(
        f"{cases} cases, {disagreements} disagreements, "
        f"{reached_total} domains reached, {elapsed:.2f}s"
    )
    return 1 if disagreements else 0


if __name__ == "__main__":
    sys.exit(main())
