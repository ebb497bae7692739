"""Independent numeric reference implementations and random-model generation.

These deliberately avoid the symbolic elimination code paths: properties are
checked by instantiating the chain at a concrete valuation and solving the
resulting linear systems with numpy.
"""

import random
from fractions import Fraction

import numpy as np

from pmcverify.expr import parse_expr
from pmcverify.model import ParametricDtmc, validate_model


def instantiated_probs(model, valuation):
    return {
        s: [(t, f.eval(valuation)) for t, f in model.transitions[s]]
        for s in model.states
    }


def _backward(probs, seeds, interior):
    preds = {}
    for u, edges in probs.items():
        for v, p in edges:
            if p > 0:
                preds.setdefault(v, set()).add(u)
    reached = set()
    frontier = list(seeds)
    while frontier:
        v = frontier.pop()
        for u in preds.get(v, ()):
            if u in interior and u not in reached:
                reached.add(u)
                frontier.append(u)
    return reached


def prob_reach_oracle(model, valuation, start, phi1, phi2):
    """P[start |= phi1 U phi2] by direct linear solve at one valuation."""
    if start in phi2:
        return 1.0
    probs = instantiated_probs(model, valuation)
    interior = set(phi1) - set(phi2)
    can = _backward(probs, set(phi2), interior)
    if start not in can:
        return 0.0
    order = sorted(can, key=model.states.index)
    idx = {s: k for k, s in enumerate(order)}
    n = len(order)
    a = np.zeros((n, n))
    b = np.zeros(n)
    for u in order:
        for t, p in probs[u]:
            if p <= 0:
                continue
            if t in phi2:
                b[idx[u]] += p
            elif t in can:
                a[idx[u], idx[t]] += p
    x = np.linalg.solve(np.eye(n) - a, b)
    return float(x[idx[start]])


def reward_reach_oracle(model, valuation, start, target):
    """Expected accumulated reward to reach `target`, by linear solve."""
    if start in target:
        return 0.0
    probs = instantiated_probs(model, valuation)
    reachable = {start}
    frontier = [start]
    while frontier:
        u = frontier.pop()
        if u in target:
            continue
        for v, p in probs[u]:
            if p > 0 and v not in reachable:
                reachable.add(v)
                frontier.append(v)
    order = sorted(reachable - set(target), key=model.states.index)
    idx = {s: k for k, s in enumerate(order)}
    n = len(order)
    a = np.zeros((n, n))
    b = np.zeros(n)
    for u in order:
        b[idx[u]] += float(model.state_reward(u))
        for t, p in probs[u]:
            if p <= 0:
                continue
            b[idx[u]] += p * float(model.trans_reward(u, t))
            if t not in target:
                a[idx[u], idx[t]] += p
    x = np.linalg.solve(np.eye(n) - a, b)
    return float(x[idx[start]])


def bounded_oracle(model, valuation, start, phi1, phi2, k):
    """P[start |= phi1 U<=k phi2] by k numeric backward steps."""
    probs = instantiated_probs(model, valuation)
    x = {s: (1.0 if s in phi2 else 0.0) for s in model.states}
    middle = [s for s in model.states if s in phi1 and s not in phi2]
    for _ in range(k):
        nxt = dict(x)
        for s in middle:
            nxt[s] = sum(p * x[t] for t, p in probs[s])
        x = nxt
    return x[start]


def random_model(rng: random.Random, max_states: int = 20):
    """Random layered model: every non-final state keeps a forward edge and
    the final state is absorbing, so the final state is the single bottom SCC
    and expected rewards are finite.  Back edges are rationed -- exact
    elimination without polynomial GCDs cannot afford densely cyclic graphs,
    and the component models this mimics are layered workflows anyway.

    Returns (model, sample_valuation) where sample_valuation(rng) draws a
    parameter valuation under which every distribution is valid.
    """
    n = rng.randint(4, max_states)
    states = [f"s{i}" for i in range(n)]
    n_params = rng.randint(1, 3)

    host_plan: list[tuple[int, list[str]]] = []  # (state index, params hosted)
    remaining = [f"p{i}" for i in range(n_params)]
    hosts = rng.sample(range(n - 1), k=min(n - 1, n_params))
    for h in hosts:
        if not remaining:
            break
        take = min(len(remaining), rng.choice([1, 1, 2]))
        host_plan.append((h, remaining[:take]))
        remaining = remaining[take:]
    if remaining:
        host_plan[-1] = (host_plan[-1][0], host_plan[-1][1] + remaining)

    params = tuple(sorted(f"p{i}" for i in range(n_params)))
    transitions = {s: [] for s in states}
    ranges: dict[str, tuple[float, float]] = {}
    back_budget = 3  # total non-forward edges in the whole model

    def pick_targets(i: int, count: int) -> list[int]:
        nonlocal back_budget
        forward_pool = list(range(i + 1, n))
        targets = [forward_pool.pop(rng.randrange(len(forward_pool)))]
        while len(targets) < count:
            if back_budget > 0 and rng.random() < 0.2:
                candidates = [j for j in range(0, i + 1) if j not in targets]
            else:
                candidates = [j for j in forward_pool if j not in targets]
            if not candidates:
                candidates = [j for j in range(n) if j not in targets]
            choice = rng.choice(candidates)
            if choice <= i:
                back_budget -= 1
            targets.append(choice)
            if choice in forward_pool:
                forward_pool.remove(choice)
        rng.shuffle(targets)
        return targets

    hosted = {h: ps for h, ps in host_plan}
    for i in range(n - 1):
        if i in hosted:
            ps = hosted[i]
            const = Fraction(rng.randint(1, 3), 10) if rng.random() < 0.3 else None
            n_edges = len(ps) + 1 + (1 if const is not None else 0)
            targets = pick_targets(i, n_edges)
            mass = 1 - (const or 0)
            exprs = [parse_expr(p, params) for p in ps]
            derived_text = "1" + "".join(f" - {p}" for p in ps)
            if const is not None:
                derived_text += f" - {const.numerator}/{const.denominator}"
                exprs.append(parse_expr(f"{const.numerator}/{const.denominator}", params))
            exprs.append(parse_expr(derived_text, params))
            for t, f in zip(targets, exprs):
                transitions[states[i]].append((states[t], f))
            share = 0.9 / len(ps)
            for p in ps:
                lo = 0.05 * float(mass)
                hi = share * float(mass)
                ranges[p] = (lo, hi)
        else:
            targets = pick_targets(i, rng.randint(1, 3))
            weights = [rng.randint(1, 9) for _ in targets]
            total = sum(weights)
            for t, w in zip(targets, weights):
                transitions[states[i]].append(
                    (states[t], parse_expr(f"{w}/{total}", params))
                )
    transitions[states[-1]].append((states[-1], parse_expr("1", params)))

    state_rewards = {
        s: Fraction(rng.randint(0, 3)) for s in states if rng.random() < 0.6
    }
    trans_rewards = {}
    for s in states[:-1]:
        for t, _ in transitions[s]:
            if rng.random() < 0.2:
                trans_rewards[(s, t)] = Fraction(rng.randint(1, 4), 2)

    model = ParametricDtmc(
        states=tuple(states),
        init=states[0],
        transitions=transitions,
        labels={},
        state_rewards=state_rewards,
        trans_rewards=trans_rewards,
        params=params,
    )
    validate_model(model)

    def sample_valuation(r: random.Random):
        return {p: r.uniform(lo, hi) for p, (lo, hi) in ranges.items()}

    return model, sample_valuation
