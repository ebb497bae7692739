"""Parametric model checking: closed-form rational-function expressions.

Unbounded reachability probabilities come from symbolic state elimination,
reachability rewards from the same elimination applied to the expected-cost
equations, bounded until from backward iteration, next from a single sum.
Parametric edges are assumed to carry probabilities in the open interval
(0,1): qualitative preprocessing treats every not-identically-zero expression
as a real edge.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .expr import RationalFunction
from .model import ParametricDtmc
from .props import Next, PropsError, Requirement, Until, sat_states, start_state

_TARGET = "__target__"  # virtual absorbing node, never a model state


class PmcError(ValueError):
    pass


class InfiniteRewardError(PmcError):
    def __init__(self, bscc: frozenset[str]):
        super().__init__(
            f"expected reward is infinite: bottom SCC {sorted(bscc)} is reachable "
            f"but never reaches the target"
        )
        self.bscc = bscc


class BoundLimitError(PmcError):
    def __init__(self, k: int, max_k: int):
        super().__init__(
            f"step bound {k} exceeds max_bounded_k = {max_k}; raise max_bounded_k "
            f"in the configuration to allow it"
        )


@dataclass(frozen=True)
class PropertyExpression:
    req: Requirement
    expr: RationalFunction
    start: str

    @property
    def id(self) -> str:
        return self.req.id


def _support(model: ParametricDtmc) -> dict[str, list[str]]:
    return {
        s: [t for t, f in model.transitions[s] if not f.num.is_zero()]
        for s in model.states
    }


def _backward_closure(
    support: dict[str, list[str]], seeds: frozenset[str], interior: frozenset[str]
) -> set[str]:
    """States in `interior` that can reach `seeds` via interior states."""
    preds: dict[str, set[str]] = {}
    for u, vs in support.items():
        for v in vs:
            preds.setdefault(v, set()).add(u)
    reached: set[str] = set()
    frontier = list(seeds)
    while frontier:
        v = frontier.pop()
        for u in preds.get(v, ()):
            if u in interior and u not in reached:
                reached.add(u)
                frontier.append(u)
    return reached


class _Eliminator:
    """Dict-of-dicts weighted digraph with symbolic state elimination."""

    def __init__(self, model: ParametricDtmc):
        self.model = model
        self.one = RationalFunction.constant(model.params, 1)
        self.w: dict[str, dict[str, RationalFunction]] = {}
        self.preds: dict[str, set[str]] = {}
        self.order_index = {s: i for i, s in enumerate(model.states)}

    def add(self, u: str, v: str, f: RationalFunction) -> None:
        row = self.w.setdefault(u, {})
        row[v] = row[v].add(f) if v in row else f
        self.preds.setdefault(v, set()).add(u)

    def get(self, u: str, v: str) -> RationalFunction | None:
        return self.w.get(u, {}).get(v)

    def _degree_score(self, s: str) -> tuple:
        out_deg = sum(1 for v in self.w.get(s, {}) if v != s)
        in_deg = sum(1 for u in self.preds.get(s, ()) if u != s)
        return (in_deg * out_deg, self.order_index.get(s, 0))

    def eliminate_all(self, keep: set[str], order: list[str] | None = None) -> None:
        if order is not None:
            pending = [s for s in order if s in self.w and s not in keep]
            for s in pending:
                self.eliminate(s)
            leftovers = [s for s in list(self.w) if s not in keep]
            for s in leftovers:
                self.eliminate(s)
            return
        # ascending fill-in score, recomputed greedily
        while True:
            candidates = [s for s in self.w if s not in keep]
            if not candidates:
                return
            self.eliminate(min(candidates, key=self._degree_score))

    def eliminate(self, s: str) -> None:
        row = self.w.pop(s, {})
        loop = row.pop(s, None)
        if loop is not None:
            self.preds.get(s, set()).discard(s)
        denom = self.one.sub(loop) if loop is not None else self.one
        if denom.num.is_zero():
            raise PmcError(f"state {s}: self-loop probability is identically 1")
        scaled = {v: f.div(denom) for v, f in row.items()}
        for v in row:
            self.preds.get(v, set()).discard(s)
        sources = [u for u in self.preds.pop(s, set()) if u != s]
        for u in sources:
            w_us = self.w[u].pop(s)
            for v, f in scaled.items():
                self.add(u, v, w_us.mul(f))


def reach_prob_expr(
    model: ParametricDtmc,
    start: str,
    phi1: frozenset[str],
    phi2: frozenset[str],
    order: list[str] | None = None,
) -> RationalFunction:
    if start not in model.states:
        raise PmcError(f"unknown start state {start!r}")
    zero = RationalFunction.constant(model.params, 0)
    one = RationalFunction.constant(model.params, 1)
    if start in phi2:
        return one

    support = _support(model)
    interior = frozenset(phi1) - frozenset(phi2)
    can_reach = _backward_closure(support, frozenset(phi2), interior)
    if start not in can_reach:
        return zero

    elim = _Eliminator(model)
    for u in can_reach:
        for t, f in model.transitions[u]:
            if f.num.is_zero():
                continue
            if t in phi2:
                elim.add(u, _TARGET, f)
            elif t in can_reach:
                elim.add(u, t, f)
            # other targets are failure mass: dropped
    elim.eliminate_all(keep={start, _TARGET}, order=order)

    hit = elim.get(start, _TARGET)
    if hit is None:
        return zero
    loop = elim.get(start, start)
    if loop is None:
        return hit
    return hit.div(one.sub(loop))


def reach_reward_expr(
    model: ParametricDtmc,
    start: str,
    target: frozenset[str],
    order: list[str] | None = None,
) -> RationalFunction:
    if start not in model.states:
        raise PmcError(f"unknown start state {start!r}")
    zero = RationalFunction.constant(model.params, 0)
    one = RationalFunction.constant(model.params, 1)
    if start in target:
        return zero

    support = _support(model)
    # forward closure from start, treating target states as absorbing
    reachable: set[str] = {start}
    frontier = [start]
    while frontier:
        u = frontier.pop()
        if u in target:
            continue
        for v in support[u]:
            if v not in reachable:
                reachable.add(v)
                frontier.append(v)

    interior = frozenset(reachable) - frozenset(target)
    can_reach = _backward_closure(support, frozenset(target) & frozenset(reachable), interior)
    stuck = interior - can_reach
    if stuck:
        raise InfiniteRewardError(_witness_bscc(support, stuck, target))

    elim = _Eliminator(model)
    cost: dict[str, RationalFunction] = {}
    for u in interior:
        c = RationalFunction.constant(model.params, model.state_reward(u))
        for t, f in model.transitions[u]:
            if f.num.is_zero():
                continue
            iota = model.trans_reward(u, t)
            if iota:
                c = c.add(f.mul(RationalFunction.constant(model.params, iota)))
            if t in target:
                elim.add(u, _TARGET, f)
            else:
                elim.add(u, t, f)
        cost[u] = c

    keep = {start, _TARGET}
    # elimination with cost-vector updates: fold eliminate() steps manually
    while True:
        candidates = [s for s in elim.w if s not in keep]
        if order is not None:
            ordered = [s for s in order if s in candidates]
            s = ordered[0] if ordered else (candidates[0] if candidates else None)
        else:
            s = min(candidates, key=elim._degree_score) if candidates else None
        if s is None:
            break
        row = elim.w.pop(s, {})
        loop = row.pop(s, None)
        if loop is not None:
            elim.preds.get(s, set()).discard(s)
        denom = one.sub(loop) if loop is not None else one
        if denom.num.is_zero():
            raise PmcError(f"state {s}: self-loop probability is identically 1")
        scaled = {v: f.div(denom) for v, f in row.items()}
        c_s = cost.pop(s).div(denom)
        for v in row:
            elim.preds.get(v, set()).discard(s)
        sources = [u for u in elim.preds.pop(s, set()) if u != s]
        for u in sources:
            w_us = elim.w[u].pop(s)
            cost[u] = cost[u].add(w_us.mul(c_s))
            for v, f in scaled.items():
                elim.add(u, v, w_us.mul(f))

    c_start = cost[start]
    loop = elim.get(start, start)
    if loop is None:
        return c_start
    return c_start.div(one.sub(loop))


def _witness_bscc(
    support: dict[str, list[str]], stuck: set[str], target: frozenset[str]
) -> frozenset[str]:
    """A bottom SCC inside `stuck` (exists: stuck states cannot leave stuck,
    except into target-avoiding... they cannot reach target at all)."""
    # Tarjan over the subgraph induced by stuck states
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    sccs: list[frozenset[str]] = []
    counter = [0]

    def strongconnect(v: str) -> None:
        work = [(v, iter([u for u in support[v] if u in stuck]))]
        index[v] = low[v] = counter[0]
        counter[0] += 1
        stack.append(v)
        on_stack.add(v)
        while work:
            node, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter[0]
                    counter[0] += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter([u for u in support[w] if u in stuck])))
                    advanced = True
                    break
                if w in on_stack:
                    low[node] = min(low[node], index[w])
            if advanced:
                continue
            work.pop()
            if low[node] == index[node]:
                scc = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    scc.add(w)
                    if w == node:
                        break
                sccs.append(frozenset(scc))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])

    for v in sorted(stuck):
        if v not in index:
            strongconnect(v)
    for scc in sccs:
        if all(u in scc or u in stuck for v in scc for u in support[v]):
            # bottom within the stuck set; since stuck states never reach the
            # target, any SCC with no edges leaving itself is a witness
            if all(u in scc for v in scc for u in support[v]):
                return scc
    # fall back: the last SCC found by Tarjan on the stuck subgraph is bottom
    # within it; its outgoing edges stay inside stuck, forming the witness
    return sccs[-1] if sccs else frozenset(stuck)


def next_expr(model: ParametricDtmc, start: str, phi: frozenset[str]) -> RationalFunction:
    if start not in model.states:
        raise PmcError(f"unknown start state {start!r}")
    acc = RationalFunction.constant(model.params, 0)
    for t, f in model.transitions[start]:
        if t in phi:
            acc = acc.add(f)
    return acc


def bounded_expr(
    model: ParametricDtmc,
    start: str,
    phi1: frozenset[str],
    phi2: frozenset[str],
    k: int,
    max_bounded_k: int = 100,
) -> RationalFunction:
    if start not in model.states:
        raise PmcError(f"unknown start state {start!r}")
    if k > max_bounded_k:
        raise BoundLimitError(k, max_bounded_k)
    zero = RationalFunction.constant(model.params, 0)
    one = RationalFunction.constant(model.params, 1)
    x = {s: (one if s in phi2 else zero) for s in model.states}
    middle = [s for s in model.states if s in phi1 and s not in phi2]
    for _ in range(k):
        nxt = dict(x)
        changed = False
        for s in middle:
            acc = zero
            for t, f in model.transitions[s]:
                xt = x[t]
                if not xt.num.is_zero():
                    acc = acc.add(f.mul(xt))
            nxt[s] = acc
            if acc != x[s]:
                changed = True
        x = nxt
        if not changed:
            break  # fixed point: further steps cannot change any value
    return x[start]


def build_property_expressions(
    model: ParametricDtmc,
    requirements: list[Requirement],
    max_bounded_k: int = 100,
) -> list[PropertyExpression]:
    """One closed-form expression per requirement.  Observation-independent,
    so the engine computes these once and reuses them every round."""
    out = []
    for req in requirements:
        start = start_state(model, req)
        if req.kind == "P":
            body = req.body
            if isinstance(body, Next):
                expr = next_expr(model, start, sat_states(model, body.phi))
            elif isinstance(body, Until):
                phi1 = sat_states(model, body.phi1)
                phi2 = sat_states(model, body.phi2)
                if body.bound is None:
                    expr = reach_prob_expr(model, start, phi1, phi2)
                else:
                    expr = bounded_expr(
                        model, start, phi1, phi2, body.bound, max_bounded_k
                    )
            else:
                raise PropsError(f"requirement {req.id}: unsupported path formula")
        else:
            expr = reach_reward_expr(model, start, sat_states(model, req.body))
        out.append(PropertyExpression(req=req, expr=expr, start=start))
    return out
