"""Adaptive allocation of each round's testing budget across components.

Given the requirements still undecided and their current value intervals,
the round budget goes where it is most likely to force a verdict:

* if one requirement is clearly closest to a decision (the interval end on
  the wrong side of its bound is much nearer than the end on the right
  side), the whole round refines that requirement alone;
* otherwise every undecided requirement is weighted by how much its interval
  still strays around its bound, each component is scored by how sensitive
  the focused expressions are to its parameters at the current frequency
  estimates, and the budget is split proportionally.

Counts are derived in exact rational arithmetic and rounded down, so a
round's total cost never exceeds the round budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .expr import SingularEvaluation
from .model import (
    Component,
    ObservationFunction,
    ParametricDtmc,
    classify_edges,
    params_of_component,
)
from .pmc import PropertyExpression

# stand-ins for values the arithmetic cannot produce: a derivative at a pole
# and the weight of an interval with an infinite end
SURROGATE = 1e12


@dataclass(frozen=True)
class Allocation:
    nobs: dict[str, int]  # component name -> number of tests this round
    focus: tuple[str, ...]  # requirement ids the round refines
    estimates: dict[str, float]  # pooled frequency estimates used


def wrong_end(rel: str, lo: float, hi: float) -> float:
    """The interval end on the violating side of the bound."""
    return hi if rel in ("<", "<=") else lo


def right_end(rel: str, lo: float, hi: float) -> float:
    """The interval end on the satisfying side of the bound."""
    return lo if rel in ("<", "<=") else hi


def decision_ratio(rel: str, bound: float, lo: float, hi: float) -> float:
    """How close the interval is to yielding a verdict: distance from the
    bound to the wrong end, relative to the distance to the right end."""
    wrong = abs(bound - wrong_end(rel, lo, hi))
    right = abs(bound - right_end(rel, lo, hi))
    if right == 0.0:
        return 0.0 if wrong == 0.0 else math.inf
    if math.isinf(right):
        return 0.0 if math.isfinite(wrong) else math.inf
    return wrong / right


def decide_requirement(rel: str, bound: float, lo: float, hi: float) -> str | None:
    """'satisfied', 'violated', or None while the interval still spans the
    bound.  Satisfaction needs the whole interval on the right side of the
    bound; violation needs it on the wrong side."""
    if rel == "<":
        if hi < bound:
            return "satisfied"
        if lo >= bound:
            return "violated"
    elif rel == "<=":
        if hi <= bound:
            return "satisfied"
        if lo > bound:
            return "violated"
    elif rel == ">":
        if lo > bound:
            return "satisfied"
        if hi <= bound:
            return "violated"
    elif rel == ">=":
        if lo >= bound:
            return "satisfied"
        if hi < bound:
            return "violated"
    else:
        raise ValueError(f"unknown relation {rel!r}")
    return None


def requirement_weight(bound: float, lo: float, hi: float, epsilon2: float) -> float:
    """Interval width over its centre's distance to the bound: wide intervals
    sitting on top of their bound weigh the most."""
    if math.isinf(hi) or math.isinf(lo):
        return SURROGATE
    width = hi - lo
    centre_gap = abs(bound - 0.5 * (lo + hi))
    return width / max(centre_gap, epsilon2)


def estimate_params(
    model: ParametricDtmc, obs: ObservationFunction
) -> dict[str, float]:
    """Observed frequency of each parameter's edge category, pooled over all
    states the parameter drives.  Parameters with no observations anywhere
    are absent from the result."""
    hits: dict[str, int] = {}
    totals: dict[str, int] = {}
    for z in model.parametric_states:
        n = obs.total(z)
        if n == 0:
            continue
        for shape in classify_edges(model, z):
            if shape.kind != "param":
                continue
            hits[shape.param] = hits.get(shape.param, 0) + obs.get(z, shape.target)
            totals[shape.param] = totals.get(shape.param, 0) + n
    return {p: hits[p] / totals[p] for p in totals}


def component_sensitivity(
    model: ParametricDtmc,
    component: Component,
    expr_value,
    estimates: dict[str, float],
) -> float:
    """Sum of |d expr / d p| at the estimates, over the component's params."""
    total = 0.0
    used = expr_value.variables_used()
    for p in sorted(params_of_component(model, component)):
        if p not in used:
            continue
        try:
            total += abs(expr_value.partial_derivative(p).eval(estimates))
        except SingularEvaluation:
            total += SURROGATE
    return total


def _uniform(components: list[Component], rbudget: Fraction) -> dict[str, int]:
    share = Fraction(rbudget, len(components))
    return {c.name: int(math.floor(share / c.cost)) for c in components}


def allocate(
    model: ParametricDtmc,
    components: list[Component],
    obs: ObservationFunction,
    undecided: list[tuple[PropertyExpression, tuple[float, float]]],
    rbudget: Fraction,
    epsilon1: float = 0.15,
    epsilon2: float = 1e-6,
) -> Allocation:
    """Plan one round of component testing.

    `undecided` pairs each still-open property expression with its current
    value interval.  The returned counts satisfy
    sum(nobs[c] * cost[c]) <= rbudget.
    """
    if not undecided:
        raise ValueError("nothing to allocate for: no undecided requirements")

    inside = [
        (pe, lo, hi)
        for pe, (lo, hi) in undecided
        if lo <= float(pe.req.bound) <= hi
    ]
    if not inside:
        # intervals that exclude their bound are about to be decided anyway;
        # treat everything as in play rather than allocating nothing
        inside = [(pe, lo, hi) for pe, (lo, hi) in undecided]

    best: tuple[PropertyExpression, float, float] | None = None
    best_ratio = math.inf
    for pe, lo, hi in inside:
        ratio = decision_ratio(pe.req.rel, float(pe.req.bound), lo, hi)
        if ratio < epsilon1 and ratio < best_ratio:
            best = (pe, lo, hi)
            best_ratio = ratio
    focus = [best] if best is not None else inside

    estimates = estimate_params(model, obs)
    needed: set[str] = set()
    for pe, _, _ in focus:
        needed |= pe.expr.variables_used()
    missing = needed - estimates.keys()
    if missing:
        # cannot rank components without estimates; spread the round budget
        # uniformly over the components whose parameters are unobserved
        affected = [
            c for c in components if params_of_component(model, c) & missing
        ]
        nobs = {c.name: 0 for c in components}
        nobs.update(_uniform(affected, rbudget))
        return Allocation(
            nobs=nobs,
            focus=tuple(pe.id for pe, _, _ in focus),
            estimates=estimates,
        )

    relevance: dict[str, float] = {}
    for comp in components:
        score = 0.0
        for pe, lo, hi in focus:
            weight = requirement_weight(float(pe.req.bound), lo, hi, epsilon2)
            score += weight * component_sensitivity(model, comp, pe.expr, estimates)
        relevance[comp.name] = score

    total = sum(relevance.values())
    if total <= 0.0 or not math.isfinite(total):
        if not math.isfinite(total):
            # surrogate blow-ups degenerate to ranking by which components
            # are infinite; uniform across those
            blown = [c for c in components if math.isinf(relevance[c.name])]
            nobs = {c.name: 0 for c in components}
            nobs.update(_uniform(blown, rbudget))
        else:
            nobs = _uniform(components, rbudget)
        return Allocation(
            nobs=nobs,
            focus=tuple(pe.id for pe, _, _ in focus),
            estimates=estimates,
        )

    # exact rational floors keep the round cost within the budget
    shares = {name: Fraction(score) for name, score in relevance.items()}
    share_total = sum(shares.values(), Fraction(0))
    nobs = {
        c.name: int(math.floor(rbudget * shares[c.name] / share_total / c.cost))
        for c in components
    }
    return Allocation(
        nobs=nobs,
        focus=tuple(pe.id for pe, _, _ in focus),
        estimates=estimates,
    )
