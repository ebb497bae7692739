"""The verification loop.

Each round evaluates every still-open requirement against the confidence
region implied by the observations gathered so far, records the intervals,
and either stops (a requirement refuted, all satisfied, or the budget gone)
or spends the next slice of the testing budget where the allocation strategy
points.  Decisions are sticky: once a requirement's interval lands wholly on
one side of its bound at the requested confidence, it stays decided.

Rounds are numbered from 1.  Round r evaluates the observations produced by
rounds 1..r-1; at most ceil(budget / rbudget) testing rounds can run, and a
final evaluation pass after the last of them closes the run, so a budget of
B with round budget b yields at most ceil(B/b) + 1 round records.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

from . import heuristic
from .confidence import build_param_box, property_interval
from .harness import Tester
from .heuristic import Allocation, allocate, decide_requirement
from .model import (
    Component,
    ObservationFunction,
    ParametricDtmc,
    VerificationProblem,
    merge_observations,
)
from .pmc import PropertyExpression, build_property_expressions

Intervals = dict[str, tuple[float, float]]

# an allocation strategy plans one round of testing
Allocator = Callable[
    [
        ParametricDtmc,
        list[Component],
        ObservationFunction,
        list[tuple[PropertyExpression, tuple[float, float]]],
        Fraction,
    ],
    Allocation,
]


@dataclass(frozen=True)
class RoundRecord:
    index: int  # evaluation pass, 1-based
    intervals: Intervals  # requirement id -> [lo, hi] at this pass
    decisions: dict[str, str | None]  # sticky status after this pass
    alpha_state: float  # per-state confidence used this pass
    nobs: dict[str, int]  # tests started after this pass (empty if none)
    round_cost: Fraction
    cumulative_cost: Fraction
    focus: tuple[str, ...] = ()


@dataclass(frozen=True)
class Verdict:
    outcome: str  # "AllSatisfied" | "Violated" | "BudgetExhausted"
    round: int  # testing rounds consumed (at least 1)
    total_cost: Fraction
    satisfied: tuple[str, ...] = ()
    violated: tuple[str, ...] = ()
    undecided: tuple[str, ...] = ()


@dataclass
class RunResult:
    verdict: Verdict
    rounds: list[RoundRecord] = field(default_factory=list)
    observations: ObservationFunction = field(default_factory=ObservationFunction)

    @property
    def outcome(self) -> str:
        return self.verdict.outcome


def uniform_allocator(
    model: ParametricDtmc,
    components: list[Component],
    obs: ObservationFunction,
    undecided: list[tuple[PropertyExpression, tuple[float, float]]],
    rbudget: Fraction,
) -> Allocation:
    """Non-adaptive baseline: an equal slice per component, every round."""
    share = Fraction(rbudget, len(components))
    return Allocation(
        nobs={c.name: int(share / c.cost) for c in components},
        focus=tuple(pe.id for pe, _ in undecided),
        estimates={},
    )


def run(
    problem: VerificationProblem,
    tester: Tester,
    *,
    epsilon1: float = 0.15,
    epsilon2: float = 1e-6,
    max_bounded_k: int = 100,
    max_boxes: int = 4096,
) -> RunResult:
    """Verify with the adaptive allocation heuristic."""

    def adaptive(model, components, obs, undecided, rbudget):
        return allocate(
            model, components, obs, undecided, rbudget,
            epsilon1=epsilon1, epsilon2=epsilon2,
        )

    return _loop(problem, tester, adaptive, max_bounded_k, max_boxes)


def run_baseline(
    problem: VerificationProblem,
    tester: Tester,
    *,
    max_bounded_k: int = 100,
    max_boxes: int = 4096,
) -> RunResult:
    """Verify with uniform per-round allocation, for comparison."""
    return _loop(problem, tester, uniform_allocator, max_bounded_k, max_boxes)


def _loop(
    problem: VerificationProblem,
    tester: Tester,
    allocator: Allocator,
    max_bounded_k: int,
    max_boxes: int,
) -> RunResult:
    problem.validate()
    model = problem.model
    components = problem.components
    if problem.rbudget < problem.min_round_cost():
        warnings.warn(
            f"round budget {problem.rbudget} cannot cover one test of every "
            f"component (total cost {problem.min_round_cost()}); some "
            f"components may never be tested",
            RuntimeWarning,
            stacklevel=2,
        )

    exprs = build_property_expressions(
        model, problem.requirements, max_bounded_k=max_bounded_k
    )
    obs = problem.initial_obs.copy()
    decisions: dict[str, str | None] = {pe.id: None for pe in exprs}
    intervals: Intervals = {}
    records: list[RoundRecord] = []
    remaining = Fraction(problem.budget)
    spent = Fraction(0)
    cap = -(-Fraction(problem.budget) // Fraction(problem.rbudget))  # ceil
    tested_rounds = 0

    for index in range(1, int(cap) + 2):
        open_exprs = [pe for pe in exprs if decisions[pe.id] is None]
        box = build_param_box(model, obs, problem.alpha, [pe.expr for pe in open_exprs])
        for pe in open_exprs:
            lo, hi = property_interval(
                pe.expr, box, kind=pe.req.kind, max_boxes=max_boxes
            )
            intervals[pe.id] = (lo, hi)
            decisions[pe.id] = decide_requirement(
                pe.req.rel, float(pe.req.bound), lo, hi
            )

        verdict_round = max(1, tested_rounds)
        if any(d == "violated" for d in decisions.values()):
            records.append(
                _record(index, intervals, decisions, box.alpha_state, {}, Fraction(0), spent)
            )
            return RunResult(
                _verdict("Violated", verdict_round, spent, decisions), records, obs
            )
        if all(d == "satisfied" for d in decisions.values()):
            records.append(
                _record(index, intervals, decisions, box.alpha_state, {}, Fraction(0), spent)
            )
            return RunResult(
                _verdict("AllSatisfied", verdict_round, spent, decisions), records, obs
            )
        if index > cap or remaining <= 0:
            records.append(
                _record(index, intervals, decisions, box.alpha_state, {}, Fraction(0), spent)
            )
            return RunResult(
                _verdict("BudgetExhausted", verdict_round, spent, decisions),
                records,
                obs,
            )

        undecided = [
            (pe, intervals[pe.id]) for pe in exprs if decisions[pe.id] is None
        ]
        plan = allocator(
            model, components, obs, undecided, min(problem.rbudget, remaining)
        )
        cost = {c.name: c.cost for c in components}
        round_cost = sum(
            (n * cost[name] for name, n in plan.nobs.items()), Fraction(0)
        )
        if round_cost == 0:
            # the remaining slice cannot buy a single test anywhere
            records.append(
                _record(index, intervals, decisions, box.alpha_state, {}, Fraction(0), spent)
            )
            return RunResult(
                _verdict("BudgetExhausted", verdict_round, spent, decisions),
                records,
                obs,
            )

        tested_rounds = index
        for comp in components:
            n = plan.nobs.get(comp.name, 0)
            if n > 0:
                obs = merge_observations(obs, tester(comp, n, index))
        spent += round_cost
        remaining -= round_cost
        records.append(
            _record(
                index, intervals, decisions, box.alpha_state,
                dict(plan.nobs), round_cost, spent, plan.focus,
            )
        )

    raise AssertionError("round loop must terminate inside the pass budget")


def _record(
    index: int,
    intervals: Intervals,
    decisions: dict[str, str | None],
    alpha_state: float,
    nobs: dict[str, int],
    round_cost: Fraction,
    cumulative: Fraction,
    focus: tuple[str, ...] = (),
) -> RoundRecord:
    return RoundRecord(
        index=index,
        intervals=dict(intervals),
        decisions=dict(decisions),
        alpha_state=alpha_state,
        nobs=nobs,
        round_cost=round_cost,
        cumulative_cost=cumulative,
        focus=focus,
    )


def _verdict(
    outcome: str, round_index: int, spent: Fraction, decisions: dict[str, str | None]
) -> Verdict:
    return Verdict(
        outcome=outcome,
        round=round_index,
        total_cost=spent,
        satisfied=tuple(k for k, d in decisions.items() if d == "satisfied"),
        violated=tuple(k for k, d in decisions.items() if d == "violated"),
        undecided=tuple(k for k, d in decisions.items() if d is None),
    )
