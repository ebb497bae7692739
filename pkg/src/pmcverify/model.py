"""Parametric DTMC data model and its textual format.

A model file is line-oriented UTF-8, `#` starts a comment, statements end
with `;`:

    dtmc
    param p_ma;
    state s1 init;
    state s2;
    label s2 "analysis";
    trans s2 -> s4 : p_ma;
    trans s2 -> s3 : 1 - p_ma;
    reward s2 : 1;
    reward s2 -> s3 : 0.5;
    component medicalAnalysis cost 1 states { s2 };
    observe s2 -> s4 : 10;

Z denotes the parametric states (those with at least one non-constant
outgoing probability).  Components partition Z; the per-state distributions
of Z states are restricted so that every parametric edge is either a bare
parameter or the single derived edge `1 - (other bare parameters and
constants)` — the confidence machinery reads parameter intervals directly
off the observed edge categories, which is only sound for this shape.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .expr import (
    ExprError,
    Polynomial,
    RationalFunction,
    canonical_params,
    parse_expr,
    poly_text,
)


class ModelError(ValueError):
    """Model file syntax or validation failure."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class Component:
    index: int  # 1-based position in file order
    name: str
    cost: Fraction
    z_states: tuple[str, ...]


class ObservationFunction:
    """Counts of observed transitions out of parametric states."""

    __slots__ = ("counts",)

    def __init__(self, counts: Mapping[tuple[str, str], int] | None = None):
        self.counts: dict[tuple[str, str], int] = {}
        if counts:
            for key, value in counts.items():
                if value < 0:
                    raise ModelError(f"negative observation count for {key}")
                if value:
                    self.counts[key] = int(value)

    def get(self, z: str, s: str) -> int:
        return self.counts.get((z, s), 0)

    def total(self, z: str) -> int:
        return sum(v for (src, _), v in self.counts.items() if src == z)

    def is_empty(self) -> bool:
        return not self.counts

    def copy(self) -> "ObservationFunction":
        return ObservationFunction(self.counts)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservationFunction):
            return NotImplemented
        return self.counts == other.counts

    def __repr__(self) -> str:
        return f"ObservationFunction({self.counts!r})"


def merge_observations(a: ObservationFunction, b: ObservationFunction) -> ObservationFunction:
    merged = dict(a.counts)
    for key, value in b.counts.items():
        merged[key] = merged.get(key, 0) + value
    return ObservationFunction(merged)


@dataclass
class ParametricDtmc:
    states: tuple[str, ...]
    init: str
    transitions: dict[str, list[tuple[str, RationalFunction]]]
    labels: dict[str, frozenset[str]]
    state_rewards: dict[str, Fraction]
    trans_rewards: dict[tuple[str, str], Fraction]
    params: tuple[str, ...]
    parametric_states: tuple[str, ...] = field(default=())

    def successors(self, state: str) -> list[str]:
        return [t for t, _ in self.transitions[state]]

    def edge_expr(self, src: str, tgt: str) -> RationalFunction:
        for t, f in self.transitions[src]:
            if t == tgt:
                return f
        raise ModelError(f"no transition {src} -> {tgt}")

    def state_reward(self, s: str) -> Fraction:
        return self.state_rewards.get(s, Fraction(0))

    def trans_reward(self, src: str, tgt: str) -> Fraction:
        return self.trans_rewards.get((src, tgt), Fraction(0))


# redundant-edge decomposition of a parametric state's distribution
@dataclass(frozen=True)
class EdgeShape:
    kind: str  # "const" | "param" | "derived"
    target: str
    param: str | None = None
    const: Fraction | None = None


def classify_edges(model: ParametricDtmc, z: str) -> list[EdgeShape]:
    """Split z's outgoing edges into constants, bare parameters and the one
    derived edge 1 - (constants + other bare parameters).  Raises for any
    other shape."""
    edges = model.transitions[z]
    consts: list[tuple[str, Fraction]] = []
    bares: list[tuple[str, str]] = []
    candidates: list[tuple[str, RationalFunction]] = []
    for target, f in edges:
        if not (f.den.is_constant() and f.den.constant_value() == 1):
            raise ModelError(
                f"state {z}: edge to {target} has a non-polynomial probability "
                f"{f.to_text()!r}; parametric edges must be a bare parameter or "
                f"1 minus the state's other parameters and constants"
            )
        if f.num.is_constant():
            consts.append((target, f.num.constant_value()))
        elif len(f.num.terms) == 1 and set(f.num.terms.values()) == {Fraction(1)} and f.num.degree() == 1:
            name = next(iter(f.num.variables_used()))
            bares.append((target, name))
        else:
            candidates.append((target, f))

    bare_names = [name for _, name in bares]
    if len(set(bare_names)) != len(bare_names):
        raise ModelError(f"state {z}: a parameter labels more than one outgoing edge")
    if len(candidates) > 1:
        raise ModelError(
            f"state {z}: more than one derived edge "
            f"({', '.join(t for t, _ in candidates)})"
        )

    shapes = [EdgeShape("const", t, const=c) for t, c in consts]
    shapes += [EdgeShape("param", t, param=name) for t, name in bares]
    if candidates:
        target, f = candidates[0]
        expected = Polynomial.constant(model.params, 1 - sum((c for _, c in consts), Fraction(0)))
        for name in bare_names:
            expected = expected.sub(Polynomial.variable(model.params, name))
        if f.num != expected:
            raise ModelError(
                f"state {z}: edge to {target} has probability {f.to_text()!r}, "
                f"expected {poly_text(expected)!r}"
            )
        shapes.append(EdgeShape("derived", target))
    # order shapes by the original edge order (they are the multinomial categories)
    order = {t: i for i, (t, _) in enumerate(edges)}
    shapes.sort(key=lambda e: order[e.target])
    return shapes


def validate_model(model: ParametricDtmc) -> ParametricDtmc:
    states = set(model.states)
    if len(states) != len(model.states):
        raise ModelError("duplicate state name")
    if model.init not in states:
        raise ModelError(f"initial state {model.init!r} is not declared")
    for src, edges in model.transitions.items():
        if src not in states:
            raise ModelError(f"transition from undeclared state {src!r}")
        seen = set()
        for tgt, f in edges:
            if tgt not in states:
                raise ModelError(f"transition {src} -> {tgt}: target not declared")
            if tgt in seen:
                raise ModelError(f"duplicate transition {src} -> {tgt}")
            seen.add(tgt)
            if f.is_constant():
                value = f.constant_value()
                if not 0 <= value <= 1:
                    raise ModelError(
                        f"transition {src} -> {tgt}: constant probability {value} outside [0,1]"
                    )
    for s in model.states:
        if not model.transitions.get(s):
            raise ModelError(
                f"state {s} has no outgoing transition (absorbing states need an "
                f"explicit self-loop of probability 1)"
            )
    for s in model.labels:
        if s not in states:
            raise ModelError(f"label on undeclared state {s!r}")
    for s, r in model.state_rewards.items():
        if s not in states:
            raise ModelError(f"reward on undeclared state {s!r}")
        if r < 0:
            raise ModelError(f"negative reward on state {s}")
    for (src, tgt), r in model.trans_rewards.items():
        if src not in states or tgt not in states:
            raise ModelError(f"reward on undeclared transition {src} -> {tgt}")
        if r < 0:
            raise ModelError(f"negative reward on transition {src} -> {tgt}")
        if all(t != tgt for t, _ in model.transitions.get(src, [])):
            raise ModelError(f"reward on missing transition {src} -> {tgt}")

    _check_transition_sums(model)

    z = tuple(
        s
        for s in model.states
        if any(not f.is_constant() for _, f in model.transitions[s])
    )
    model.parametric_states = z
    return model


def _check_transition_sums(model: ParametricDtmc, samples: int = 200) -> None:
    rng = random.Random(0xD7C)  # fixed: validation must be deterministic
    points = [
        {p: rng.uniform(1e-3, 1 - 1e-3) for p in model.params} for _ in range(samples)
    ]
    points.append({p: 0.5 for p in model.params})
    for s in model.states:
        exprs = [f for _, f in model.transitions[s]]
        if all(f.is_constant() for f in exprs):
            total = sum((f.constant_value() for f in exprs), Fraction(0))
            if total != 1:
                raise ModelError(f"state {s}: outgoing probabilities sum to {total}, not 1")
            continue
        for v in points:
            total = sum(f.eval(v) for f in exprs)
            if abs(total - 1.0) > 1e-9:
                raise ModelError(
                    f"state {s}: outgoing probabilities sum to {total} at {v}, not 1"
                )


def validate_components(
    model: ParametricDtmc, components: list[Component]
) -> None:
    z_set = set(model.parametric_states)
    claimed: dict[str, str] = {}
    names = set()
    for comp in components:
        if comp.name in names:
            raise ModelError(f"duplicate component {comp.name!r}")
        names.add(comp.name)
        if comp.cost <= 0:
            raise ModelError(f"component {comp.name}: cost must be positive")
        if not comp.z_states:
            raise ModelError(f"component {comp.name}: empty state set")
        for s in comp.z_states:
            if s not in set(model.states):
                raise ModelError(f"component {comp.name}: undeclared state {s!r}")
            if s not in z_set:
                raise ModelError(
                    f"component {comp.name}: state {s} has no parametric transitions"
                )
            if s in claimed:
                raise ModelError(
                    f"state {s} belongs to components {claimed[s]} and {comp.name}"
                )
            claimed[s] = comp.name
    uncovered = z_set - set(claimed)
    if uncovered:
        raise ModelError(
            f"parametric states not covered by any component: {sorted(uncovered)}"
        )

    # each parameter must live inside a single component
    param_home: dict[str, str] = {}
    for comp in components:
        for s in comp.z_states:
            for _, f in model.transitions[s]:
                for p in f.variables_used():
                    home = param_home.setdefault(p, comp.name)
                    if home != comp.name:
                        raise ModelError(
                            f"parameter {p} is used by components {home} and {comp.name}"
                        )
    unused = set(model.params) - set(param_home)
    if unused:
        raise ModelError(f"declared parameters never used: {sorted(unused)}")

    # edge-shape restriction needed by the confidence-interval stage
    for s in model.parametric_states:
        classify_edges(model, s)


def validate_observations(model: ParametricDtmc, obs: ObservationFunction) -> None:
    z_set = set(model.parametric_states)
    for z, s in obs.counts:
        if z not in z_set:
            raise ModelError(f"observation on {z} -> {s}: {z} is not a parametric state")
        if all(t != s for t, _ in model.transitions[z]):
            raise ModelError(f"observation on missing transition {z} -> {s}")


def params_of_component(model: ParametricDtmc, component: Component) -> set[str]:
    out: set[str] = set()
    for s in component.z_states:
        for _, f in model.transitions[s]:
            out |= f.variables_used()
    return out


# ---------------------------------------------------------------------------
# parsing

_TRANS_RE = re.compile(
    r"trans\s+(?P<src>\w+)\s*->\s*(?P<tgt>\w+)\s*:\s*(?P<expr>.+)\Z"
)
_REWARD_EDGE_RE = re.compile(
    r"reward\s+(?P<src>\w+)\s*->\s*(?P<tgt>\w+)\s*:\s*(?P<val>\S+)\Z"
)
_REWARD_STATE_RE = re.compile(r"reward\s+(?P<s>\w+)\s*:\s*(?P<val>\S+)\Z")
_LABEL_RE = re.compile(r'label\s+(?P<s>\w+)\s+"(?P<atom>[^"]+)"\Z')
_COMPONENT_RE = re.compile(
    r"component\s+(?P<name>\w+)\s+cost\s+(?P<cost>\S+)\s+states\s*\{(?P<states>[^}]*)\}\Z"
)
_OBSERVE_RE = re.compile(
    r"observe\s+(?P<src>\w+)\s*->\s*(?P<tgt>\w+)\s*:\s*(?P<count>\d+)\Z"
)


def _fraction(text: str, line: int) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise ModelError(f"bad number {text!r}", line) from None


def parse_model(
    text: str,
) -> tuple[ParametricDtmc, list[Component], ObservationFunction]:
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if stripped:
            lines.append((lineno, stripped))
    if not lines or lines[0][1] != "dtmc":
        raise ModelError("model file must start with a 'dtmc' line", lines[0][0] if lines else 1)

    params: list[str] = []
    states: list[str] = []
    init: str | None = None
    raw_trans: list[tuple[int, str, str, str]] = []
    labels: dict[str, set[str]] = {}
    state_rewards: dict[str, Fraction] = {}
    trans_rewards: dict[tuple[str, str], Fraction] = {}
    raw_components: list[tuple[int, str, Fraction, list[str]]] = []
    raw_obs: list[tuple[int, str, str, int]] = []

    for lineno, line in lines[1:]:
        if not line.endswith(";"):
            raise ModelError("missing ';'", lineno)
        stmt = line[:-1].strip()
        head = stmt.split(None, 1)[0] if stmt else ""
        if head == "param":
            name = stmt[len("param") :].strip()
            if name in params:
                raise ModelError(f"duplicate parameter {name!r}", lineno)
            params.append(name)
        elif head == "state":
            rest = stmt[len("state") :].strip().split()
            if not rest or len(rest) > 2 or (len(rest) == 2 and rest[1] != "init"):
                raise ModelError("expected 'state <name> [init]'", lineno)
            name = rest[0]
            if name in states:
                raise ModelError(f"duplicate state {name!r}", lineno)
            states.append(name)
            if len(rest) == 2:
                if init is not None:
                    raise ModelError(f"second init state {name!r}", lineno)
                init = name
        elif head == "label":
            m = _LABEL_RE.match(stmt)
            if not m:
                raise ModelError("expected 'label <state> \"<atom>\"'", lineno)
            labels.setdefault(m["s"], set()).add(m["atom"])
        elif head == "trans":
            m = _TRANS_RE.match(stmt)
            if not m:
                raise ModelError("expected 'trans <state> -> <state> : <expr>'", lineno)
            raw_trans.append((lineno, m["src"], m["tgt"], m["expr"]))
        elif head == "reward":
            m = _REWARD_EDGE_RE.match(stmt)
            if m:
                key = (m["src"], m["tgt"])
                if key in trans_rewards:
                    raise ModelError(f"duplicate reward for {key[0]} -> {key[1]}", lineno)
                trans_rewards[key] = _fraction(m["val"], lineno)
            else:
                m = _REWARD_STATE_RE.match(stmt)
                if not m:
                    raise ModelError("expected 'reward <state>[ -> <state>] : <number>'", lineno)
                if m["s"] in state_rewards:
                    raise ModelError(f"duplicate reward for state {m['s']}", lineno)
                state_rewards[m["s"]] = _fraction(m["val"], lineno)
        elif head == "component":
            m = _COMPONENT_RE.match(stmt)
            if not m:
                raise ModelError(
                    "expected 'component <name> cost <number> states { s, ... }'", lineno
                )
            members = [s.strip() for s in m["states"].split(",") if s.strip()]
            raw_components.append((lineno, m["name"], _fraction(m["cost"], lineno), members))
        elif head == "observe":
            m = _OBSERVE_RE.match(stmt)
            if not m:
                raise ModelError("expected 'observe <state> -> <state> : <count>'", lineno)
            raw_obs.append((lineno, m["src"], m["tgt"], int(m["count"])))
        else:
            raise ModelError(f"unknown statement {head!r}", lineno)

    if init is None:
        raise ModelError("no state is marked init")
    try:
        ctx = canonical_params(params)
    except ExprError as exc:
        raise ModelError(str(exc)) from None

    transitions: dict[str, list[tuple[str, RationalFunction]]] = {s: [] for s in states}
    for lineno, src, tgt, expr_text in raw_trans:
        if src not in transitions:
            raise ModelError(f"transition from undeclared state {src!r}", lineno)
        try:
            f = parse_expr(expr_text, ctx)
        except ExprError as exc:
            raise ModelError(f"in transition expression: {exc}", lineno) from None
        transitions[src].append((tgt, f))

    model = ParametricDtmc(
        states=tuple(states),
        init=init,
        transitions=transitions,
        labels={s: frozenset(atoms) for s, atoms in labels.items()},
        state_rewards=state_rewards,
        trans_rewards=trans_rewards,
        params=ctx,
    )
    validate_model(model)

    components = [
        Component(index=i + 1, name=name, cost=cost, z_states=tuple(members))
        for i, (_, name, cost, members) in enumerate(raw_components)
    ]
    validate_components(model, components)

    counts: dict[tuple[str, str], int] = {}
    for lineno, src, tgt, count in raw_obs:
        key = (src, tgt)
        counts[key] = counts.get(key, 0) + count
    obs = ObservationFunction(counts)
    validate_observations(model, obs)

    return model, components, obs


def print_model(
    model: ParametricDtmc,
    components: Iterable[Component] = (),
    obs: ObservationFunction | None = None,
) -> str:
    out = ["dtmc"]
    for p in model.params:
        out.append(f"param {p};")
    for s in model.states:
        out.append(f"state {s} init;" if s == model.init else f"state {s};")
    for s in model.states:
        for atom in sorted(model.labels.get(s, ())):
            out.append(f'label {s} "{atom}";')
    for s in model.states:
        for tgt, f in model.transitions[s]:
            out.append(f"trans {s} -> {tgt} : {f.to_text()};")
    for s, r in model.state_rewards.items():
        out.append(f"reward {s} : {r};")
    for (src, tgt), r in model.trans_rewards.items():
        out.append(f"reward {src} -> {tgt} : {r};")
    for comp in components:
        members = ", ".join(comp.z_states)
        out.append(f"component {comp.name} cost {comp.cost} states {{ {members} }};")
    if obs is not None:
        for (src, tgt), count in sorted(obs.counts.items()):
            out.append(f"observe {src} -> {tgt} : {count};")
    return "\n".join(out) + "\n"


@dataclass
class VerificationProblem:
    model: ParametricDtmc
    components: list[Component]
    initial_obs: ObservationFunction
    requirements: list  # of props.Requirement
    alpha: float
    budget: Fraction
    rbudget: Fraction

    def validate(self) -> "VerificationProblem":
        if not 0 < self.alpha < 1:
            raise ModelError(f"alpha must be in (0,1), got {self.alpha}")
        if self.budget <= 0 or self.rbudget <= 0:
            raise ModelError("budget and round budget must be positive")
        if self.rbudget > self.budget:
            raise ModelError("round budget exceeds the overall budget")
        ids = [r.id for r in self.requirements]
        if len(ids) != len(set(ids)):
            raise ModelError("duplicate requirement ids")
        return self

    def min_round_cost(self) -> Fraction:
        return sum((c.cost for c in self.components), Fraction(0))
