"""Requirement parser and AST for the supported PCTL fragment.

One requirement per line:

    R1: P<0.26 [ F "alarmFail" ]
    R2: P<0.04 [ !"done" U "serviceFail" ]
    R3: P<0.0003 [ !"done" U "alarmFail" ] from "analysis"
    W3: R<2 [ F "done" ]

State formulas combine quoted atoms with `!`, `&`, `|`, parentheses and
`true`/`false`.  Path operators: `X`, `U`, `U<=k`, `F`, `F<=k`.  `F phi` is
normalized to `true U phi` at parse time (same for the bounded variant).
Reward requirements support reachability only; the instantaneous, cumulative
and steady-state reward operators are rejected as unsupported, as is any
nesting of P/R inside a state formula.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .model import ParametricDtmc


class PropsError(ValueError):
    """Requirement syntax or fragment violation."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


# -- state formulas ----------------------------------------------------------


@dataclass(frozen=True)
class TrueFormula:
    def text(self) -> str:
        return "true"


@dataclass(frozen=True)
class FalseFormula:
    def text(self) -> str:
        return "false"


@dataclass(frozen=True)
class Atom:
    name: str

    def text(self) -> str:
        return f'"{self.name}"'


@dataclass(frozen=True)
class Not:
    inner: "StateFormula"

    def text(self) -> str:
        return f"!{_wrap(self.inner)}"


@dataclass(frozen=True)
class And:
    left: "StateFormula"
    right: "StateFormula"

    def text(self) -> str:
        return f"{_wrap(self.left)} & {_wrap(self.right)}"


@dataclass(frozen=True)
class Or:
    left: "StateFormula"
    right: "StateFormula"

    def text(self) -> str:
        return f"{_wrap(self.left)} | {_wrap(self.right)}"


StateFormula = Union[TrueFormula, FalseFormula, Atom, Not, And, Or]


def _wrap(f: StateFormula) -> str:
    if isinstance(f, (And, Or)):
        return f"({f.text()})"
    return f.text()


def sat_states(model: ParametricDtmc, f: StateFormula) -> frozenset[str]:
    """Exact satisfaction set by label lookup and boolean evaluation."""
    if isinstance(f, TrueFormula):
        return frozenset(model.states)
    if isinstance(f, FalseFormula):
        return frozenset()
    if isinstance(f, Atom):
        return frozenset(s for s in model.states if f.name in model.labels.get(s, ()))
    if isinstance(f, Not):
        return frozenset(model.states) - sat_states(model, f.inner)
    if isinstance(f, And):
        return sat_states(model, f.left) & sat_states(model, f.right)
    if isinstance(f, Or):
        return sat_states(model, f.left) | sat_states(model, f.right)
    raise PropsError(f"unknown state formula {f!r}")


# -- path formulas -----------------------------------------------------------


@dataclass(frozen=True)
class Next:
    phi: StateFormula

    def text(self) -> str:
        return f"X {_wrap(self.phi)}"


@dataclass(frozen=True)
class Until:
    phi1: StateFormula
    phi2: StateFormula
    bound: int | None = None  # None = unbounded, else k >= 1

    def text(self) -> str:
        step = f"<={self.bound}" if self.bound is not None else ""
        if isinstance(self.phi1, TrueFormula):
            return f"F{step} {_wrap(self.phi2)}"
        return f"{_wrap(self.phi1)} U{step} {_wrap(self.phi2)}"


PathFormula = Union[Next, Until]


@dataclass(frozen=True)
class Requirement:
    id: str
    kind: str  # "P" | "R"
    rel: str  # one of < <= >= >
    bound: Fraction
    body: PathFormula | StateFormula  # PathFormula for P, target StateFormula for R
    start_label: str | None = None

    def text(self) -> str:
        if self.kind == "P":
            inner = self.body.text()
        else:
            inner = f"F {_wrap(self.body)}"
        suffix = f' from "{self.start_label}"' if self.start_label else ""
        return f"{self.id}: {self.kind}{self.rel}{_bound_text(self.bound)} [ {inner} ]{suffix}"


def _bound_text(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    # decimal render when exact, else a fraction literal
    scaled = value
    digits = 0
    while scaled.denominator != 1 and digits < 12:
        scaled *= 10
        digits += 1
    if scaled.denominator == 1:
        text = f"{value.numerator / value.denominator:.{digits}f}" if digits else str(value)
        return text
    return f"{value.numerator}/{value.denominator}"


# -- tokenizer/parser ---------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<atom>\"[^\"]*\")"
    r"|(?P<number>\d+(?:\.\d+)?|\d+/\d+)"
    r"|(?P<word>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op><=|>=|<|>|\[|\]|\(|\)|!|&|\||:)"
    r")"
)

_UNSUPPORTED_REWARD = {
    "I": "instantaneous reward R[I=k]",
    "C": "cumulative reward R[C<=k]",
    "S": "steady-state reward R[S]",
}


class _Tokens:
    def __init__(self, text: str, line: int):
        self.line = line
        self.items: list[tuple[str, str]] = []
        pos = 0
        while pos < len(text):
            while pos < len(text) and text[pos].isspace():
                pos += 1
            if pos >= len(text):
                break
            if text[pos] == "=":  # lone '=' only appears in I=k
                self.items.append(("op", "="))
                pos += 1
                continue
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                rest = text[pos:].strip()
                if not rest:
                    break
                raise PropsError(f"unexpected input {rest[:10]!r}", line)
            self.items.append((m.lastgroup, m.group(m.lastgroup)))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.items[self.i] if self.i < len(self.items) else (None, "")

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect(self, kind: str, value: str | None = None):
        k, v = self.take()
        if k != kind or (value is not None and v != value):
            want = value if value is not None else kind
            raise PropsError(f"expected {want!r}, found {v!r}", self.line)
        return v

    def done(self) -> bool:
        return self.i >= len(self.items)


def _parse_state_formula(toks: _Tokens) -> StateFormula:
    return _parse_or(toks)


def _parse_or(toks: _Tokens) -> StateFormula:
    left = _parse_and(toks)
    while toks.peek() == ("op", "|"):
        toks.take()
        left = Or(left, _parse_and(toks))
    return left


def _parse_and(toks: _Tokens) -> StateFormula:
    left = _parse_unary(toks)
    while toks.peek() == ("op", "&"):
        toks.take()
        left = And(left, _parse_unary(toks))
    return left


def _parse_unary(toks: _Tokens) -> StateFormula:
    kind, value = toks.peek()
    if (kind, value) == ("op", "!"):
        toks.take()
        return Not(_parse_unary(toks))
    if (kind, value) == ("op", "("):
        toks.take()
        inner = _parse_or(toks)
        toks.expect("op", ")")
        return inner
    if kind == "atom":
        toks.take()
        return Atom(value[1:-1])
    if kind == "word":
        if value == "true":
            toks.take()
            return TrueFormula()
        if value == "false":
            toks.take()
            return FalseFormula()
        if value in ("P", "R"):
            raise PropsError(
                f"nested {value} operator: only non-nested formulas are supported",
                toks.line,
            )
        raise PropsError(
            f"bare word {value!r} in a state formula (atoms must be quoted)", toks.line
        )
    raise PropsError(f"expected a state formula, found {value!r}", toks.line)


def _parse_step_bound(toks: _Tokens) -> int | None:
    if toks.peek() == ("op", "<="):
        toks.take()
        kind, value = toks.take()
        if kind != "number" or not value.isdigit() or int(value) < 1:
            raise PropsError("step bound must be a positive integer", toks.line)
        return int(value)
    return None


def _parse_path_formula(toks: _Tokens) -> PathFormula:
    kind, value = toks.peek()
    if (kind, value) == ("word", "X"):
        toks.take()
        return Next(_parse_state_formula(toks))
    if (kind, value) == ("word", "F"):
        toks.take()
        bound = _parse_step_bound(toks)
        return Until(TrueFormula(), _parse_state_formula(toks), bound)
    phi1 = _parse_state_formula(toks)
    toks.expect("word", "U")
    bound = _parse_step_bound(toks)
    phi2 = _parse_state_formula(toks)
    return Until(phi1, phi2, bound)


def _parse_number(value: str, line: int) -> Fraction:
    try:
        return Fraction(value)
    except (ValueError, ZeroDivisionError):
        raise PropsError(f"bad number {value!r}", line) from None


def parse_requirement_line(line: str, lineno: int) -> Requirement:
    head, sep, rest = line.partition(":")
    if not sep:
        raise PropsError("expected '<id>: ...'", lineno)
    req_id = head.strip()
    if not re.fullmatch(r"\w+", req_id):
        raise PropsError(f"bad requirement id {req_id!r}", lineno)
    toks = _Tokens(rest.strip(), lineno)

    kind = toks.expect("word")
    if kind not in ("P", "R"):
        raise PropsError(f"expected P or R, found {kind!r}", lineno)
    relkind, rel = toks.take()
    if relkind != "op" or rel not in ("<", "<=", ">", ">="):
        raise PropsError(f"expected a relational operator, found {rel!r}", lineno)
    numkind, numtext = toks.take()
    if numkind != "number":
        raise PropsError(f"expected a bound, found {numtext!r}", lineno)
    bound = _parse_number(numtext, lineno)

    toks.expect("op", "[")
    if kind == "P":
        body: PathFormula | StateFormula = _parse_path_formula(toks)
        if bound < 0 or bound > 1:
            raise PropsError(f"probability bound {numtext} outside [0,1]", lineno)
    else:
        wkind, word = toks.peek()
        if wkind == "word" and word in _UNSUPPORTED_REWARD:
            raise PropsError(
                f"unsupported-fragment: {_UNSUPPORTED_REWARD[word]} is not supported "
                f"(only reachability reward R[F phi])",
                lineno,
            )
        toks.expect("word", "F")
        body = _parse_state_formula(toks)
        if bound < 0:
            raise PropsError(f"reward bound {numtext} must be non-negative", lineno)
    toks.expect("op", "]")

    start_label = None
    if not toks.done():
        toks.expect("word", "from")
        akind, atom = toks.take()
        if akind != "atom":
            raise PropsError("expected a quoted atom after 'from'", lineno)
        start_label = atom[1:-1]
    if not toks.done():
        raise PropsError(f"unexpected trailing input {toks.peek()[1]!r}", lineno)

    return Requirement(
        id=req_id, kind=kind, rel=rel, bound=bound, body=body, start_label=start_label
    )


def parse_requirements(text: str) -> list[Requirement]:
    reqs: list[Requirement] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if not stripped:
            continue
        req = parse_requirement_line(stripped, lineno)
        if req.id in seen:
            raise PropsError(f"duplicate requirement id {req.id!r}", lineno)
        seen.add(req.id)
        reqs.append(req)
    return reqs


def print_requirements(reqs: list[Requirement]) -> str:
    return "\n".join(r.text() for r in reqs) + "\n"


def start_state(model: ParametricDtmc, req: Requirement) -> str:
    """Initial state unless the requirement carries a from-label, which must
    mark exactly one state."""
    if req.start_label is None:
        return model.init
    marked = [s for s in model.states if req.start_label in model.labels.get(s, ())]
    if len(marked) != 1:
        raise PropsError(
            f"requirement {req.id}: start label {req.start_label!r} marks "
            f"{len(marked)} states, need exactly 1"
        )
    return marked[0]
