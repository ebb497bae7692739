"""Exact multivariate polynomial and rational-function arithmetic.

Transition probabilities and the closed-form property expressions produced by
state elimination are rational functions over the model parameters.  All
coefficients are `fractions.Fraction`, so arithmetic is exact; floats appear
only when an expression is finally evaluated.

Representation notes:
  * a Polynomial is a map from exponent tuples (one slot per parameter, in a
    fixed order shared by everything in one model) to nonzero coefficients;
  * a RationalFunction num/den is canonicalized by dividing both parts by the
    leading coefficient of den under graded-lexicographic monomial order;
  * no multivariate GCD reduction is performed.  Equal-looking functions with
    different representations (p*q/q vs p) stay distinct structurally but
    evaluate equally wherever both are defined.
"""

from __future__ import annotations

import re
from fractions import Fraction
from typing import Iterable, Mapping

_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class ExprError(ValueError):
    """Arithmetic misuse: mixed parameter contexts, division by zero, ..."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"syntax error at position {pos}: {message}")
        self.pos = pos


class SingularEvaluation(ExprError):
    """Denominator vanished (within 1e-12) at the evaluation point."""


def canonical_params(names: Iterable[str]) -> tuple[str, ...]:
    """Validate parameter names and fix their order (sorted)."""
    out = []
    seen = set()
    for name in names:
        if not _IDENT_RE.match(name):
            raise ExprError(f"invalid parameter name {name!r}")
        if name in seen:
            raise ExprError(f"duplicate parameter name {name!r}")
        seen.add(name)
        out.append(name)
    return tuple(sorted(out))


def _grlex_key(mono: tuple[int, ...]) -> tuple:
    return (sum(mono), mono)


class Polynomial:
    __slots__ = ("params", "terms")

    def __init__(self, params: tuple[str, ...], terms: Mapping[tuple[int, ...], Fraction]):
        self.params = params
        width = len(params)
        clean: dict[tuple[int, ...], Fraction] = {}
        for mono, coeff in terms.items():
            if len(mono) != width:
                raise ExprError("exponent tuple does not match parameter context")
            if coeff != 0:
                clean[mono] = coeff
        self.terms = clean

    @classmethod
    def constant(cls, params: tuple[str, ...], value) -> "Polynomial":
        value = Fraction(value)
        if value == 0:
            return cls(params, {})
        return cls(params, {(0,) * len(params): value})

    @classmethod
    def variable(cls, params: tuple[str, ...], name: str) -> "Polynomial":
        if name not in params:
            raise ExprError(f"unknown parameter {name!r}")
        mono = tuple(1 if q == name else 0 for q in params)
        return cls(params, {mono: Fraction(1)})

    def is_zero(self) -> bool:
        return not self.terms

    def is_constant(self) -> bool:
        return all(sum(m) == 0 for m in self.terms)

    def constant_value(self) -> Fraction:
        if not self.terms:
            return Fraction(0)
        if not self.is_constant():
            raise ExprError("polynomial is not constant")
        return next(iter(self.terms.values()))

    def degree(self) -> int:
        return max((sum(m) for m in self.terms), default=0)

    def leading_coefficient(self) -> Fraction:
        if not self.terms:
            return Fraction(0)
        return self.terms[max(self.terms, key=_grlex_key)]

    def variables_used(self) -> set[str]:
        used = set()
        for mono in self.terms:
            for name, e in zip(self.params, mono):
                if e:
                    used.add(name)
        return used

    def _check(self, other: "Polynomial") -> None:
        if self.params != other.params:
            raise ExprError("mixed parameter contexts")

    def add(self, other: "Polynomial") -> "Polynomial":
        self._check(other)
        terms = dict(self.terms)
        for mono, coeff in other.terms.items():
            terms[mono] = terms.get(mono, Fraction(0)) + coeff
        return Polynomial(self.params, terms)

    def neg(self) -> "Polynomial":
        return Polynomial(self.params, {m: -c for m, c in self.terms.items()})

    def sub(self, other: "Polynomial") -> "Polynomial":
        return self.add(other.neg())

    def mul(self, other: "Polynomial") -> "Polynomial":
        self._check(other)
        terms: dict[tuple[int, ...], Fraction] = {}
        for m1, c1 in self.terms.items():
            for m2, c2 in other.terms.items():
                mono = tuple(a + b for a, b in zip(m1, m2))
                acc = terms.get(mono)
                terms[mono] = c1 * c2 if acc is None else acc + c1 * c2
        return Polynomial(self.params, terms)

    def scale(self, factor: Fraction) -> "Polynomial":
        if factor == 0:
            return Polynomial(self.params, {})
        return Polynomial(self.params, {m: c * factor for m, c in self.terms.items()})

    def diff(self, name: str) -> "Polynomial":
        if name not in self.params:
            return Polynomial(self.params, {})
        idx = self.params.index(name)
        terms: dict[tuple[int, ...], Fraction] = {}
        for mono, coeff in self.terms.items():
            e = mono[idx]
            if e == 0:
                continue
            dm = list(mono)
            dm[idx] = e - 1
            dm = tuple(dm)
            terms[dm] = terms.get(dm, Fraction(0)) + coeff * e
        return Polynomial(self.params, terms)

    def eval_exact(self, values: Mapping[str, Fraction]) -> Fraction:
        needed = [False] * len(self.params)
        for mono in self.terms:
            for k, e in enumerate(mono):
                if e:
                    needed[k] = True
        point = [
            Fraction(values[name]) if need else Fraction(0)
            for name, need in zip(self.params, needed)
        ]
        total = Fraction(0)
        for mono, coeff in self.terms.items():
            term = coeff
            for v, e in zip(point, mono):
                if e:
                    term *= v**e
            total += term
        return total

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.params == other.params and self.terms == other.terms

    def __repr__(self) -> str:
        return f"Polynomial({poly_text(self)!r})"


def _frac_text(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def _term_text(params: tuple[str, ...], mono: tuple[int, ...], coeff_abs: Fraction) -> str:
    factors = []
    for name, e in zip(params, mono):
        if e == 1:
            factors.append(name)
        elif e > 1:
            factors.append(f"{name}^{e}")
    if not factors:
        return _frac_text(coeff_abs)
    body = "*".join(factors)
    if coeff_abs == 1:
        return body
    return f"{_frac_text(coeff_abs)}*{body}"


def poly_text(poly: Polynomial) -> str:
    if not poly.terms:
        return "0"
    pieces = []
    for mono in sorted(poly.terms, key=_grlex_key, reverse=True):
        coeff = poly.terms[mono]
        text = _term_text(poly.params, mono, abs(coeff))
        if not pieces:
            pieces.append(text if coeff > 0 else f"-{text}")
        else:
            pieces.append(f"+ {text}" if coeff > 0 else f"- {text}")
    return " ".join(pieces)


class RationalFunction:
    __slots__ = ("num", "den")

    def __init__(self, num: Polynomial, den: Polynomial):
        if num.params != den.params:
            raise ExprError("mixed parameter contexts")
        if den.is_zero():
            raise ExprError("denominator is identically zero")
        if num.is_zero():
            den = Polynomial.constant(num.params, 1)
        else:
            lead = den.leading_coefficient()
            if lead != 1:
                inv = Fraction(1) / lead
                num = num.scale(inv)
                den = den.scale(inv)
        self.num = num
        self.den = den

    @classmethod
    def constant(cls, params: tuple[str, ...], value) -> "RationalFunction":
        return cls(Polynomial.constant(params, value), Polynomial.constant(params, 1))

    @classmethod
    def parameter(cls, params: tuple[str, ...], name: str) -> "RationalFunction":
        return cls(Polynomial.variable(params, name), Polynomial.constant(params, 1))

    @property
    def params(self) -> tuple[str, ...]:
        return self.num.params

    def is_constant(self) -> bool:
        return self.num.is_constant() and self.den.is_constant()

    def constant_value(self) -> Fraction:
        return self.num.constant_value() / self.den.constant_value()

    def variables_used(self) -> set[str]:
        return self.num.variables_used() | self.den.variables_used()

    def add(self, other: "RationalFunction") -> "RationalFunction":
        return RationalFunction(
            self.num.mul(other.den).add(other.num.mul(self.den)),
            self.den.mul(other.den),
        )

    def sub(self, other: "RationalFunction") -> "RationalFunction":
        return RationalFunction(
            self.num.mul(other.den).sub(other.num.mul(self.den)),
            self.den.mul(other.den),
        )

    def neg(self) -> "RationalFunction":
        return RationalFunction(self.num.neg(), self.den)

    def mul(self, other: "RationalFunction") -> "RationalFunction":
        return RationalFunction(self.num.mul(other.num), self.den.mul(other.den))

    def div(self, other: "RationalFunction") -> "RationalFunction":
        if other.num.is_zero():
            raise ExprError("division by identically-zero expression")
        return RationalFunction(self.num.mul(other.den), self.den.mul(other.num))

    def eval_exact(self, values: Mapping[str, Fraction]) -> Fraction:
        den = self.den.eval_exact(values)
        if den == 0:
            raise SingularEvaluation("denominator is exactly zero at the given point")
        return self.num.eval_exact(values) / den

    def eval(self, valuation: Mapping[str, float]) -> float:
        """Exact rational evaluation; conversion to float happens last."""
        used = self.variables_used()
        missing = used - valuation.keys()
        if missing:
            raise ExprError(f"valuation missing parameters: {sorted(missing)}")
        exact = {name: Fraction(valuation[name]) for name in used}
        den = self.den.eval_exact(exact)
        if abs(float(den)) <= 1e-12:
            raise SingularEvaluation(
                f"denominator {poly_text(self.den)} evaluates to {float(den)!r}"
            )
        return float(self.num.eval_exact(exact) / den)

    def partial_derivative(self, name: str) -> "RationalFunction":
        dnum = self.num.diff(name).mul(self.den).sub(self.num.mul(self.den.diff(name)))
        return RationalFunction(dnum, self.den.mul(self.den))

    def to_text(self) -> str:
        if self.den.is_constant() and self.den.constant_value() == 1:
            return poly_text(self.num)
        return f"({poly_text(self.num)}) / ({poly_text(self.den)})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, RationalFunction):
            return NotImplemented
        return self.num == other.num and self.den == other.den

    def __repr__(self) -> str:
        return f"RationalFunction({self.to_text()!r})"


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>\d+(?:\.\d+)?)|(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)


class _Parser:
    """Recursive descent over: expr = term (+|- term)*, term = factor (*|/ factor)*,
    factor = [+|-] factor | atom [^ nat], atom = number | name | ( expr )."""

    def __init__(self, text: str, params: tuple[str, ...]):
        self.text = text
        self.params = params
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None:
                stripped = text[pos:].lstrip()
                if not stripped:
                    break
                at = len(text) - len(stripped)
                raise ExprSyntaxError(f"unexpected character {text[at]!r}", at)
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind), m.start(kind)))
            pos = m.end()
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, "", len(self.text))

    def take(self):
        tok = self.peek()
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, value, pos = self.peek()
        if kind != "op" or value != op:
            raise ExprSyntaxError(f"expected {op!r}", pos)
        self.take()

    def parse(self) -> RationalFunction:
        result = self.expr()
        kind, value, pos = self.peek()
        if kind is not None:
            raise ExprSyntaxError(f"unexpected {value!r}", pos)
        return result

    def expr(self) -> RationalFunction:
        acc = self.term()
        while True:
            kind, value, _ = self.peek()
            if kind == "op" and value in "+-":
                self.take()
                rhs = self.term()
                acc = acc.add(rhs) if value == "+" else acc.sub(rhs)
            else:
                return acc

    def term(self) -> RationalFunction:
        acc = self.factor()
        while True:
            kind, value, pos = self.peek()
            if kind == "op" and value in "*/":
                self.take()
                rhs = self.factor()
                if value == "*":
                    acc = acc.mul(rhs)
                else:
                    if rhs.num.is_zero():
                        raise ExprSyntaxError("division by zero expression", pos)
                    acc = acc.div(rhs)
            else:
                return acc

    def factor(self) -> RationalFunction:
        kind, value, _ = self.peek()
        if kind == "op" and value in "+-":
            self.take()
            inner = self.factor()
            return inner if value == "+" else inner.neg()
        return self.power()

    def power(self) -> RationalFunction:
        base = self.atom()
        kind, value, _ = self.peek()
        if kind == "op" and value == "^":
            self.take()
            ekind, etext, epos = self.peek()
            if ekind != "number" or "." in etext:
                raise ExprSyntaxError("exponent must be a non-negative integer", epos)
            self.take()
            exponent = int(etext)
            acc = RationalFunction.constant(self.params, 1)
            for _ in range(exponent):
                acc = acc.mul(base)
            return acc
        return base

    def atom(self) -> RationalFunction:
        kind, value, pos = self.take()
        if kind == "number":
            return RationalFunction.constant(self.params, Fraction(value))
        if kind == "name":
            if value not in self.params:
                raise ExprSyntaxError(f"undeclared parameter {value!r}", pos)
            return RationalFunction.parameter(self.params, value)
        if kind == "op" and value == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        raise ExprSyntaxError("expected a number, parameter or parenthesis", pos)


def parse_expr(text: str, params: Iterable[str]) -> RationalFunction:
    """Parse an arithmetic expression over the declared parameters.

    Decimal literals become exact rationals (0.26 is 26/100, not a float).
    """
    if isinstance(params, tuple):
        ctx = params
    else:
        ctx = canonical_params(params)
    return _Parser(text, ctx).parse()
