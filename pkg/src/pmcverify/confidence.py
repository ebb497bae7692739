"""Confidence machinery: from observation counts to property-value intervals.

Three stages.  `state_ci` turns the observed transition counts of one
parametric state into simultaneous confidence intervals for its outgoing
categories (Goodman's multinomial intervals).  `build_param_box` runs that
for every parametric state at level alpha**(1/c) -- the product rule over the
c states that still matter -- and reads parameter intervals directly off the
bare-parameter edges, intersecting across states that share a parameter.
`property_interval` then bounds a property expression over the box by
branch-and-bound interval arithmetic, respecting the per-state simplex
constraints induced by derived edges.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from ._kernel import interval_eval
from .expr import Polynomial, RationalFunction
from .model import ModelError, ObservationFunction, ParametricDtmc, classify_edges

__all__ = [
    "chi_square_quantile",
    "state_ci",
    "ParamBox",
    "SimplexConstraint",
    "build_param_box",
    "property_interval",
]


# --------------------------------------------------------------------------
# chi-square quantile, to absolute accuracy 1e-10

_EPS = 1e-16
_TINY = 1e-300


def _gammainc_lower(a: float, x: float) -> float:
    """Regularized lower incomplete gamma P(a, x)."""
    if x <= 0.0:
        return 0.0
    log_front = a * math.log(x) - x - math.lgamma(a)
    if x < a + 1.0:
        # power series around 0
        term = 1.0 / a
        total = term
        n = 0
        while abs(term) > abs(total) * _EPS:
            n += 1
            term *= x / (a + n)
            total += term
            if n > 10_000:  # pragma: no cover
                break
        return total * math.exp(log_front)
    # Lentz continued fraction for the upper tail Q(a, x)
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 10_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    q = math.exp(log_front) * h
    return min(1.0, max(0.0, 1.0 - q))


@lru_cache(maxsize=4096)
def chi_square_quantile(p: float, df: int = 1) -> float:
    """Inverse CDF of the chi-square distribution with `df` degrees of
    freedom, by bisection on the regularized incomplete gamma."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile probability must be in (0,1), got {p}")
    if df < 1:
        raise ValueError(f"degrees of freedom must be >= 1, got {df}")
    a = df / 2.0

    def cdf(x: float) -> float:
        return _gammainc_lower(a, x / 2.0)

    hi = float(df) + 10.0
    while cdf(hi) < p:
        hi *= 2.0
    lo = 0.0
    # bisection converges unconditionally; 100 halvings of an interval this
    # size leave far less than the 1e-10 accuracy target
    for _ in range(100):
        mid = 0.5 * (lo + hi)
        if cdf(mid) < p:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12:
            break
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------------
# simultaneous multinomial intervals


def state_ci(counts: list[int], alpha_state: float) -> list[tuple[float, float]]:
    """Goodman simultaneous confidence intervals for one multinomial.

    `counts` are the observed counts per outgoing category, in edge order.
    With no observations at all every category gets the vacuous [0, 1].
    """
    k = len(counts)
    if k < 2:
        raise ValueError("a parametric state has at least two outgoing categories")
    if not 0.0 < alpha_state < 1.0:
        raise ValueError(f"confidence level must be in (0,1), got {alpha_state}")
    n = sum(counts)
    if n == 0:
        return [(0.0, 1.0)] * k
    a = chi_square_quantile(1.0 - (1.0 - alpha_state) / k, 1)
    out = []
    for x in counts:
        half = math.sqrt(a * (a + 4.0 * x * (n - x) / n))
        # x in {0, n} collapses half to exactly a; write the endpoint
        # directly instead of rounding through the quotient
        lo = 0.0 if x == 0 else (a + 2.0 * x - half) / (2.0 * (n + a))
        hi = 1.0 if x == n else (a + 2.0 * x + half) / (2.0 * (n + a))
        out.append((max(0.0, lo), min(1.0, hi)))
    return out


# --------------------------------------------------------------------------
# parameter boxes


@dataclass(frozen=True)
class SimplexConstraint:
    """lo <= sum(params) <= hi, induced by the derived edge of `state`."""

    state: str
    params: tuple[str, ...]
    lo: float
    hi: float


@dataclass(frozen=True)
class ParamBox:
    intervals: dict[str, tuple[float, float]]
    simplex: tuple[SimplexConstraint, ...]
    zero_obs_states: frozenset[str]
    zero_obs_params: frozenset[str]  # every hosting state is unobserved
    alpha_state: float


def build_param_box(
    model: ParametricDtmc,
    obs: ObservationFunction,
    alpha: float,
    undecided_exprs: list[RationalFunction],
) -> ParamBox:
    """Simultaneous parameter intervals at overall confidence `alpha`.

    The per-state level is alpha**(1/c) where c counts the parametric states
    whose parameters still occur in an undecided expression; c shrinks as
    requirements get decided, so later rounds spend the same alpha on fewer
    states and get tighter intervals.
    """
    relevant: set[str] = set()
    for e in undecided_exprs:
        relevant |= e.variables_used()

    def state_params(z: str) -> set[str]:
        out: set[str] = set()
        for _, f in model.transitions[z]:
            out |= f.variables_used()
        return out

    c = sum(1 for z in model.parametric_states if state_params(z) & relevant)
    alpha_state = alpha ** (1.0 / c) if c else alpha

    param_cis: dict[str, list[tuple[float, float]]] = {}
    hosts: dict[str, set[str]] = {}
    simplex: list[SimplexConstraint] = []
    zero_states: set[str] = set()

    for z in model.parametric_states:
        shapes = classify_edges(model, z)
        counts = [obs.get(z, e.target) for e in shapes]
        if sum(counts) == 0:
            zero_states.add(z)
        cis = state_ci(counts, alpha_state)

        consts_total = Fraction(0)
        bares: list[tuple[str, tuple[float, float]]] = []
        derived_ci: tuple[float, float] | None = None
        for shape, ci in zip(shapes, cis):
            if shape.kind == "const":
                consts_total += shape.const
            elif shape.kind == "param":
                bares.append((shape.param, ci))
                hosts.setdefault(shape.param, set()).add(z)
            else:
                derived_ci = ci

        for name, ci in bares:
            param_cis.setdefault(name, []).append(ci)

        if derived_ci is not None and bares:
            dlo, dhi = derived_ci
            slo = max(0.0, 1.0 - float(consts_total) - dhi)
            shi = min(1.0, 1.0 - float(consts_total) - dlo)
            if len(bares) == 1:
                param_cis[bares[0][0]].append((slo, shi))
            else:
                simplex.append(
                    SimplexConstraint(z, tuple(name for name, _ in bares), slo, shi)
                )

    intervals: dict[str, tuple[float, float]] = {}
    for p in model.params:
        cis = param_cis.get(p)
        if not cis:
            raise ModelError(f"parameter {p} never appears as a bare edge")
        lo = max(ci[0] for ci in cis)
        hi = min(ci[1] for ci in cis)
        if lo > hi:
            # the per-state intervals conflict (possible in finite samples
            # when one parameter drives several states); keep the hull so the
            # box still covers whichever interval holds the true value
            lo = min(ci[0] for ci in cis)
            hi = max(ci[1] for ci in cis)
        intervals[p] = (lo, hi)

    zero_params = frozenset(
        p for p, hs in hosts.items() if hs and hs <= zero_states
    )
    return ParamBox(
        intervals=intervals,
        simplex=tuple(simplex),
        zero_obs_states=frozenset(zero_states),
        zero_obs_params=zero_params,
        alpha_state=alpha_state,
    )


# --------------------------------------------------------------------------
# interval bounds on property expressions


def _poly_arrays(poly: Polynomial, used: list[str]):
    cols = [poly.params.index(p) for p in used]
    exps = np.zeros((len(poly.terms), len(used)), dtype=np.int32)
    coeffs = np.zeros(len(poly.terms), dtype=np.float64)
    for row, (mono, coeff) in enumerate(poly.terms.items()):
        for j, ci in enumerate(cols):
            exps[row, j] = mono[ci]
        coeffs[row] = float(coeff)
    return exps, coeffs


class _Bounder:
    """Branch-and-bound refinement of one side of the value interval."""

    def __init__(self, expr: RationalFunction, box: ParamBox, tol: float, max_boxes: int):
        self.used = sorted(expr.variables_used())
        self.n_exps, self.n_coeffs = _poly_arrays(expr.num, self.used)
        self.d_exps, self.d_coeffs = _poly_arrays(expr.den, self.used)
        self.tol = tol
        self.max_boxes = max_boxes
        self.root_lo = np.array([box.intervals[p][0] for p in self.used])
        self.root_hi = np.array([box.intervals[p][1] for p in self.used])
        self.constraints = self._compile_constraints(box)

    def _compile_constraints(self, box: ParamBox):
        compiled = []
        index = {p: i for i, p in enumerate(self.used)}
        for sc in box.simplex:
            idxs = [index[p] for p in sc.params if p in index]
            if not idxs:
                continue
            out_lo = sum(box.intervals[p][0] for p in sc.params if p not in index)
            out_hi = sum(box.intervals[p][1] for p in sc.params if p not in index)
            entry = (np.array(idxs), out_lo, out_hi, sc.lo, sc.hi)
            # a constraint the root box cannot satisfy reflects conflicting
            # observations; dropping it relaxes the bound, never narrows it
            if self._tighten(self.root_lo, self.root_hi, [entry]) is not None:
                compiled.append(entry)
        return compiled

    @staticmethod
    def _tighten(lo, hi, constraints):
        lo = lo.copy()
        hi = hi.copy()
        for idxs, out_lo, out_hi, clo, chi in constraints:
            sum_lo = float(lo[idxs].sum()) + out_lo
            sum_hi = float(hi[idxs].sum()) + out_hi
            if sum_lo > chi + 1e-12 or sum_hi < clo - 1e-12:
                return None
            for i in idxs:
                new_lo = max(lo[i], clo - (sum_hi - hi[i]))
                new_hi = min(hi[i], chi - (sum_lo - lo[i]))
                if new_lo > new_hi + 1e-12:
                    return None
                lo[i] = min(new_lo, new_hi)
                hi[i] = max(new_lo, new_hi)
        return lo, hi

    def _value(self, lo, hi) -> tuple[float, float]:
        nlo, nhi = interval_eval(self.n_exps, self.n_coeffs, lo, hi)
        dlo, dhi = interval_eval(self.d_exps, self.d_coeffs, lo, hi)
        if dlo <= 0.0 <= dhi:
            return (-math.inf, math.inf)
        cands = (nlo / dlo, nlo / dhi, nhi / dlo, nhi / dhi)
        return (min(cands), max(cands))

    def refine(self, minimize: bool) -> float:
        """Best-first branch and bound for one side of the value interval.

        The heap is keyed so the leaf that currently defines the bound pops
        first; splitting it either tightens the bound or hands the defining
        role to a sibling, so the bound converges geometrically even when it
        is pinned to a corner shaved off by a simplex constraint.  Stops when
        the defining leaf is narrower than tol/100 per dimension (further
        splits can only move the bound by Lipschitz * width) or when the box
        budget runs out.
        """
        root = self._tighten(self.root_lo, self.root_hi, self.constraints)
        if root is None:  # pragma: no cover - constraints were pre-filtered
            root = (self.root_lo.copy(), self.root_hi.copy())
        side = 0 if minimize else 1
        sign = 1.0 if minimize else -1.0
        tie = itertools.count()
        width_floor = self.tol * 1e-2

        heap: list[tuple[float, int, np.ndarray, np.ndarray]] = []
        v = self._value(*root)
        heapq.heappush(heap, (sign * v[side], next(tie), root[0], root[1]))
        bound = v[side]
        total = 1
        while heap and total < self.max_boxes:
            key, _, lo, hi = heap[0]
            bound = sign * key
            width = float(np.max(hi - lo))
            if width <= width_floor and math.isfinite(key):
                break
            if width <= 1e-9:
                # a denominator straddling zero on a box this small is a
                # genuine near-pole; the infinite bound stands
                break
            heapq.heappop(heap)
            dim = int(np.argmax(hi - lo))
            mid = 0.5 * (lo[dim] + hi[dim])
            left_hi = hi.copy()
            left_hi[dim] = mid
            right_lo = lo.copy()
            right_lo[dim] = mid
            for part in ((lo, left_hi), (right_lo, hi)):
                child = self._tighten(*part, self.constraints)
                if child is None:
                    continue  # infeasible boxes cannot hold the extremum
                cv = self._value(*child)
                heapq.heappush(heap, (sign * cv[side], next(tie), child[0], child[1]))
            total += 2
        if heap:
            bound = sign * heap[0][0]
        return bound


def property_interval(
    expr: RationalFunction,
    box: ParamBox,
    kind: str = "P",
    max_boxes: int = 4096,
    tol: float = 1e-4,
) -> tuple[float, float]:
    """Outer bounds on `expr` over the parameter box.

    Probability expressions are clipped to [0, 1], reward expressions to
    [0, inf); the upper reward bound is +inf when the denominator interval
    straddles zero.  Expressions whose every parameter lives in states with
    no observations yet get the vacuous interval exactly.
    """
    if kind not in ("P", "R"):
        raise ValueError(f"kind must be 'P' or 'R', got {kind!r}")
    cap = 1.0 if kind == "P" else math.inf
    used = expr.variables_used()
    if not used:
        v = expr.eval({})
        v = max(0.0, min(v, cap))
        return (v, v)
    if used <= box.zero_obs_params:
        return (0.0, cap)

    bounder = _Bounder(expr, box, tol=tol, max_boxes=max_boxes)
    lo = bounder.refine(minimize=True)
    hi = bounder.refine(minimize=False)
    lo = max(0.0, lo)
    hi = max(lo, min(hi, cap))
    return (lo, hi)
