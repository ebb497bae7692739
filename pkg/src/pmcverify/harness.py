"""Sources of component test observations.

A tester is a callable `(component, n, round_index) -> ObservationFunction`
producing the outcome counts of n fresh tests of the component, n per
parametric state the component owns.  Three sources:

* `simulated_tester` samples outcomes from a ground-truth parameter
  valuation.  Draws come from a counter-based generator keyed on
  (seed, component index, round index), so a run is reproducible and
  independent of the order in which components get tested.
* `script_tester` shells out to an external command once per component and
  round; the command performs the tests for real and reports counts.
* `interactive_tester` asks a human operator to run the tests and type the
  counts in.
"""

from __future__ import annotations

import subprocess
from typing import Callable, Mapping

import numpy as np

from .model import Component, ObservationFunction, ParametricDtmc, classify_edges

Tester = Callable[[Component, int, int], ObservationFunction]


class HarnessError(ValueError):
    """Bad ground truth, script misbehaviour, or operator input failure."""


# -- ground truth -------------------------------------------------------------


def load_truth(text: str) -> dict[str, float]:
    """Parse `param = value` lines; `#` starts a comment."""
    truth: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        name, sep, value = line.partition("=")
        name = name.strip()
        if not sep or not name:
            raise HarnessError(f"truth line {lineno}: expected 'param = value'")
        if name in truth:
            raise HarnessError(f"truth line {lineno}: duplicate entry for {name}")
        try:
            v = float(value.strip())
        except ValueError:
            raise HarnessError(
                f"truth line {lineno}: {value.strip()!r} is not a number"
            ) from None
        if not 0.0 <= v <= 1.0:
            raise HarnessError(f"truth line {lineno}: {name} = {v} outside [0,1]")
        truth[name] = v
    return truth


def validate_truth(model: ParametricDtmc, truth: Mapping[str, float]) -> None:
    """Every parameter valued, no stray names, and each parametric state's
    distribution stays a distribution at the given values."""
    missing = set(model.params) - truth.keys()
    if missing:
        raise HarnessError(f"truth gives no value for {', '.join(sorted(missing))}")
    stray = set(truth.keys()) - set(model.params)
    if stray:
        raise HarnessError(f"truth values for unknown parameters {', '.join(sorted(stray))}")
    for z in model.parametric_states:
        for target, prob in _edge_probs(model, z, truth):
            if not 0.0 <= prob <= 1.0:
                raise HarnessError(
                    f"at the given truth, edge {z} -> {target} has "
                    f"probability {prob:.6g}"
                )


def _edge_probs(
    model: ParametricDtmc, z: str, truth: Mapping[str, float]
) -> list[tuple[str, float]]:
    """Outcome categories of one test of state z, in edge order."""
    shapes = classify_edges(model, z)
    out: list[tuple[str, float]] = []
    spent = 0.0
    derived_at = None
    for i, shape in enumerate(shapes):
        if shape.kind == "const":
            p = float(shape.const)
        elif shape.kind == "param":
            p = float(truth[shape.param])
        else:
            derived_at = i
            p = 0.0
        spent += p
        out.append((shape.target, p))
    if derived_at is not None:
        out[derived_at] = (out[derived_at][0], 1.0 - spent)
    return out


# -- deterministic random stream ----------------------------------------------

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def _mix64(x: int) -> int:
    x &= _MASK
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK
    return x ^ (x >> 31)


class SplitMix64:
    """Counter-based uniform stream: output i is a bijective scramble of
    state + i * golden ratio, so a block of n draws vectorizes."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def uniforms(self, n: int) -> np.ndarray:
        idx = np.arange(1, n + 1, dtype=np.uint64)
        z = np.uint64(self._state) + np.uint64(_GOLDEN) * idx
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        z = z ^ (z >> np.uint64(31))
        self._state = (self._state + _GOLDEN * n) & _MASK
        # top 53 bits give a double in [0, 1)
        return (z >> np.uint64(11)).astype(np.float64) * 2.0**-53


def substream(seed: int, component_index: int, round_index: int) -> SplitMix64:
    s = _mix64(seed ^ _GOLDEN)
    s = _mix64(s ^ (component_index * _MIX1 & _MASK))
    s = _mix64(s ^ (round_index * _MIX2 & _MASK))
    return SplitMix64(s)


# -- testers ------------------------------------------------------------------


def simulated_tester(
    model: ParametricDtmc, truth: Mapping[str, float], seed: int
) -> Tester:
    validate_truth(model, truth)

    def run(component: Component, n: int, round_index: int) -> ObservationFunction:
        if n <= 0:
            return ObservationFunction({})
        rng = substream(seed, component.index, round_index)
        counts: dict[tuple[str, str], int] = {}
        for z in component.z_states:
            targets, probs = zip(*_edge_probs(model, z, truth))
            cum = np.cumsum(np.asarray(probs, dtype=np.float64))
            cum[-1] = 1.0  # guard the last category against rounding
            picks = np.searchsorted(cum, rng.uniforms(n), side="right")
            for i, c in enumerate(np.bincount(picks, minlength=len(targets))):
                if c:
                    counts[(z, targets[i])] = int(c)
        return ObservationFunction(counts)

    return run


def script_tester(
    model: ParametricDtmc, script_path: str, timeout: float = 600.0
) -> Tester:
    """Runs `script_path <component index> <n>`.  The script must print one
    `z s count` line per observed transition; for every state of the
    component the counts must sum to n."""

    def run(component: Component, n: int, round_index: int) -> ObservationFunction:
        if n <= 0:
            return ObservationFunction({})
        argv = [script_path, str(component.index), str(n)]
        try:
            proc = subprocess.run(
                argv, capture_output=True, text=True, timeout=timeout
            )
        except (OSError, subprocess.TimeoutExpired) as exc:
            raise HarnessError(f"test script failed to run: {exc}") from None
        if proc.returncode != 0:
            detail = proc.stderr.strip() or f"exit status {proc.returncode}"
            raise HarnessError(f"test script failed: {detail}")
        counts = _parse_script_output(model, component, proc.stdout)
        for z in component.z_states:
            got = sum(c for (src, _), c in counts.items() if src == z)
            if got != n:
                raise HarnessError(
                    f"test script reported {got} outcomes for state {z}, "
                    f"expected {n}"
                )
        return ObservationFunction(counts)

    return run


def _parse_script_output(
    model: ParametricDtmc, component: Component, stdout: str
) -> dict[tuple[str, str], int]:
    owned = set(component.z_states)
    counts: dict[tuple[str, str], int] = {}
    for lineno, raw in enumerate(stdout.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise HarnessError(
                f"test script output line {lineno}: expected 'z s count', got {line!r}"
            )
        z, s, count_text = parts
        if z not in owned:
            raise HarnessError(
                f"test script output line {lineno}: state {z} does not belong "
                f"to component {component.name}"
            )
        try:
            count = int(count_text)
        except ValueError:
            raise HarnessError(
                f"test script output line {lineno}: bad count {count_text!r}"
            ) from None
        if count < 0:
            raise HarnessError(f"test script output line {lineno}: negative count")
        if all(t != s for t in model.successors(z)):
            raise HarnessError(
                f"test script output line {lineno}: no transition {z} -> {s}"
            )
        key = (z, s)
        counts[key] = counts.get(key, 0) + count
    return counts


def interactive_tester(
    model: ParametricDtmc,
    input_fn: Callable[[str], str] = input,
    print_fn: Callable[[str], None] = print,
    attempts: int = 3,
) -> Tester:
    """Prompts the operator for per-state outcome counts, in successor order."""

    def run(component: Component, n: int, round_index: int) -> ObservationFunction:
        if n <= 0:
            return ObservationFunction({})
        counts: dict[tuple[str, str], int] = {}
        for z in component.z_states:
            succ = model.successors(z)
            print_fn(
                f"[round {round_index}] {component.name}: run {n} tests of "
                f"state {z} and report outcome counts for: {' '.join(succ)}"
            )
            for attempt in range(attempts):
                reply = input_fn(f"{z}> ")
                try:
                    values = [int(tok) for tok in reply.split()]
                except ValueError:
                    print_fn("counts must be integers")
                    continue
                if len(values) != len(succ):
                    print_fn(f"expected {len(succ)} counts, one per successor")
                    continue
                if any(v < 0 for v in values):
                    print_fn("counts cannot be negative")
                    continue
                if sum(values) != n:
                    print_fn(f"counts must sum to {n}")
                    continue
                for s, v in zip(succ, values):
                    if v:
                        counts[(z, s)] = v
                break
            else:
                raise HarnessError(
                    f"no valid counts for state {z} after {attempts} attempts"
                )
        return ObservationFunction(counts)

    return run
