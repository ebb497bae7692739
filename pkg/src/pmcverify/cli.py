"""Command line front end.

    pmcverify verify --model m.model --props r.props --config run.config
    pmcverify evaluate --model m.model --props r.props --truth t.truth
    pmcverify compare --scenarios 20 --seed 1 --out compare.csv
    pmcverify sweep-rbudget --model ... --props ... --truth ... 1250 2500 5000

Exit codes: 0 all requirements satisfied, 1 some requirement violated,
2 budget exhausted with requirements still open, 3 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import random
import statistics
import sys
import time
from fractions import Fraction
from importlib import resources
from typing import Callable, Sequence

from .engine import RunResult, run, run_baseline
from .expr import ExprError
from .harness import (
    HarnessError,
    interactive_tester,
    load_truth,
    script_tester,
    simulated_tester,
    validate_truth,
)
from .heuristic import decide_requirement
from .model import ModelError, VerificationProblem, parse_model
from .pmc import PmcError, build_property_expressions
from .props import PropsError, parse_requirements


class CliError(ValueError):
    pass


# -- configuration --------------------------------------------------------------

_CONFIG_KEYS: dict[str, Callable[[str], object]] = {
    "alpha": float,
    "budget": lambda v: Fraction(v),
    "round_budget": lambda v: Fraction(v),
    "epsilon1": float,
    "epsilon2": float,
    "seed": int,
    "tester": str,
    "script_path": str,
    "truth_file": str,
    "max_bounded_k": int,
    "max_boxes": int,
    "output_dir": str,
}

_DEFAULTS = {
    "alpha": 0.95,
    "epsilon1": 0.15,
    "epsilon2": 1e-6,
    "seed": 1,
    "tester": "simulated",
    "max_bounded_k": 100,
    "max_boxes": 4096,
    "output_dir": "out",
}


def load_config(text: str) -> dict:
    """`key = value` lines; `#` starts a comment."""
    out: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not sep or not key or not value:
            raise CliError(f"config line {lineno}: expected 'key = value'")
        if key not in _CONFIG_KEYS:
            raise CliError(f"config line {lineno}: unknown key {key!r}")
        try:
            out[key] = _CONFIG_KEYS[key](value)
        except (ValueError, ZeroDivisionError):
            raise CliError(f"config line {lineno}: bad value for {key}") from None
    return out


def _settings(args) -> dict:
    cfg = dict(_DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(load_config(_read(args.config)))
    for flag in ("truth", "seed", "out"):
        value = getattr(args, flag, None)
        if value is not None:
            cfg[{"truth": "truth_file", "out": "output_dir"}.get(flag, flag)] = value
    return cfg


def _read(path: str) -> str:
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror or exc}") from None


# -- shared loading -------------------------------------------------------------


def _load_problem(args, cfg) -> VerificationProblem:
    model, components, initial = parse_model(_read(args.model))
    reqs = parse_requirements(_read(args.props))
    if "budget" not in cfg or "round_budget" not in cfg:
        raise CliError("budget and round_budget must be set (config file)")
    problem = VerificationProblem(
        model=model,
        components=components,
        initial_obs=initial,
        requirements=reqs,
        alpha=cfg["alpha"],
        budget=cfg["budget"],
        rbudget=cfg["round_budget"],
    )
    problem.validate()
    return problem


def _load_tester(problem: VerificationProblem, cfg, relative_to: str | None):
    kind = cfg["tester"]
    if kind == "simulated":
        path = cfg.get("truth_file")
        if not path:
            raise CliError("the simulated tester needs truth_file (or --truth)")
        truth = load_truth(_read(_beside(path, relative_to)))
        return simulated_tester(problem.model, truth, cfg["seed"])
    if kind == "script":
        path = cfg.get("script_path")
        if not path:
            raise CliError("the script tester needs script_path")
        return script_tester(problem.model, path)
    if kind == "interactive":
        return interactive_tester(problem.model)
    raise CliError(f"unknown tester {kind!r} (simulated, script, interactive)")


def _beside(path: str, anchor: str | None) -> str:
    # a bare truth_file name in a config resolves next to the config file
    if anchor and not os.path.isabs(path) and not os.path.exists(path):
        candidate = os.path.join(os.path.dirname(anchor), path)
        if os.path.exists(candidate):
            return candidate
    return path


# -- output ---------------------------------------------------------------------


def _num(x) -> str:
    if isinstance(x, Fraction):
        return str(int(x)) if x.denominator == 1 else repr(float(x))
    return repr(float(x))


def write_outputs(result: RunResult, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "intervals.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "req_id", "lo", "hi", "decided"])
        for rec in result.rounds:
            for req_id, (lo, hi) in rec.intervals.items():
                w.writerow(
                    [rec.index, req_id, repr(lo), repr(hi), rec.decisions[req_id] or ""]
                )
    with open(os.path.join(out_dir, "allocations.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "component", "nobs", "round_cost", "cumulative_cost"])
        for rec in result.rounds:
            for name, n in rec.nobs.items():
                w.writerow(
                    [rec.index, name, n, _num(rec.round_cost), _num(rec.cumulative_cost)]
                )
    verdict = result.verdict
    payload = {
        "verdict": verdict.outcome,
        "round": verdict.round,
        "total_cost": float(verdict.total_cost),
        "satisfied": list(verdict.satisfied),
        "violated": list(verdict.violated),
        "undecided": list(verdict.undecided),
    }
    with open(os.path.join(out_dir, "verdict.json"), "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


_EXIT = {"AllSatisfied": 0, "Violated": 1, "BudgetExhausted": 2}


def _print_run(result: RunResult) -> None:
    for rec in result.rounds:
        parts = [
            f"{rid} [{lo:.6g}, {hi:.6g}]" for rid, (lo, hi) in rec.intervals.items()
        ]
        line = f"round {rec.index}: " + "  ".join(parts)
        if rec.nobs:
            tested = " ".join(f"{k}={v}" for k, v in rec.nobs.items() if v)
            line += f"  | testing {tested}"
        print(line)
    v = result.verdict
    print(
        f"verdict: {v.outcome} (rounds: {v.round}, total cost: {_num(v.total_cost)})"
    )
    if v.satisfied:
        print(f"  satisfied: {' '.join(v.satisfied)}")
    if v.violated:
        print(f"  violated: {' '.join(v.violated)}")
    if v.undecided:
        print(f"  undecided: {' '.join(v.undecided)}")


# -- verbs ------------------------------------------------------------------------


def cmd_verify(args) -> int:
    cfg = _settings(args)
    problem = _load_problem(args, cfg)
    tester = _load_tester(problem, cfg, args.config)
    runner = run_baseline if args.strategy == "uniform" else run
    kwargs = dict(max_bounded_k=cfg["max_bounded_k"], max_boxes=cfg["max_boxes"])
    if runner is run:
        kwargs.update(epsilon1=cfg["epsilon1"], epsilon2=cfg["epsilon2"])
    result = runner(problem, tester, **kwargs)
    write_outputs(result, cfg["output_dir"])
    _print_run(result)
    return _EXIT[result.verdict.outcome]


def cmd_evaluate(args) -> int:
    model, _, _ = parse_model(_read(args.model))
    reqs = parse_requirements(_read(args.props))
    truth = load_truth(_read(args.truth))
    validate_truth(model, truth)
    exprs = build_property_expressions(model, reqs)
    all_ok = True
    for pe in exprs:
        value = pe.expr.eval(truth)
        verdict = decide_requirement(pe.req.rel, float(pe.req.bound), value, value)
        ok = verdict == "satisfied"
        all_ok &= ok
        print(
            f"{pe.id}: value = {value:.9g}, requirement {pe.req.kind} "
            f"{pe.req.rel} {float(pe.req.bound):g} -> "
            f"{'satisfied' if ok else 'violated'}"
        )
    return 0 if all_ok else 1


def cmd_compare(args) -> int:
    rows = []
    diffs = []
    wins = ties = 0
    for i in range(args.scenarios):
        scenario = synthesize_scenario(i, args.seed)
        costs = {}
        for strategy, runner in (("adaptive", run), ("uniform", run_baseline)):
            # both strategies get identical per-(component, round) streams,
            # so the comparison is paired
            tester = simulated_tester(
                scenario.problem.model, scenario.truth, args.seed * 1000003 + i
            )
            result = runner(scenario.problem, tester)
            costs[strategy] = result.verdict.total_cost
            rows.append(
                [
                    scenario.name,
                    strategy,
                    result.verdict.outcome,
                    _num(result.verdict.total_cost),
                    result.verdict.round,
                ]
            )
        diff = float(costs["adaptive"] - costs["uniform"])
        diffs.append(diff)
        if diff < 0:
            wins += 1
        elif diff == 0:
            ties += 1
        print(
            f"{scenario.name}: adaptive {_num(costs['adaptive'])}, "
            f"uniform {_num(costs['uniform'])}, diff {diff:g}"
        )
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["scenario", "strategy", "verdict", "total_cost", "rounds"])
        w.writerows(rows)
    median = statistics.median(diffs)
    superiority = (wins + 0.5 * ties) / args.scenarios
    print(f"median cost difference (adaptive - uniform): {median:g}")
    print(f"superiority (wins plus half ties): {superiority:.3f}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _settings(args)
    rows = []
    for rbudget in args.rbudgets:
        cfg_i = dict(cfg, round_budget=Fraction(rbudget))
        problem = _load_problem(args, cfg_i)
        tester = _load_tester(problem, cfg_i, args.config)
        t0 = time.perf_counter()
        result = run(
            problem,
            tester,
            epsilon1=cfg_i["epsilon1"],
            epsilon2=cfg_i["epsilon2"],
            max_bounded_k=cfg_i["max_bounded_k"],
            max_boxes=cfg_i["max_boxes"],
        )
        wall_ms = (time.perf_counter() - t0) * 1000.0
        rows.append(
            [rbudget, result.verdict.round, _num(result.verdict.total_cost),
             f"{wall_ms:.1f}"]
        )
        print(
            f"rbudget {rbudget}: {result.verdict.outcome} in "
            f"{result.verdict.round} rounds, cost {_num(result.verdict.total_cost)}, "
            f"{wall_ms:.1f} ms"
        )
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["rbudget", "rounds", "total_cost", "wall_ms"])
        w.writerows(rows)
    return 0


# -- scenario synthesis -----------------------------------------------------------


@dataclasses.dataclass
class Scenario:
    name: str
    problem: VerificationProblem
    truth: dict[str, float]


def synthesize_scenario(
    index: int,
    seed: int,
    budget: int = 40000,
    rbudget: int = 1000,
    alpha: float = 0.9,
) -> Scenario:
    """A randomized per-service verification problem.

    The system is a dispatcher that routes each request to one of m services;
    every requirement bounds one service's failure exposure, the common SLO
    shape.  One service (the bottleneck) gets a bound only 15-35 percent
    away from its true failure rate, so settling it takes thousands of tests
    of that service across several rounds, while the other bounds are
    comfortable and settle almost immediately.  Where the budget goes once
    the easy requirements are out of the way is what separates allocation
    strategies, so these scenarios make strategy cost differences visible.
    """
    rng = random.Random((seed << 24) ^ (index * 0x9E3779B1))
    m = rng.randint(3, 5)
    costs = [rng.randint(1, 3) for _ in range(m)]
    truth = {f"p{j}": round(rng.uniform(0.65, 0.92), 3) for j in range(1, m + 1)}

    lines = ["dtmc"]
    lines += [f"param p{j};" for j in range(1, m + 1)]
    lines.append("state s0 init;")
    lines += [f"state z{j};" for j in range(1, m + 1)]
    lines.append("state ok;")
    lines += [f"state f{j};" for j in range(1, m + 1)]
    lines.append('label ok "ok";')
    lines += [f'label f{j} "fail{j}";' for j in range(1, m + 1)]
    lines += [f"trans s0 -> z{j} : 1/{m};" for j in range(1, m + 1)]
    for j in range(1, m + 1):
        lines.append(f"trans z{j} -> ok : p{j};")
        lines.append(f"trans z{j} -> f{j} : 1 - p{j};")
    lines.append("trans ok -> ok : 1;")
    lines += [f"trans f{j} -> f{j} : 1;" for j in range(1, m + 1)]
    lines += [
        f"component svc{j} cost {costs[j - 1]} states {{ z{j} }};"
        for j in range(1, m + 1)
    ]
    model, components, initial = parse_model("\n".join(lines) + "\n")

    bottleneck = rng.randrange(m)
    req_lines = []
    for j in range(1, m + 1):
        value = (1.0 - truth[f"p{j}"]) / m  # P(F fail_j) exactly
        if j - 1 == bottleneck:
            margin = value * rng.uniform(0.15, 0.35)
        else:
            margin = value * rng.uniform(1.8, 3.5) + 0.04
        req_lines.append(f'R{j}: P<{value + margin:.6f} [ F "fail{j}" ]')
    reqs = parse_requirements("\n".join(req_lines) + "\n")

    problem = VerificationProblem(
        model=model,
        components=components,
        initial_obs=initial,
        requirements=reqs,
        alpha=alpha,
        budget=Fraction(budget),
        rbudget=Fraction(rbudget),
    )
    problem.validate()
    return Scenario(name=f"star-{index:03d}", problem=problem, truth=truth)


def _data(name: str) -> str:
    return resources.files("pmcverify").joinpath("data", name).read_text()


# -- argument parsing ---------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2), which means exhausted
        raise CliError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="pmcverify", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    verify = sub.add_parser("verify", help="run the verification loop")
    verify.add_argument("--model", required=True)
    verify.add_argument("--props", required=True)
    verify.add_argument("--config")
    verify.add_argument("--truth", help="overrides truth_file from the config")
    verify.add_argument("--seed", type=int)
    verify.add_argument("--out", help="output directory (default: out)")
    verify.add_argument(
        "--strategy", choices=("adaptive", "uniform"), default="adaptive"
    )

    evaluate = sub.add_parser(
        "evaluate", help="exact requirement values at a known ground truth"
    )
    evaluate.add_argument("--model", required=True)
    evaluate.add_argument("--props", required=True)
    evaluate.add_argument("--truth", required=True)

    compare = sub.add_parser(
        "compare", help="adaptive vs uniform allocation over synthesized scenarios"
    )
    compare.add_argument("--scenarios", type=int, default=20)
    compare.add_argument("--seed", type=int, default=1)
    compare.add_argument("--out", default="compare.csv")

    sweep = sub.add_parser(
        "sweep-rbudget", help="rounds and cost as the round budget varies"
    )
    sweep.add_argument("--model", required=True)
    sweep.add_argument("--props", required=True)
    sweep.add_argument("--config")
    sweep.add_argument("--truth")
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--out", default="sweep.csv")
    sweep.add_argument(
        "rbudgets", nargs="+", type=int, metavar="RBUDGET",
        help="round budgets to try",
    )
    return parser


_HANDLERS = {
    "verify": cmd_verify,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "sweep-rbudget": cmd_sweep,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _HANDLERS[args.verb](args)
    except (
        CliError,
        ModelError,
        PropsError,
        PmcError,
        HarnessError,
        ExprError,
        OSError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
