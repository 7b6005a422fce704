"""Command-line entry point ``pmg``.

Every subcommand prints one JSON report to stdout with the keys
``command, inputs, values, gaps, verdict, runtime_ms``. Exit status is 0 on
success, 1 when a check fails and 2 on usage or input-file errors.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from fractions import Fraction

import numpy as np

from pmg.best_response import best_response, gap_report
from pmg.certificate import (
    BoundViolation,
    InfeasibleError,
    best_response_values,
    optimum_implies_ne,
    pne_check,
)
from pmg.counterexamples import build_example, no_collapse_report, resolvents
from pmg.game import validate
from pmg.generate import GeneratorConfig, generate
from pmg.io import (
    GameFileError,
    dump,
    game_to_dict,
    load_game,
    load_policy,
    load_values,
    policy_to_dict,
)
from pmg.policy import CorrelatedPolicy, ProductPolicy, marginalize
from pmg.solver import collapse_cce, collapse_two_player, solve_discounted, solve_finite
from pmg.valuation import evaluate

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _floats(x) -> list[float]:
    return [float(v) for v in np.ravel(x)]


def _values_at_rho(game, policy) -> list[float]:
    return _floats(evaluate(game, policy).layer(0) @ game.rho)


def cmd_validate(args) -> dict:
    game = load_game(args.game, check=False)
    problems = validate(game, seed=args.seed)
    return {
        "inputs": {"game": args.game},
        "values": {
            "players": game.n,
            "states": game.num_states,
            "switching_control": game.is_switching_control,
            "violations": [{"kind": v.kind, "where": v.where, "detail": v.detail} for v in problems],
        },
        "gaps": {},
        "verdict": "PASS" if not problems else "FAIL",
    }


def cmd_solve(args) -> dict:
    game = load_game(args.game)
    solve = solve_finite if game.is_finite else solve_discounted
    report = solve(game, args.eps, seed=args.seed, max_iters=args.iters, learner=args.learner, jobs=args.jobs)
    if args.out:
        dump(policy_to_dict(report.policy), args.out)
    return {
        "inputs": {"game": args.game, "eps": args.eps, "seed": args.seed, "learner": args.learner, "iters": args.iters},
        "values": {
            "value_at_rho": list(report.certified.current_values),
            "certified_gap": report.certified_gap,
            "max_stage_gap": float(report.stage_gaps.max()),
            "max_stage_iterations": int(report.iterations.max()),
            "policy_layers": report.policy.num_layers,
        },
        "gaps": report.certified.to_dict(),
        "verdict": "PASS" if report.certified_gap <= args.eps else "FAIL",
    }


def cmd_gap(args) -> dict:
    game = load_game(args.game)
    policy = load_policy(args.policy)
    report = gap_report(game, policy, tol=args.tol, jobs=args.jobs)
    return {
        "inputs": {"game": args.game, "policy": args.policy, "eps": args.eps},
        "values": {"value_at_rho": list(report.current_values), "best_response": list(report.best_response_values)},
        "gaps": report.to_dict(),
        "verdict": "PASS" if report.max_gap <= args.eps else "FAIL",
    }


def cmd_best_response(args) -> dict:
    game = load_game(args.game)
    policy = load_policy(args.policy)
    players = [args.player] if args.player is not None else list(range(game.n))
    if any(not 0 <= k < game.n for k in players):
        raise UsageError(f"player must lie in 0..{game.n - 1}")
    current = _values_at_rho(game, policy)
    values, gaps = {}, {}
    for k in players:
        br = best_response(game, policy, k, tol=args.tol)
        values[str(k)] = {
            "value_at_rho": br.value_at_rho,
            "actions": np.argmax(br.factor, axis=-1).tolist(),
            "values": br.values.tolist(),
        }
        gaps[str(k)] = max(0.0, br.value_at_rho - current[k])
    return {
        "inputs": {"game": args.game, "policy": args.policy, "player": args.player},
        "values": values,
        "gaps": gaps,
        "verdict": "PASS",
    }


def cmd_marginalize(args) -> dict:
    policy = load_policy(args.policy)
    if not isinstance(policy, CorrelatedPolicy):
        raise UsageError("marginalize needs a correlated policy")
    pi = marginalize(policy)
    if args.out:
        dump(policy_to_dict(pi), args.out)
    return {
        "inputs": {"policy": args.policy},
        "values": {"policy": policy_to_dict(pi)},
        "gaps": {},
        "verdict": "PASS",
    }


def cmd_collapse(args) -> dict:
    game = load_game(args.game)
    sigma = load_policy(args.policy)
    if isinstance(sigma, ProductPolicy):
        sigma = CorrelatedPolicy.lift(sigma)
    if game.is_switching_control or game.n != 2:
        result = collapse_cce(game, sigma, args.tol)
    else:
        result = collapse_two_player(game, sigma, args.tol)
    if not result.bound_applies:
        verdict = "NOT_APPLICABLE"
    else:
        verdict = "PASS" if result.holds(1e-6) else "FAIL"
    return {
        "inputs": {"game": args.game, "policy": args.policy},
        "values": {"bound": result.bound, "factor": result.factor, "bound_applies": result.bound_applies},
        "gaps": result.to_dict(),
        "verdict": verdict,
    }


def cmd_certify(args) -> dict:
    game = load_game(args.game)
    pi = load_policy(args.policy)
    if not isinstance(pi, ProductPolicy):
        raise UsageError("certify needs a product policy")
    w = load_values(args.values).values if args.values else best_response_values(game, pi)
    threshold = args.threshold if args.threshold is not None else game.n * args.eps
    report = pne_check(game, pi, w, threshold)
    out = {
        "inputs": {"game": args.game, "policy": args.policy, "values": args.values, "threshold": threshold},
        "values": report.to_dict(),
        "gaps": {},
        "verdict": report.verdict,
    }
    try:
        gaps = optimum_implies_ne(report, game, pi)
        out["gaps"] = {**gaps.to_dict(), "bounded_by_objective": True}
    except InfeasibleError as err:
        out["gaps"] = {"error": str(err)}
    except BoundViolation as err:
        out["gaps"] = {"error": str(err), "bounded_by_objective": False}
        out["verdict"] = "FAIL"
    return out


def _exact(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}" if x.denominator != 1 else str(x.numerator)


def cmd_counterexample(args) -> dict:
    ex = build_example(args.which)
    if args.out:
        dump(game_to_dict(ex.game), args.out)
    rep = no_collapse_report(ex)
    pub = ex.published
    checks = {
        "value_sigma": (rep.value_sigma[0], pub["value_sigma"]),
        "value_marginal": (rep.value_marginal[0], pub["value_marginal"]),
        "deviation_vs_marginal": (rep.deviation_vs_marginal, pub["deviation_vs_marginal"]),
        "reference_gap": (rep.reference_gap, pub["ne_gap"]),
    }
    for (p, q), v in pub["deviations"].items():
        checks[f"deviation_p{p}_q{q}"] = (rep.deviations[(p, q)], v)
    if not ex.game.is_finite:
        R_sigma, R_pi = resolvents(ex)
        checks["resolvent_sigma_max_error"] = (
            float(np.abs(R_sigma - np.array(pub["resolvent_sigma"], dtype=float)).max()),
            Fraction(0),
        )
        checks["resolvent_marginal_max_error"] = (
            float(np.abs(R_pi - np.array(pub["resolvent_marginal"], dtype=float)).max()),
            Fraction(0),
        )
    values = {
        name: {"computed": got, "published": _exact(want), "match": abs(got - float(want)) <= 1e-9}
        for name, (got, want) in checks.items()
    }
    values["value_sigma_all_players"] = list(rep.value_sigma)
    values["value_marginal_all_players"] = list(rep.value_marginal)
    ok = rep.passed and all(v["match"] for v in values.values() if isinstance(v, dict))
    return {
        "inputs": {"example": args.which, "verify": args.verify},
        "values": values,
        "gaps": {"cce_gap": rep.cce_gap, "ne_gap": rep.ne_gap, "required_ne_gap": rep.required_gap},
        "verdict": ("PASS" if ok else "FAIL") if args.verify else "REPORTED",
    }


def cmd_generate(args) -> dict:
    if (args.steps is None) == (args.gamma is None):
        raise UsageError("give exactly one of --steps or --gamma")
    actions = tuple(args.actions) if args.actions else None
    try:
        config = GeneratorConfig(
            n=args.players,
            num_states=args.states,
            steps=args.steps,
            gamma=args.gamma,
            action_counts=actions,
            density=args.density,
            seed=args.seed,
            control=args.control,
        )
    except ValueError as err:
        raise UsageError(str(err)) from err
    game = generate(config)
    doc = game_to_dict(game)
    if args.out:
        dump(doc, args.out)
    return {
        "inputs": {"players": args.players, "states": args.states, "steps": args.steps, "gamma": args.gamma, "seed": args.seed},
        "values": {"game": doc if not args.out else args.out, "violations": len(validate(game))},
        "gaps": {},
        "verdict": "PASS",
    }


def csv_rows(report: dict) -> list[tuple[str, str, float]]:
    """Flatten numeric leaves to ``(player, quantity, value)``; lists indexed by player."""
    rows = []

    def walk(prefix: str, x):
        if isinstance(x, dict):
            for key, v in x.items():
                walk(f"{prefix}.{key}" if prefix else str(key), v)
        elif isinstance(x, list) and x and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in x):
            for k, v in enumerate(x):
                rows.append((str(k), prefix, float(v)))
        elif isinstance(x, (int, float)) and not isinstance(x, bool):
            rows.append(("all", prefix, float(x)))

    walk("values", report.get("values", {}))
    walk("gaps", report.get("gaps", {}))
    return rows


def write_csv(path: str, report: dict) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["player", "quantity", "value"])
        writer.writerows(csv_rows(report))


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "gap": cmd_gap,
    "best-response": cmd_best_response,
    "marginalize": cmd_marginalize,
    "collapse": cmd_collapse,
    "certify": cmd_certify,
    "counterexample": cmd_counterexample,
    "generate": cmd_generate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--eps", type=float, default=1e-2, help="target equilibrium gap")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", type=float, default=1e-9, help="best-response tolerance (discounted)")
    common.add_argument("--iters", type=int, default=200_000, help="max no-regret rounds per stage")
    common.add_argument("--learner", choices=("omwu", "mwu"), default="omwu")
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--csv", metavar="PATH", help="also write a player,quantity,value table")
    common.add_argument("--no-timing", action="store_true", help="report runtime_ms as null (byte-stable output)")

    parser = argparse.ArgumentParser(prog="pmg", description="Zero-sum polymatrix Markov game toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check the structural assumptions of a game file")
    p.add_argument("game")
    p = sub.add_parser("solve", parents=[common], help="approximate Nash equilibrium by backward induction")
    p.add_argument("game")
    p.add_argument("--out", help="write the policy here")
    p = sub.add_parser("gap", parents=[common], help="equilibrium gaps of a policy")
    p.add_argument("game")
    p.add_argument("policy")
    p = sub.add_parser("best-response", parents=[common], help="exact best responses")
    p.add_argument("game")
    p.add_argument("policy")
    p.add_argument("--player", type=int)
    p = sub.add_parser("marginalize", parents=[common], help="product of a correlated policy's marginals")
    p.add_argument("policy")
    p.add_argument("--out")
    p = sub.add_parser("collapse", parents=[common], help="certify a CCE and its marginals")
    p.add_argument("game")
    p.add_argument("policy")
    p = sub.add_parser("certify", parents=[common], help="evaluate the Nash program at (policy, values)")
    p.add_argument("game")
    p.add_argument("policy")
    p.add_argument("--values", help="value table file; default: best-response values")
    p.add_argument("--threshold", type=float, help="objective threshold; default n * eps")
    p = sub.add_parser("counterexample", parents=[common], help="the two no-collapse games")
    p.add_argument("which", choices=("finite", "infinite"))
    p.add_argument("--verify", action="store_true")
    p.add_argument("--out", help="write the game file here")
    p = sub.add_parser("generate", parents=[common], help="random compliant game")
    p.add_argument("--players", type=int, default=3)
    p.add_argument("--states", type=int, default=3)
    p.add_argument("--steps", type=int)
    p.add_argument("--gamma", type=float)
    p.add_argument("--actions", type=int, nargs="+")
    p.add_argument("--density", type=float, default=1.0)
    p.add_argument("--control", choices=("single", "all"), default="single")
    p.add_argument("--out")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    t0 = time.perf_counter()
    try:
        body = COMMANDS[args.command](args)
    except (UsageError, GameFileError, FileNotFoundError) as err:
        print(f"pmg {args.command}: {err}", file=sys.stderr)
        return EXIT_USAGE
    report = {"command": args.command, **body}
    report["runtime_ms"] = None if args.no_timing else round(1000.0 * (time.perf_counter() - t0), 3)
    print(dump(report))
    if args.csv:
        write_csv(args.csv, report)
    return EXIT_OK if report["verdict"] in ("PASS", "REPORTED", "NOT_APPLICABLE") else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
