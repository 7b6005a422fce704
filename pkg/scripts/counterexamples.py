"""Reproduce the two no-collapse games and print every quantity as a fraction.

    python3 scripts/counterexamples.py [--out-dir results]
"""

import argparse
import json
from fractions import Fraction
from pathlib import Path

from pmg.counterexamples import DEVIATIONS, build_example, collapse_on_variant, no_collapse_report, resolvents
from pmg.io import dump, game_to_dict


def frac(x: float) -> str:
    return str(Fraction(x).limit_denominator(10_000))


def report(name: str) -> dict:
    ex = build_example(name)
    rep = no_collapse_report(ex)
    out = {
        "example": name,
        "value_sigma": [frac(v) for v in rep.value_sigma],
        "value_marginal": [frac(v) for v in rep.value_marginal],
        "deviations": {f"p={p},q={q}": frac(rep.deviations[(p, q)]) for p, q in DEVIATIONS},
        "all_a2_vs_marginal": frac(rep.deviation_vs_marginal),
        "cce_gap": frac(rep.cce_gap),
        "ne_gap": frac(rep.ne_gap),
        "all_a2_gain": frac(rep.reference_gap),
    }
    if not ex.game.is_finite:
        R_sigma, R_pi = resolvents(ex)
        out["resolvent_sigma"] = [[frac(v) for v in row] for row in R_sigma]
        out["resolvent_marginal"] = [[frac(v) for v in row] for row in R_pi]
    variant = collapse_on_variant(ex)
    out["single_controller_variant"] = {
        "cce_gap": variant.before.max_gap,
        "ne_gap": variant.after.max_gap,
        "bound": variant.bound,
        "holds": variant.holds(1e-9),
    }
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", help="also write the game files and reports here")
    args = parser.parse_args()
    for name in ("finite", "infinite"):
        rep = report(name)
        print(json.dumps(rep, indent=2))
        if args.out_dir:
            d = Path(args.out_dir)
            d.mkdir(parents=True, exist_ok=True)
            dump(game_to_dict(build_example(name).game), d / f"{name}_game.json")
            dump(rep, d / f"{name}_report.json")


if __name__ == "__main__":
    main()
