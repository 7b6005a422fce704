"""Empirical scaling log: stage gap against iterations, solve time against game size.

Writes two CSV files; no rate is asserted. Example:

    python3 scripts/scaling.py --out-dir results
"""

import argparse
import csv
import time
from pathlib import Path

from pmg.generate import GeneratorConfig, generate
from pmg.solver import solve_finite
from pmg.stage import build_stage, solve_stages


def gap_vs_iterations(writer, seeds, budgets, learners):
    for seed in seeds:
        game = generate(GeneratorConfig(n=4, num_states=1, steps=1, action_counts=(3, 3, 3, 3), seed=seed))
        stage = build_stage(game, 0, 0)
        for learner in learners:
            for T in budgets:
                # eps far below reach: run exactly T rounds
                (sol,) = solve_stages([stage], 1e-12, max_iters=T, learner=learner, shortcut=False, check_every=T)
                writer.writerow([seed, learner, T, sol.gap, float(sol.avg_regrets.sum())])


def time_vs_size(writer, sizes, eps, repeats):
    for n, S, H, A in sizes:
        for r in range(repeats):
            game = generate(GeneratorConfig(n=n, num_states=S, steps=H, action_counts=(A,) * n, seed=r))
            t0 = time.perf_counter()
            rep = solve_finite(game, eps, seed=r)
            elapsed = time.perf_counter() - t0
            writer.writerow([n, S, H, A, r, elapsed, rep.certified_gap, int(rep.iterations.max())])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out-dir", default="results")
    parser.add_argument("--eps", type=float, default=1e-2)
    parser.add_argument("--repeats", type=int, default=3)
    parser.add_argument("--quick", action="store_true", help="small sweep for smoke testing")
    args = parser.parse_args()
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    budgets = [10, 30, 100, 300, 1000] if args.quick else [10, 30, 100, 300, 1000, 3000, 10000, 30000]
    with open(out / "gap_vs_iterations.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["seed", "learner", "iterations", "stage_gap", "sum_avg_regret"])
        gap_vs_iterations(w, range(2 if args.quick else 5), budgets, ["omwu", "mwu"])

    if args.quick:
        sizes = [(2, 2, 2, 2), (3, 3, 3, 2), (4, 3, 3, 3)]
    else:
        sizes = [(n, 3, 3, 3) for n in (2, 3, 4, 6, 8)]
        sizes += [(3, S, 3, 3) for S in (1, 5, 10, 20)]
        sizes += [(3, 3, H, 3) for H in (1, 5, 10, 20)]
        sizes += [(3, 3, 3, A) for A in (2, 4, 6)]
    with open(out / "time_vs_size.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["players", "states", "steps", "actions", "seed", "seconds", "certified_gap", "max_stage_iterations"])
        time_vs_size(w, sizes, args.eps, 1 if args.quick else args.repeats)
    print(f"wrote {out / 'gap_vs_iterations.csv'} and {out / 'time_vs_size.csv'}")


if __name__ == "__main__":
    main()
