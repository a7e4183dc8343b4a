#!/usr/bin/env python3
"""Desk-scale experiment driver.

Trains the approximator on one seeded game class, then writes the three
benchmark reports (generalization, efficiency race, warm-start) plus a
diagnostic bound evaluation into the output directory. Defaults mirror the
desk-scale acceptance setup: TravelersDilemma 10x10, 4000/400/200 split,
two 128-wide hidden layers.

Usage:
    python3 scripts/run_desk_experiments.py --out-dir reports --reps 3
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from nashkit.approximator import TrainConfig, lipschitz_estimate, save_model
from nashkit.bounds import BoundInputs, evaluate_bound
from nashkit.experiments import (
    ExperimentConfig,
    run_efficiency_race,
    run_generalization,
    run_warmstart,
)
from nashkit.games import GameShape
from nashkit.generators import GAME_CLASSES, GeneratorSpec, derive_seed


def parse_args(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", type=Path, default=Path("reports"))
    ap.add_argument("--class", dest="game_class", default="travelers_dilemma",
                    choices=GAME_CLASSES)
    ap.add_argument("--players", type=int, default=2)
    ap.add_argument("--actions", type=int, default=10)
    ap.add_argument("--count", type=int, default=4600)
    ap.add_argument("--val-count", type=int, default=400)
    ap.add_argument("--test-count", type=int, default=200)
    ap.add_argument("--hidden", default="128,128")
    ap.add_argument("--iters", type=int, default=3000)
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--data-seed", type=int, default=2024)
    ap.add_argument("--reps", type=int, default=3)
    ap.add_argument("--race-max-iters", type=int, default=1000)
    ap.add_argument("--race-tol", type=float, default=0.0)
    ap.add_argument("--warm-target", type=float, default=0.01)
    ap.add_argument("--warm-max-iters", type=int, default=2000)
    return ap.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    args.out_dir.mkdir(parents=True, exist_ok=True)

    shape = GameShape(args.players, (args.actions,) * args.players)
    spec = GeneratorSpec(args.game_class, shape, args.data_seed)
    cfg = ExperimentConfig(
        spec=spec,
        count=args.count,
        validation_count=args.val_count,
        test_count=args.test_count,
        hidden_layers=tuple(int(w) for w in args.hidden.split(",")),
        train=TrainConfig(iterations=args.iters, batch_size=args.batch,
                          learning_rate=args.lr, seed=args.seed),
        repetitions=args.reps,
        race_max_iterations=args.race_max_iters,
        race_tolerance=args.race_tol,
        warmstart_target=args.warm_target,
        warmstart_max_iterations=args.warm_max_iters,
    )

    t0 = time.perf_counter()
    print(f"[1/4] generalization: {args.game_class} {shape.action_counts}, "
          f"{args.reps} repetition(s), {args.iters} steps each")
    gen = run_generalization(cfg, csv_path=args.out_dir / "generalization.csv")
    for run in gen.runs:
        print(f"  rep {run.repetition}: train {run.train_stats.mean:.5f} "
              f"test {run.test_stats.mean:.5f} random {run.random_stats[0]:.5f}")

    first = gen.runs[0]
    save_model(first.params, first.arch, args.out_dir / "model.nea")

    print("[2/4] efficiency race")
    race = run_efficiency_race(cfg, first.params, first.arch, gen.dataset,
                               csv_path=args.out_dir / "race.csv")
    for row in race.rows:
        print(f"  {row[0]:>14}: mean_iterations={float(row[3]):8.2f} "
              f"failures={row[4]}")

    print("[3/4] warm start")
    warm = run_warmstart(cfg, first.params, first.arch, gen.dataset,
                         csv_path=args.out_dir / "warmstart.csv")
    print(f"  median iterations: cold={warm.median_cold:.1f} "
          f"warm={warm.median_warm:.1f}")

    print("[4/4] diagnostic generalization bound")
    probes = np.random.default_rng(derive_seed(args.data_seed, 0x11B5))
    lip = lipschitz_estimate(first.params, first.arch, 200, probes)
    result = evaluate_bound(BoundInputs(
        m=len(gen.dataset.split[0]), delta=0.05, lipschitz=max(lip, 1e-6),
        shape=shape, r_grid=(0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 4.0),
    ))
    print(f"  empirical Lipschitz lower bound {lip:.3f}; "
          f"gap bound {result.bound:.3e} at r={result.best_radius} "
          f"(diagnostic only; astronomically loose at this scale)")

    print(f"done in {time.perf_counter() - t0:.1f}s; reports in {args.out_dir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
