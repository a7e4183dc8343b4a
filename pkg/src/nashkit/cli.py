"""Command-line front end: dataset generation, training, evaluation, the
solver race, warm-start comparison, the generalization-bound evaluator, and
the self-check property suites.

Every file-producing command writes a JSON echo of its arguments beside the
output, so a report can be regenerated from the echo alone. Dataset paths
ending in ``.json`` use the JSON twin format; anything else is binary.
"""

from __future__ import annotations

import argparse
import csv
import sys

from .approximator import (
    ApproximatorArch,
    TrainConfig,
    evaluate,
    load_model,
    save_model,
    save_training_log,
    train,
)
from .bounds import BoundInputs, evaluate_bound
from .errors import NumericError, UsageError
from .experiments import (
    ExperimentConfig,
    run_efficiency_race,
    run_warmstart,
    write_config_echo,
)
from .games import GameShape
from .generators import (
    GAME_CLASSES,
    GeneratorSpec,
    generate,
    load_dataset,
    load_dataset_json,
    save_dataset,
    save_dataset_json,
)
from .selfcheck import format_report, selfcheck


def _load_data(path):
    if str(path).endswith(".json"):
        return load_dataset_json(path)
    return load_dataset(path)


def _save_data(ds, path):
    if str(path).endswith(".json"):
        save_dataset_json(ds, path)
    else:
        save_dataset(ds, path)


def _parse_widths(text):
    return tuple(int(w) for w in text.split(",") if w.strip())


def _parse_params(pairs):
    out = {}
    for pair in pairs or ():
        name, _, value = pair.partition("=")
        if not _:
            raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {pair!r}")
        out[name] = float(value)
    return out


def _echo(out_path, args):
    payload = {k: v for k, v in vars(args).items() if k != "func"}
    write_config_echo(out_path, payload)


def cmd_gen(args) -> int:
    shape = GameShape(args.players, (args.actions,) * args.players)
    spec = GeneratorSpec(args.game_class, shape, args.seed, _parse_params(args.param))
    ds = generate(
        spec, args.count, validation_count=args.val_count, test_count=args.test_count
    )
    _save_data(ds, args.out)
    _echo(args.out, args)
    sizes = tuple(len(part) for part in ds.split)
    print(
        f"wrote {args.count} {args.game_class} games to {args.out} "
        f"(train/validation/test = {sizes[0]}/{sizes[1]}/{sizes[2]})"
    )
    return 0


def cmd_train(args) -> int:
    ds = _load_data(args.data)
    arch = ApproximatorArch(shape=ds.spec.shape, hidden_layers=_parse_widths(args.arch))
    cfg = TrainConfig(
        iterations=args.iters,
        batch_size=args.batch,
        learning_rate=args.lr,
        seed=args.seed,
        validation_interval=args.val_interval,
    )
    result = train(arch, ds, cfg)
    save_model(result.params, arch, args.out, adam=result.adam)
    log_path = str(args.out) + ".log.csv"
    save_training_log(result.log, log_path)
    _echo(args.out, args)
    final = result.log[-1].train_loss if result.log else float("nan")
    print(
        f"trained {cfg.iterations} steps on {len(ds.split[0])} games; "
        f"last train loss {final:.6f}; model -> {args.out}, log -> {log_path}"
    )
    return 0


def cmd_eval(args) -> int:
    ds = _load_data(args.data)
    arch, params, _ = load_model(args.model, expect_shape=ds.spec.shape)
    games = ds.subset(args.split)
    stats = evaluate(params, arch, games)
    print(f"{args.split}: n={len(games)} mean={stats.mean!r} std={stats.std!r}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["split", "count", "mean", "std"])
            writer.writerow([args.split, len(games), repr(stats.mean), repr(stats.std)])
        _echo(args.out, args)
    return 0


def _experiment_config(ds, arch, args, **overrides):
    base = dict(
        spec=ds.spec,
        count=len(ds.games),
        validation_count=len(ds.split[1]),
        test_count=len(ds.split[2]),
        hidden_layers=arch.hidden_layers,
        eta0=args.eta0,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def cmd_race(args) -> int:
    ds = _load_data(args.data)
    arch, params, _ = load_model(args.model, expect_shape=ds.spec.shape)
    cfg = _experiment_config(
        ds, arch, args,
        race_solvers=tuple(args.solvers.split(",")),
        race_max_iterations=args.max_iters,
        race_tolerance=args.tol,
    )
    report = run_efficiency_race(cfg, params, arch, ds, csv_path=args.out)
    for row in report.rows:
        print(
            f"{row[0]:>14}: mean_time_s={float(row[2]):.6f} "
            f"mean_iterations={float(row[3]):.2f} failures={row[4]}"
        )
    print(f"race report -> {args.out}")
    return 0


def cmd_warmstart(args) -> int:
    ds = _load_data(args.data)
    arch, params, _ = load_model(args.model, expect_shape=ds.spec.shape)
    cfg = _experiment_config(
        ds, arch, args,
        warmstart_target=args.target,
        warmstart_max_iterations=args.max_iters,
    )
    report = run_warmstart(cfg, params, arch, ds, csv_path=args.out)
    print(
        f"median iterations to target {args.target}: "
        f"cold={report.median_cold:.1f} warm={report.median_warm:.1f}"
    )
    print(f"warm-start report -> {args.out}")
    return 0


def cmd_bound(args) -> int:
    shape = GameShape(args.players, (args.actions,) * args.players)
    inputs = BoundInputs(
        m=args.m,
        delta=args.delta,
        lipschitz=args.lipschitz,
        shape=shape,
        r_grid=tuple(float(r) for r in args.r_grid.split(",")),
    )
    result = evaluate_bound(inputs)
    print(f"bound = {result.bound!r}")
    print(
        f"delta_m = {result.delta_m!r} at r = {result.best_radius!r}; "
        f"confidence term = {result.confidence_term!r}; overflow = {result.overflow}"
    )
    for term in result.per_radius:
        print(
            f"  r={term.radius:g}: ln_cover={term.log_cover!r} "
            f"complexity={term.complexity!r} value={term.value!r}"
        )
    if args.out:
        with open(args.out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["radius", "ln_cover", "complexity", "value", "overflow"])
            for term in result.per_radius:
                writer.writerow(
                    [
                        repr(term.radius),
                        repr(term.log_cover),
                        repr(term.complexity),
                        repr(term.value),
                        int(term.overflow),
                    ]
                )
        _echo(args.out, args)
    return 0


def cmd_selfcheck(args) -> int:
    results = selfcheck(
        lipschitz_samples=args.lipschitz_samples,
        oracle_samples=args.oracle_samples,
        gradient_samples=args.gradient_samples,
        seed=args.seed,
    )
    print(format_report(results))
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nashkit",
        description="Seeded game generation, NE approximator training, and "
        "solver benchmarks for n-player normal-form games.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a seeded game dataset")
    p.add_argument("--class", dest="game_class", required=True, choices=GAME_CLASSES)
    p.add_argument("--players", type=int, required=True)
    p.add_argument("--actions", type=int, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--val-count", type=int, default=None)
    p.add_argument("--test-count", type=int, default=None)
    p.add_argument("--param", action="append", metavar="NAME=VALUE",
                   help="game-class parameter, e.g. decay=0.9")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train an approximator on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--arch", default="128,128", help="comma-separated hidden widths")
    p.add_argument("--iters", type=int, default=20_000)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-interval", type=int, default=500)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="mean/std loss of a model on a split")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "validation", "test"))
    p.add_argument("--out", default=None, help="optional CSV report path")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("race", help="iterations solvers need to match the model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--solvers", default="fp,rm,rd")
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--tol", type=float, default=0.0)
    p.add_argument("--eta0", type=float, default=0.1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_race)

    p = sub.add_parser("warmstart", help="cold vs model-initialized descent")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--target", type=float, default=0.01)
    p.add_argument("--eta0", type=float, default=0.1)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_warmstart)

    p = sub.add_parser("bound", help="evaluate the generalization-gap bound")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--lipschitz", type=float, required=True)
    p.add_argument("--players", type=int, required=True)
    p.add_argument("--actions", type=int, required=True)
    p.add_argument("--r-grid", default="0.05,0.1,0.25,0.5,1.0,2.0,4.0")
    p.add_argument("--out", default=None, help="optional per-radius CSV")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("selfcheck", help="run the property suites")
    p.add_argument("--lipschitz-samples", type=int, default=10_000)
    p.add_argument("--oracle-samples", type=int, default=1_000)
    p.add_argument("--gradient-samples", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_selfcheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, NumericError, UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
