"""Desk-scale experiment harness: generalization, efficiency race, warm-start.

Each runner is a plain function from explicit inputs to a report object and
(optionally) a CSV file plus a JSON config echo next to it, so experiments
re-run bit-identically from their recorded configuration. Repetition seeds
are derived from the base training seed; nothing here draws from global
randomness.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .approximator import (
    ApproximatorArch,
    TrainConfig,
    evaluate,
    flatten_games,
    forward_eval,
    train,
)
from .errors import ConfigError
from .games import StrategyProfile, nash_apr
from .generators import GeneratorSpec, derive_seed, game_stream, generate
from .solvers import (
    SolverConfig,
    fictitious_play,
    random_profile,
    regret_descent,
    regret_matching,
    replicator_dynamics,
)

RACE_SOLVERS = {
    "fp": fictitious_play,
    "rm": regret_matching,
    "rd": replicator_dynamics,
    "regret_descent": regret_descent,
}


@dataclass(frozen=True)
class ExperimentConfig:
    spec: GeneratorSpec
    count: int = 4600
    validation_count: int = 400
    test_count: int = 200
    hidden_layers: tuple = (128, 128)
    train: TrainConfig = field(default_factory=TrainConfig)
    repetitions: int = 1
    race_solvers: tuple = ("fp", "rm", "rd")
    race_max_iterations: int = 1000
    race_tolerance: float = 0.0
    warmstart_target: float = 0.01
    warmstart_max_iterations: int = 2000
    eta0: float = 0.1

    def __post_init__(self):
        if self.repetitions < 1:
            raise ConfigError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.race_tolerance < 0:
            raise ConfigError("race_tolerance must be >= 0")
        unknown = set(self.race_solvers) - set(RACE_SOLVERS)
        if unknown:
            raise ConfigError(f"unknown race solvers: {sorted(unknown)}")


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(x) -> str:
    return repr(float(x))


def write_config_echo(path, payload: dict) -> None:
    """JSON copy of the configuration that produced a report, written beside it."""
    echo_path = Path(path).with_suffix(".config.json")
    with open(echo_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)


def config_payload(cfg: ExperimentConfig) -> dict:
    doc = asdict(cfg)
    doc["spec"] = {
        "class_name": cfg.spec.class_name,
        "action_counts": list(cfg.spec.shape.action_counts),
        "seed": int(cfg.spec.seed),
        "class_params": dict(cfg.spec.class_params),
    }
    return doc


def model_outputs(params, arch, games):
    """Eval-mode profile and loss per game."""
    sigmas = forward_eval(params, arch, flatten_games(games))
    profiles = [
        StrategyProfile(tuple(s[b] for s in sigmas)) for b in range(len(games))
    ]
    losses = [nash_apr(p, g) for p, g in zip(profiles, games)]
    return profiles, losses


# --------------------------------------------------------------------------
# Generalization (train vs test vs random baseline)
# --------------------------------------------------------------------------

GENERALIZATION_HEADER = ("class", "repetition", "split", "mean", "std")


@dataclass
class GeneralizationRun:
    repetition: int
    seed: int
    params: object
    arch: ApproximatorArch
    train_stats: object
    test_stats: object
    random_stats: object


@dataclass
class GeneralizationReport:
    rows: list
    runs: list
    dataset: object


def random_baseline_losses(dataset, games) -> list:
    """Loss of one random profile per game, seeded from the dataset seed."""
    base = derive_seed(dataset.spec.seed, 0xBA5E)
    losses = []
    for i, g in enumerate(games):
        prof = random_profile(g.shape, game_stream(base, i))
        losses.append(nash_apr(prof, g))
    return losses


def run_generalization(cfg: ExperimentConfig, csv_path=None) -> GeneralizationReport:
    dataset = generate(
        cfg.spec, cfg.count, validation_count=cfg.validation_count,
        test_count=cfg.test_count,
    )
    arch = ApproximatorArch(shape=cfg.spec.shape, hidden_layers=cfg.hidden_layers)
    test_games = dataset.subset("test")
    rand = random_baseline_losses(dataset, test_games)
    rand_mean = float(np.mean(rand))
    rand_std = float(np.std(rand))

    rows, runs = [], []
    for rep in range(cfg.repetitions):
        seed = derive_seed(cfg.train.seed, rep)
        rep_cfg = TrainConfig(
            iterations=cfg.train.iterations,
            batch_size=cfg.train.batch_size,
            learning_rate=cfg.train.learning_rate,
            seed=seed,
            validation_interval=cfg.train.validation_interval,
        )
        result = train(arch, dataset, rep_cfg)
        train_stats = evaluate(result.params, arch, dataset.subset("train"))
        test_stats = evaluate(result.params, arch, test_games)
        cls = cfg.spec.class_name
        rows.append([cls, rep, "train", _fmt(train_stats.mean), _fmt(train_stats.std)])
        rows.append([cls, rep, "test", _fmt(test_stats.mean), _fmt(test_stats.std)])
        rows.append([cls, rep, "random", _fmt(rand_mean), _fmt(rand_std)])
        runs.append(
            GeneralizationRun(
                repetition=rep, seed=seed, params=result.params, arch=arch,
                train_stats=train_stats, test_stats=test_stats,
                random_stats=(rand_mean, rand_std),
            )
        )
    if csv_path is not None:
        _write_csv(csv_path, GENERALIZATION_HEADER, rows)
        write_config_echo(csv_path, config_payload(cfg))
    return GeneralizationReport(rows=rows, runs=runs, dataset=dataset)


# --------------------------------------------------------------------------
# Efficiency race (iterations to match the model, per game)
# --------------------------------------------------------------------------

RACE_HEADER = ("solver", "class", "mean_time_s", "mean_iterations", "failures")


@dataclass
class RaceReport:
    rows: list
    targets: list
    per_solver: dict  # solver -> list of SolverTrace


def run_efficiency_race(cfg: ExperimentConfig, params, arch, dataset,
                        csv_path=None) -> RaceReport:
    games = dataset.subset("test")
    if not games:
        raise ConfigError("race needs a non-empty test split")

    t0 = time.perf_counter()
    _, model_losses = model_outputs(params, arch, games)
    infer_time = time.perf_counter() - t0
    targets = [loss + cfg.race_tolerance for loss in model_losses]

    cls = dataset.spec.class_name
    rows = [
        [
            "nea", cls, _fmt(infer_time / len(games)), _fmt(1.0), 0,
        ]
    ]
    per_solver = {}
    for name in cfg.race_solvers:
        solve = RACE_SOLVERS[name]
        traces = []
        for game, target in zip(games, targets):
            solver_cfg = SolverConfig(
                max_iterations=cfg.race_max_iterations,
                target_nash_apr=target,
                record_every=cfg.race_max_iterations,
                eta0=cfg.eta0,
            )
            traces.append(solve(game, solver_cfg))
        failures = sum(1 for t in traces if not t.reached_target)
        rows.append(
            [
                name,
                cls,
                _fmt(np.mean([t.wall_time for t in traces])),
                _fmt(np.mean([t.iterations_used for t in traces])),
                failures,
            ]
        )
        per_solver[name] = traces
    if csv_path is not None:
        _write_csv(csv_path, RACE_HEADER, rows)
        write_config_echo(csv_path, config_payload(cfg))
    return RaceReport(rows=rows, targets=targets, per_solver=per_solver)


# --------------------------------------------------------------------------
# Warm-start comparison
# --------------------------------------------------------------------------

WARMSTART_HEADER = ("game", "init_kind", "iterations", "time_s", "final_loss")


@dataclass
class WarmstartReport:
    rows: list
    median_cold: float
    median_warm: float
    initial_losses: dict  # init_kind -> list of starting losses


def run_warmstart(cfg: ExperimentConfig, params, arch, dataset,
                  csv_path=None) -> WarmstartReport:
    games = dataset.subset("test")
    if not games:
        raise ConfigError("warm-start comparison needs a non-empty test split")
    profiles, model_losses = model_outputs(params, arch, games)

    rows = []
    iters = {"cold": [], "warm": []}
    initial = {"cold": [], "warm": []}
    for idx, game in enumerate(games):
        for kind, start in (("cold", None), ("warm", profiles[idx])):
            solver_cfg = SolverConfig(
                max_iterations=cfg.warmstart_max_iterations,
                target_nash_apr=cfg.warmstart_target,
                record_every=cfg.warmstart_max_iterations,
                warm_start=start,
                eta0=cfg.eta0,
            )
            trace = regret_descent(game, solver_cfg)
            rows.append(
                [idx, kind, trace.iterations_used, _fmt(trace.wall_time),
                 _fmt(trace.final_loss)]
            )
            iters[kind].append(trace.iterations_used)
            initial[kind].append(trace.loss_curve[0][1])
    report = WarmstartReport(
        rows=rows,
        median_cold=float(np.median(iters["cold"])),
        median_warm=float(np.median(iters["warm"])),
        initial_losses=initial,
    )
    if csv_path is not None:
        _write_csv(csv_path, WARMSTART_HEADER, rows)
        write_config_echo(csv_path, config_payload(cfg))
    return report
