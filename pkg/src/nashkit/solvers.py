"""Iterative equilibrium solvers with per-iteration loss traces.

Four solvers share one config and trace format:

* ``fictitious_play``: simultaneous best responses against the opponents'
  empirical average strategies; reports the average.
* ``regret_matching``: strategies proportional to positive cumulative
  regrets; reports the running time-average.
* ``replicator_dynamics``: multiplicative payoff-proportional update;
  reports the current iterate.
* ``regret_descent``: projected subgradient descent directly on the loss;
  reports the best iterate seen so far, so its result can never be worse
  than its starting point. This is the solver used for warm-starting.

All solvers are deterministic given (game, config). Wall time is measured
with a monotonic clock around the iteration loop only.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .games import (
    Game,
    GameShape,
    StrategyProfile,
    deviation_payoffs,
    nash_apr,
    nash_apr_subgradient,
    sanitize_profile,
)

# Slack used when testing whether an early stop honored its target.
TARGET_SLACK = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 100_000
    target_nash_apr: float = 0.0
    record_every: int = 1
    warm_start: Optional[StrategyProfile] = None
    fp_weight: float = 1.0  # pseudo-count mass w0 on the initial profile
    rd_shift: float = 1e-3  # denominator shift for replicator dynamics
    eta0: float = 0.1  # base step size for regret descent (eta_t = eta0/sqrt(t))

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigError(f"max_iterations must be >= 1, got {self.max_iterations}")
        if self.target_nash_apr < 0:
            raise ConfigError(f"target must be >= 0, got {self.target_nash_apr}")
        if self.record_every < 1:
            raise ConfigError(f"record_every must be >= 1, got {self.record_every}")
        if self.fp_weight < 0 or self.rd_shift <= 0 or self.eta0 <= 0:
            raise ConfigError("fp_weight >= 0, rd_shift > 0, eta0 > 0 required")


@dataclass(frozen=True)
class SolverTrace:
    solver: str
    iterations_used: int
    wall_time: float
    loss_curve: tuple  # ((iteration, nash_apr), ...)
    curve_times: tuple  # elapsed seconds at each recorded point
    final_profile: StrategyProfile
    last_profile: StrategyProfile  # last iterate, = final for last-iterate solvers
    reached_target: bool

    @property
    def final_loss(self) -> float:
        return self.loss_curve[-1][1]


def _initial_profile(game: Game, cfg: SolverConfig) -> StrategyProfile:
    if cfg.warm_start is None:
        return StrategyProfile.uniform(game.shape)
    if not cfg.warm_start.matches(game.shape):
        raise ConfigError("warm_start profile does not match the game shape")
    start = sanitize_profile(cfg.warm_start)
    if not start.is_valid():
        raise ConfigError("warm_start is not a valid strategy profile")
    return start


class _Recorder:
    """Collects the loss curve and handles early stopping bookkeeping."""

    def __init__(self, cfg: SolverConfig):
        self.cfg = cfg
        self.curve = []
        self.times = []
        self.t0 = time.perf_counter()

    def elapsed(self) -> float:
        return time.perf_counter() - self.t0

    def record(self, iteration: int, loss: float, force: bool = False):
        if force or iteration % self.cfg.record_every == 0:
            self.curve.append((iteration, loss))
            self.times.append(self.elapsed())

    def hit(self, loss: float) -> bool:
        return loss <= self.cfg.target_nash_apr


def _finish(name, rec, iterations, reported, last, reached) -> SolverTrace:
    return SolverTrace(
        solver=name,
        iterations_used=iterations,
        wall_time=rec.elapsed(),
        loss_curve=tuple(rec.curve),
        curve_times=tuple(rec.times),
        final_profile=reported,
        last_profile=last,
        reached_target=reached,
    )


def fictitious_play(game: Game, cfg: SolverConfig) -> SolverTrace:
    start = _initial_profile(game, cfg)
    n = game.shape.num_players
    counts = [cfg.fp_weight * v.copy() for v in start.vectors]
    # Zero pseudo-count weight still needs a defined first average.
    avg = start if cfg.fp_weight > 0 else StrategyProfile.uniform(game.shape)

    rec = _Recorder(cfg)
    loss = nash_apr(sanitize_profile(avg), game)
    rec.record(0, loss, force=True)
    if rec.hit(loss):
        return _finish("fictitious_play", rec, 0, avg, avg, True)

    reached = False
    t = 0
    for t in range(1, cfg.max_iterations + 1):
        responses = [int(np.argmax(deviation_payoffs(game, i, avg))) for i in range(n)]
        for i, a in enumerate(responses):
            counts[i][a] += 1.0
        avg = StrategyProfile(tuple(c / c.sum() for c in counts))
        loss = nash_apr(sanitize_profile(avg), game)
        if rec.hit(loss):
            rec.record(t, loss, force=True)
            reached = True
            break
        rec.record(t, loss)
    if not reached and rec.curve[-1][0] != t:
        rec.record(t, loss, force=True)
    return _finish("fictitious_play", rec, t, avg, avg, reached)


def regret_matching(game: Game, cfg: SolverConfig) -> SolverTrace:
    start = _initial_profile(game, cfg)
    n = game.shape.num_players
    regrets = [np.zeros(k) for k in game.shape.action_counts]
    current = [v.copy() for v in start.vectors]
    sums = [np.zeros(k) for k in game.shape.action_counts]

    rec = _Recorder(cfg)
    loss = nash_apr(sanitize_profile(start), game)
    rec.record(0, loss, force=True)
    if rec.hit(loss):
        return _finish("regret_matching", rec, 0, start, start, True)

    reached = False
    avg = start
    t = 0
    for t in range(1, cfg.max_iterations + 1):
        prof = StrategyProfile(tuple(current))
        for i in range(n):
            dev = deviation_payoffs(game, i, prof)
            regrets[i] += dev - dev @ current[i]
            sums[i] += current[i]
        avg = StrategyProfile(tuple(s / t for s in sums))
        loss = nash_apr(sanitize_profile(avg), game)
        for i in range(n):
            pos = np.maximum(regrets[i], 0.0)
            total = pos.sum()
            if total > 0.0:
                current[i] = pos / total
            else:
                current[i] = np.full_like(pos, 1.0 / pos.size)
        if rec.hit(loss):
            rec.record(t, loss, force=True)
            reached = True
            break
        rec.record(t, loss)
    if not reached and rec.curve[-1][0] != t:
        rec.record(t, loss, force=True)
    last = StrategyProfile(tuple(current))
    return _finish("regret_matching", rec, t, avg, last, reached)


def replicator_dynamics(game: Game, cfg: SolverConfig) -> SolverTrace:
    start = _initial_profile(game, cfg)
    n = game.shape.num_players
    current = [v.copy() for v in start.vectors]

    rec = _Recorder(cfg)
    loss = nash_apr(sanitize_profile(start), game)
    rec.record(0, loss, force=True)
    if rec.hit(loss):
        return _finish("replicator_dynamics", rec, 0, start, start, True)

    reached = False
    t = 0
    for t in range(1, cfg.max_iterations + 1):
        prof = StrategyProfile(tuple(current))
        for i in range(n):
            dev = deviation_payoffs(game, i, prof)
            eu = dev @ current[i]
            grown = current[i] * (dev + cfg.rd_shift) / (eu + cfg.rd_shift)
            current[i] = grown / grown.sum()
        iterate = StrategyProfile(tuple(v.copy() for v in current))
        loss = nash_apr(sanitize_profile(iterate), game)
        if rec.hit(loss):
            rec.record(t, loss, force=True)
            reached = True
            break
        rec.record(t, loss)
    last = StrategyProfile(tuple(current))
    if not reached and rec.curve[-1][0] != t:
        rec.record(t, loss, force=True)
    return _finish("replicator_dynamics", rec, t, last, last, reached)


def project_simplex(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of a real vector onto the probability simplex.

    Sort-based algorithm, O(k log k): find the largest prefix of the sorted
    coordinates whose shifted values stay positive, then shift and clip.
    """
    v = np.asarray(v, dtype=np.float64)
    u = np.sort(v)[::-1]
    shifted = u + (1.0 - np.cumsum(u)) / np.arange(1, v.size + 1)
    rho = int(np.nonzero(shifted > 0)[0][-1])
    theta = (np.cumsum(u)[rho] - 1.0) / (rho + 1)
    return np.maximum(v - theta, 0.0)


def regret_descent(game: Game, cfg: SolverConfig) -> SolverTrace:
    start = _initial_profile(game, cfg)
    current = [v.copy() for v in start.vectors]

    rec = _Recorder(cfg)
    rep = nash_apr_subgradient(StrategyProfile(tuple(current)), game)
    loss = max(rep.value, 0.0)
    best_loss, best = loss, StrategyProfile(tuple(v.copy() for v in current))
    rec.record(0, best_loss, force=True)
    if rec.hit(best_loss):
        return _finish("regret_descent", rec, 0, best, best, True)

    reached = False
    t = 0
    for t in range(1, cfg.max_iterations + 1):
        eta = cfg.eta0 / np.sqrt(t)
        current = [
            project_simplex(v - eta * g) for v, g in zip(current, rep.gradients)
        ]
        rep = nash_apr_subgradient(StrategyProfile(tuple(current)), game)
        loss = max(rep.value, 0.0)
        if loss < best_loss:
            best_loss = loss
            best = StrategyProfile(tuple(v.copy() for v in current))
        if rec.hit(best_loss):
            rec.record(t, best_loss, force=True)
            reached = True
            break
        rec.record(t, best_loss)
    if not reached and rec.curve[-1][0] != t:
        rec.record(t, best_loss, force=True)
    last = StrategyProfile(tuple(current))
    return _finish("regret_descent", rec, t, best, last, reached)


def random_profile(shape: GameShape, stream: np.random.Generator) -> StrategyProfile:
    """Profile with each player's strategy uniform on the simplex."""
    vecs = []
    for k in shape.action_counts:
        x = stream.exponential(size=k)
        vecs.append(x / x.sum())
    return StrategyProfile(tuple(vecs))


SOLVERS = {
    "fp": fictitious_play,
    "fictitious_play": fictitious_play,
    "rm": regret_matching,
    "regret_matching": regret_matching,
    "rd": replicator_dynamics,
    "replicator_dynamics": replicator_dynamics,
    "regret_descent": regret_descent,
}


TRACE_CSV_HEADER = ("solver", "game_index", "iteration", "nash_apr", "wall_time_s")


def export_traces(traces, path) -> None:
    """Write recorded loss curves as CSV rows (solver, game_index, iteration,
    nash_apr, wall_time_s); ``traces`` is an iterable of (game_index, trace)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_CSV_HEADER)
        for game_index, trace in traces:
            for (iteration, loss), elapsed in zip(trace.loss_curve, trace.curve_times):
                writer.writerow(
                    [trace.solver, game_index, iteration, repr(loss), repr(elapsed)]
                )
