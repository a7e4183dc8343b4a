"""Executable property suites: Lipschitz sampling, oracle agreement,
gradient checks, golden fixtures, simplex projection.

Every suite returns a SuiteResult instead of raising, so the command-line
`selfcheck` can print a full report and exit nonzero on any failure. The
``loss_fn`` hooks exist for mutation testing: swapping in a corrupted loss
must make at least one suite fail.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .games import (
    Game,
    GameShape,
    StrategyProfile,
    brute_force_nash_apr,
    deviation_payoffs,
    l1_distance,
    max_distance,
    nash_apr,
    nash_apr_subgradient,
)
from .solvers import project_simplex

LIPSCHITZ_SLACK = 1e-9
ORACLE_TOL = 1e-10
GRADIENT_RTOL = 1e-4
GOLDEN_TOL = 1e-12


@dataclass(frozen=True)
class SuiteResult:
    name: str
    samples: int
    failures: int
    worst: float  # suite-specific margin (documented per suite)
    elapsed: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.failures == 0


def _random_shape(rng, max_players=3, max_actions=8) -> GameShape:
    n = int(rng.integers(2, max_players + 1))
    counts = tuple(int(rng.integers(1, max_actions + 1)) for _ in range(n))
    return GameShape(n, counts)


def _random_game(rng, shape: GameShape) -> Game:
    return Game(
        shape, tuple(rng.random(shape.action_counts) for _ in range(shape.num_players))
    )


def _random_profile(rng, shape: GameShape) -> StrategyProfile:
    vecs = []
    for k in shape.action_counts:
        x = rng.exponential(size=k)
        vecs.append(x / x.sum())
    return StrategyProfile(tuple(vecs))


def _nearby_profile(rng, p: StrategyProfile) -> StrategyProfile:
    """Renormalized perturbation of ``p`` at a random scale down to 1e-6."""
    scale = 10.0 ** -float(rng.integers(1, 7))
    vecs = []
    for v in p.vectors:
        w = np.clip(v + rng.uniform(-scale, scale, v.size), 0.0, None)
        s = w.sum()
        vecs.append(w / s if s > 0 else np.full(v.size, 1.0 / v.size))
    return StrategyProfile(tuple(vecs))


def _nearby_game(rng, u: Game) -> Game:
    scale = 10.0 ** -float(rng.integers(1, 7))
    return Game(
        u.shape,
        tuple(
            np.clip(t + rng.uniform(-scale, scale, t.shape), 0.0, 1.0)
            for t in u.utilities
        ),
    )


def suite_lipschitz_strategy(samples=10_000, seed=0, loss_fn=nash_apr) -> SuiteResult:
    """|loss(p,u) - loss(q,u)| <= 2*l1(p,q) + slack. Half the pairs are
    independent draws, half are small perturbations where the bound is
    tight. ``worst`` is the largest observed ratio |difference| / l1
    distance (should stay <= 2)."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    failures, worst = 0, 0.0
    for k in range(samples):
        shape = _random_shape(rng)
        game = _random_game(rng, shape)
        p = _random_profile(rng, shape)
        q = _random_profile(rng, shape) if k % 2 == 0 else _nearby_profile(rng, p)
        diff = abs(loss_fn(p, game) - loss_fn(q, game))
        dist = l1_distance(p, q)
        if diff > 2.0 * dist + LIPSCHITZ_SLACK:
            failures += 1
        if dist > 1e-12:
            worst = max(worst, diff / dist)
    return SuiteResult(
        "lipschitz_strategy", samples, failures, worst, time.perf_counter() - t0
    )


def suite_lipschitz_utility(samples=10_000, seed=1, loss_fn=nash_apr) -> SuiteResult:
    """|loss(p,u) - loss(p,v)| <= 2*max_distance(u,v) + slack. Pairs
    alternate between independent games and small perturbations."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    failures, worst = 0, 0.0
    for k in range(samples):
        shape = _random_shape(rng)
        u = _random_game(rng, shape)
        v = _random_game(rng, shape) if k % 2 == 0 else _nearby_game(rng, u)
        p = _random_profile(rng, shape)
        diff = abs(loss_fn(p, u) - loss_fn(p, v))
        dist = max_distance(u, v)
        if diff > 2.0 * dist + LIPSCHITZ_SLACK:
            failures += 1
        if dist > 1e-12:
            worst = max(worst, diff / dist)
    return SuiteResult(
        "lipschitz_utility", samples, failures, worst, time.perf_counter() - t0
    )


def _oracle_shape(rng) -> GameShape:
    """Random shape with |A| <= 10^4."""
    n = int(rng.integers(2, 4))
    cap = 100 if n == 2 else 21
    while True:
        counts = tuple(int(rng.integers(1, cap + 1)) for _ in range(n))
        if math.prod(counts) <= 10_000:
            return GameShape(n, counts)


def suite_oracle(samples=1_000, seed=2, loss_fn=nash_apr) -> SuiteResult:
    """Fast contraction loss vs brute-force enumeration within 1e-10.
    ``worst`` is the largest absolute disagreement."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    failures, worst = 0, 0.0
    for _ in range(samples):
        shape = _oracle_shape(rng)
        game = _random_game(rng, shape)
        prof = _random_profile(rng, shape)
        gap = abs(loss_fn(prof, game) - brute_force_nash_apr(prof, game))
        worst = max(worst, gap)
        if gap > ORACLE_TOL:
            failures += 1
    return SuiteResult("oracle_equivalence", samples, failures, worst,
                       time.perf_counter() - t0)


def suite_gradient(samples=200, seed=3, h=1e-5) -> SuiteResult:
    """Analytic subgradient vs central finite differences of the active
    branch at tie-free interior points, relative tolerance 1e-4. ``worst``
    is the largest relative error."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    failures, worst, checked = 0, 0.0, 0
    while checked < samples:
        shape = _random_shape(rng, max_actions=5)
        if min(shape.action_counts) < 2:
            continue
        game = _random_game(rng, shape)
        raw = _random_profile(rng, shape)
        # Mix toward uniform so every entry is >= 1e-3 (interior point).
        prof = StrategyProfile(
            tuple(0.9 * v + 0.1 / v.size for v in raw.vectors)
        )
        rep = nash_apr_subgradient(prof, game)
        if rep.tie_flag:
            continue
        checked += 1
        i_star, a_star = rep.argmax_player, rep.argmax_action

        def branch(vectors):
            p = StrategyProfile(tuple(vectors))
            dev = deviation_payoffs(game, i_star, p)
            return float(dev[a_star] - dev @ p.vectors[i_star])

        for j in range(shape.num_players):
            for a in range(shape.action_counts[j]):
                plus = [v.copy() for v in prof.vectors]
                minus = [v.copy() for v in prof.vectors]
                plus[j][a] += h
                minus[j][a] -= h
                fd = (branch(plus) - branch(minus)) / (2.0 * h)
                got = rep.gradients[j][a]
                err = abs(got - fd) / max(abs(fd), 1e-6)
                worst = max(worst, err)
                if err > GRADIENT_RTOL:
                    failures += 1
    return SuiteResult("gradient_fd", checked, failures, worst,
                       time.perf_counter() - t0)


def _golden_game():
    shape = GameShape(2, (2, 2))
    u1 = np.array([[0.0, 1.0], [0.5, 0.0]])
    u2 = np.array([[0.0, 0.5], [1.0, 0.0]])
    return Game(shape, (u1, u2))


def _perturbed_pair(eps=0.1):
    shape = GameShape(2, (2, 2))
    u2 = np.array([[0.5, 0.0], [1.0, 0.0]])
    a = Game(shape, (np.array([[0.5, 1.0], [0.5 - eps, 0.0]]), u2))
    b = Game(shape, (np.array([[0.5, 1.0], [0.5 + eps, 0.0]]), u2))
    return a, b


def suite_golden(loss_fn=nash_apr) -> SuiteResult:
    """Hand-worked fixture values, exact within 1e-12. ``worst`` is the
    largest absolute error over all fixture assertions."""
    t0 = time.perf_counter()
    g = _golden_game()
    shape = g.shape
    checks = [
        (loss_fn(StrategyProfile.pure(shape, (0, 1)), g), 0.0),
        (loss_fn(StrategyProfile.pure(shape, (1, 0)), g), 0.0),
        (
            loss_fn(
                StrategyProfile((np.array([2 / 3, 1 / 3]), np.array([2 / 3, 1 / 3]))), g
            ),
            0.0,
        ),
        (loss_fn(StrategyProfile.pure(shape, (0, 0)), g), 0.5),
    ]
    ga, gb = _perturbed_pair(0.1)
    checks.append((loss_fn(StrategyProfile.pure(shape, (0, 0)), ga), 0.0))
    checks.append((loss_fn(StrategyProfile.pure(shape, (1, 0)), gb), 0.0))
    checks.append((max_distance(ga, gb), 0.2))
    worst = max(abs(got - want) for got, want in checks)
    failures = sum(1 for got, want in checks if abs(got - want) > GOLDEN_TOL)
    return SuiteResult("golden_fixtures", len(checks), failures, worst,
                       time.perf_counter() - t0)


def suite_projection(samples=2_000, seed=4) -> SuiteResult:
    """Projection outputs are distributions; 2-coordinate cases match the
    closed form clip((a - b + 1)/2). ``worst`` is the largest deviation."""
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    failures, worst = 0, 0.0
    golden = project_simplex(np.array([0.8, 0.8]))
    worst = max(worst, float(np.abs(golden - 0.5).max()))
    if worst > 1e-12:
        failures += 1
    for _ in range(samples):
        k = int(rng.integers(1, 9))
        v = rng.uniform(-3, 3, k)
        p = project_simplex(v)
        err = max(abs(p.sum() - 1.0), max(0.0, -p.min()))
        worst = max(worst, err)
        if err > 1e-9:
            failures += 1
        if k == 2:
            x = min(max((v[0] - v[1] + 1.0) / 2.0, 0.0), 1.0)
            err2 = max(abs(p[0] - x), abs(p[1] - (1.0 - x)))
            worst = max(worst, err2)
            if err2 > 1e-9:
                failures += 1
    return SuiteResult("simplex_projection", samples + 1, failures, worst,
                       time.perf_counter() - t0)


def selfcheck(lipschitz_samples=10_000, oracle_samples=1_000,
              gradient_samples=200, seed=0, loss_fn=nash_apr):
    """Run every suite; returns the list of SuiteResults."""
    return [
        suite_lipschitz_strategy(lipschitz_samples, seed=seed, loss_fn=loss_fn),
        suite_lipschitz_utility(lipschitz_samples, seed=seed + 1, loss_fn=loss_fn),
        suite_oracle(oracle_samples, seed=seed + 2, loss_fn=loss_fn),
        suite_gradient(gradient_samples, seed=seed + 3),
        suite_golden(loss_fn=loss_fn),
        suite_projection(seed=seed + 4),
    ]


def format_report(results) -> str:
    lines = []
    for r in results:
        status = "pass" if r.passed else "FAIL"
        lines.append(
            f"{status}  {r.name}: samples={r.samples} failures={r.failures} "
            f"worst={r.worst:.3e} elapsed={r.elapsed:.2f}s"
        )
    return "\n".join(lines)
