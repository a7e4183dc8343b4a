"""Diagnostic PAC generalization bound for Lipschitz equilibrium approximators.

Evaluates, for a hypothesis class of L-Lipschitz maps from utility tensors
to strategy profiles, the explicit high-probability bound on the
generalization gap

    gap <= 2 * Delta_m + 4 * sqrt(2 * ln(4/delta) / m),

where Delta_m = min over the radius grid of sqrt(2 * lnN(r) / m) + 2r and
the covering number satisfies

    lnN(r) <= ceil(4L/r)^(n|A|)
              * sum_i (|A_i| - 1) * ln((e*40*n*|A_i|/r + e*|A_i|) / (|A_i| - 1)).

The outer power makes lnN astronomically large for all but tiny shapes, so
everything is evaluated in nested log-space; a radius whose term still
overflows double precision is reported as +inf with an overflow flag. The
numbers are diagnostic, not practical sample-size prescriptions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigError
from .games import GameShape

# exp() beyond this overflows a double; used to detect log-space overflow.
_EXP_LIMIT = 709.0


@dataclass(frozen=True)
class BoundInputs:
    m: int
    delta: float
    lipschitz: float
    shape: GameShape
    r_grid: tuple

    def __post_init__(self):
        object.__setattr__(self, "r_grid", tuple(float(r) for r in self.r_grid))
        if self.m < 1:
            raise ConfigError(f"m must be >= 1, got {self.m}")
        if not 0.0 < self.delta < 1.0:
            raise ConfigError(f"delta must be in (0,1), got {self.delta}")
        if self.lipschitz < 0.0:
            raise ConfigError(f"lipschitz must be >= 0, got {self.lipschitz}")
        if not self.r_grid or any(r <= 0.0 for r in self.r_grid):
            raise ConfigError("r_grid must be non-empty with positive radii")


@dataclass(frozen=True)
class RadiusTerm:
    radius: float
    log_cover: float  # ln N(r); +inf when it exceeds double range
    complexity: float  # sqrt(2 lnN / m)
    value: float  # complexity + 2r
    overflow: bool


@dataclass(frozen=True)
class BoundResult:
    bound: float
    delta_m: float
    confidence_term: float
    best_radius: float
    per_radius: tuple
    overflow: bool  # true when even the best radius overflowed


def _log_cover(shape: GameShape, lipschitz: float, r: float):
    """ln N(r), returned as (value, overflow). Uses ln(lnN) internally when
    the ceil(4L/r) power is in play."""
    n = shape.num_players
    total_actions = n * shape.joint_actions
    # Players with a single action have no strategy freedom and contribute
    # nothing to the cover (their factor count is |A_i| - 1 = 0).
    s = 0.0
    for k in shape.action_counts:
        if k < 2:
            continue
        inner = (math.e * 40.0 * n * k / r + math.e * k) / (k - 1)
        s += (k - 1) * math.log(inner)
    c = math.ceil(4.0 * lipschitz / r)
    if c <= 0:
        return 0.0, False
    if c == 1:
        return s, False
    if s == 0.0:
        return 0.0, False
    log_log_n = total_actions * math.log(c) + math.log(s)
    if log_log_n > _EXP_LIMIT:
        return math.inf, True
    return math.exp(log_log_n), False


def _radius_term(inputs: BoundInputs, r: float) -> RadiusTerm:
    log_n, overflow = _log_cover(inputs.shape, inputs.lipschitz, r)
    if math.isinf(log_n):
        complexity = math.inf
    else:
        # sqrt(2 lnN / m) in log-space; lnN itself may be ~ 1e300.
        if log_n == 0.0:
            complexity = 0.0
        else:
            log_c = 0.5 * (math.log(2.0) + math.log(log_n) - math.log(inputs.m))
            if log_c > _EXP_LIMIT:
                complexity = math.inf
                overflow = True
            else:
                complexity = math.exp(log_c)
    value = complexity + 2.0 * r
    return RadiusTerm(
        radius=r, log_cover=log_n, complexity=complexity, value=value, overflow=overflow
    )


def evaluate_bound(inputs: BoundInputs) -> BoundResult:
    """Evaluate the gap bound on the radius grid; min over radii wins."""
    terms = tuple(_radius_term(inputs, r) for r in inputs.r_grid)
    best = min(terms, key=lambda t: t.value)
    confidence = 4.0 * math.sqrt(2.0 * math.log(4.0 / inputs.delta) / inputs.m)
    bound = 2.0 * best.value + confidence
    return BoundResult(
        bound=bound,
        delta_m=best.value,
        confidence_term=confidence,
        best_radius=best.radius,
        per_radius=terms,
        overflow=math.isinf(best.value),
    )
