"""Normal-form games and the Nash approximation loss.

A game is stored as one dense payoff tensor per player, indexed by joint
actions in row-major order with the last player's action varying fastest.
The central quantity is ``nash_apr``: the largest utility gain any single
player can obtain by deviating unilaterally to a pure action. It is zero
exactly at Nash equilibria and at most 1 for payoffs in [0, 1].

Everything here is a pure function of its inputs; values are never mutated
after construction, so they are safe to share across threads.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, SizeError

# Absolute tolerance below which two deviation gains count as tied.
TIE_TOL = 1e-12
# Allowed drift of a probability vector's sum before re-normalization.
PROB_SUM_TOL = 1e-9

# einsum axis labels for per-player action axes; "b" is reserved for batches.
_AXES = "ijklmnpq"


@dataclass(frozen=True)
class GameShape:
    """Number of players and per-player action counts."""

    num_players: int
    action_counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "action_counts", tuple(int(k) for k in self.action_counts))
        if self.num_players < 2:
            raise DimensionError(f"need at least 2 players, got {self.num_players}")
        if len(self.action_counts) != self.num_players:
            raise DimensionError(
                f"{self.num_players} players but {len(self.action_counts)} action counts"
            )
        if any(k < 1 for k in self.action_counts):
            raise DimensionError(f"action counts must be positive: {self.action_counts}")

    @property
    def joint_actions(self) -> int:
        return int(np.prod(self.action_counts, dtype=np.int64))

    @property
    def scalar_count(self) -> int:
        """Total payoff entries across all players (n * |A|)."""
        return self.num_players * self.joint_actions


@dataclass(frozen=True)
class Game:
    """A normal-form game: one payoff tensor of shape ``action_counts`` per player."""

    shape: GameShape
    utilities: tuple[np.ndarray, ...]

    def __post_init__(self):
        tensors = tuple(np.asarray(u, dtype=np.float64) for u in self.utilities)
        object.__setattr__(self, "utilities", tensors)
        if len(tensors) != self.shape.num_players:
            raise DimensionError(
                f"expected {self.shape.num_players} payoff tensors, got {len(tensors)}"
            )
        for i, u in enumerate(tensors):
            if u.shape != self.shape.action_counts:
                raise DimensionError(
                    f"player {i} tensor has shape {u.shape}, expected {self.shape.action_counts}"
                )

    def validate_unit_range(self, tol: float = 0.0) -> None:
        """Raise if any payoff falls outside [0 - tol, 1 + tol]."""
        for i, u in enumerate(self.utilities):
            if not np.all(np.isfinite(u)):
                raise ValueError(f"player {i} tensor has non-finite entries")
            if u.min() < -tol or u.max() > 1.0 + tol:
                raise ValueError(
                    f"player {i} payoffs outside [0, 1]: min={u.min()}, max={u.max()}"
                )


@dataclass(frozen=True)
class StrategyProfile:
    """One probability vector over actions per player.

    The constructor only checks shapes; distribution invariants (entries
    >= 0, sums within ``PROB_SUM_TOL`` of 1) are enforced by producers and
    checked via :meth:`is_valid`. Loss functions accept arbitrary vectors so
    that directional derivatives off the simplex are well defined.
    """

    vectors: tuple[np.ndarray, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "vectors", tuple(np.asarray(v, dtype=np.float64) for v in self.vectors)
        )

    @classmethod
    def uniform(cls, shape: GameShape) -> "StrategyProfile":
        return cls(tuple(np.full(k, 1.0 / k) for k in shape.action_counts))

    @classmethod
    def pure(cls, shape: GameShape, actions) -> "StrategyProfile":
        vecs = []
        for k, a in zip(shape.action_counts, actions):
            v = np.zeros(k)
            v[a] = 1.0
            vecs.append(v)
        return cls(tuple(vecs))

    def is_valid(self, tol: float = PROB_SUM_TOL) -> bool:
        return all(
            v.min() >= -tol and abs(v.sum() - 1.0) <= tol for v in self.vectors
        )

    def matches(self, shape: GameShape) -> bool:
        return len(self.vectors) == shape.num_players and all(
            v.shape == (k,) for v, k in zip(self.vectors, shape.action_counts)
        )


@dataclass(frozen=True)
class SubgradientReport:
    """Exact gradient of the selected deviation-gain branch of the loss."""

    gradients: tuple[np.ndarray, ...]
    argmax_player: int
    argmax_action: int
    tie_flag: bool
    value: float = field(default=0.0)


def _check_profile(profile: StrategyProfile, game: Game) -> None:
    if not profile.matches(game.shape):
        raise DimensionError(
            f"profile shapes {[v.shape[0] for v in profile.vectors]} do not match "
            f"game action counts {game.shape.action_counts}"
        )


def sanitize_profile(profile: StrategyProfile) -> StrategyProfile:
    """Clamp negatives to zero and re-normalize vectors that drifted off the simplex.

    Vectors whose sum is within ``PROB_SUM_TOL`` of 1 are passed through
    untouched, so well-formed profiles evaluate bit-identically. Guards
    against accumulation drift in iterative solvers.
    """
    out = []
    changed = False
    for v in profile.vectors:
        if v.min() < 0.0 or abs(v.sum() - 1.0) > PROB_SUM_TOL:
            w = np.clip(v, 0.0, None)
            s = w.sum()
            out.append(w / s if s > 0.0 else np.full_like(w, 1.0 / w.size))
            changed = True
        else:
            out.append(v)
    return StrategyProfile(tuple(out)) if changed else profile


def _contract_except(tensor: np.ndarray, vectors, keep: set[int]) -> np.ndarray:
    # Contract from the highest axis down so original axis indices stay valid.
    out = tensor
    for axis in range(tensor.ndim - 1, -1, -1):
        if axis in keep:
            continue
        out = np.tensordot(out, vectors[axis], axes=(axis, 0))
    return out


def deviation_payoffs(game: Game, player: int, profile: StrategyProfile) -> np.ndarray:
    """Expected payoff to ``player`` for each of her pure actions.

    Entry ``a`` is the expected utility when ``player`` plays ``a`` and every
    opponent follows ``profile``. Computed by contracting the payoff tensor
    over the opponent axes one at a time, never materializing the joint
    distribution.
    """
    _check_profile(profile, game)
    return _contract_except(game.utilities[player], profile.vectors, {player})


def expected_utility(game: Game, player: int, profile: StrategyProfile) -> float:
    """Expected utility of ``player`` when everyone follows ``profile``."""
    dev = deviation_payoffs(game, player, profile)
    return float(dev @ profile.vectors[player])


def nash_exploitability(profile: StrategyProfile, game: Game, player: int) -> float:
    """Best unilateral deviation gain for one player (may be ~0- at equilibria)."""
    _check_profile(profile, game)
    dev = _contract_except(game.utilities[player], profile.vectors, {player})
    return float(dev.max() - dev @ profile.vectors[player])


def nash_apr(profile: StrategyProfile, game: Game) -> float:
    """Largest unilateral pure-deviation gain across all players.

    Zero exactly at Nash equilibria; in [0, 1] for payoffs in [0, 1]. The
    result is clamped at 0 to absorb float rounding at exact equilibria.
    """
    _check_profile(profile, game)
    best = -math.inf
    for i in range(game.shape.num_players):
        dev = _contract_except(game.utilities[i], profile.vectors, {i})
        best = max(best, float(dev.max() - dev @ profile.vectors[i]))
    return max(best, 0.0)


def best_response(game: Game, player: int, profile: StrategyProfile) -> int:
    """Pure action maximizing the deviation payoff; ties go to the lowest index."""
    return int(np.argmax(deviation_payoffs(game, player, profile)))


def nash_apr_subgradient(profile: StrategyProfile, game: Game) -> SubgradientReport:
    """Gradient of the active deviation-gain branch of ``nash_apr``.

    The maximizing pair (player ``i*``, action ``a*``) is selected with ties
    broken by lowest player index then lowest action index. Writing
    ``g = u_i*(a*, rest) - u_i*(all)``, the returned per-player vectors are
    the exact partial derivatives of ``g`` in each strategy coordinate;
    ``tie_flag`` marks argmax ties within ``TIE_TOL``, where the loss is not
    differentiable and this is one valid subgradient.
    """
    _check_profile(profile, game)
    n = game.shape.num_players
    devs = [
        _contract_except(game.utilities[i], profile.vectors, {i}) for i in range(n)
    ]
    gains = [dev - dev @ profile.vectors[i] for i, dev in enumerate(devs)]

    flat = np.concatenate(gains)
    best_idx = int(np.argmax(flat))
    best_val = float(flat[best_idx])
    tie_flag = bool(np.count_nonzero(flat >= best_val - TIE_TOL) > 1)

    offsets = np.cumsum([0] + list(game.shape.action_counts))
    i_star = int(np.searchsorted(offsets, best_idx, side="right") - 1)
    a_star = int(best_idx - offsets[i_star])

    grads: list[np.ndarray] = []
    u_star = game.utilities[i_star]
    for j in range(n):
        if j == i_star:
            grads.append(-devs[i_star])
            continue
        # d u_i*(a*, rest) / d sigma_j(a_j): fix i* at a*, j free, others averaged.
        pair = _contract_except(u_star, profile.vectors, {i_star, j})
        term1 = pair[a_star, :] if i_star < j else pair[:, a_star]
        # d u_i*(all) / d sigma_j(a_j): j free, everyone else (incl. i*) averaged.
        term2 = _contract_except(u_star, profile.vectors, {j})
        grads.append(term1 - term2)

    return SubgradientReport(
        gradients=tuple(grads),
        argmax_player=i_star,
        argmax_action=a_star,
        tie_flag=tie_flag,
        value=best_val,
    )


def l1_distance(p: StrategyProfile, q: StrategyProfile) -> float:
    """Sum of absolute coordinate differences across all players' vectors."""
    if len(p.vectors) != len(q.vectors) or any(
        a.shape != b.shape for a, b in zip(p.vectors, q.vectors)
    ):
        raise DimensionError("profiles have different shapes")
    return float(sum(np.abs(a - b).sum() for a, b in zip(p.vectors, q.vectors)))


def max_distance(u: Game, v: Game) -> float:
    """Largest absolute payoff difference over all players and joint actions."""
    if u.shape != v.shape:
        raise DimensionError(f"game shapes differ: {u.shape} vs {v.shape}")
    return float(max(np.abs(a - b).max() for a, b in zip(u.utilities, v.utilities)))


# --------------------------------------------------------------------------
# Brute-force oracle
# --------------------------------------------------------------------------

BRUTE_FORCE_LIMIT = 10**6


def brute_force_nash_apr(profile: StrategyProfile, game: Game) -> float:
    """Reference loss computed by explicit enumeration of every joint action.

    Deliberately shares no code with the contraction path: expectations are
    plain Python loops over ``itertools.product``, accumulated with
    ``math.fsum``. Limited to |A| <= 10^6.
    """
    _check_profile(profile, game)
    counts = game.shape.action_counts
    if game.shape.joint_actions > BRUTE_FORCE_LIMIT:
        raise SizeError(
            f"|A| = {game.shape.joint_actions} exceeds brute-force limit {BRUTE_FORCE_LIMIT}"
        )
    sigmas = [list(map(float, v)) for v in profile.vectors]
    best = -math.inf
    for i in range(game.shape.num_players):
        u = game.utilities[i]
        eu = math.fsum(
            math.prod(sigmas[j][a[j]] for j in range(len(counts))) * float(u[a])
            for a in itertools.product(*(range(k) for k in counts))
        )
        opp_ranges = [range(k) for j, k in enumerate(counts) if j != i]
        for ai in range(counts[i]):
            dev = math.fsum(
                math.prod(
                    sigmas[j][aj]
                    for j, aj in zip((j for j in range(len(counts)) if j != i), rest)
                )
                * float(u[tuple(rest[:i]) + (ai,) + tuple(rest[i:])])
                for rest in itertools.product(*opp_ranges)
            )
            best = max(best, dev - eu)
    return max(best, 0.0)


# --------------------------------------------------------------------------
# Batched kernels (same math as above, vectorized over a stack of games)
# --------------------------------------------------------------------------


def stack_games(games) -> np.ndarray:
    """Stack same-shape games into an array of shape (B, n, *action_counts)."""
    shape = games[0].shape
    for g in games:
        if g.shape != shape:
            raise DimensionError("all games in a stack must share one shape")
    return np.stack([np.stack(g.utilities) for g in games])


def batch_deviation_payoffs(tensors: np.ndarray, sigmas, player: int) -> np.ndarray:
    """Deviation payoffs for one player across a batch.

    ``tensors`` is that player's payoff stack of shape (B, *action_counts);
    ``sigmas`` is one (B, |A_j|) array per player.
    """
    n = tensors.ndim - 1
    operands, subs = [tensors], ["b" + _AXES[:n]]
    for j in range(n):
        if j == player:
            continue
        operands.append(sigmas[j])
        subs.append("b" + _AXES[j])
    return np.einsum(
        ",".join(subs) + "->b" + _AXES[player], *operands, optimize=True
    )


def _batch_pair_payoffs(tensors, sigmas, keep_a, keep_b):
    n = tensors.ndim - 1
    operands, subs = [tensors], ["b" + _AXES[:n]]
    for j in range(n):
        if j in (keep_a, keep_b):
            continue
        operands.append(sigmas[j])
        subs.append("b" + _AXES[j])
    out = "b" + _AXES[min(keep_a, keep_b)] + _AXES[max(keep_a, keep_b)]
    return np.einsum(",".join(subs) + "->" + out, *operands, optimize=True)


def batch_nash_apr(stack: np.ndarray, sigmas) -> np.ndarray:
    """Vectorized loss over a stack of games and matching batched profiles."""
    n = stack.shape[1]
    gains = []
    for i in range(n):
        dev = batch_deviation_payoffs(stack[:, i], sigmas, i)
        eu = np.einsum("ba,ba->b", dev, sigmas[i])
        gains.append(dev - eu[:, None])
    return np.maximum(np.concatenate(gains, axis=1).max(axis=1), 0.0)


def batch_nash_apr_subgradient(stack: np.ndarray, sigmas):
    """Batched loss, per-player gradients, and tie flags.

    Returns ``(loss, grads, tie_flags)`` where ``loss`` has shape (B,),
    ``grads`` is one (B, |A_j|) array per player holding the gradient of each
    game's active branch, and argmax selection matches the single-game rule
    (lowest player, then lowest action).
    """
    batch, n = stack.shape[0], stack.shape[1]
    counts = stack.shape[2:]
    devs = [batch_deviation_payoffs(stack[:, i], sigmas, i) for i in range(n)]
    gains = [
        dev - np.einsum("ba,ba->b", dev, sigmas[i])[:, None]
        for i, dev in enumerate(devs)
    ]
    flat = np.concatenate(gains, axis=1)
    best_idx = flat.argmax(axis=1)
    best_val = flat[np.arange(batch), best_idx]
    tie_flags = (flat >= best_val[:, None] - TIE_TOL).sum(axis=1) > 1

    offsets = np.cumsum([0] + list(counts))
    i_star = np.searchsorted(offsets, best_idx, side="right") - 1
    a_star = best_idx - offsets[i_star]

    grads = [np.zeros((batch, k)) for k in counts]
    for p in range(n):
        mask = i_star == p
        if not mask.any():
            continue
        rows = np.nonzero(mask)[0]
        sub_sigmas = [s[mask] for s in sigmas]
        sub_stack = stack[mask, p]
        grads[p][mask] = -devs[p][mask]
        for j in range(n):
            if j == p:
                continue
            pair = _batch_pair_payoffs(sub_stack, sub_sigmas, p, j)
            if p < j:
                term1 = pair[np.arange(rows.size), a_star[mask], :]
            else:
                term1 = pair[np.arange(rows.size), :, a_star[mask]]
            term2 = batch_deviation_payoffs(sub_stack, sub_sigmas, j)
            grads[j][mask] = term1 - term2

    return np.maximum(best_val, 0.0), grads, tie_flags
