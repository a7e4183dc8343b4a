"""Seeded generators for five families of normal-form games.

Each dataset is produced from counter-based pseudorandom streams: game
``i`` of a dataset draws only from ``default_rng([seed, i])``, so datasets
are order-independent, parallelizable, and prefix-stable (the first k games
never change when more are appended).

The randomization of every class is defined here, canonically:

* ``travelers_dilemma`` (2 players, K claims): claims are 1..K; the reward
  and penalty magnitude R is one uniform integer from {2, ..., max(2, K//5)}
  per instance; raw payoff r_i = min(a_1, a_2) + R * sign(a_j - a_i).
* ``grab_the_dollar`` (2 players, K times): three uniforms in [0,1] sorted
  into low < mid < high per instance; the strictly earlier grabber earns
  high and the other mid, a tie pays both low; every raw payoff is scaled
  by the decay 1 - (min(t_1, t_2) - 1)/K (set class_params["decay"] = 0 to
  disable).
* ``war_of_attrition`` (2 players, K times): valuations v_i ~ U[0.5, 1] and
  per-step costs c_i ~ U[0.01, 0.1] per instance; if t_i < t_j the conceder
  gets -t_i * c_i and the winner v_j - t_i * c_j; a tie at t pays each
  v_i / 2 - t * c_i.
* ``bertrand_oligopoly`` (n players, K prices): one shared unit cost
  c ~ U[0, 0.5] per instance; demand D(p) = K - p + 1; the m players tied
  at the lowest price p* split (p* - c) * D(p*) equally, everyone else 0.
* ``majority_voting`` (n players, K candidates): candidate worths
  w_i(c) ~ U[0,1] per player; the winner of a vote profile is the
  plurality candidate with ties to the lowest index; u_i(a) = w_i(winner).

All classes except majority_voting pass their raw payoffs through one joint
affine map into [0,1]; majority_voting is already in range by construction
and is stored as drawn.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FormatError, SpecError
from .games import Game, GameShape

GAME_CLASSES = (
    "travelers_dilemma",
    "grab_the_dollar",
    "war_of_attrition",
    "bertrand_oligopoly",
    "majority_voting",
)

_TWO_PLAYER_ONLY = {"travelers_dilemma", "grab_the_dollar", "war_of_attrition"}

# class_params accepted per class; anything else is a spec error.
_ALLOWED_PARAMS = {
    "travelers_dilemma": (),
    "grab_the_dollar": ("decay",),
    "war_of_attrition": (),
    "bertrand_oligopoly": (),
    "majority_voting": (),
}

DATASET_MAGIC = b"NFG1"
DATASET_VERSION = 1


def game_stream(seed: int, index: int) -> np.random.Generator:
    """The pseudorandom stream owned by game ``index`` of a dataset."""
    return np.random.default_rng([int(seed), int(index)])


def derive_seed(base: int, *path: int) -> int:
    """Stable 64-bit child seed for a namespaced purpose (repetition, split...)."""
    seq = np.random.SeedSequence([int(base), *(int(p) for p in path)])
    return int(seq.generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class GeneratorSpec:
    """Identity of a game distribution: class, shape, seed, and parameters."""

    class_name: str
    shape: GameShape
    seed: int
    class_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.class_name not in GAME_CLASSES:
            raise SpecError(f"unknown game class {self.class_name!r}")
        if self.class_name in _TWO_PLAYER_ONLY and self.shape.num_players != 2:
            raise SpecError(f"{self.class_name} is a 2-player class")
        counts = self.shape.action_counts
        if any(k != counts[0] for k in counts):
            raise SpecError(f"{self.class_name} needs equal action counts, got {counts}")
        if counts[0] < 2:
            raise SpecError(f"{self.class_name} needs at least 2 actions per player")
        if not 0 <= int(self.seed) < 2**64:
            raise SpecError(f"seed must fit an unsigned 64-bit integer, got {self.seed}")
        for name in self.class_params:
            if name not in _ALLOWED_PARAMS[self.class_name]:
                raise SpecError(f"{self.class_name} does not take parameter {name!r}")


@dataclass(frozen=True)
class Dataset:
    spec: GeneratorSpec
    games: tuple
    split: tuple  # (train_indices, validation_indices, test_indices)

    def subset(self, which: str) -> tuple:
        idx = {"train": 0, "validation": 1, "test": 2}[which]
        return tuple(self.games[i] for i in self.split[idx])

    def equals(self, other: "Dataset") -> bool:
        if (
            self.spec != other.spec
            or len(self.games) != len(other.games)
            or self.split != other.split
        ):
            return False
        return all(
            a.shape == b.shape
            and all(
                np.array_equal(x, y) for x, y in zip(a.utilities, b.utilities)
            )
            for a, b in zip(self.games, other.games)
        )


# --------------------------------------------------------------------------
# Raw payoff kernels (deterministic in their drawn parameters)
# --------------------------------------------------------------------------


def _raw_travelers_dilemma(K: int, R: float):
    claims = np.arange(1.0, K + 1.0)
    a1, a2 = claims[:, None], claims[None, :]
    low = np.minimum(a1, a2)
    return low + R * np.sign(a2 - a1), low + R * np.sign(a1 - a2)


def _raw_grab_the_dollar(K: int, low: float, mid: float, high: float, decay: bool):
    times = np.arange(1.0, K + 1.0)
    t1, t2 = times[:, None], times[None, :]
    u1 = np.where(t1 < t2, high, np.where(t1 > t2, mid, low))
    u2 = np.where(t2 < t1, high, np.where(t2 > t1, mid, low))
    if decay:
        scale = 1.0 - (np.minimum(t1, t2) - 1.0) / K
        u1 = u1 * scale
        u2 = u2 * scale
    return u1, u2


def _raw_war_of_attrition(K: int, v, c):
    times = np.arange(1.0, K + 1.0)
    t1, t2 = times[:, None], times[None, :]
    u1 = np.where(
        t1 < t2, -t1 * c[0], np.where(t2 < t1, v[0] - t2 * c[0], v[0] / 2 - t1 * c[0])
    )
    u2 = np.where(
        t2 < t1, -t2 * c[1], np.where(t1 < t2, v[1] - t1 * c[1], v[1] / 2 - t2 * c[1])
    )
    return u1, u2


def _raw_bertrand_oligopoly(n: int, K: int, cost: float):
    prices = np.indices((K,) * n).astype(np.float64) + 1.0
    p_star = prices.min(axis=0)
    ties = (prices == p_star).sum(axis=0)
    demand = K - p_star + 1.0
    share = (p_star - cost) * demand / ties
    return tuple(np.where(prices[i] == p_star, share, 0.0) for i in range(n))


def _raw_majority_voting(n: int, K: int, worth: np.ndarray):
    votes = np.indices((K,) * n)
    counts = np.stack([(votes == cand).sum(axis=0) for cand in range(K)])
    winner = counts.argmax(axis=0)  # argmax ties resolve to the lowest candidate
    return tuple(worth[i][winner] for i in range(n))


# --------------------------------------------------------------------------
# Seeded per-class generators
# --------------------------------------------------------------------------


def normalize_to_unit(game: Game) -> Game:
    """Map all payoffs into [0,1] with one affine transform shared by all players.

    A shared map preserves inter-player payoff comparisons. A constant game
    maps to all 0.5.
    """
    stacked = np.stack(game.utilities)
    if not np.all(np.isfinite(stacked)):
        raise DataError("cannot normalize a game with non-finite payoffs")
    lo, hi = float(stacked.min()), float(stacked.max())
    if hi == lo:
        tensors = tuple(np.full_like(u, 0.5) for u in game.utilities)
    else:
        tensors = tuple((u - lo) / (hi - lo) for u in game.utilities)
    return Game(game.shape, tensors)


def gen_travelers_dilemma(K: int, stream: np.random.Generator) -> Game:
    reward_cap = max(2, K // 5)
    R = float(stream.integers(2, reward_cap + 1))
    shape = GameShape(2, (K, K))
    return normalize_to_unit(Game(shape, _raw_travelers_dilemma(K, R)))


def gen_grab_the_dollar(K: int, stream: np.random.Generator, decay: bool = True) -> Game:
    low, mid, high = np.sort(stream.random(3))
    shape = GameShape(2, (K, K))
    raw = _raw_grab_the_dollar(K, low, mid, high, decay)
    return normalize_to_unit(Game(shape, raw))


def gen_war_of_attrition(K: int, stream: np.random.Generator) -> Game:
    v = stream.uniform(0.5, 1.0, 2)
    c = stream.uniform(0.01, 0.1, 2)
    shape = GameShape(2, (K, K))
    return normalize_to_unit(Game(shape, _raw_war_of_attrition(K, v, c)))


def gen_bertrand_oligopoly(n: int, K: int, stream: np.random.Generator) -> Game:
    cost = float(stream.uniform(0.0, 0.5))
    shape = GameShape(n, (K,) * n)
    return normalize_to_unit(Game(shape, _raw_bertrand_oligopoly(n, K, cost)))


def gen_majority_voting(n: int, K: int, stream: np.random.Generator) -> Game:
    worth = stream.random((n, K))
    shape = GameShape(n, (K,) * n)
    # Payoffs are candidate worths, already in [0,1]; stored as drawn.
    return Game(shape, _raw_majority_voting(n, K, worth))


def _instantiate(spec: GeneratorSpec, index: int) -> Game:
    stream = game_stream(spec.seed, index)
    n = spec.shape.num_players
    K = spec.shape.action_counts[0]
    name = spec.class_name
    if name == "travelers_dilemma":
        return gen_travelers_dilemma(K, stream)
    if name == "grab_the_dollar":
        decay = bool(spec.class_params.get("decay", 1.0))
        return gen_grab_the_dollar(K, stream, decay=decay)
    if name == "war_of_attrition":
        return gen_war_of_attrition(K, stream)
    if name == "bertrand_oligopoly":
        return gen_bertrand_oligopoly(n, K, stream)
    return gen_majority_voting(n, K, stream)


def default_split(count: int, validation_count=None, test_count=None):
    """Index split with validation at the end and the test block just before it.

    Defaults mirror a 10% validation slice and a 200-game test slice carved
    from the tail, shrunk when the dataset is too small to afford them.
    """
    if validation_count is None:
        validation_count = count // 10
    if test_count is None:
        test_count = min(200, count - validation_count)
    if validation_count + test_count > count:
        raise SpecError(
            f"split sizes {validation_count}+{test_count} exceed dataset size {count}"
        )
    train_end = count - validation_count - test_count
    return (
        tuple(range(train_end)),
        tuple(range(count - validation_count, count)),
        tuple(range(train_end, count - validation_count)),
    )


def generate(
    spec: GeneratorSpec, count: int, validation_count=None, test_count=None
) -> Dataset:
    """Produce ``count`` games of the spec's class, normalized and split.

    A pure function of its arguments: the same spec always reproduces the
    same dataset bit-for-bit, and the first k games of a larger dataset
    equal generate(spec, k)'s games.
    """
    if count < 0:
        raise SpecError(f"count must be nonnegative, got {count}")
    games = tuple(_instantiate(spec, i) for i in range(count))
    split = default_split(count, validation_count, test_count)
    return Dataset(spec=spec, games=games, split=split)


# --------------------------------------------------------------------------
# Persistence: NFG1 binary format and a lossless JSON twin
# --------------------------------------------------------------------------
#
# Binary layout (little-endian throughout):
#   magic "NFG1" | version u16 | class_name (u16 length + UTF-8 bytes)
#   | seed u64 | n u16 | action counts u32 * n
#   | class_params count u16, then per param: name (u16 length + UTF-8), value f64
#   | game count u64
#   | per game: n * |A| f64, player-major then row-major within each tensor
#   | three split lists (train, validation, test): u64 count + u64 indices


class _Writer:
    def __init__(self):
        self.chunks = []

    def pack(self, fmt, *vals):
        self.chunks.append(struct.pack("<" + fmt, *vals))

    def string(self, s: str):
        raw = s.encode("utf-8")
        self.pack("H", len(raw))
        self.chunks.append(raw)

    def array(self, arr: np.ndarray):
        self.chunks.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())

    def bytes(self) -> bytes:
        return b"".join(self.chunks)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise FormatError(f"truncated file while reading {what}", offset=self.offset)
        out = self.data[self.offset : self.offset + size]
        self.offset += size
        return out

    def unpack(self, fmt: str, what: str):
        size = struct.calcsize("<" + fmt)
        vals = struct.unpack("<" + fmt, self.take(size, what))
        return vals[0] if len(vals) == 1 else vals

    def string(self, what: str) -> str:
        length = self.unpack("H", what + " length")
        return self.take(length, what).decode("utf-8")

    def f64_array(self, count: int, what: str) -> np.ndarray:
        raw = self.take(8 * count, what)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64)

    def exhausted(self) -> bool:
        return self.offset == len(self.data)


def _encode_dataset(ds: Dataset) -> bytes:
    w = _Writer()
    w.chunks.append(DATASET_MAGIC)
    w.pack("H", DATASET_VERSION)
    w.string(ds.spec.class_name)
    w.pack("Q", int(ds.spec.seed))
    w.pack("H", ds.spec.shape.num_players)
    for k in ds.spec.shape.action_counts:
        w.pack("I", k)
    params = sorted(ds.spec.class_params.items())
    w.pack("H", len(params))
    for name, value in params:
        w.string(name)
        w.pack("d", float(value))
    w.pack("Q", len(ds.games))
    for g in ds.games:
        for u in g.utilities:
            w.array(u)
    for indices in ds.split:
        w.pack("Q", len(indices))
        for i in indices:
            w.pack("Q", int(i))
    return w.bytes()


def _decode_dataset(data: bytes) -> Dataset:
    r = _Reader(data)
    if r.take(4, "magic") != DATASET_MAGIC:
        raise FormatError("bad magic, not a dataset file", offset=0)
    version = r.unpack("H", "version")
    if version != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {version}", offset=4)
    class_name = r.string("class name")
    seed = r.unpack("Q", "seed")
    n = r.unpack("H", "player count")
    counts = tuple(r.unpack("I", f"action count {i}") for i in range(n))
    shape = GameShape(n, counts)
    n_params = r.unpack("H", "parameter count")
    params = {}
    for _ in range(n_params):
        name = r.string("parameter name")
        params[name] = r.unpack("d", "parameter value")
    spec = GeneratorSpec(class_name, shape, seed, params)
    n_games = r.unpack("Q", "game count")
    per_player = shape.joint_actions
    games = []
    for _ in range(n_games):
        tensors = tuple(
            r.f64_array(per_player, "utilities").reshape(counts) for _ in range(n)
        )
        games.append(Game(shape, tensors))
    if n_games == 0 and r.exhausted():
        split = ((), (), ())
    else:
        split = []
        for which in ("train", "validation", "test"):
            m = r.unpack("Q", which + " split size")
            split.append(tuple(int(r.unpack("Q", which + " index")) for _ in range(m)))
        split = tuple(split)
    if not r.exhausted():
        raise FormatError("trailing bytes after dataset", offset=r.offset)
    return Dataset(spec=spec, games=tuple(games), split=split)


def save_dataset(ds: Dataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_encode_dataset(ds))


def load_dataset(path) -> Dataset:
    with open(path, "rb") as fh:
        return _decode_dataset(fh.read())


def save_dataset_json(ds: Dataset, path) -> None:
    """Human-inspectable twin of the binary format; float64 round-trips exactly."""
    doc = {
        "format": "NFG1",
        "version": DATASET_VERSION,
        "class_name": ds.spec.class_name,
        "seed": int(ds.spec.seed),
        "action_counts": list(ds.spec.shape.action_counts),
        "class_params": {k: float(v) for k, v in sorted(ds.spec.class_params.items())},
        "games": [
            [u.ravel().tolist() for u in g.utilities] for g in ds.games
        ],
        "split": {
            "train": list(ds.split[0]),
            "validation": list(ds.split[1]),
            "test": list(ds.split[2]),
        },
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_dataset_json(path) -> Dataset:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "NFG1":
        raise FormatError("not a dataset JSON document")
    if doc.get("version") != DATASET_VERSION:
        raise FormatError(f"unsupported dataset version {doc.get('version')}")
    counts = tuple(int(k) for k in doc["action_counts"])
    shape = GameShape(len(counts), counts)
    spec = GeneratorSpec(
        doc["class_name"], shape, int(doc["seed"]), dict(doc["class_params"])
    )
    games = tuple(
        Game(
            shape,
            tuple(
                np.asarray(flat, dtype=np.float64).reshape(counts)
                for flat in tensors
            ),
        )
        for tensors in doc["games"]
    )
    split = tuple(
        tuple(int(i) for i in doc["split"][k]) for k in ("train", "validation", "test")
    )
    return Dataset(spec=spec, games=games, split=split)
