"""Feed-forward equilibrium approximator, written directly on numpy.

The network maps a game's flattened utilities (player-major, row-major per
tensor) through fully connected hidden layers, each affine -> batch
normalization (no learnable scale or shift) -> ReLU, into one softmax head
per player producing that player's mixed strategy. It is trained end to end
on the deviation-gain loss with exact reverse-mode gradients: the loss
subgradient with respect to the output profiles is chained through softmax
Jacobians, the affine layers, ReLU masks, and the batch-statistics terms of
batch normalization.

Two deliberate quirks, both from the training recipe this implements:
every weight and bias is clipped into ``clip_range`` (default [0, 1]) after
each Adam step, and batch normalization carries no learnable parameters.

Everything is deterministic given (arch, dataset, config): minibatch order
is a pure function of (seed, step), so a run can be checkpointed and
resumed bit-identically.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, DimensionError, FormatError, NumericError, UsageError
from .games import GameShape, StrategyProfile, batch_nash_apr, batch_nash_apr_subgradient

MODEL_MAGIC = b"NEA1"
MODEL_VERSION = 1

# Namespace constant mixed into the shuffle stream so minibatch order is
# independent of the weight-init draws from the same seed.
_SHUFFLE_TAG = 104729


@dataclass(frozen=True)
class ApproximatorArch:
    shape: GameShape
    hidden_layers: tuple = (128, 128)
    batchnorm_epsilon: float = 1e-5
    bn_momentum: float = 0.99
    clip_range: tuple = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "hidden_layers", tuple(int(w) for w in self.hidden_layers))
        object.__setattr__(self, "clip_range", (float(self.clip_range[0]), float(self.clip_range[1])))
        if any(w < 1 for w in self.hidden_layers):
            raise ConfigError(f"hidden widths must be >= 1: {self.hidden_layers}")
        if not self.clip_range[0] < self.clip_range[1]:
            raise ConfigError(f"clip_range must be an interval: {self.clip_range}")
        if self.batchnorm_epsilon <= 0 or not 0 <= self.bn_momentum < 1:
            raise ConfigError("batchnorm_epsilon > 0 and 0 <= bn_momentum < 1 required")

    @property
    def input_width(self) -> int:
        return self.shape.scalar_count

    @property
    def layer_widths(self) -> tuple:
        return (self.input_width,) + self.hidden_layers


@dataclass
class ApproximatorParams:
    """All tensors of one model. Declaration order (the serialization order):
    per hidden layer: weight, bias, running mean, running variance; then per
    player: head weight, head bias."""

    hidden_w: list
    hidden_b: list
    run_mean: list
    run_var: list
    head_w: list
    head_b: list

    def trainable(self):
        """Tensors touched by the optimizer and the clip, in a fixed order."""
        return self.hidden_w + self.hidden_b + self.head_w + self.head_b

    def copy(self) -> "ApproximatorParams":
        return ApproximatorParams(
            hidden_w=[w.copy() for w in self.hidden_w],
            hidden_b=[b.copy() for b in self.hidden_b],
            run_mean=[m.copy() for m in self.run_mean],
            run_var=[v.copy() for v in self.run_var],
            head_w=[w.copy() for w in self.head_w],
            head_b=[b.copy() for b in self.head_b],
        )

    def all_tensors(self):
        out = []
        for i in range(len(self.hidden_w)):
            out += [self.hidden_w[i], self.hidden_b[i], self.run_mean[i], self.run_var[i]]
        for i in range(len(self.head_w)):
            out += [self.head_w[i], self.head_b[i]]
        return out


@dataclass
class GradientSet:
    """Gradients congruent to ApproximatorParams.trainable()."""

    tensors: list


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 1e-3

    @classmethod
    def fresh(cls, params: ApproximatorParams, lr: float) -> "AdamState":
        return cls(
            m=[np.zeros_like(p) for p in params.trainable()],
            v=[np.zeros_like(p) for p in params.trainable()],
            lr=lr,
        )


@dataclass(frozen=True)
class TrainConfig:
    iterations: int = 20_000
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0
    validation_interval: int = 500

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.validation_interval < 1:
            raise ConfigError("validation_interval must be >= 1")


def init_params(arch: ApproximatorArch, rng: np.random.Generator) -> ApproximatorParams:
    """Fan-in-scaled uniform draws from clip_range for weights, zero biases,
    unit running variances."""
    lo, hi = arch.clip_range
    widths = arch.layer_widths
    hidden_w, hidden_b, run_mean, run_var = [], [], [], []
    for d_in, d_out in zip(widths[:-1], widths[1:]):
        w = rng.uniform(lo, hi, (d_in, d_out)) / np.sqrt(d_in)
        hidden_w.append(np.clip(w, lo, hi))
        hidden_b.append(np.zeros(d_out))
        run_mean.append(np.zeros(d_out))
        run_var.append(np.ones(d_out))
    head_w, head_b = [], []
    d_last = widths[-1]
    for k in arch.shape.action_counts:
        w = rng.uniform(lo, hi, (d_last, k)) / np.sqrt(d_last)
        head_w.append(np.clip(w, lo, hi))
        head_b.append(np.zeros(k))
    return ApproximatorParams(hidden_w, hidden_b, run_mean, run_var, head_w, head_b)


# --------------------------------------------------------------------------
# Forward / backward
# --------------------------------------------------------------------------


def flatten_games(games) -> np.ndarray:
    """(B, n*|A|) input matrix: per game, players concatenated, each tensor
    raveled in row-major order."""
    return np.stack(
        [np.concatenate([u.ravel() for u in g.utilities]) for g in games]
    )


def stack_utilities(games) -> np.ndarray:
    return np.stack([np.stack(g.utilities) for g in games])


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


@dataclass
class ForwardCache:
    params: ApproximatorParams
    inputs: np.ndarray
    layer_inputs: list  # activation entering each hidden affine
    z_hat: list  # batch-normalized pre-activations
    std_inv: list  # 1/sqrt(batch var + eps) per layer
    masks: list  # ReLU derivative masks
    hidden_out: np.ndarray
    sigmas: list  # per player (B, |A_i|)
    new_run_mean: list  # momentum-updated running stats, not yet applied
    new_run_var: list


def forward_train(params: ApproximatorParams, arch: ApproximatorArch, inputs: np.ndarray):
    """Train-mode forward pass on a (B, n*|A|) batch, B >= 2.

    Side-effect-free: momentum-updated running statistics are returned in
    the cache for the caller (the train loop) to apply.
    """
    if inputs.ndim != 2 or inputs.shape[1] != arch.input_width:
        raise DimensionError(
            f"inputs have shape {inputs.shape}, expected (B, {arch.input_width})"
        )
    if inputs.shape[0] < 2:
        raise ConfigError("train-mode forward needs a batch of at least 2")
    mom = arch.bn_momentum
    x = inputs
    layer_inputs, z_hats, std_invs, masks = [], [], [], []
    new_rm, new_rv = [], []
    for w, b, rm, rv in zip(params.hidden_w, params.hidden_b, params.run_mean, params.run_var):
        layer_inputs.append(x)
        z = x @ w + b
        mu = z.mean(axis=0)
        var = z.var(axis=0)
        std_inv = 1.0 / np.sqrt(var + arch.batchnorm_epsilon)
        z_hat = (z - mu) * std_inv
        new_rm.append(mom * rm + (1.0 - mom) * mu)
        new_rv.append(mom * rv + (1.0 - mom) * var)
        mask = z_hat > 0.0
        x = np.where(mask, z_hat, 0.0)
        z_hats.append(z_hat)
        std_invs.append(std_inv)
        masks.append(mask)
    sigmas = [_softmax(x @ w + b) for w, b in zip(params.head_w, params.head_b)]
    cache = ForwardCache(
        params=params,
        inputs=inputs,
        layer_inputs=layer_inputs,
        z_hat=z_hats,
        std_inv=std_invs,
        masks=masks,
        hidden_out=x,
        sigmas=sigmas,
        new_run_mean=new_rm,
        new_run_var=new_rv,
    )
    return sigmas, cache


def forward_eval(params: ApproximatorParams, arch: ApproximatorArch, inputs: np.ndarray):
    """Eval-mode forward: running statistics, no batch coupling."""
    if inputs.ndim != 2 or inputs.shape[1] != arch.input_width:
        raise DimensionError(
            f"inputs have shape {inputs.shape}, expected (B, {arch.input_width})"
        )
    x = inputs
    for w, b, rm, rv in zip(params.hidden_w, params.hidden_b, params.run_mean, params.run_var):
        z = x @ w + b
        z_hat = (z - rm) / np.sqrt(rv + arch.batchnorm_epsilon)
        x = np.maximum(z_hat, 0.0)
    return [_softmax(x @ w + b) for w, b in zip(params.head_w, params.head_b)]


def forward(params, arch, games, mode="eval"):
    """Convenience forward over Game objects; returns StrategyProfiles."""
    inputs = flatten_games(games)
    if mode == "train":
        sigmas, cache = forward_train(params, arch, inputs)
    elif mode == "eval":
        sigmas, cache = forward_eval(params, arch, inputs), None
    else:
        raise ConfigError(f"unknown mode {mode!r}")
    profiles = [
        StrategyProfile(tuple(s[b] for s in sigmas)) for b in range(len(games))
    ]
    return (profiles, cache) if mode == "train" else profiles


def batch_loss(params, arch, games, mode="eval") -> float:
    """Mean deviation-gain loss of the network's outputs on a batch."""
    if len(games) == 0:
        raise ConfigError("batch_loss needs a non-empty batch")
    inputs = flatten_games(games)
    if mode == "train":
        sigmas, _ = forward_train(params, arch, inputs)
    else:
        sigmas = forward_eval(params, arch, inputs)
    return float(batch_nash_apr(stack_utilities(games), sigmas).mean())


def backward(params: ApproximatorParams, arch: ApproximatorArch, stack: np.ndarray,
             cache: ForwardCache):
    """Gradient of the batch-mean loss for every trainable tensor.

    ``stack`` is the (B, n, *counts) utility stack of the cached batch.
    Returns (loss, GradientSet); loss comes for free from the subgradient
    kernel.
    """
    if cache.params is not params:
        raise UsageError("cache was built from different params (stale cache)")
    if stack.shape[0] != cache.inputs.shape[0]:
        raise UsageError("cache and batch sizes disagree")
    B = stack.shape[0]
    losses, dsigmas, _ = batch_nash_apr_subgradient(stack, cache.sigmas)
    loss = float(losses.mean())

    d_head_w, d_head_b = [], []
    d_hidden = np.zeros_like(cache.hidden_out)
    for sig, dsig, w in zip(cache.sigmas, dsigmas, params.head_w):
        # Fold the 1/B of the batch mean in here once.
        dsig = dsig / B
        dlogits = sig * (dsig - (sig * dsig).sum(axis=1, keepdims=True))
        d_head_w.append(cache.hidden_out.T @ dlogits)
        d_head_b.append(dlogits.sum(axis=0))
        d_hidden += dlogits @ w.T

    d_hidden_w = [None] * len(params.hidden_w)
    d_hidden_b = [None] * len(params.hidden_b)
    dx = d_hidden
    for l in range(len(params.hidden_w) - 1, -1, -1):
        dz_hat = np.where(cache.masks[l], dx, 0.0)
        z_hat = cache.z_hat[l]
        # Batch-norm backward through the batch statistics (no scale/shift):
        # dz = std_inv * (dz_hat - mean(dz_hat) - z_hat * mean(dz_hat * z_hat))
        dz = cache.std_inv[l] * (
            dz_hat
            - dz_hat.mean(axis=0)
            - z_hat * (dz_hat * z_hat).mean(axis=0)
        )
        d_hidden_w[l] = cache.layer_inputs[l].T @ dz
        d_hidden_b[l] = dz.sum(axis=0)
        dx = dz @ params.hidden_w[l].T

    grads = GradientSet(tensors=d_hidden_w + d_hidden_b + d_head_w + d_head_b)
    return loss, grads


def adam_step(params: ApproximatorParams, grads: GradientSet, state: AdamState,
              arch: ApproximatorArch):
    """One Adam update with bias correction, then clip into clip_range."""
    for g in grads.tensors:
        if not np.all(np.isfinite(g)):
            raise NumericError("non-finite gradient; aborting the run")
    lo, hi = arch.clip_range
    t = state.t + 1
    new_params = params.copy()
    tensors = new_params.trainable()
    new_m, new_v = [], []
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(tensors, grads.tensors, state.m, state.v):
        m = state.beta1 * m + (1.0 - state.beta1) * g
        v = state.beta2 * v + (1.0 - state.beta2) * g * g
        step = state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p -= step
        np.clip(p, lo, hi, out=p)
        new_m.append(m)
        new_v.append(v)
    new_state = AdamState(
        m=new_m, v=new_v, t=t,
        beta1=state.beta1, beta2=state.beta2, eps=state.eps, lr=state.lr,
    )
    return new_params, new_state


# --------------------------------------------------------------------------
# Training loop
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainLogEntry:
    step: int
    train_loss: float
    val_loss: Optional[float] = None


@dataclass
class TrainResult:
    params: ApproximatorParams
    adam: AdamState
    log: list = field(default_factory=list)
    steps_done: int = 0


def _epoch_permutation(seed: int, epoch: int, m: int) -> np.ndarray:
    return np.random.default_rng([int(seed), _SHUFFLE_TAG, int(epoch)]).permutation(m)


def minibatch_indices(seed: int, step: int, m: int, batch_size: int) -> np.ndarray:
    """Training-set indices of minibatch ``step`` (1-indexed).

    A pure function of its arguments: each epoch is an independent seeded
    shuffle of the m training games, cut into consecutive slices of
    batch_size (a trailing slice of fewer than 2 games is dropped, since
    train-mode batch normalization needs at least 2).
    """
    b = min(batch_size, m)
    full, rem = divmod(m, b)
    per_epoch = full + (1 if rem >= 2 else 0)
    epoch, slot = divmod(step - 1, per_epoch)
    perm = _epoch_permutation(seed, epoch, m)
    return perm[slot * b : min((slot + 1) * b, m)]


def train(arch: ApproximatorArch, dataset, cfg: TrainConfig,
          resume: Optional[TrainResult] = None) -> TrainResult:
    """Minibatch SGD on the deviation-gain loss (Adam, clipped parameters).

    Passing a previous TrainResult as ``resume`` continues the identical
    trajectory: batch order depends only on (seed, step).
    """
    train_games = dataset.subset("train")
    val_games = dataset.subset("validation")
    if len(train_games) == 0:
        raise ConfigError("training requires a non-empty train split")
    for g in train_games:
        if g.shape != arch.shape:
            raise DimensionError("dataset shape does not match the architecture")
    if min(cfg.batch_size, len(train_games)) < 2:
        raise ConfigError("effective batch size must be >= 2 for batch norm")

    inputs = flatten_games(train_games)
    stack = stack_utilities(train_games)
    val_inputs = flatten_games(val_games) if val_games else None
    val_stack = stack_utilities(val_games) if val_games else None
    m = len(train_games)

    if resume is None:
        params = init_params(arch, np.random.default_rng(cfg.seed))
        adam = AdamState.fresh(params, cfg.learning_rate)
        start = 0
    else:
        params = resume.params.copy()
        adam = resume.adam
        start = resume.steps_done

    log = []
    for step in range(start + 1, cfg.iterations + 1):
        idx = minibatch_indices(cfg.seed, step, m, cfg.batch_size)
        sigmas, cache = forward_train(params, arch, inputs[idx])
        loss, grads = backward(params, arch, stack[idx], cache)
        params, adam = adam_step(params, grads, adam, arch)
        params.run_mean = cache.new_run_mean
        params.run_var = cache.new_run_var
        val_loss = None
        if val_inputs is not None and step % cfg.validation_interval == 0:
            val_sig = forward_eval(params, arch, val_inputs)
            val_loss = float(batch_nash_apr(val_stack, val_sig).mean())
        log.append(TrainLogEntry(step=step, train_loss=loss, val_loss=val_loss))
    return TrainResult(params=params, adam=adam, log=log, steps_done=max(start, cfg.iterations))


@dataclass(frozen=True)
class EvalStats:
    mean: float
    std: float
    per_game: tuple


def evaluate(params: ApproximatorParams, arch: ApproximatorArch, games) -> EvalStats:
    """Eval-mode mean and population standard deviation of the loss."""
    if len(games) == 0:
        raise ConfigError("evaluate needs a non-empty split")
    sigmas = forward_eval(params, arch, flatten_games(games))
    losses = batch_nash_apr(stack_utilities(games), sigmas)
    return EvalStats(
        mean=float(losses.mean()), std=float(losses.std()), per_game=tuple(losses)
    )


def save_training_log(log, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "train_loss", "val_loss"])
        for entry in log:
            writer.writerow([
                entry.step,
                repr(entry.train_loss),
                "" if entry.val_loss is None else repr(entry.val_loss),
            ])


# --------------------------------------------------------------------------
# Lipschitz probe
# --------------------------------------------------------------------------


def lipschitz_estimate(params, arch, probes: int, stream: np.random.Generator,
                       perturbation: float = 0.01) -> float:
    """Empirical lower bound on the model's Lipschitz constant.

    Ratio of output l1 change to input max-norm change over random probe
    pairs (u, clip(u + noise)); a running max, so non-decreasing in probes
    for a fixed stream prefix.
    """
    if probes < 1:
        raise ConfigError("probes must be >= 1")
    d = arch.input_width
    best = 0.0
    for _ in range(probes):
        u = stream.random(d)
        v = np.clip(u + stream.uniform(-perturbation, perturbation, d), 0.0, 1.0)
        denom = float(np.abs(u - v).max())
        if denom == 0.0:
            continue
        out = forward_eval(params, arch, np.stack([u, v]))
        num = float(sum(np.abs(s[0] - s[1]).sum() for s in out))
        best = max(best, num / denom)
    return best


# --------------------------------------------------------------------------
# Persistence (NEA1)
# --------------------------------------------------------------------------
#
# Little-endian layout:
#   magic "NEA1" | version u16
#   | n u16 | action counts u32 * n
#   | hidden layer count u16 | widths u32 each
#   | batchnorm_epsilon f64 | bn_momentum f64 | clip lo f64 | clip hi f64
#   | all parameter tensors as f64 in declaration order
#   | adam presence u8; if 1: t u64, beta1/beta2/eps/lr f64, m tensors, v tensors


def save_model(params: ApproximatorParams, arch: ApproximatorArch, path,
               adam: Optional[AdamState] = None) -> None:
    chunks = [MODEL_MAGIC, struct.pack("<H", MODEL_VERSION)]
    chunks.append(struct.pack("<H", arch.shape.num_players))
    for k in arch.shape.action_counts:
        chunks.append(struct.pack("<I", k))
    chunks.append(struct.pack("<H", len(arch.hidden_layers)))
    for w in arch.hidden_layers:
        chunks.append(struct.pack("<I", w))
    chunks.append(
        struct.pack(
            "<dddd",
            arch.batchnorm_epsilon,
            arch.bn_momentum,
            arch.clip_range[0],
            arch.clip_range[1],
        )
    )
    for tensor in params.all_tensors():
        chunks.append(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    if adam is None:
        chunks.append(struct.pack("<B", 0))
    else:
        chunks.append(struct.pack("<B", 1))
        chunks.append(struct.pack("<Q", adam.t))
        chunks.append(struct.pack("<dddd", adam.beta1, adam.beta2, adam.eps, adam.lr))
        for tensor in adam.m + adam.v:
            chunks.append(np.ascontiguousarray(tensor, dtype="<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


class _ModelReader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size, what):
        if self.offset + size > len(self.data):
            raise FormatError(f"truncated model file while reading {what}",
                              offset=self.offset)
        out = self.data[self.offset : self.offset + size]
        self.offset += size
        return out

    def unpack(self, fmt, what):
        size = struct.calcsize("<" + fmt)
        vals = struct.unpack("<" + fmt, self.take(size, what))
        return vals[0] if len(vals) == 1 else vals

    def tensor(self, shape, what):
        count = int(np.prod(shape)) if shape else 1
        raw = self.take(8 * count, what)
        return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def load_model(path, expect_shape: Optional[GameShape] = None):
    """Returns (arch, params, adam_state_or_None).

    With ``expect_shape`` given, a model trained for a different game shape
    is rejected instead of silently mis-slicing inputs.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    r = _ModelReader(data)
    if r.take(4, "magic") != MODEL_MAGIC:
        raise FormatError("bad magic, not a model file", offset=0)
    version = r.unpack("H", "version")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}", offset=4)
    n = r.unpack("H", "player count")
    counts = tuple(r.unpack("I", f"action count {i}") for i in range(n))
    n_hidden = r.unpack("H", "hidden layer count")
    hidden = tuple(r.unpack("I", f"hidden width {i}") for i in range(n_hidden))
    eps, mom, lo, hi = r.unpack("dddd", "arch scalars")
    arch = ApproximatorArch(
        shape=GameShape(n, counts),
        hidden_layers=hidden,
        batchnorm_epsilon=eps,
        bn_momentum=mom,
        clip_range=(lo, hi),
    )
    if expect_shape is not None and arch.shape != expect_shape:
        raise FormatError(
            f"model was built for shape {arch.shape}, expected {expect_shape}"
        )
    widths = arch.layer_widths
    hidden_w, hidden_b, run_mean, run_var = [], [], [], []
    for d_in, d_out in zip(widths[:-1], widths[1:]):
        hidden_w.append(r.tensor((d_in, d_out), "hidden weight"))
        hidden_b.append(r.tensor((d_out,), "hidden bias"))
        run_mean.append(r.tensor((d_out,), "running mean"))
        run_var.append(r.tensor((d_out,), "running variance"))
    head_w, head_b = [], []
    for k in counts:
        head_w.append(r.tensor((widths[-1], k), "head weight"))
        head_b.append(r.tensor((k,), "head bias"))
    params = ApproximatorParams(hidden_w, hidden_b, run_mean, run_var, head_w, head_b)
    adam = None
    if r.unpack("B", "adam flag"):
        t = r.unpack("Q", "adam step")
        b1, b2, a_eps, lr = r.unpack("dddd", "adam scalars")
        shapes = [p.shape for p in params.trainable()]
        m = [r.tensor(s, "adam m") for s in shapes]
        v = [r.tensor(s, "adam v") for s in shapes]
        adam = AdamState(m=m, v=v, t=t, beta1=b1, beta2=b2, eps=a_eps, lr=lr)
    if r.offset != len(data):
        raise FormatError("trailing bytes after model", offset=r.offset)
    return arch, params, adam
