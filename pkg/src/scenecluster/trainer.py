"""Triplet-loss training of the Siamese encoder with Adam."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .encoder import (EncoderParams, GraphBatch, backward_batch, forward_batch, init_params, max_relative_error,
                      numeric_gradient)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    margin: float = 0.5
    epochs: int = 1400
    batch_size: int = 533
    train_fraction: float = 0.75
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must be in (0, 1)")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 for in-batch negatives")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


def triplet_loss(s0, sp, sn, margin: float):
    """``max(|s0 - sp| - |s0 - sn| + margin, 0)`` with its subgradients.

    Returns ``(loss, g0, gp, gn)``. The gradient of a distance is taken as
    zero where the distance itself is zero.
    """
    if margin < 0:
        raise ValueError("margin must be >= 0")
    s0, sp, sn = (np.asarray(v, dtype=float) for v in (s0, sp, sn))
    dp_vec, dn_vec = s0 - sp, s0 - sn
    dp, dn = math.hypot(*dp_vec), math.hypot(*dn_vec)
    loss = dp - dn + margin
    zero = np.zeros_like(s0)
    if loss <= 0:
        return 0.0, zero, zero.copy(), zero.copy()
    up = dp_vec / dp if dp > 0 else zero
    un = dn_vec / dn if dn > 0 else zero
    return float(loss), up - un, -up, un.copy()


def batch_triplet_loss(s0: np.ndarray, sp: np.ndarray, sn: np.ndarray, margin: float):
    """Vectorized triplet loss over rows; returns per-row loss and gradients."""
    dp_vec, dn_vec = s0 - sp, s0 - sn
    # hypot avoids underflow of squared tiny differences
    dp = np.hypot(dp_vec[:, 0], dp_vec[:, 1])
    dn = np.hypot(dn_vec[:, 0], dn_vec[:, 1])
    raw = dp - dn + margin
    active = raw > 0
    up = np.divide(dp_vec, dp[:, None], out=np.zeros_like(dp_vec), where=dp[:, None] > 0)
    un = np.divide(dn_vec, dn[:, None], out=np.zeros_like(dn_vec), where=dn[:, None] > 0)
    up *= active[:, None]
    un *= active[:, None]
    return np.where(active, raw, 0.0), up - un, -up, un


def triplet_gradients(params: EncoderParams, anchor, positive, negative, margin: float = 0.5,
                      epsilon: float = 1e-5):
    """Analytic and central-difference gradients of the triplet loss on one triplet.

    The three graphs go through the encoder together, so the comparison
    covers the loss and the encoder backward pass as one chain.
    """
    params = params.copy()
    batch = GraphBatch.from_graphs([anchor, positive, negative])

    def loss_fn(p):
        out, _ = forward_batch(p, batch)
        return triplet_loss(out[0], out[1], out[2], margin)[0]

    out, trace = forward_batch(params, batch)
    _, g0, gp, gn = triplet_loss(out[0], out[1], out[2], margin)
    analytic = backward_batch(params, trace, np.stack([g0, gp, gn]))
    return analytic, numeric_gradient(params, loss_fn, epsilon)


# central differences at eps=1e-5 cannot resolve slopes much below this in double precision
FD_RESOLUTION = 1e-6


def triplet_grad_check(params: EncoderParams, anchor, positive, negative, margin: float = 0.5,
                       epsilon: float = 1e-5, floor: float = FD_RESOLUTION) -> float:
    """Max relative error of the triplet-loss gradient; ``floor`` guards the denominator."""
    analytic, numeric = triplet_gradients(params, anchor, positive, negative, margin, epsilon)
    return max_relative_error(analytic, numeric, floor)


def sample_negatives(batch_len: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform index from the rest of the batch for every element."""
    if batch_len < 2:
        raise ValueError("negative sampling needs a batch of at least 2")
    draws = rng.integers(0, batch_len - 1, size=batch_len)
    return draws + (draws >= np.arange(batch_len))


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, params: EncoderParams) -> "AdamState":
        arrs = params.arrays()
        return cls({k: np.zeros_like(a) for k, a in arrs.items()}, {k: np.zeros_like(a) for k, a in arrs.items()})


def adam_step(params: EncoderParams, grads: EncoderParams, state: AdamState, config: TrainConfig):
    """One bias-corrected Adam update. Returns new ``(params, state)``; inputs are untouched."""
    b1, b2 = config.adam_beta1, config.adam_beta2
    t = state.t + 1
    new_params = params.copy()
    p_arrs, g_arrs = new_params.arrays(), grads.arrays()
    m, v = {}, {}
    for name, p in p_arrs.items():
        g = g_arrs[name]
        if p.shape != g.shape or p.shape != state.m[name].shape:
            raise ValueError(f"{name}: shape mismatch between params, grads and Adam state")
        m[name] = b1 * state.m[name] + (1.0 - b1) * g
        v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = m[name] / (1.0 - b1**t)
        v_hat = v[name] / (1.0 - b2**t)
        p -= config.learning_rate * m_hat / (np.sqrt(v_hat) + config.adam_eps)
    return new_params, AdamState(m, v, t)


def split_dataset(pairs, fraction: float, seed: int):
    """Seeded shuffle, then the first ``floor(fraction * N)`` items train."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("cannot split an empty dataset")
    order = np.random.default_rng(seed).permutation(len(pairs))
    cut = int(math.floor(fraction * len(pairs)))
    return [pairs[i] for i in order[:cut]], [pairs[i] for i in order[cut:]]


def triplet_batch_loss(params: EncoderParams, anchors, positives, negatives: np.ndarray, margin: float,
                       with_grad: bool = True):
    """Mean triplet loss of one batch; negatives are the sampled elements' anchors.

    All three Siamese branches run through one forward pass over the
    concatenated anchors and positives, so they share one parameter value.
    Returns ``(loss, grads or None, embeddings)``.
    """
    n = len(anchors)
    batch = GraphBatch.from_graphs(list(anchors) + list(positives))
    out, trace = forward_batch(params, batch)
    s0, sp = out[:n], out[n:]
    losses, g0, gp, gn = batch_triplet_loss(s0, sp, s0[negatives], margin)
    loss = float(losses.mean())
    if not with_grad:
        return loss, None, out
    d_out = np.zeros_like(out)
    d_out[:n] = g0
    d_out[n:] = gp
    np.add.at(d_out, negatives, gn)
    d_out /= n
    return loss, backward_batch(params, trace, d_out), out


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_triplet_acc: float


@dataclass
class TrainResult:
    params: EncoderParams
    history: list[EpochRecord] = field(default_factory=list)


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        # a trailing batch of one has no negative to sample
        if len(idx) >= 2:
            yield idx


def evaluate(params: EncoderParams, pairs, margin: float, rng: np.random.Generator) -> tuple[float, float]:
    """Mean triplet loss and triplet accuracy with in-set negatives."""
    if len(pairs) < 2:
        return float("nan"), float("nan")
    anchors = [a for a, _ in pairs]
    positives = [p for _, p in pairs]
    neg = sample_negatives(len(pairs), rng)
    loss, _, out = triplet_batch_loss(params, anchors, positives, neg, margin, with_grad=False)
    n = len(pairs)
    s0, sp = out[:n], out[n:]
    dp = np.linalg.norm(s0 - sp, axis=1)
    dn = np.linalg.norm(s0 - s0[neg], axis=1)
    return loss, float(np.mean(dp < dn))


def fit(train_pairs, val_pairs, config: TrainConfig, params: EncoderParams | None = None) -> TrainResult:
    """Train on ``train_pairs``; ``val_pairs`` are only ever evaluated.

    Training and validation draw from separate generator streams, so the
    presence of a validation set cannot change the trained parameters.
    """
    train_pairs = list(train_pairs)
    val_pairs = list(val_pairs or [])
    if not train_pairs:
        raise ValueError("training split is empty")
    params = init_params(config.seed) if params is None else params.copy()
    if config.epochs == 0:
        return TrainResult(params, [])
    if len(train_pairs) < 2:
        raise ValueError("training needs at least 2 pairs for in-batch negatives")
    state = AdamState.zeros(params)
    train_rng = np.random.default_rng([config.seed, 0])
    val_rng = np.random.default_rng([config.seed, 1])
    history = []
    for epoch in range(config.epochs):
        losses = []
        for idx in _batches(len(train_pairs), config.batch_size, train_rng):
            neg = sample_negatives(len(idx), train_rng)
            anchors = [train_pairs[i][0] for i in idx]
            positives = [train_pairs[i][1] for i in idx]
            loss, grads, _ = triplet_batch_loss(params, anchors, positives, neg, config.margin)
            params, state = adam_step(params, grads, state, config)
            losses.append(loss)
        val_loss, val_acc = evaluate(params, val_pairs, config.margin, val_rng)
        history.append(EpochRecord(epoch, float(np.mean(losses)), val_loss, val_acc))
        if epoch % 100 == 0 or epoch == config.epochs - 1:
            logger.info("epoch %d train %.4f val %.4f acc %.3f", epoch, history[-1].train_loss, val_loss, val_acc)
    return TrainResult(params, history)


def train(pairs, config: TrainConfig) -> TrainResult:
    """Split ``(anchor, positive)`` pairs and train with the split's training part."""
    pairs = list(pairs)
    if len(pairs) < 2:
        raise ValueError("training needs at least 2 pairs")
    train_pairs, val_pairs = split_dataset(pairs, config.train_fraction, config.seed)
    return fit(train_pairs, val_pairs, config)


def write_history(history, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "val_triplet_acc"])
        for rec in history:
            writer.writerow([rec.epoch, repr(rec.train_loss), repr(rec.val_loss), repr(rec.val_triplet_acc)])
