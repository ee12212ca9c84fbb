"""Masked predictive coding: chunk masks, reconstruction losses, training loop."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .model import ModelConfig, encode, reconstruction_head
from .numerics import AdamState, ScheduleConfig, Tape, Tensor, adam_step, backward, lr_at_step
from .numerics import tensor as F

log = logging.getLogger(__name__)

MASK_RATE = 0.15


@dataclass
class MaskPlan:
    num_frames: int
    chunk_size: int
    num_chunks: int
    masked_chunks: np.ndarray
    frame_mask: np.ndarray


def masked_chunk_count(num_chunks: int, rate: float = MASK_RATE) -> int:
    return min(num_chunks, max(1, int(round(rate * num_chunks))))


def plan_from_chunks(num_frames: int, chunk_size: int, chunks: Iterable[int]) -> MaskPlan:
    num_chunks = -(-num_frames // chunk_size)
    chunks = np.array(sorted(set(int(c) for c in chunks)), dtype=np.int64)
    if chunks.size and (chunks.min() < 0 or chunks.max() >= num_chunks):
        raise ValueError(f"chunk indices {chunks.tolist()} outside [0, {num_chunks})")
    frame_mask = np.zeros(num_frames, dtype=bool)
    for c in chunks:
        frame_mask[c * chunk_size:(c + 1) * chunk_size] = True
    return MaskPlan(num_frames, chunk_size, num_chunks, chunks, frame_mask)


def make_mask_plan(num_frames: int, chunk_size: int, rate: float = MASK_RATE,
                   rng: np.random.Generator | None = None) -> MaskPlan:
    """Pick max(1, round(rate * chunks)) whole chunks uniformly without replacement."""
    if num_frames < chunk_size:
        raise ValueError(f"sequence of {num_frames} frames is shorter than one chunk ({chunk_size})")
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"mask rate must be in [0, 1], got {rate}")
    rng = rng if rng is not None else np.random.default_rng()
    num_chunks = -(-num_frames // chunk_size)
    chosen = rng.choice(num_chunks, size=masked_chunk_count(num_chunks, rate), replace=False)
    return plan_from_chunks(num_frames, chunk_size, chosen)


def apply_mask(features: np.ndarray, plan: MaskPlan) -> np.ndarray:
    """Copy of ``features`` (T, F) with the planned frames set to exact zero."""
    features = np.asarray(features)
    if features.shape[0] != plan.num_frames:
        raise ValueError(f"mask plan covers {plan.num_frames} frames, features have {features.shape[0]}")
    out = features.copy()
    out[plan.frame_mask] = 0.0
    return out


def masked_l1_loss(pred: Tensor, target, frame_mask) -> Tensor:
    """Mean |pred - target| over the elements of masked frames.

    ``pred`` and ``target`` are (..., T, F); ``frame_mask`` is (..., T).
    Passing an all-valid mask gives the all-frames variant.
    """
    target = np.asarray(target.data if isinstance(target, Tensor) else target)
    mask = np.asarray(frame_mask, dtype=bool)
    if pred.shape != target.shape:
        raise F.ShapeError(f"masked_l1_loss: prediction {pred.shape} vs target {target.shape}")
    if mask.shape != pred.shape[:-1]:
        raise F.ShapeError(f"masked_l1_loss: mask {mask.shape} does not match frames {pred.shape[:-1]}")
    count = int(mask.sum()) * pred.shape[-1]
    if count == 0:
        raise ValueError("masked_l1_loss: no masked frames")
    weights = mask[..., None].astype(pred.dtype)
    diff = F.abs_(pred - np.where(mask[..., None], target, 0).astype(pred.dtype))
    return F.sum_(diff * weights) * (1.0 / count)


def infonce_loss(context: Tensor, positive: Tensor, negatives: Tensor,
                 weight: Tensor | None = None) -> Tensor:
    """Contrastive loss with a bilinear score ``f = exp(c^T W z)``.

    ``context`` and ``positive`` are (B, d); ``negatives`` is (B, K, d) or a
    shared (K, d) set. Returns the mean over contexts of
    ``-log(f(pos) / (f(pos) + sum_j f(neg_j)))``.
    """
    if negatives.ndim == 2:
        negatives = F.reshape(negatives, (1,) + negatives.shape)
        if context.shape[0] != 1:
            negatives = F.mul(negatives, np.ones((context.shape[0], 1, 1), dtype=negatives.dtype))
    if negatives.shape[1] < 1:
        raise ValueError("infonce_loss: need at least one negative sample")
    B, d = context.shape
    if positive.shape != (B, d) or negatives.shape[0] != B or negatives.shape[2] != d:
        raise F.ShapeError(f"infonce_loss: context {context.shape}, positive {positive.shape}, "
                           f"negatives {negatives.shape}")
    projected = F.matmul(context, weight) if weight is not None else context
    candidates = F.concat([F.reshape(positive, (B, 1, d)), negatives], axis=1)
    scores = F.reshape(F.matmul(candidates, F.reshape(projected, (B, d, 1))), (B, -1))
    logp = F.log_softmax(scores, axis=-1)
    return F.mean(F.slice_(logp, (slice(None), 0))) * -1.0


# ---------------------------------------------------------------------------
# batches and the training step
# ---------------------------------------------------------------------------

@dataclass
class PretrainBatch:
    features: np.ndarray      # (B, T, F) masked input, padded
    targets: np.ndarray       # (B, T, F) unmasked copy
    frame_mask: np.ndarray    # (B, T) masked and valid
    lengths: np.ndarray       # (B,)
    plans: list = field(default_factory=list)

    @property
    def valid_mask(self) -> np.ndarray:
        return np.arange(self.features.shape[1])[None, :] < self.lengths[:, None]


def make_pretrain_batch(sequences: Sequence[np.ndarray], chunk_size: int, rate: float,
                        rng: np.random.Generator, dtype="float32") -> PretrainBatch:
    lengths = np.array([s.shape[0] for s in sequences], dtype=np.int64)
    T = int(-(-lengths.max() // chunk_size) * chunk_size)
    n_mels = sequences[0].shape[1]
    feats = np.zeros((len(sequences), T, n_mels), dtype=dtype)
    targets = np.zeros_like(feats)
    mask = np.zeros((len(sequences), T), dtype=bool)
    plans = []
    for i, seq in enumerate(sequences):
        plan = make_mask_plan(seq.shape[0], chunk_size, rate, rng)
        plans.append(plan)
        targets[i, :seq.shape[0]] = seq
        feats[i, :seq.shape[0]] = apply_mask(seq, plan)
        mask[i, :seq.shape[0]] = plan.frame_mask
    return PretrainBatch(feats, targets, mask, lengths, plans)


def pretrain_loss(params, cfg: ModelConfig, batch: PretrainBatch, train: bool = True, rng=None,
                  loss_mode: str = "masked") -> Tensor:
    enc = encode(params, cfg, batch.features, batch.lengths, train=train, rng=rng)
    pred = reconstruction_head(params, cfg, enc, batch.features.shape[1])
    if loss_mode == "masked":
        mask = batch.frame_mask
    elif loss_mode == "all":
        mask = batch.valid_mask
    else:
        raise ValueError(f"unknown loss mode {loss_mode!r}")
    return masked_l1_loss(pred, batch.targets, mask)


def pretrain_step(batch: PretrainBatch, params, cfg: ModelConfig, opt: AdamState,
                  schedule: ScheduleConfig, step: int, rng=None, loss_mode: str = "masked") -> tuple[float, float]:
    """Forward, masked L1, backward and one Adam update. Returns (loss, lr)."""
    for p in params.values():
        p.grad = None
    with Tape() as tape:
        loss = pretrain_loss(params, cfg, batch, train=True, rng=rng, loss_mode=loss_mode)
    backward(tape, loss)
    lr = lr_at_step(schedule, step)
    adam_step(params, None, opt, lr)
    return loss.item(), lr


def length_buckets(lengths: Sequence[int], batch_size: int, rng: np.random.Generator) -> list[list[int]]:
    """Shuffle, then group similar lengths so padding stays small."""
    order = rng.permutation(len(lengths))
    order = sorted(order, key=lambda i: lengths[i])
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    return [batches[i] for i in rng.permutation(len(batches))]


@dataclass
class PretrainResult:
    losses: list[float]
    val_scores: list[tuple[int, float]]
    step: int


def evaluate_pretrain(params, cfg: ModelConfig, sequences: Sequence[np.ndarray], rate: float,
                      seed: int, batch_size: int = 16, loss_mode: str = "masked") -> float:
    """Held-out masked L1 with mask plans fixed by ``seed``."""
    rng = np.random.default_rng(seed)
    total, weight = 0.0, 0
    for i in range(0, len(sequences), batch_size):
        chunk = sequences[i:i + batch_size]
        batch = make_pretrain_batch(chunk, cfg.downsample, rate, rng, cfg.dtype)
        loss = pretrain_loss(params, cfg, batch, train=False, loss_mode=loss_mode)
        total += loss.item() * len(chunk)
        weight += len(chunk)
    return total / weight


def pretrain(params, cfg: ModelConfig, sequences: Sequence[np.ndarray], schedule: ScheduleConfig, *,
             steps: int, batch_size: int, seed: int, rate: float = MASK_RATE, loss_mode: str = "masked",
             opt: AdamState | None = None, start_step: int = 0, val_sequences: Sequence[np.ndarray] = (),
             eval_every: int = 0, on_eval: Callable[[int, float], None] | None = None,
             log_file=None) -> PretrainResult:
    """Run ``steps`` optimisation steps over ``sequences`` (each (T, n_mels)).

    Randomness (batch order, masks, dropout) comes from streams derived from
    ``seed`` so identical inputs give identical parameters.
    """
    opt = opt if opt is not None else AdamState()
    streams = np.random.default_rng(seed).spawn(3)
    order_rng, mask_rng, drop_rng = streams
    lengths = [s.shape[0] for s in sequences]
    losses: list[float] = []
    val_scores: list[tuple[int, float]] = []
    step = start_step
    queue: list[list[int]] = []
    while step < start_step + steps:
        if not queue:
            queue = length_buckets(lengths, batch_size, order_rng)
        idx = queue.pop(0)
        batch = make_pretrain_batch([sequences[i] for i in idx], cfg.downsample, rate, mask_rng, cfg.dtype)
        step += 1
        loss, lr = pretrain_step(batch, params, cfg, opt, schedule, step, drop_rng, loss_mode)
        losses.append(loss)
        if log_file is not None:
            log_file.write(json.dumps({"step": step, "lr": lr, "loss": loss}) + "\n")
        if eval_every and (step % eval_every == 0 or step == start_step + steps):
            held = val_sequences if len(val_sequences) else sequences
            score = evaluate_pretrain(params, cfg, held, rate, seed + 1, batch_size, loss_mode)
            val_scores.append((step, score))
            log.info("step %d loss %.4f val %.4f", step, loss, score)
            if on_eval is not None:
                on_eval(step, score)
    return PretrainResult(losses, val_scores, step)
