"""Fine-tuning objectives, steps and evaluation loops for both head kinds."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..model import (
    BOS,
    EOS,
    PAD,
    ModelConfig,
    beam_search,
    decoder_forward,
    encode,
    pooling_head,
)
from ..numerics import AdamState, ScheduleConfig, Tape, Tensor, adam_step, backward, lr_at_step
from ..numerics import tensor as F
from .metrics import bleu, confusion_matrix, macro_f1, uar

LABEL_SMOOTHING = 0.1


def label_smoothed_ce(logits: Tensor, targets, epsilon: float = LABEL_SMOOTHING,
                      pad_id: int | None = PAD) -> Tensor:
    """Cross-entropy against ``(1 - eps) * onehot + eps / V``.

    ``logits`` is (..., V) and ``targets`` integer ids of shape (...).
    Positions whose target equals ``pad_id`` are left out of the mean.
    """
    targets = np.asarray(targets, dtype=np.int64)
    V = logits.shape[-1]
    if targets.shape != logits.shape[:-1]:
        raise F.ShapeError(f"label_smoothed_ce: targets {targets.shape} vs logits {logits.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= V):
        raise ValueError(f"label_smoothed_ce: target ids must lie in [0, {V})")
    keep = np.ones(targets.shape, dtype=bool) if pad_id is None else targets != pad_id
    count = int(keep.sum())
    if count == 0:
        raise ValueError("label_smoothed_ce: every position is padding")
    q = np.full(logits.shape, epsilon / V)
    np.put_along_axis(q, targets[..., None], 1.0 - epsilon + epsilon / V, axis=-1)
    q *= keep[..., None]
    logp = F.log_softmax(logits, axis=-1)
    return F.sum_(logp * q.astype(logits.dtype)) * (-1.0 / count)


def cross_entropy(logits: Tensor, targets) -> Tensor:
    return label_smoothed_ce(logits, targets, epsilon=0.0, pad_id=None)


# ---------------------------------------------------------------------------
# batches
# ---------------------------------------------------------------------------

@dataclass
class TagBatch:
    features: np.ndarray
    lengths: np.ndarray
    labels: np.ndarray


@dataclass
class Seq2SeqBatch:
    features: np.ndarray
    lengths: np.ndarray
    decoder_in: np.ndarray
    decoder_out: np.ndarray


def pad_features(sequences: Sequence[np.ndarray], multiple: int, dtype) -> tuple[np.ndarray, np.ndarray]:
    lengths = np.array([s.shape[0] for s in sequences], dtype=np.int64)
    T = int(-(-lengths.max() // multiple) * multiple)
    out = np.zeros((len(sequences), T, sequences[0].shape[1]), dtype=dtype)
    for i, s in enumerate(sequences):
        out[i, :s.shape[0]] = s
    return out, lengths


def make_tag_batch(sequences, labels, cfg: ModelConfig) -> TagBatch:
    feats, lengths = pad_features(sequences, cfg.downsample, cfg.dtype)
    return TagBatch(feats, lengths, np.asarray(labels, dtype=np.int64))


def make_seq2seq_batch(sequences, token_lists, cfg: ModelConfig) -> Seq2SeqBatch:
    feats, lengths = pad_features(sequences, cfg.downsample, cfg.dtype)
    L = max(len(t) for t in token_lists) + 1
    dec_in = np.full((len(token_lists), L), PAD, dtype=np.int64)
    dec_out = np.full((len(token_lists), L), PAD, dtype=np.int64)
    for i, toks in enumerate(token_lists):
        dec_in[i, :len(toks) + 1] = [BOS] + list(toks)
        dec_out[i, :len(toks) + 1] = list(toks) + [EOS]
    return Seq2SeqBatch(feats, lengths, dec_in, dec_out)


# ---------------------------------------------------------------------------
# steps
# ---------------------------------------------------------------------------

def finetune_loss(params, cfg: ModelConfig, batch, train: bool = True, rng=None,
                  smoothing: float = LABEL_SMOOTHING) -> Tensor:
    enc = encode(params, cfg, batch.features, batch.lengths, train=train, rng=rng)
    if isinstance(batch, TagBatch):
        return cross_entropy(pooling_head(params, cfg, enc), batch.labels)
    logits = decoder_forward(params, cfg, enc, batch.decoder_in, train=train, rng=rng)
    return label_smoothed_ce(logits, batch.decoder_out, smoothing)


def finetune_step(batch, params, cfg: ModelConfig, opt: AdamState, schedule: ScheduleConfig,
                  step: int, rng=None, smoothing: float = LABEL_SMOOTHING) -> tuple[float, float]:
    """One update of the whole model (no frozen layers). Returns (loss, lr)."""
    expected = TagBatch if cfg.head_kind == "tag" else Seq2SeqBatch
    if cfg.head_kind == "pretrain" or not isinstance(batch, expected):
        raise ValueError(f"batch type {type(batch).__name__} does not match a {cfg.head_kind} head")
    for p in params.values():
        p.grad = None
    with Tape() as tape:
        loss = finetune_loss(params, cfg, batch, train=True, rng=rng, smoothing=smoothing)
    backward(tape, loss)
    lr = lr_at_step(schedule, step)
    adam_step(params, None, opt, lr)
    return loss.item(), lr


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def predict_classes(params, cfg: ModelConfig, sequences, batch_size: int = 32) -> np.ndarray:
    preds = []
    for i in range(0, len(sequences), batch_size):
        feats, lengths = pad_features(sequences[i:i + batch_size], cfg.downsample, cfg.dtype)
        logits = pooling_head(params, cfg, encode(params, cfg, feats, lengths))
        preds.append(np.argmax(logits.data, axis=-1))
    return np.concatenate(preds)


def evaluate_tagging(params, cfg: ModelConfig, sequences, labels) -> dict:
    preds = predict_classes(params, cfg, sequences)
    cm = confusion_matrix(labels, preds, cfg.n_classes)
    return {"uar": uar(cm), "macro_f1": macro_f1(cm), "confusion": cm}


def decode_all(params, cfg: ModelConfig, sequences, beam: int = 10, max_len: int = 50) -> list[list[int]]:
    outputs = []
    for seq in sequences:
        feats, lengths = pad_features([seq], cfg.downsample, cfg.dtype)
        enc = encode(params, cfg, feats, lengths)
        hyp = beam_search(params, cfg, enc, beam=beam, max_len=max_len)
        outputs.append([t for t in hyp.tokens if t != EOS])
    return outputs


def evaluate_seq2seq(params, cfg: ModelConfig, sequences, references: Sequence[Sequence[int]],
                     beam: int = 10, max_len: int = 50) -> dict:
    hyps = decode_all(params, cfg, sequences, beam, max_len)
    refs = [[str(t) for t in r] for r in references]
    return {"bleu": bleu([[str(t) for t in h] for h in hyps], refs), "hypotheses": hyps}


@dataclass
class FinetuneResult:
    losses: list[float]
    val_scores: list[tuple[int, float]] = field(default_factory=list)
    step: int = 0


def finetune(params, cfg: ModelConfig, sequences, targets, schedule: ScheduleConfig, *, steps: int,
             batch_size: int, seed: int, smoothing: float = LABEL_SMOOTHING, opt: AdamState | None = None,
             eval_every: int = 0, evaluate: Callable[[dict], float] | None = None,
             on_eval: Callable[[int, float], None] | None = None, log_file=None) -> FinetuneResult:
    """Train for ``steps`` updates. ``targets`` are class ids or token lists."""
    opt = opt if opt is not None else AdamState()
    order_rng, drop_rng = np.random.default_rng(seed).spawn(2)
    losses: list[float] = []
    val_scores: list[tuple[int, float]] = []
    queue: list[np.ndarray] = []
    for step in range(1, steps + 1):
        if not queue:
            perm = order_rng.permutation(len(sequences))
            queue = [perm[i:i + batch_size] for i in range(0, len(perm), batch_size)]
        idx = queue.pop(0)
        seqs = [sequences[i] for i in idx]
        if cfg.head_kind == "tag":
            batch = make_tag_batch(seqs, [targets[i] for i in idx], cfg)
        else:
            batch = make_seq2seq_batch(seqs, [targets[i] for i in idx], cfg)
        loss, lr = finetune_step(batch, params, cfg, opt, schedule, step, drop_rng, smoothing)
        losses.append(loss)
        if log_file is not None:
            log_file.write(json.dumps({"step": step, "lr": lr, "loss": loss}) + "\n")
        if eval_every and evaluate is not None and (step % eval_every == 0 or step == steps):
            score = evaluate(params)
            val_scores.append((step, score))
            if on_eval is not None:
                on_eval(step, score)
    return FinetuneResult(losses, val_scores, steps)
