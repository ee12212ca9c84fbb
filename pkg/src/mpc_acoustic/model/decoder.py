"""Transformer decoder head and beam search."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ..numerics import tensor as F
from ..numerics.tensor import Tensor
from .config import ModelConfig
from .network import EncoderOutput, feed_forward, multi_head_attention, norm, sinusoidal_positions

PAD, BOS, EOS, UNK = 0, 1, 2, 3


def decoder_forward(params, cfg: ModelConfig, enc: EncoderOutput, tokens, train: bool = False,
                    rng=None) -> Tensor:
    """Per-step vocabulary logits (B, L, V) for teacher-forced ``tokens`` (B, L).

    Position t only sees tokens[:, :t+1]; cross-attention only sees valid
    encoder positions.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim == 1:
        tokens = tokens[None]
    B, L = tokens.shape
    if L == 0:
        raise ValueError("decoder_forward: empty target sequence")
    if enc.states.shape[0] != B:
        raise F.ShapeError(f"decoder_forward: {B} target rows for {enc.states.shape[0]} encoder rows")
    d = cfg.d_model
    x = F.embedding(params["decoder.embed"], tokens) * float(np.sqrt(d))
    x = x + sinusoidal_positions(L, d, x.dtype)
    x = F.dropout(x, cfg.dropout, rng, train)
    causal = np.tril(np.ones((L, L), dtype=bool))[None, None]
    cross = enc.key_mask()[:, None, None, :]
    for i in range(cfg.dec_layers):
        pre = f"decoder.layers.{i}"
        h = norm(params, f"{pre}.self_norm", x)
        a, _ = multi_head_attention(params, f"{pre}.self_attn", h, h, cfg.heads, causal)
        x = x + F.dropout(a, cfg.dropout, rng, train)
        h = norm(params, f"{pre}.cross_norm", x)
        c, _ = multi_head_attention(params, f"{pre}.cross_attn", h, enc.states, cfg.heads, cross)
        x = x + F.dropout(c, cfg.dropout, rng, train)
        f = feed_forward(params, f"{pre}.ffn", norm(params, f"{pre}.ffn_norm", x), cfg, train, rng)
        x = x + F.dropout(f, cfg.dropout, rng, train)
    x = norm(params, "decoder.final_norm", x)
    return F.linear(x, params["decoder.out.weight"], params["decoder.out.bias"])


@dataclass
class Hypothesis:
    tokens: list[int]
    log_prob: float
    finished: bool

    @property
    def score(self) -> float:
        """Length-normalised log-probability (EOS counts as a token)."""
        return self.log_prob / max(len(self.tokens), 1)


def beam_search_core(next_log_probs: Callable[[list[list[int]]], np.ndarray], beam: int,
                     max_len: int, bos: int = BOS, eos: int = EOS) -> Hypothesis:
    """Generic beam search over a next-token log-probability function.

    ``next_log_probs`` maps a list of prefixes (each starting with BOS) to an
    array (n, V) of log-probabilities for the next token. Candidates are
    ranked by cumulative log-probability with ties broken by token id, then
    by beam index. Hypotheses that emit EOS leave the beam, which shrinks
    accordingly; the winner is the finished hypothesis with the best
    length-normalised score. If nothing finishes within ``max_len`` tokens,
    the best partial hypothesis is returned with ``finished=False``.
    """
    if beam < 1:
        raise ValueError(f"beam must be >= 1, got {beam}")
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    live: list[tuple[list[int], float]] = [([], 0.0)]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        width = beam - len(finished)
        if width <= 0 or not live:
            break
        lp = np.asarray(next_log_probs([[bos] + seq for seq, _ in live]), dtype=np.float64)
        totals = np.array([s for _, s in live])[:, None] + lp
        n, V = totals.shape
        beam_idx = np.repeat(np.arange(n), V)
        tok_idx = np.tile(np.arange(V), n)
        flat = totals.reshape(-1)
        order = np.lexsort((beam_idx, tok_idx, -flat))[:width]
        new_live = []
        for j in order:
            if not np.isfinite(flat[j]):
                continue
            seq = live[beam_idx[j]][0] + [int(tok_idx[j])]
            if tok_idx[j] == eos:
                finished.append(Hypothesis(seq, float(flat[j]), True))
            else:
                new_live.append((seq, float(flat[j])))
        live = new_live
    if finished:
        return max(finished, key=lambda h: h.score)
    partial = [Hypothesis(seq, s, False) for seq, s in live]
    if not partial:
        return Hypothesis([], float("-inf"), False)
    return max(partial, key=lambda h: h.score)


def beam_search(params, cfg: ModelConfig, enc: EncoderOutput, beam: int = 10, max_len: int = 50,
                bos: int = BOS, eos: int = EOS) -> Hypothesis:
    """Decode one utterance (batch row 0 of ``enc``) with the trained decoder."""
    states = enc.states.data[:1]
    valid = enc.valid_lengths[:1]

    def step(prefixes: Sequence[list[int]]) -> np.ndarray:
        n = len(prefixes)
        rep = EncoderOutput(Tensor(np.repeat(states, n, axis=0)), np.repeat(valid, n))
        logits = decoder_forward(params, cfg, rep, np.array(prefixes), train=False)
        last = F.log_softmax(F.slice_(logits, (slice(None), -1)), axis=-1)
        return last.data

    return beam_search_core(step, beam, max_len, bos, eos)


def greedy_search(params, cfg: ModelConfig, enc: EncoderOutput, max_len: int = 50) -> Hypothesis:
    return beam_search(params, cfg, enc, beam=1, max_len=max_len)
