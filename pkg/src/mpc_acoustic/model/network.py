"""Encoder-side networks: conv downsampling, Transformer encoder, task heads.

Shapes are batch-first and channel-last: features (B, T, n_mels), encoder
states (B, T', d_model) with T' = ceil(T / N).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import tensor as F
from ..numerics.tensor import Tensor
from .config import ModelConfig


@dataclass
class EncoderOutput:
    states: Tensor
    valid_lengths: np.ndarray
    attention: list = field(default_factory=list)

    @property
    def length(self) -> int:
        return self.states.shape[1]

    def key_mask(self) -> np.ndarray:
        return np.arange(self.length)[None, :] < self.valid_lengths[:, None]


def sinusoidal_positions(length: int, d: int, dtype=np.float64) -> np.ndarray:
    pos = np.arange(length)[:, None]
    rates = np.exp(-np.log(10000.0) * (np.arange(0, d, 2) / d))
    table = np.zeros((length, d))
    table[:, 0::2] = np.sin(pos * rates)
    table[:, 1::2] = np.cos(pos * rates[: d // 2])
    return table.astype(dtype)


def encoded_length(num_frames, downsample: int):
    return -(-np.asarray(num_frames) // downsample)


def pad_to_multiple(feats: np.ndarray, multiple: int) -> np.ndarray:
    """Right-pad the time axis of (B, T, F) with zero frames."""
    extra = (-feats.shape[1]) % multiple
    if extra:
        feats = np.pad(feats, ((0, 0), (0, extra), (0, 0)))
    return feats


def conv_frontend(params, cfg: ModelConfig, feats, train: bool = False, rng=None) -> Tensor:
    """Stride-2 time convolutions (kernel 3, ReLU) then a linear map to d_model.

    ``feats`` is (B, T, n_mels); T is zero-padded up to a multiple of the
    downsampling factor first. Positional encodings are added at the end.
    """
    x = feats if isinstance(feats, Tensor) else Tensor(np.asarray(feats, dtype=cfg.dtype))
    if x.shape[1] < 1:
        raise F.ShapeError("conv_frontend: empty feature sequence")
    extra = (-x.shape[1]) % cfg.downsample
    if extra:
        x = F.pad_axis(x, 0, extra, axis=1)
    for i in range(cfg.n_convs):
        x = F.conv1d(x, params[f"frontend.conv{i}.weight"], params[f"frontend.conv{i}.bias"],
                     stride=2, padding="same")
        x = F.relu(x)
    x = F.linear(x, params["frontend.proj.weight"], params["frontend.proj.bias"])
    x = x + sinusoidal_positions(x.shape[1], cfg.d_model, x.dtype)
    return F.dropout(x, cfg.dropout, rng, train)


def multi_head_attention(params, prefix: str, query: Tensor, memory: Tensor, heads: int,
                         mask: np.ndarray | None) -> tuple[Tensor, Tensor]:
    """Scaled dot-product attention. ``mask`` broadcasts to (B, H, Tq, Tk)."""
    B, Tq, d = query.shape
    Tk = memory.shape[1]
    dh = d // heads
    q = F.linear(query, params[f"{prefix}.q.weight"], params[f"{prefix}.q.bias"])
    k = F.linear(memory, params[f"{prefix}.k.weight"], params[f"{prefix}.k.bias"])
    v = F.linear(memory, params[f"{prefix}.v.weight"], params[f"{prefix}.v.bias"])
    q = F.transpose(F.reshape(q * (1.0 / np.sqrt(dh)), (B, Tq, heads, dh)), (0, 2, 1, 3))
    k = F.transpose(F.reshape(k, (B, Tk, heads, dh)), (0, 2, 3, 1))
    v = F.transpose(F.reshape(v, (B, Tk, heads, dh)), (0, 2, 1, 3))
    weights = F.softmax(F.matmul(q, k), axis=-1, mask=mask)
    ctx = F.transpose(F.matmul(weights, v), (0, 2, 1, 3))
    ctx = F.reshape(ctx, (B, Tq, d))
    out = F.linear(ctx, params[f"{prefix}.o.weight"], params[f"{prefix}.o.bias"])
    return out, weights


def feed_forward(params, prefix: str, x: Tensor, cfg: ModelConfig, train: bool, rng) -> Tensor:
    h = F.relu(F.linear(x, params[f"{prefix}.fc1.weight"], params[f"{prefix}.fc1.bias"]))
    h = F.dropout(h, cfg.dropout, rng, train)
    return F.linear(h, params[f"{prefix}.fc2.weight"], params[f"{prefix}.fc2.bias"])


def norm(params, prefix: str, x: Tensor) -> Tensor:
    return F.layer_norm(x, params[f"{prefix}.gamma"], params[f"{prefix}.beta"])


def encoder_forward(params, cfg: ModelConfig, states: Tensor, valid_lengths, train: bool = False,
                    rng=None, keep_attention: bool = False) -> EncoderOutput:
    """Pre-norm self-attention blocks; padded positions are never attended."""
    valid = np.atleast_1d(np.asarray(valid_lengths, dtype=np.int64))
    B, T = states.shape[0], states.shape[1]
    if valid.shape != (B,):
        raise F.ShapeError(f"encoder_forward: {valid.shape[0]} valid lengths for batch of {B}")
    if np.any(valid > T) or np.any(valid < 0):
        raise ValueError(f"encoder_forward: valid lengths {valid.tolist()} outside [0, {T}]")
    key_mask = (np.arange(T)[None, :] < valid[:, None])[:, None, None, :]
    if np.any(valid == 0):
        # a fully padded row still needs one key for softmax to be defined
        key_mask = key_mask.copy()
        key_mask[valid == 0, ..., 0] = True
    x = states
    attention = []
    for i in range(cfg.enc_layers):
        pre = f"encoder.layers.{i}"
        h = norm(params, f"{pre}.attn_norm", x)
        a, w = multi_head_attention(params, f"{pre}.attn", h, h, cfg.heads, key_mask)
        if keep_attention:
            attention.append(w.data)
        x = x + F.dropout(a, cfg.dropout, rng, train)
        f = feed_forward(params, f"{pre}.ffn", norm(params, f"{pre}.ffn_norm", x), cfg, train, rng)
        x = x + F.dropout(f, cfg.dropout, rng, train)
    x = norm(params, "encoder.final_norm", x)
    return EncoderOutput(x, valid, attention)


def encode(params, cfg: ModelConfig, feats, frame_lengths=None, train: bool = False, rng=None,
           keep_attention: bool = False) -> EncoderOutput:
    """Frontend plus encoder for a padded batch of feature sequences."""
    feats = np.asarray(feats.data if isinstance(feats, Tensor) else feats)
    if feats.ndim == 2:
        feats = feats[None]
    if frame_lengths is None:
        frame_lengths = np.full(feats.shape[0], feats.shape[1])
    states = conv_frontend(params, cfg, Tensor(feats.astype(cfg.dtype, copy=False)), train, rng)
    valid = encoded_length(frame_lengths, cfg.downsample)
    return encoder_forward(params, cfg, states, valid, train, rng, keep_attention)


def reconstruction_head(params, cfg: ModelConfig, enc: EncoderOutput, num_frames: int | None = None,
                        return_chunks: bool = False):
    """Linear map d_model -> N*n_mels per position, unfolded to frames.

    Row ``i`` of chunk ``c`` predicts input frame ``c*N + i``. The result is
    trimmed to ``num_frames`` (default: all T'*N frames).
    """
    B, Tp, _ = enc.states.shape
    chunks = F.linear(enc.states, params["recon.weight"], params["recon.bias"])
    frames = F.reshape(chunks, (B, Tp * cfg.downsample, cfg.n_mels))
    if num_frames is not None and num_frames != Tp * cfg.downsample:
        if num_frames > Tp * cfg.downsample:
            raise F.ShapeError(f"reconstruction_head: {num_frames} frames exceed {Tp}x{cfg.downsample}")
        frames = F.slice_(frames, (slice(None), slice(0, num_frames)))
    return (frames, chunks) if return_chunks else frames


def pooling_head(params, cfg: ModelConfig, enc: EncoderOutput) -> Tensor:
    """Mean over valid positions followed by one linear layer to class logits."""
    valid = enc.valid_lengths
    if np.any(valid < 1):
        raise ValueError("pooling_head: every sequence needs at least one valid position")
    weights = enc.key_mask().astype(enc.states.dtype) / valid[:, None].astype(enc.states.dtype)
    pooled = F.sum_(enc.states * weights[:, :, None], axis=1)
    return F.linear(pooled, params["pool.classifier.weight"], params["pool.classifier.bias"])
