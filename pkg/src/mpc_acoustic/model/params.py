"""Named parameter maps and their initialisation."""

from __future__ import annotations

from typing import Dict

import numpy as np

from ..numerics import Tensor
from .config import ModelConfig

Params = Dict[str, Tensor]

ENCODER_PREFIXES = ("frontend.", "encoder.")


def _xavier(rng, fan_in, fan_out, shape, dtype):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def _linear(p: dict, name: str, rng, d_in: int, d_out: int, dtype) -> None:
    p[f"{name}.weight"] = _xavier(rng, d_in, d_out, (d_in, d_out), dtype)
    p[f"{name}.bias"] = np.zeros(d_out, dtype=dtype)


def _norm(p: dict, name: str, d: int, dtype) -> None:
    p[f"{name}.gamma"] = np.ones(d, dtype=dtype)
    p[f"{name}.beta"] = np.zeros(d, dtype=dtype)


def _attention(p: dict, name: str, rng, d: int, dtype) -> None:
    for proj in ("q", "k", "v", "o"):
        _linear(p, f"{name}.{proj}", rng, d, d, dtype)


def _ffn(p: dict, name: str, rng, d: int, hidden: int, dtype) -> None:
    _linear(p, f"{name}.fc1", rng, d, hidden, dtype)
    _linear(p, f"{name}.fc2", rng, hidden, d, dtype)


def init_encoder(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    dt = np.dtype(cfg.dtype)
    d = cfg.d_model
    p: dict[str, np.ndarray] = {}
    c_in = cfg.n_mels
    for i in range(cfg.n_convs):
        p[f"frontend.conv{i}.weight"] = _xavier(rng, 3 * c_in, 3 * d, (3, c_in, d), dt)
        p[f"frontend.conv{i}.bias"] = np.zeros(d, dtype=dt)
        c_in = d
    _linear(p, "frontend.proj", rng, c_in, d, dt)
    for i in range(cfg.enc_layers):
        pre = f"encoder.layers.{i}"
        _norm(p, f"{pre}.attn_norm", d, dt)
        _attention(p, f"{pre}.attn", rng, d, dt)
        _norm(p, f"{pre}.ffn_norm", d, dt)
        _ffn(p, f"{pre}.ffn", rng, d, cfg.ffn, dt)
    _norm(p, "encoder.final_norm", d, dt)
    return p


def init_head(cfg: ModelConfig, rng: np.random.Generator, kind: str | None = None) -> dict[str, np.ndarray]:
    dt = np.dtype(cfg.dtype)
    d = cfg.d_model
    kind = kind or cfg.head_kind
    p: dict[str, np.ndarray] = {}
    if kind == "pretrain":
        _linear(p, "recon", rng, d, cfg.downsample * cfg.n_mels, dt)
    elif kind == "tag":
        if not cfg.n_classes:
            raise ValueError("tagging head needs n_classes")
        _linear(p, "pool.classifier", rng, d, cfg.n_classes, dt)
    elif kind == "seq2seq":
        if not cfg.vocab_size:
            raise ValueError("seq2seq head needs vocab_size")
        p["decoder.embed"] = (rng.standard_normal((cfg.vocab_size, d)) / np.sqrt(d)).astype(dt)
        for i in range(cfg.dec_layers):
            pre = f"decoder.layers.{i}"
            _norm(p, f"{pre}.self_norm", d, dt)
            _attention(p, f"{pre}.self_attn", rng, d, dt)
            _norm(p, f"{pre}.cross_norm", d, dt)
            _attention(p, f"{pre}.cross_attn", rng, d, dt)
            _norm(p, f"{pre}.ffn_norm", d, dt)
            _ffn(p, f"{pre}.ffn", rng, d, cfg.ffn, dt)
        _norm(p, "decoder.final_norm", d, dt)
        _linear(p, "decoder.out", rng, d, cfg.vocab_size, dt)
    else:
        raise ValueError(f"unknown head kind {kind!r}")
    return p


def init_params(cfg: ModelConfig, seed: int | np.random.Generator = 0, kind: str | None = None) -> Params:
    """Fresh encoder plus the task head implied by ``cfg`` (or ``kind``)."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    arrays = init_encoder(cfg, rng)
    arrays.update(init_head(cfg, rng, kind))
    return {name: Tensor(a, requires_grad=True, name=name) for name, a in arrays.items()}


def is_encoder_param(name: str) -> bool:
    return name.startswith(ENCODER_PREFIXES)


def shape_diff(expected: Params | dict, found: Params | dict) -> list[str]:
    """Human-readable per-parameter differences between two maps."""
    lines = []
    for name in sorted(set(expected) | set(found)):
        if name not in found:
            lines.append(f"missing {name} {tuple(expected[name].shape)}")
        elif name not in expected:
            lines.append(f"unexpected {name} {tuple(found[name].shape)}")
        elif tuple(expected[name].shape) != tuple(found[name].shape):
            lines.append(f"shape {name}: expected {tuple(expected[name].shape)}, found {tuple(found[name].shape)}")
    return lines


def load_encoder(params: Params, source: dict[str, np.ndarray]) -> Params:
    """Copy frontend+encoder arrays from ``source`` into ``params`` in place."""
    wanted = {n: p for n, p in params.items() if is_encoder_param(n)}
    available = {n: a for n, a in source.items() if is_encoder_param(n)}
    diff = shape_diff(wanted, available)
    if diff:
        raise ValueError("encoder weights are incompatible:\n  " + "\n  ".join(diff))
    for name, p in wanted.items():
        p.data = np.array(available[name], dtype=p.dtype, copy=True)
    return params
