"""Adam with bias correction and the warmup learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .tensor import Tensor


@dataclass(frozen=True)
class ScheduleConfig:
    """Constants of the warmup schedule.

    ``d_model_exponent`` defaults to +0.5, the sign printed in the source
    formula; the conventional Transformer schedule uses -0.5.
    """

    k: float = 0.5
    d_model: int = 256
    warmup_n: int = 8000
    d_model_exponent: float = 0.5

    def __post_init__(self):
        if self.warmup_n < 1:
            raise ValueError(f"warmup_n must be >= 1, got {self.warmup_n}")
        if self.k <= 0:
            raise ValueError(f"k must be > 0, got {self.k}")
        if self.d_model < 1:
            raise ValueError(f"d_model must be >= 1, got {self.d_model}")


# per-task constants used in the experiments
PRETRAIN_SCHEDULE = ScheduleConfig(k=0.5, warmup_n=8000)
SER_SCHEDULE = ScheduleConfig(k=0.5, warmup_n=8000)
SED_SCHEDULE = ScheduleConfig(k=0.3, warmup_n=8000)
ST_SCHEDULE = ScheduleConfig(k=2.5, warmup_n=25000)


def lr_at_step(cfg: ScheduleConfig, n: int) -> float:
    """k * d_model**e * min(n**-0.5, n * warmup_n**-1.5), for n >= 1."""
    if n < 1:
        raise ValueError(f"step number must be >= 1, got {n}")
    scale = cfg.k * float(cfg.d_model) ** cfg.d_model_exponent
    return scale * min(float(n) ** -0.5, float(n) * float(cfg.warmup_n) ** -1.5)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray] | None,
              state: AdamState, lr: float) -> AdamState:
    """One bias-corrected Adam update of every tensor in ``params``.

    Gradients default to each parameter's ``.grad``. Moments are kept in
    float64; updated values are cast back to the parameter dtype.
    """
    if lr <= 0:
        raise ValueError(f"learning rate must be > 0, got {lr}")
    if grads is None:
        grads = {name: p.grad for name, p in params.items()}
    for name in params:
        if grads.get(name) is None:
            raise KeyError(f"adam_step: missing gradient for parameter {name!r}")
    state.t += 1
    t = state.t
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = np.asarray(grads[name], dtype=np.float64)
        if g.shape != p.shape:
            raise ValueError(f"adam_step: gradient shape {g.shape} != parameter {name!r} {p.shape}")
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros(p.shape, dtype=np.float64)
            state.v[name] = np.zeros(p.shape, dtype=np.float64)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
        p.data = (p.data.astype(np.float64) - update).astype(p.dtype)
    return state
