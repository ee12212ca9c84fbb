"""Best-k checkpoint selection and parameter averaging."""

from __future__ import annotations

import warnings
from typing import Mapping, Sequence

import numpy as np


def select_best_k(entries: Sequence[tuple], k: int = 5, direction: str = "max") -> list:
    """Ids of the ``k`` best entries.

    ``entries`` are ``(checkpoint_id, score)`` or ``(checkpoint_id, step, score)``
    tuples; without a step the list position stands in for it. Equal scores
    keep the earlier step.
    """
    if direction not in ("min", "max"):
        raise ValueError(f"direction must be 'min' or 'max', got {direction!r}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    rows = []
    for pos, e in enumerate(entries):
        if len(e) == 2:
            rows.append((e[0], pos, float(e[1])))
        else:
            rows.append((e[0], e[1], float(e[2])))
    if len(rows) < k:
        warnings.warn(f"only {len(rows)} checkpoints available, averaging all of them", stacklevel=2)
    sign = 1.0 if direction == "min" else -1.0
    rows.sort(key=lambda r: (sign * r[2], r[1]))
    return [r[0] for r in rows[:k]]


def average_checkpoints(checkpoints: Sequence[Mapping[str, np.ndarray]]) -> dict[str, np.ndarray]:
    """Elementwise mean per parameter name, accumulated in float64."""
    if not checkpoints:
        raise ValueError("average_checkpoints: no checkpoints given")
    first = checkpoints[0]
    names = list(first)
    for i, ck in enumerate(checkpoints[1:], start=1):
        if set(ck) != set(names):
            missing = sorted(set(names) ^ set(ck))
            raise ValueError(f"checkpoint {i} has different parameter names: {missing}")
        for n in names:
            if np.shape(ck[n]) != np.shape(first[n]):
                raise ValueError(f"checkpoint {i}: {n} has shape {np.shape(ck[n])}, expected {np.shape(first[n])}")
    out = {}
    for n in names:
        acc = np.zeros(np.shape(first[n]), dtype=np.float64)
        for ck in checkpoints:
            acc += np.asarray(ck[n], dtype=np.float64)
        out[n] = (acc / len(checkpoints)).astype(np.asarray(first[n]).dtype)
    return out
