"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor, backward


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    worst: str
    checked: int
    tol: float

    def __str__(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        return f"{verdict} max_rel_err={self.max_rel_error:.3e} (tol {self.tol:g}, {self.checked} coords, worst {self.worst})"


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    """``|a - n| / max(|a|, |n|, floor)``.

    The floor turns the check absolute for near-zero gradients: central
    differences at h=1e-5 carry about 1e-11 of rounding noise, so structural
    zeros (such as a key bias under softmax) would otherwise fail.
    """
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def grad_check(f: Callable[..., Tensor], point: Tensor | Sequence[Tensor], tol: float = 1e-4,
               h: float = 1e-5, max_coords: int | None = None, seed: int = 0,
               floor: float = 1e-6) -> GradCheckReport:
    """Compare analytic gradients of scalar ``f`` with central differences.

    ``point`` is one tensor or a sequence of tensors passed positionally to
    ``f``. With ``max_coords`` set, only a random subset of coordinates per
    tensor is probed; the analytic gradient still comes from one backward.
    """
    tensors = [point] if isinstance(point, Tensor) else list(point)
    for t in tensors:
        t.data = np.ascontiguousarray(t.data)
        t.requires_grad = True
        t.grad = None
    with Tape() as tape:
        out = f(*tensors)
    value = float(np.asarray(out.data).reshape(-1)[0]) if out.size == 1 else None
    if value is None:
        raise ValueError(f"grad_check: f must be scalar-valued, got shape {out.shape}")
    if not np.isfinite(value):
        raise ValueError(f"grad_check: f(point) is not finite ({value})")
    backward(tape, out)

    rng = np.random.default_rng(seed)
    worst_err, worst, checked = 0.0, "-", 0
    for ti, t in enumerate(tensors):
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        label = t.name or f"arg{ti}"
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            plus = float(f(*tensors).data.reshape(-1)[0])
            flat[c] = orig - h
            minus = float(f(*tensors).data.reshape(-1)[0])
            flat[c] = orig
            numeric = (plus - minus) / (2.0 * h)
            err = relative_error(float(analytic.reshape(-1)[c]), numeric, floor)
            checked += 1
            if err > worst_err or worst == "-":
                worst_err, worst = err, f"{label}[{int(c)}]"
    return GradCheckReport(worst_err <= tol, worst_err, worst, checked, tol)
