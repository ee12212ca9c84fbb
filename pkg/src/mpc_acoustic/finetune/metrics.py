"""Evaluation metrics: UAR, macro-F1 and corpus BLEU."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np


def confusion_matrix(references: Sequence[int], hypotheses: Sequence[int], n_classes: int) -> np.ndarray:
    """Counts with rows = reference class, columns = hypothesis class."""
    if len(references) != len(hypotheses):
        raise ValueError(f"{len(references)} references vs {len(hypotheses)} hypotheses")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(references, dtype=np.int64), np.asarray(hypotheses, dtype=np.int64)), 1)
    return cm


def _check_cm(cm) -> np.ndarray:
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError(f"confusion matrix must be square, got shape {cm.shape}")
    if np.any(cm < 0):
        raise ValueError("confusion matrix has negative counts")
    return cm


def per_class_recall(cm) -> np.ndarray:
    cm = _check_cm(cm)
    support = cm.sum(axis=1)
    if np.any(support == 0):
        empty = np.flatnonzero(support == 0).tolist()
        raise ValueError(f"recall undefined: classes {empty} have no reference samples")
    return np.diag(cm) / support


def uar(cm) -> float:
    """Unweighted average of per-class recalls."""
    return float(np.mean(per_class_recall(cm)))


def per_class_f1(cm) -> np.ndarray:
    cm = _check_cm(cm)
    if cm.sum() == 0:
        raise ValueError("macro-F1 undefined for an empty confusion matrix")
    tp = np.diag(cm).astype(np.float64)
    predicted = cm.sum(axis=0)
    actual = cm.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros_like(tp), where=actual > 0)
    denom = precision + recall
    return np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)


def macro_f1(cm) -> float:
    """Mean per-class F1; a class with P + R = 0 scores 0."""
    return float(np.mean(per_class_f1(cm)))


# -- BLEU ----------------------------------------------------------------------

_TOKEN = re.compile(r"\w+|[^\w\s]")


def bleu_tokenize(text: str) -> list[str]:
    """Whitespace split with punctuation as separate tokens; case is kept."""
    return _TOKEN.findall(text)


@dataclass
class BleuStats:
    matches: list[int] = field(default_factory=lambda: [0] * 4)
    totals: list[int] = field(default_factory=lambda: [0] * 4)
    hyp_len: int = 0
    ref_len: int = 0

    def __add__(self, other: "BleuStats") -> "BleuStats":
        return BleuStats([a + b for a, b in zip(self.matches, other.matches)],
                         [a + b for a, b in zip(self.totals, other.totals)],
                         self.hyp_len + other.hyp_len, self.ref_len + other.ref_len)

    def score(self) -> float:
        if self.hyp_len == 0 or any(m == 0 for m in self.matches):
            return 0.0
        log_prec = sum(math.log(m / t) for m, t in zip(self.matches, self.totals)) / 4.0
        bp = math.exp(min(0.0, 1.0 - self.ref_len / self.hyp_len))
        return 100.0 * bp * math.exp(log_prec)


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def sentence_stats(hyp: Sequence[str], ref: Sequence[str]) -> BleuStats:
    stats = BleuStats(hyp_len=len(hyp), ref_len=len(ref))
    for n in range(1, 5):
        h, r = _ngrams(hyp, n), _ngrams(ref, n)
        stats.matches[n - 1] = sum(min(c, r[g]) for g, c in h.items())
        stats.totals[n - 1] = max(len(hyp) - n + 1, 0)
    return stats


def bleu(hypotheses: Sequence, references: Sequence) -> float:
    """Corpus BLEU-4 in [0, 100], one reference per hypothesis, no smoothing.

    Items may be strings (tokenised with :func:`bleu_tokenize`) or token
    sequences.
    """
    if len(hypotheses) != len(references):
        raise ValueError(f"{len(hypotheses)} hypotheses vs {len(references)} references")
    if not hypotheses:
        raise ValueError("bleu: empty corpus")
    total = BleuStats()
    for h, r in zip(hypotheses, references):
        h = bleu_tokenize(h) if isinstance(h, str) else list(h)
        r = bleu_tokenize(r) if isinstance(r, str) else list(r)
        total = total + sentence_stats(h, r)
    return total.score()


# -- reports -------------------------------------------------------------------

@dataclass
class EvalReport:
    metric: str
    value: float
    dataset: str = ""
    checkpoint: str = ""
    per_class: list[float] = field(default_factory=list)

    def to_line(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_line(cls, line: str) -> "EvalReport":
        return cls(**json.loads(line))
