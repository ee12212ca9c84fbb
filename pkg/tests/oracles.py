"""Independent reference implementations used as test oracles.

These are written from the metric and formula definitions with plain Python
loops and high-precision arithmetic, sharing no code with the package.
"""

from __future__ import annotations

import itertools
import math
import re

import mpmath


def lr_oracle(k, d_model, warmup, n, exponent=0.5, dps=50):
    with mpmath.workdps(dps):
        n = mpmath.mpf(n)
        return k * mpmath.mpf(d_model) ** mpmath.mpf(exponent) * min(n ** -0.5, n * mpmath.mpf(warmup) ** -1.5)


def uar_oracle(cm):
    recalls = []
    for i, row in enumerate(cm):
        total = sum(int(x) for x in row)
        recalls.append(int(row[i]) / total)
    return sum(recalls) / len(recalls)


def macro_f1_oracle(cm):
    n = len(cm)
    scores = []
    for c in range(n):
        tp = int(cm[c][c])
        fp = sum(int(cm[r][c]) for r in range(n) if r != c)
        fn = sum(int(cm[c][h]) for h in range(n) if h != c)
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        scores.append(2 * p * r / (p + r) if p + r else 0.0)
    return sum(scores) / n


def _tok(text):
    if isinstance(text, str):
        return re.findall(r"\w+|[^\w\s]", text)
    return list(text)


def bleu_oracle(hyps, refs, max_n=4):
    """Corpus BLEU from explicit n-gram enumeration, evaluated with mpmath."""
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for h, r in zip(hyps, refs):
        h, r = _tok(h), _tok(r)
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_n + 1):
            h_grams = [tuple(h[i:i + n]) for i in range(len(h) - n + 1)]
            r_grams = [tuple(r[i:i + n]) for i in range(len(r) - n + 1)]
            for g in set(h_grams):
                matches[n - 1] += min(h_grams.count(g), r_grams.count(g))
            totals[n - 1] += len(h_grams)
    if hyp_len == 0 or any(m == 0 for m in matches):
        return 0.0
    with mpmath.workdps(40):
        log_p = sum(mpmath.log(mpmath.mpf(m) / t) for m, t in zip(matches, totals)) / max_n
        bp = min(mpmath.mpf(0), 1 - mpmath.mpf(ref_len) / hyp_len)
        return float(100 * mpmath.exp(log_p + bp))


def mean_oracle(values):
    """Correctly rounded mean of a list of float arrays, elementwise."""
    import numpy as np

    stacked = np.stack([np.asarray(v, dtype=np.float64) for v in values])
    flat = stacked.reshape(len(values), -1)
    out = [math.fsum(flat[:, j]) / len(values) for j in range(flat.shape[1])]
    return np.array(out).reshape(stacked.shape[1:])


def softmax_ce_oracle(logits, target, epsilon):
    """-sum q log p with q = (1-eps) onehot + eps/V, via mpmath."""
    with mpmath.workdps(40):
        z = [mpmath.mpf(float(x)) for x in logits]
        lse = mpmath.log(sum(mpmath.exp(x) for x in z))
        v = len(z)
        total = mpmath.mpf(0)
        for i, x in enumerate(z):
            q = (1 - mpmath.mpf(epsilon)) * (1 if i == target else 0) + mpmath.mpf(epsilon) / v
            total -= q * (x - lse)
        return float(total)


def infonce_oracle(scores):
    """Mean over rows of -log softmax(row)[0], with mpmath."""
    with mpmath.workdps(40):
        total = mpmath.mpf(0)
        for row in scores:
            z = [mpmath.mpf(float(x)) for x in row]
            total += mpmath.log(sum(mpmath.exp(x) for x in z)) - z[0]
        return float(total / len(scores))


def enumerate_best(log_prob_fn, vocab, max_len, bos, eos):
    """Best length-normalised EOS-terminated sequence by exhaustive search.

    Sequences are ``[bos] + body + [eos]`` with ``len(body) + 1 <= max_len``.
    Returns (tokens_after_bos, score).
    """
    best = None
    tokens = [t for t in range(vocab) if t != eos]
    for length in range(0, max_len):
        for body in itertools.product(tokens, repeat=length):
            seq = [bos, *body]
            total = 0.0
            for i in range(1, len(seq)):
                total += log_prob_fn(seq[:i])[seq[i]]
            total += log_prob_fn(seq)[eos]
            score = total / (length + 1)
            if best is None or score > best[1]:
                best = ([*body, eos], score)
    return best
