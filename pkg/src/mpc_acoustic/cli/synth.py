"""Deterministic synthetic corpora standing in for the real datasets.

* ``pretrain``: unlabeled clips built from piecewise-stationary tone mixtures
  separated by short silences.
* ``tag``: one frequency band per class, filled with random tones over a
  faint noise floor, so mean band energies differ by construction.
* ``seq2seq``: each transcript symbol is a fixed-pitch tone burst followed
  by a short gap; the target text is the symbol sequence.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..audio import Waveform, write_wav
from .manifest import ManifestRecord, write_manifest

SAMPLE_RATE = 16000
# class bands (Hz) for the tagging corpus
TAG_BANDS = ((200.0, 400.0), (600.0, 1000.0), (1400.0, 2200.0), (3000.0, 4800.0),
             (5200.0, 7000.0), (100.0, 180.0), (2400.0, 2900.0), (1050.0, 1350.0))
SYMBOLS = "abcdefghijkl"
SYMBOL_SECONDS = 0.12
GAP_SECONDS = 0.04


def _tone(freq: float, n: int, rng, sr: int = SAMPLE_RATE) -> np.ndarray:
    phase = rng.uniform(0, 2 * np.pi)
    return np.sin(2 * np.pi * freq * np.arange(n) / sr + phase)


def _ramp(x: np.ndarray, sr: int = SAMPLE_RATE, ms: float = 5.0) -> np.ndarray:
    k = min(int(sr * ms / 1000), len(x) // 2)
    if k:
        env = np.ones(len(x))
        env[:k] = np.linspace(0, 1, k)
        env[-k:] = np.linspace(1, 0, k)
        x = x * env
    return x


def pretrain_clip(rng: np.random.Generator, seconds: float) -> np.ndarray:
    n = int(seconds * SAMPLE_RATE)
    out = np.zeros(n)
    pos = 0
    while pos < n:
        seg = min(int(rng.uniform(0.25, 0.6) * SAMPLE_RATE), n - pos)
        mix = np.zeros(seg)
        for _ in range(int(rng.integers(1, 4))):
            mix += rng.uniform(0.05, 0.25) * _tone(rng.uniform(150, 6000), seg, rng)
        out[pos:pos + seg] = _ramp(mix)
        pos += seg + int(rng.uniform(0.02, 0.08) * SAMPLE_RATE)
    out += 0.002 * rng.standard_normal(n)
    return np.clip(out, -0.99, 0.99)


def tag_clip(rng: np.random.Generator, label: int, seconds: float = 1.0) -> np.ndarray:
    lo, hi = TAG_BANDS[label]
    n = int(seconds * SAMPLE_RATE)
    out = np.zeros(n)
    for _ in range(int(rng.integers(2, 5))):
        out += rng.uniform(0.05, 0.2) * _tone(rng.uniform(lo, hi), n, rng)
    out += rng.uniform(0.002, 0.01) * rng.standard_normal(n)
    return np.clip(out, -0.99, 0.99)


def symbol_frequency(index: int) -> float:
    return 300.0 * 1.25 ** index


def seq2seq_clip(rng: np.random.Generator, symbols: str) -> np.ndarray:
    tone_n = int(SYMBOL_SECONDS * SAMPLE_RATE)
    gap_n = int(GAP_SECONDS * SAMPLE_RATE)
    parts = [np.zeros(gap_n)]
    for s in symbols:
        amp = rng.uniform(0.15, 0.3)
        parts.append(_ramp(amp * _tone(symbol_frequency(SYMBOLS.index(s)), tone_n, rng)))
        parts.append(np.zeros(gap_n))
    out = np.concatenate(parts)
    out += 0.002 * rng.standard_normal(len(out))
    return np.clip(out, -0.99, 0.99)


def random_transcript(rng: np.random.Generator, vocab: str = SYMBOLS, min_len: int = 3,
                      max_len: int = 8) -> str:
    length = int(rng.integers(min_len, max_len + 1))
    return "".join(vocab[i] for i in rng.integers(0, len(vocab), size=length))


def synth_corpus(kind: str, size: int, seed: int, outdir: str | Path, valid_size: int | None = None,
                 n_classes: int = 4, max_seconds: float = 3.0) -> dict[str, Path]:
    """Write WAVs plus ``train.tsv`` and ``valid.tsv`` manifests under ``outdir``."""
    if kind not in ("pretrain", "tag", "seq2seq"):
        raise ValueError(f"unknown corpus kind {kind!r}")
    if size < 1:
        raise ValueError(f"corpus size must be >= 1, got {size}")
    if kind == "tag" and not 1 <= n_classes <= len(TAG_BANDS):
        raise ValueError(f"n_classes must be in [1, {len(TAG_BANDS)}], got {n_classes}")
    outdir = Path(outdir)
    try:
        (outdir / "wav").mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise OSError(f"{outdir}: cannot create output directory ({err.strerror})") from None
    if valid_size is None:
        valid_size = max(n_classes if kind == "tag" else 1, size // 4)
    rng = np.random.default_rng(seed)
    manifests = {}
    for split, count in (("train", size), ("valid", valid_size)):
        records = []
        for i in range(count):
            utt = f"{kind}-{split}-{i:05d}"
            label = text = None
            if kind == "pretrain":
                samples = pretrain_clip(rng, rng.uniform(1.5, max_seconds))
            elif kind == "tag":
                cls = i % n_classes
                samples = tag_clip(rng, cls)
                label = f"class{cls}"
            else:
                symbols = random_transcript(rng)
                samples = seq2seq_clip(rng, symbols)
                text = " ".join(symbols)
            wav_path = outdir / "wav" / f"{utt}.wav"
            write_wav(wav_path, Waveform(samples, SAMPLE_RATE))
            records.append(ManifestRecord(utt, wav_path, label, text))
        path = outdir / f"{split}.tsv"
        write_manifest(path, records)
        manifests[split] = path
    return manifests
