"""Waveform ingestion, log-mel features and speed perturbation.

Framing follows ``T = floor((num_samples - win) / hop) + 1`` with no centre
padding. Each frame is Hann-windowed, zero-padded to ``fft_size`` and turned
into a power spectrum, then pooled by HTK-style triangular mel filters.
"""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class AudioFormatError(ValueError):
    """Unsupported, malformed or mismatched audio input."""


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.sample_rate <= 0:
            raise AudioFormatError(f"sample rate must be positive, got {self.sample_rate}")
        if self.samples.ndim != 1:
            raise AudioFormatError(f"expected mono samples, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise AudioFormatError("waveform contains non-finite samples")

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate: int = 16000
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_mels: int = 40
    fft_size: int = 512
    fmin: float = 0.0
    fmax: float | None = None  # None means Nyquist
    log_floor: float = 1e-10
    normalize: bool = False

    def __post_init__(self):
        if self.hop_ms > self.window_ms:
            raise ValueError(f"hop_ms ({self.hop_ms}) must not exceed window_ms ({self.window_ms})")
        if self.n_mels < 1:
            raise ValueError(f"n_mels must be >= 1, got {self.n_mels}")
        if self.fft_size < self.win_length:
            raise ValueError(f"fft_size {self.fft_size} is shorter than the window ({self.win_length} samples)")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    @property
    def win_length(self) -> int:
        return int(round(self.sample_rate * self.window_ms / 1000.0))

    @property
    def hop_length(self) -> int:
        return int(round(self.sample_rate * self.hop_ms / 1000.0))

    @property
    def upper_hz(self) -> float:
        return self.sample_rate / 2.0 if self.fmax is None else float(self.fmax)


@dataclass
class FeatureSequence:
    frames: np.ndarray
    frame_hop_ms: float = 10.0
    source_id: str = ""

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


# -- WAV I/O -----------------------------------------------------------------

def read_wav(path: str | Path) -> Waveform:
    """Read a 16-bit PCM mono RIFF/WAVE file into [-1, 1) floats."""
    path = Path(path)
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            expected = wf.getnframes()
            raw = wf.readframes(expected)
    except (wave.Error, EOFError) as err:
        raise AudioFormatError(f"{path}: not a readable PCM WAVE file ({err})") from None
    if channels != 1:
        raise AudioFormatError(f"{path}: expected mono audio, found {channels} channels")
    if width != 2:
        raise AudioFormatError(f"{path}: expected 16-bit PCM, found {8 * width}-bit samples")
    got = len(raw) // 2
    if got != expected:
        raise AudioFormatError(f"{path}: truncated data chunk ({got} of {expected} samples)")
    pcm = np.frombuffer(raw, dtype="<i2")
    return Waveform(pcm.astype(np.float64) / 32768.0, rate)


def write_wav(path: str | Path, w: Waveform) -> None:
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(w.sample_rate))
        wf.writeframes(pcm.tobytes())


# -- features ------------------------------------------------------------------

def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def mel_band_edges(cfg: FrontendConfig) -> np.ndarray:
    """The n_mels + 2 break points (Hz): lower edge, centres, upper edge."""
    mels = np.linspace(hz_to_mel(cfg.fmin), hz_to_mel(cfg.upper_hz), cfg.n_mels + 2)
    return mel_to_hz(mels)


def mel_filterbank(cfg: FrontendConfig) -> np.ndarray:
    """Triangular filters with unit peak, shape (n_mels, fft_size // 2 + 1)."""
    edges = mel_band_edges(cfg)
    freqs = np.arange(cfg.fft_size // 2 + 1) * cfg.sample_rate / cfg.fft_size
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rising, falling))


def hann_window(length: int) -> np.ndarray:
    # periodic variant, the usual choice for spectral analysis
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(length) / length)


def num_frames(num_samples: int, win: int, hop: int) -> int:
    if num_samples < win:
        return 0
    return (num_samples - win) // hop + 1


def frame_signal(samples: np.ndarray, win: int, hop: int) -> np.ndarray:
    count = num_frames(len(samples), win, hop)
    idx = np.arange(count)[:, None] * hop + np.arange(win)[None, :]
    return samples[idx]


def log_mel(w: Waveform, cfg: FrontendConfig = FrontendConfig(), source_id: str = "") -> FeatureSequence:
    if w.sample_rate != cfg.sample_rate:
        raise AudioFormatError(
            f"sample rate {w.sample_rate} Hz does not match the configured {cfg.sample_rate} Hz")
    win, hop = cfg.win_length, cfg.hop_length
    if len(w.samples) < win:
        raise AudioFormatError(f"clip of {len(w.samples)} samples is shorter than one window ({win})")
    frames = frame_signal(w.samples, win, hop) * hann_window(win)
    spec = np.fft.rfft(frames, n=cfg.fft_size, axis=1)
    power = spec.real ** 2 + spec.imag ** 2
    mel = power @ mel_filterbank(cfg).T
    feats = np.log(np.maximum(mel, cfg.log_floor))
    if cfg.normalize:
        feats = (feats - feats.mean(axis=0)) / (feats.std(axis=0) + 1e-8)
    return FeatureSequence(feats, cfg.hop_ms, source_id)


def speed_perturb(w: Waveform, factor: float) -> Waveform:
    """Resample by linear interpolation so the clip plays ``factor`` times faster."""
    if not factor > 0:
        raise ValueError(f"speed factor must be positive, got {factor}")
    n = len(w.samples)
    m = int(round(n / factor))
    if factor == 1.0:
        return Waveform(w.samples.copy(), w.sample_rate)
    positions = np.arange(m) * factor
    out = np.interp(positions, np.arange(n), w.samples)
    return Waveform(out, w.sample_rate)
