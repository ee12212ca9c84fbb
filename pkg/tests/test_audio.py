import math
import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpc_acoustic.audio import (
    AudioFormatError,
    FrontendConfig,
    Waveform,
    log_mel,
    mel_band_edges,
    mel_filterbank,
    num_frames,
    read_wav,
    speed_perturb,
    write_wav,
)

CFG = FrontendConfig()


def write_pcm(path, samples, rate=16000, channels=1, width=2):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(rate)
        wf.writeframes(np.asarray(samples, dtype="<i2" if width == 2 else "u1").tobytes())


def test_read_silence(tmp_path):
    write_pcm(tmp_path / "s.wav", np.zeros(16000))
    w = read_wav(tmp_path / "s.wav")
    assert w.sample_rate == 16000 and len(w.samples) == 16000 and not w.samples.any()


def test_read_full_scale_square(tmp_path):
    write_pcm(tmp_path / "sq.wav", np.tile([32767, -32768], 50))
    w = read_wav(tmp_path / "sq.wav")
    assert set(w.samples.tolist()) == {32767 / 32768, -1.0}


def test_write_read_round_trip(tmp_path):
    x = np.round(np.random.default_rng(0).uniform(-0.9, 0.9, 800) * 32768) / 32768
    write_wav(tmp_path / "r.wav", Waveform(x, 8000))
    w = read_wav(tmp_path / "r.wav")
    assert w.sample_rate == 8000 and np.array_equal(w.samples, x)


def test_rejects_stereo(tmp_path):
    write_pcm(tmp_path / "st.wav", np.zeros(200), channels=2)
    with pytest.raises(AudioFormatError, match="mono"):
        read_wav(tmp_path / "st.wav")


def test_rejects_8bit(tmp_path):
    write_pcm(tmp_path / "b.wav", np.full(100, 128), width=1)
    with pytest.raises(AudioFormatError, match="16-bit"):
        read_wav(tmp_path / "b.wav")


def test_rejects_truncated(tmp_path):
    write_pcm(tmp_path / "t.wav", np.zeros(1000))
    data = (tmp_path / "t.wav").read_bytes()
    (tmp_path / "t.wav").write_bytes(data[:-501])
    with pytest.raises(AudioFormatError):
        read_wav(tmp_path / "t.wav")


def test_rejects_non_wave(tmp_path):
    (tmp_path / "x.wav").write_bytes(b"RIFF" + struct.pack("<I", 4) + b"JUNK")
    with pytest.raises(AudioFormatError):
        read_wav(tmp_path / "x.wav")


def test_sample_rate_mismatch_rejected(tmp_path):
    write_pcm(tmp_path / "e.wav", np.zeros(8000), rate=8000)
    with pytest.raises(AudioFormatError, match="8000"):
        log_mel(read_wav(tmp_path / "e.wav"), CFG)


def test_too_short_rejected():
    with pytest.raises(AudioFormatError, match="shorter than one window"):
        log_mel(Waveform(np.zeros(399)), CFG)


def test_one_second_gives_98_frames():
    assert CFG.win_length == 400 and CFG.hop_length == 160
    assert log_mel(Waveform(np.zeros(16000)), CFG).frames.shape == (98, 40)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(400, 6000))
def test_frame_count_formula(n):
    x = np.random.default_rng(n).uniform(-0.1, 0.1, n)
    assert log_mel(Waveform(x), CFG).num_frames == (n - 400) // 160 + 1 == num_frames(n, 400, 160)


def test_silence_hits_log_floor():
    f = log_mel(Waveform(np.zeros(4000)), CFG).frames
    assert np.all(f == math.log(1e-10))


def test_features_never_below_floor():
    x = np.random.default_rng(1).uniform(-1, 1, 5000)
    assert log_mel(Waveform(x), CFG).frames.min() >= math.log(1e-10)


def _triangle_response(freq, n_mels=40, upper=8000.0):
    # independent HTK mel break points evaluated at one continuous frequency
    mel = lambda h: 2595.0 * math.log10(1.0 + h / 700.0)  # noqa: E731
    inv = lambda m: 700.0 * (10.0 ** (m / 2595.0) - 1.0)  # noqa: E731
    e = [inv(i * mel(upper) / (n_mels + 1)) for i in range(n_mels + 2)]
    return [max(0.0, min((freq - e[i]) / (e[i + 1] - e[i]), (e[i + 2] - freq) / (e[i + 2] - e[i + 1])))
            for i in range(n_mels)]


def test_440hz_tone_peaks_in_one_band():
    t = np.arange(16000) / 16000
    f = log_mel(Waveform(0.5 * np.sin(2 * np.pi * 440 * t)), CFG).frames
    peaks = set(f.argmax(axis=1).tolist())
    expected = int(np.argmax(_triangle_response(440.0)))
    assert peaks == {expected} == {7}


def test_filterbank_rows_positive_and_bins_covered():
    fb = mel_filterbank(CFG)
    assert fb.shape == (40, 257)
    assert np.all(fb.sum(axis=1) > 0)
    # the DC bin sits exactly on the lowest break point, every other bin gets weight
    assert np.all(fb[:, 1:].sum(axis=0) > 0)
    edges = mel_band_edges(CFG)
    assert edges[0] == 0.0 and edges[-1] == pytest.approx(8000.0, rel=1e-12)


def test_log_mel_bit_deterministic():
    x = np.random.default_rng(2).uniform(-0.5, 0.5, 7000)
    a = log_mel(Waveform(x.copy()), CFG).frames
    b = log_mel(Waveform(x.copy()), CFG).frames
    assert np.array_equal(a, b)


def test_speed_perturb_lengths():
    w = Waveform(np.random.default_rng(3).uniform(-1, 1, 16000))
    assert np.array_equal(speed_perturb(w, 1.0).samples, w.samples)
    assert len(speed_perturb(w, 0.9).samples) == 17778
    assert len(speed_perturb(w, 1.1).samples) == 14545
    assert speed_perturb(w, 1.1).sample_rate == 16000


@pytest.mark.parametrize("factor", [0.0, -1.0])
def test_speed_perturb_rejects_non_positive(factor):
    with pytest.raises(ValueError):
        speed_perturb(Waveform(np.zeros(10)), factor)


@settings(max_examples=60, deadline=None)
@given(n=st.integers(100, 20000), factor=st.floats(0.5, 2.0))
def test_speed_perturb_inverse_length(n, factor):
    w = Waveform(np.zeros(n))
    back = speed_perturb(speed_perturb(w, factor), 1.0 / factor)
    assert abs(len(back.samples) - n) <= 1


def test_speed_perturb_preserves_slow_signal():
    # linear interpolation of a linear ramp is exact inside the clip; the
    # final output position lies past the last input sample and holds it
    w = Waveform(np.linspace(0, 1, 1001))
    out = speed_perturb(w, 0.5).samples
    assert len(out) == 2002 and out[-1] == 1.0
    np.testing.assert_allclose(out[:-1], np.arange(2001) * 0.5 / 1000, atol=1e-12)


def test_frontend_config_validation():
    with pytest.raises(ValueError):
        FrontendConfig(hop_ms=30)
    with pytest.raises(ValueError):
        FrontendConfig(n_mels=0)
    with pytest.raises(ValueError):
        FrontendConfig(fft_size=256)
