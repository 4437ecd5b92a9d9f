"""WAV I/O, resampling, convolution, rms."""

import math
import struct
from fractions import Fraction

import numpy as np
import pytest
import scipy.io.wavfile
from hypothesis import given, settings
from hypothesis import strategies as st

from sidonforge.audio import (
    SUPPORTED_RATES,
    Waveform,
    fft_convolve,
    read_wav,
    resample,
    rms,
    wav_info,
    write_wav,
)
from sidonforge.errors import (
    IoError,
    MalformedWav,
    RateMismatch,
    UnsupportedEncoding,
    UnsupportedRate,
)
from sidonforge.rir import Rir


def tone(freq, fs, dur, amp=1.0):
    t = np.arange(int(fs * dur)) / fs
    return Waveform(amp * np.sin(2 * np.pi * freq * t), fs)


def spectrum_peak_amp(w, freq):
    """Amplitude of the bin nearest `freq`, interior slice to dodge edge
    transients."""
    a = len(w) // 10
    sl = w.samples[a : len(w) - a]
    spec = np.abs(np.fft.rfft(sl)) * 2.0 / len(sl)
    k = int(round(freq * len(sl) / w.sample_rate_hz))
    return float(spec[k])


class TestReadWrite:
    def test_single_sample_16bit_scaling(self, tmp_path):
        path = tmp_path / "one.wav"
        raw = np.array([16384], dtype=np.int16)
        scipy.io.wavfile.write(path, 48000, raw)
        w = read_wav(path)
        assert w.sample_rate_hz == 48000
        assert w.samples.tolist() == [0.5]

    def test_stereo_averages_channels(self, tmp_path):
        path = tmp_path / "st.wav"
        left = np.full(64, 32767, dtype=np.int16)
        right = np.zeros(64, dtype=np.int16)
        scipy.io.wavfile.write(path, 16000, np.stack([left, right], axis=1))
        w = read_wav(path)
        assert np.allclose(w.samples, 32767 / 32768 / 2)

    def test_short_data_chunk_is_malformed(self, tmp_path):
        path = tmp_path / "trunc.wav"
        write_wav(Waveform(np.zeros(1000), 16000), path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 500])
        with pytest.raises(MalformedWav):
            read_wav(path)

    def test_wav_info_spots_truncation(self, tmp_path):
        path = tmp_path / "trunc2.wav"
        write_wav(Waveform(np.zeros(1000), 16000), path)
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) - 500])
        with pytest.raises(MalformedWav):
            wav_info(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoError):
            read_wav(tmp_path / "absent.wav")

    def test_mulaw_rejected(self, tmp_path):
        path = tmp_path / "mu.wav"
        frames = b"\x00" * 32
        fmt = struct.pack("<HHIIHH", 7, 1, 8000, 8000, 1, 8)
        body = (
            b"WAVE"
            + b"fmt " + struct.pack("<I", len(fmt)) + fmt
            + b"data" + struct.pack("<I", len(frames)) + frames
        )
        path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
        with pytest.raises(UnsupportedEncoding):
            read_wav(path)

    def test_float_roundtrip_exact(self, tmp_path):
        path = tmp_path / "f.wav"
        w = Waveform(np.array([0.5]), 48000)
        write_wav(w, path, bit_depth="32f")
        back = read_wav(path)
        assert back.samples.tolist() == [np.float32(0.5)]

    def test_16bit_roundtrip_within_lsb(self, tmp_path):
        path = tmp_path / "q.wav"
        w = Waveform(np.array([0.5]), 48000)
        write_wav(w, path, bit_depth="16")
        back = read_wav(path)
        assert abs(back.samples[0] - 0.5) <= 2.0 ** -15

    def test_clamp_above_fullscale(self, tmp_path):
        path = tmp_path / "hot.wav"
        write_wav(Waveform(np.array([1.5]), 48000), path, bit_depth="16")
        back = read_wav(path)
        assert back.samples[0] == pytest.approx(32767 / 32768, abs=1e-9)

    def test_24bit_roundtrip_within_lsb(self, tmp_path):
        rng = np.random.default_rng(0)
        w = Waveform(rng.uniform(-1, 1, 777), 44100)
        path = tmp_path / "d24.wav"
        write_wav(w, path, bit_depth="24")
        back = read_wav(path)
        assert back.sample_rate_hz == 44100
        assert np.abs(back.samples - w.samples).max() <= 2.0 ** -23

    def test_odd_sized_24bit_file_pads(self, tmp_path):
        path = tmp_path / "odd.wav"
        write_wav(Waveform(np.array([0.25]), 16000), path, bit_depth="24")
        back = read_wav(path)
        assert abs(back.samples[0] - 0.25) <= 2.0 ** -23
        assert path.stat().st_size % 2 == 0

    def test_scipy_reads_our_16bit(self, tmp_path):
        rng = np.random.default_rng(1)
        w = Waveform(rng.uniform(-0.9, 0.9, 500), 16000)
        path = tmp_path / "x.wav"
        write_wav(w, path, bit_depth="16")
        fs, data = scipy.io.wavfile.read(path)
        assert fs == 16000
        assert np.abs(data / 32768.0 - w.samples).max() <= 2.0 ** -15

    def test_wav_info_matches_read(self, tmp_path):
        w = Waveform(np.zeros(1234), 22050)
        path = tmp_path / "i.wav"
        write_wav(w, path)
        info = wav_info(path)
        assert (info.frames, info.sample_rate_hz) == (1234, 22050)

    @settings(max_examples=40, deadline=None)
    @given(n=st.integers(1, 400), seed=st.integers(0, 2 ** 32 - 1))
    def test_32f_roundtrip_bit_exact(self, tmp_path_factory, n, seed):
        rng = np.random.default_rng(seed)
        w = Waveform(rng.uniform(-1, 1, n).astype(np.float32).astype(np.float64),
                     16000)
        path = tmp_path_factory.mktemp("rt") / "s.wav"
        write_wav(w, path, bit_depth="32f")
        assert np.array_equal(read_wav(path).samples, w.samples)


class TestResample:
    def test_identity_is_bit_exact(self):
        rng = np.random.default_rng(3)
        w = Waveform(rng.standard_normal(1000), 16000)
        out = resample(w, 16000)
        assert np.array_equal(out.samples, w.samples)

    def test_tone_preserved_within_tenth_db(self):
        w = tone(1000.0, 48000, 1.0)
        out = resample(w, 16000)
        err_db = 20 * math.log10(spectrum_peak_amp(out, 1000.0))
        assert abs(err_db) <= 0.1

    def test_tone_above_target_nyquist_removed(self):
        w = tone(10_000.0, 48000, 1.0)
        out = resample(w, 16000)
        a = len(out) // 10
        peak = np.abs(np.fft.rfft(out.samples[a:-a])).max() * 2 / (len(out) - 2 * a)
        assert 20 * math.log10(max(peak, 1e-30)) <= -60.0

    def test_unsupported_rate(self):
        with pytest.raises(UnsupportedRate):
            resample(Waveform(np.zeros(10), 16000), 11025)

    @settings(max_examples=60, deadline=None)
    @given(
        st.integers(10, 99_999),
        st.sampled_from(SUPPORTED_RATES),
        st.sampled_from(SUPPORTED_RATES),
    )
    def test_length_is_rounded_ratio(self, n, source, target):
        w = Waveform(np.zeros(n), source)
        out = resample(w, target)
        want = math.floor(Fraction(n * target, source) + Fraction(1, 2))
        assert len(out) == want

    def test_cascade_preserves_low_band_energy(self):
        rng = np.random.default_rng(6)
        w = Waveform(0.1 * rng.standard_normal(48000), 48000)
        for inter in SUPPORTED_RATES:
            back = resample(resample(w, inter), 48000)
            lim = 0.45 * min(inter, 48000)
            freqs = np.fft.rfftfreq(len(w), 1 / 48000)
            def band(x):
                return float((np.abs(np.fft.rfft(x.samples)) ** 2)[freqs <= lim].sum())
            delta = 10 * math.log10(band(back) / band(w))
            assert abs(delta) <= 0.2, f"via {inter}: {delta} dB"


class TestConvolve:
    def test_unit_impulse_kernel(self):
        rng = np.random.default_rng(4)
        w = Waveform(rng.standard_normal(300), 16000)
        out = fft_convolve(w, Rir(np.array([1.0]), 16000))
        assert len(out) == len(w)
        assert np.abs(out.samples - w.samples).max() <= 1e-6

    def test_delta_response(self):
        w = Waveform(np.array([1.0, 0.0, 0.0, 0.0]), 16000)
        out = fft_convolve(w, Rir(np.array([0.5, 0.25]), 16000))
        assert np.allclose(out.samples, [0.5, 0.25, 0.0, 0.0], atol=1e-12)

    def test_matches_handwritten_direct_convolution(self):
        rng = np.random.default_rng(5)
        sig = rng.standard_normal(64)
        ker = rng.standard_normal(9)
        want = np.zeros(64)
        for i in range(64):
            for j in range(9):
                if i - j >= 0:
                    want[i] += sig[i - j] * ker[j]
        got = fft_convolve(Waveform(sig, 8000), Rir(ker, 8000))
        assert np.abs(got.samples - want).max() <= 1e-6

    def test_rate_mismatch(self):
        with pytest.raises(RateMismatch):
            fft_convolve(Waveform(np.zeros(8), 16000), Rir(np.ones(2), 8000))

    def test_linearity(self):
        rng = np.random.default_rng(7)
        a = Waveform(rng.standard_normal(500), 16000)
        b = Waveform(rng.standard_normal(500), 16000)
        k = Rir(rng.standard_normal(40) * 0.2, 16000)
        lhs = fft_convolve(Waveform(a.samples + b.samples, 16000), k).samples
        rhs = fft_convolve(a, k).samples + fft_convolve(b, k).samples
        assert np.abs(lhs - rhs).max() <= 1e-5


class TestRms:
    def test_zero(self):
        assert rms(Waveform(np.zeros(16), 8000)) == 0.0

    def test_constant(self):
        assert rms(Waveform(np.full(16, 0.5), 8000)) == pytest.approx(0.5)

    def test_unit_sine_whole_periods(self):
        w = tone(100.0, 8000, 1.0)
        assert rms(w) == pytest.approx(1 / math.sqrt(2), abs=1e-4)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-1e6, 1e6, allow_nan=False), st.integers(0, 2 ** 32 - 1))
    def test_scaling(self, c, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal(257)
        base = rms(Waveform(x, 8000))
        scaled = rms(Waveform(c * x, 8000))
        assert scaled == pytest.approx(abs(c) * base, rel=1e-9, abs=1e-30)


class TestWaveform:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Waveform(np.array([]), 16000)

    def test_rejects_2d(self):
        with pytest.raises(ValueError):
            Waveform(np.zeros((2, 4)), 16000)

    def test_duration(self):
        w = Waveform(np.zeros(8000), 16000)
        assert w.duration_s == pytest.approx(0.5)
