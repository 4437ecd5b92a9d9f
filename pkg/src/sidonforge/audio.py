"""Waveform container and signal primitives: WAV I/O, resampling, convolution.

Everything downstream works on mono float64 with a nominal [-1, 1] range.
WAV support covers 16/24-bit integer PCM and 32-bit IEEE float, plus the
WAVE_FORMAT_EXTENSIBLE wrapper around either; multi-channel files are
averaged to mono on read.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from math import gcd
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve, firwin, kaiserord, resample_poly

from .errors import (
    IoError,
    MalformedWav,
    RateMismatch,
    UnsupportedEncoding,
    UnsupportedRate,
)

SUPPORTED_RATES = (8000, 16000, 22050, 24000, 44100, 48000)

# Shared low-pass for rate conversion: >= 80 dB stopband, passband to 0.45x
# and stopband from 0.50x of the lower of the two rates.
_STOPBAND_DB = 80.0
_PASSBAND_EDGE = 0.45
_STOPBAND_EDGE = 0.50

_WAVE_FORMAT_PCM = 1
_WAVE_FORMAT_IEEE_FLOAT = 3
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass
class Waveform:
    """Mono audio buffer: float64 samples at a fixed sample rate."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("samples must be a nonempty 1-D array")
        rate = int(self.sample_rate_hz)
        if rate <= 0:
            raise ValueError("sample_rate_hz must be positive")
        self.sample_rate_hz = rate

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class WavInfo:
    """Header-level facts about a WAV file, no sample decoding."""

    frames: int
    sample_rate_hz: int
    channels: int
    bits_per_sample: int
    format_tag: int

    @property
    def duration_s(self) -> float:
        return self.frames / self.sample_rate_hz


def _walk_chunks(f, path):
    """Yield (chunk_id, size, data_offset) for each RIFF sub-chunk.

    The consumer may read from `f` between yields; position is restored
    arithmetically before the next header.
    """
    header = f.read(12)
    if len(header) < 12 or header[:4] != b"RIFF" or header[8:12] != b"WAVE":
        raise MalformedWav(f"{path}: not a RIFF/WAVE file")
    offset = 12
    while True:
        head = f.read(8)
        if len(head) == 0:
            return
        if len(head) < 8:
            raise MalformedWav(f"{path}: dangling chunk header at byte {offset}")
        cid = head[:4]
        size = int.from_bytes(head[4:8], "little")
        yield cid, size, offset + 8
        offset += 8 + size + (size & 1)
        f.seek(offset)


def _decode_fmt(body, path):
    if len(body) < 16:
        raise MalformedWav(f"{path}: fmt chunk shorter than 16 bytes")
    tag, channels, rate, _byte_rate, _block, bits = struct.unpack("<HHIIHH", body[:16])
    if tag == _WAVE_FORMAT_EXTENSIBLE:
        if len(body) < 40:
            raise MalformedWav(f"{path}: extensible fmt chunk shorter than 40 bytes")
        tag = int.from_bytes(body[24:26], "little")
    return tag, channels, rate, bits


def _scan_wav(f, path, want_data):
    fmt = None
    data = None
    data_size = None
    for cid, size, _off in _walk_chunks(f, path):
        if cid == b"fmt " and fmt is None:
            fmt = _decode_fmt(f.read(min(size, 64)), path)
        elif cid == b"data" and data_size is None:
            data_size = size
            if want_data:
                data = f.read(size)
                if len(data) < size:
                    raise MalformedWav(
                        f"{path}: data chunk declares {size} bytes, "
                        f"file holds {len(data)}"
                    )
        if fmt is not None and data_size is not None:
            break
    if fmt is None:
        raise MalformedWav(f"{path}: missing fmt chunk")
    if data_size is None:
        raise MalformedWav(f"{path}: missing data chunk")
    return fmt, data, data_size


def _frame_layout(fmt, data_size, path):
    tag, channels, rate, bits = fmt
    if channels < 1:
        raise MalformedWav(f"{path}: zero channels")
    if rate <= 0:
        raise MalformedWav(f"{path}: sample rate {rate}")
    if bits % 8 != 0 or bits == 0:
        raise UnsupportedEncoding(f"{path}: {bits}-bit samples")
    block = channels * bits // 8
    if data_size % block != 0:
        raise MalformedWav(
            f"{path}: data size {data_size} is not a multiple of the "
            f"{block}-byte frame"
        )
    frames = data_size // block
    if frames == 0:
        raise MalformedWav(f"{path}: data chunk holds no samples")
    return frames, block


def read_wav(path: str | Path) -> Waveform:
    """Decode a WAV file to a mono float64 Waveform."""
    path = Path(path)
    try:
        f = open(path, "rb")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    with f:
        try:
            fmt, data, data_size = _scan_wav(f, path, want_data=True)
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
    tag, channels, rate, bits = fmt
    frames, _block = _frame_layout(fmt, data_size, path)
    if tag == _WAVE_FORMAT_PCM and bits == 16:
        x = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif tag == _WAVE_FORMAT_PCM and bits == 24:
        raw = np.frombuffer(data, dtype=np.uint8).astype(np.int32)
        raw = raw.reshape(-1, 3)
        v = raw[:, 0] | (raw[:, 1] << 8) | (raw[:, 2] << 16)
        v -= (v & 0x800000) << 1  # sign extension
        x = v.astype(np.float64) / 8388608.0
    elif tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        x = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise UnsupportedEncoding(f"{path}: format tag {tag}, {bits}-bit")
    if channels > 1:
        x = x.reshape(frames, channels).mean(axis=1)
    return Waveform(x, rate)


def wav_info(path: str | Path) -> WavInfo:
    """Read header facts without decoding samples (cheap corpus scans)."""
    path = Path(path)
    try:
        f = open(path, "rb")
    except OSError as exc:
        raise IoError(f"cannot open {path}: {exc}") from exc
    with f:
        try:
            fmt, _data, data_size = _scan_wav(f, path, want_data=False)
            end = f.seek(0, 2)
        except OSError as exc:
            raise IoError(f"cannot read {path}: {exc}") from exc
    tag, channels, rate, bits = fmt
    frames, _block = _frame_layout(fmt, data_size, path)
    # want_data=False skipped the payload read; still reject truncation.
    if end < data_size:
        raise MalformedWav(f"{path}: data chunk extends past end of file")
    return WavInfo(frames, rate, channels, bits, tag)


def write_wav(w: Waveform, path: str | Path, bit_depth: str = "16") -> None:
    """Write a Waveform as mono WAV. bit_depth: \"16\", \"24\", or \"32f\".

    Integer depths round to the nearest code and saturate at full scale;
    float output is written verbatim.
    """
    if bit_depth == "16":
        codes = np.clip(np.rint(w.samples * 32768.0), -32768, 32767)
        payload = codes.astype("<i2").tobytes()
        tag, bits = _WAVE_FORMAT_PCM, 16
    elif bit_depth == "24":
        codes = np.clip(np.rint(w.samples * 8388608.0), -8388608, 8388607)
        v = codes.astype("<i4")
        packed = np.empty((v.size, 3), dtype=np.uint8)
        packed[:, 0] = v & 0xFF
        packed[:, 1] = (v >> 8) & 0xFF
        packed[:, 2] = (v >> 16) & 0xFF
        payload = packed.tobytes()
        tag, bits = _WAVE_FORMAT_PCM, 24
    elif bit_depth == "32f":
        payload = w.samples.astype("<f4").tobytes()
        tag, bits = _WAVE_FORMAT_IEEE_FLOAT, 32
    else:
        raise ValueError(f"bit_depth must be 16, 24, or 32f, got {bit_depth!r}")

    block = bits // 8
    fmt_body = struct.pack(
        "<HHIIHH", tag, 1, w.sample_rate_hz, w.sample_rate_hz * block, block, bits
    )
    chunks = [(b"fmt ", fmt_body)]
    if tag == _WAVE_FORMAT_IEEE_FLOAT:
        chunks.append((b"fact", struct.pack("<I", len(w))))
    chunks.append((b"data", payload))
    riff_size = 4 + sum(8 + len(body) + (len(body) & 1) for _, body in chunks)
    parts = [b"RIFF", struct.pack("<I", riff_size), b"WAVE"]
    for cid, body in chunks:
        parts.append(cid)
        parts.append(struct.pack("<I", len(body)))
        parts.append(body)
        if len(body) & 1:
            parts.append(b"\x00")
    try:
        with open(path, "wb") as f:
            f.write(b"".join(parts))
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _ratio(source_rate: int, target_rate: int) -> tuple[int, int]:
    g = gcd(source_rate, target_rate)
    return target_rate // g, source_rate // g


@lru_cache(maxsize=None)
def _resample_filter(source_rate: int, target_rate: int) -> np.ndarray:
    """Kaiser-windowed low-pass for one rate pair, unit passband gain.

    resample_poly scales a caller-provided window by `up` itself, so the
    taps here must NOT fold in the upsampling gain.
    """
    up, _down = _ratio(source_rate, target_rate)
    fs_up = source_rate * up
    lower = min(source_rate, target_rate)
    width = (_STOPBAND_EDGE - _PASSBAND_EDGE) * lower / (fs_up / 2)
    numtaps, beta = kaiserord(_STOPBAND_DB, width)
    numtaps |= 1
    cutoff_hz = 0.5 * (_PASSBAND_EDGE + _STOPBAND_EDGE) * lower
    return firwin(numtaps, cutoff_hz, window=("kaiser", beta), fs=fs_up)


def resample(w: Waveform, target_rate_hz: int) -> Waveform:
    """Polyphase rate conversion. Output length is round(len * target / source)."""
    target = int(target_rate_hz)
    if target not in SUPPORTED_RATES:
        raise UnsupportedRate(
            f"target rate {target} Hz not in {sorted(SUPPORTED_RATES)}"
        )
    source = w.sample_rate_hz
    if target == source:
        return Waveform(w.samples.copy(), source)
    up, down = _ratio(source, target)
    y = resample_poly(w.samples, up, down, window=_resample_filter(source, target))
    # round-half-up in exact integer arithmetic; scipy returns ceil(n*up/down)
    # which is never shorter than this.
    n_out = (2 * len(w) * target + source) // (2 * source)
    assert len(y) >= n_out
    return Waveform(y[:n_out], target)


def fft_convolve(signal: Waveform, kernel) -> Waveform:
    """FFT convolution truncated to the signal's length.

    `kernel` is anything carrying `.taps` or `.samples` plus `.sample_rate_hz`
    (an impulse response or another Waveform).
    """
    taps = getattr(kernel, "taps", None)
    if taps is None:
        taps = kernel.samples
    if signal.sample_rate_hz != kernel.sample_rate_hz:
        raise RateMismatch(
            f"signal at {signal.sample_rate_hz} Hz, kernel at "
            f"{kernel.sample_rate_hz} Hz"
        )
    full = fftconvolve(signal.samples, np.asarray(taps, dtype=np.float64), mode="full")
    return Waveform(full[: len(signal)], signal.sample_rate_hz)


def rms(w: Waveform) -> float:
    return float(np.sqrt(np.mean(np.square(w.samples))))
