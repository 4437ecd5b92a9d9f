"""Lossy-codec round trips through external encoder/decoder commands.

A backend is either `identity` (bit-exact passthrough, always available) or
`external`: two command templates run via subprocess with `{input}`,
`{output}`, and `{bitrate_kbps}` placeholders. Codec delay is removed by
cross-correlating the decoded output against the first half second of the
input and trimming the best-lag offset.
"""

from __future__ import annotations

import shlex
import shutil
import subprocess
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import correlate

from .audio import Waveform, read_wav, write_wav
from .errors import AlignmentFailure, BackendFailure, BackendUnavailable

_ALIGN_WINDOW_S = 0.5
_MIN_PEAK_CORRELATION = 0.5

# Optional process-wide gate on concurrent codec subprocesses. The pipeline
# sets this in each worker when the backend declares max_concurrent; with the
# fork start method the semaphore is inherited.
_subprocess_gate = None


def set_subprocess_gate(gate) -> None:
    global _subprocess_gate
    _subprocess_gate = gate


@dataclass
class CodecBackend:
    kind: str = "identity"  # "identity" | "external"
    encode_cmd: str = ""
    decode_cmd: str = ""
    supported_rates_hz: tuple[int, ...] | None = None
    max_concurrent: int | None = None
    workdir: str | None = None  # temp root; system default when None

    def validate(self) -> None:
        if self.kind == "identity":
            return
        if self.kind != "external":
            raise BackendUnavailable(f"unknown backend kind {self.kind!r}")
        for name, template, needed in (
            ("encode_cmd", self.encode_cmd, ("{input}", "{output}")),
            ("decode_cmd", self.decode_cmd, ("{input}", "{output}")),
        ):
            if not template:
                raise BackendUnavailable(f"external backend missing {name}")
            for placeholder in needed:
                if placeholder not in template:
                    raise BackendUnavailable(f"{name} lacks {placeholder}")
            exe = shlex.split(template)[0]
            if shutil.which(exe) is None:
                raise BackendUnavailable(f"executable {exe!r} not found on PATH")


@dataclass(frozen=True)
class TranscodeResult:
    waveform: Waveform
    alignment_lag_samples: int
    peak_correlation: float


def _run(cmd: str, **fields) -> None:
    try:
        argv = [part.format(**fields) for part in shlex.split(cmd)]
    except (KeyError, IndexError, ValueError) as exc:
        raise BackendFailure(f"bad placeholder in command template: {exc}") from exc
    try:
        proc = subprocess.run(argv, capture_output=True, timeout=600)
    except (OSError, subprocess.TimeoutExpired) as exc:
        raise BackendFailure(f"{argv[0]}: {exc}") from exc
    if proc.returncode != 0:
        tail = proc.stderr.decode(errors="replace")[-500:]
        raise BackendFailure(f"{argv[0]} exited {proc.returncode}: {tail}")


def _align(original: Waveform, decoded: Waveform) -> tuple[np.ndarray, int, float]:
    """Trim codec delay off `decoded` by correlating against the input head.

    Returns (aligned samples padded/trimmed to the original length, lag,
    normalized peak correlation).
    """
    n = len(original)
    m = min(int(_ALIGN_WINDOW_S * original.sample_rate_hz), n)
    ref = original.samples[:m]
    max_lag = min(m, max(len(decoded) - m, 0))
    cand = decoded.samples[: m + max_lag]
    if len(cand) < m:
        cand = np.concatenate([cand, np.zeros(m - len(cand))])
        max_lag = 0
    # corr[k] = <cand[k:k+m], ref> for lag k in 0..max_lag
    corr = correlate(cand, ref, mode="valid")
    sq = np.concatenate([[0.0], np.cumsum(cand**2)])
    seg_norm = np.sqrt(sq[m:] - sq[:-m])
    ref_norm = float(np.linalg.norm(ref))
    denom = seg_norm * ref_norm
    with np.errstate(invalid="ignore", divide="ignore"):
        scores = np.where(denom > 0, corr / denom, 0.0)
    lag = int(np.argmax(scores))
    peak = float(scores[lag])
    if peak < _MIN_PEAK_CORRELATION:
        raise AlignmentFailure(
            f"peak correlation {peak:.3f} below {_MIN_PEAK_CORRELATION}"
        )
    aligned = decoded.samples[lag : lag + n]
    if len(aligned) < n:
        aligned = np.concatenate([aligned, np.zeros(n - len(aligned))])
    return aligned, lag, peak


def transcode(backend: CodecBackend, w: Waveform, bitrate_kbps: float) -> TranscodeResult:
    """Encode/decode `w` through the backend and re-align the result.

    Output matches the input's length and sample rate. The bitrate is rounded
    to integer kbps at the command boundary.
    """
    if backend.kind == "identity":
        return TranscodeResult(Waveform(w.samples.copy(), w.sample_rate_hz), 0, 1.0)
    backend.validate()
    tmp = Path(tempfile.mkdtemp(prefix="sidonforge-codec-", dir=backend.workdir))
    try:
        src = tmp / "in.wav"
        enc = tmp / "enc.bin"
        dec = tmp / "out.wav"
        write_wav(w, src, bit_depth="16")
        fields = dict(input=str(src), output=str(enc), bitrate_kbps=round(bitrate_kbps))
        if _subprocess_gate is not None:
            with _subprocess_gate:
                _run(backend.encode_cmd, **fields)
                _run(backend.decode_cmd, input=str(enc), output=str(dec),
                     bitrate_kbps=fields["bitrate_kbps"])
        else:
            _run(backend.encode_cmd, **fields)
            _run(backend.decode_cmd, input=str(enc), output=str(dec),
                 bitrate_kbps=fields["bitrate_kbps"])
        try:
            decoded = read_wav(dec)
        except Exception as exc:
            raise BackendFailure(f"decoder output unreadable: {exc}") from exc
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    if decoded.sample_rate_hz != w.sample_rate_hz:
        raise BackendFailure(
            f"decoder returned {decoded.sample_rate_hz} Hz for "
            f"{w.sample_rate_hz} Hz input; declare supported_rates_hz instead"
        )
    aligned, lag, peak = _align(w, decoded)
    return TranscodeResult(Waveform(aligned, w.sample_rate_hz), lag, peak)


def mp3_lame_backend(supported_rates_hz: tuple[int, ...] | None = None) -> CodecBackend:
    """Conventional lame-based MP3 backend (average-bitrate mode);
    validate() reports availability."""
    return CodecBackend(
        kind="external",
        encode_cmd="lame --quiet --abr {bitrate_kbps} {input} {output}",
        decode_cmd="lame --quiet --decode {input} {output}",
        supported_rates_hz=supported_rates_hz,
    )
