"""Measurement oracles and manifest validation.

These functions measure properties of audio directly (residual energy, zero
runs, spectral content) without touching the op implementations, so they can
arbitrate whether a degraded file matches its record.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import periodogram

from .audio import Waveform, read_wav, rms
from .codec import CodecBackend
from .degrade import DegradationRecord, apply_recorded_op
from .errors import IoError, RateMismatch, SilentResidual, SilentSignal
from .noise import NoisePool
from .rir import RoomSpec, estimate_rt60, simulate_rir

# Per-check tolerances used by validate_manifest.
VALIDATE_TOLERANCES = {
    "snr_db": 1e-6,
    "rt60_relative": 0.40,
    "band_above_max_db": -50.0,
    "packet_run_slack_samples": 1,
    "codec_min_correlation": 0.5,
}


def measure_snr(clean: Waveform, noisy: Waveform) -> float:
    """SNR in dB of `noisy` against `clean` via the residual's RMS."""
    if clean.sample_rate_hz != noisy.sample_rate_hz:
        raise RateMismatch(
            f"clean at {clean.sample_rate_hz} Hz, noisy at {noisy.sample_rate_hz} Hz"
        )
    if len(clean) != len(noisy):
        raise ValueError(f"length mismatch: {len(clean)} vs {len(noisy)}")
    clean_rms = rms(clean)
    if clean_rms == 0.0:
        raise SilentSignal("clean signal has zero RMS")
    residual = noisy.samples - clean.samples
    residual_rms = float(np.sqrt(np.mean(np.square(residual))))
    if residual_rms == 0.0:
        raise SilentResidual("noisy equals clean; nothing to measure")
    return 20.0 * np.log10(clean_rms / residual_rms)


@dataclass(frozen=True)
class ZeroRuns:
    fraction: float
    runs_ms: list[float]


def measure_zero_runs(w: Waveform) -> ZeroRuns:
    """Fraction of exactly-zero samples in runs of at least 1 ms, plus the
    run lengths in milliseconds."""
    min_len = max(int(np.ceil(0.001 * w.sample_rate_hz)), 1)
    mask = np.concatenate([[0], (w.samples == 0.0).astype(np.int8), [0]])
    edges = np.flatnonzero(np.diff(mask))
    starts, ends = edges[::2], edges[1::2]
    lengths = ends - starts
    lengths = lengths[lengths >= min_len]
    total = int(lengths.sum())
    return ZeroRuns(
        fraction=total / len(w),
        runs_ms=[length * 1000.0 / w.sample_rate_hz for length in lengths],
    )


def band_energy_above(w: Waveform, cutoff_hz: float) -> float:
    """Energy above `cutoff_hz` relative to total, in dB (-inf if none)."""
    if not 0.0 <= cutoff_hz < w.sample_rate_hz / 2:
        raise ValueError(
            f"cutoff {cutoff_hz} Hz outside [0, {w.sample_rate_hz / 2}) Hz"
        )
    freqs, pxx = periodogram(w.samples, fs=w.sample_rate_hz, window="hann")
    total = float(pxx.sum())
    if total == 0.0:
        raise SilentSignal("cannot measure band energy of silence")
    above = float(pxx[freqs > cutoff_hz].sum())
    if above == 0.0:
        return float("-inf")
    return 10.0 * float(np.log10(above / total))


@dataclass
class CheckResult:
    utterance_id: str
    variant_index: int
    op: str
    check: str
    passed: bool
    detail: str = ""
    measured: float | None = None

    def to_json(self) -> dict:
        return self.__dict__.copy()


@dataclass
class ValidationReport:
    checks: list[CheckResult] = field(default_factory=list)
    entries: int = 0
    tolerances: dict = field(default_factory=dict)

    @property
    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]

    @property
    def ok(self) -> bool:
        return not self.failures

    def to_json(self) -> dict:
        return {
            "entries": self.entries,
            "checks_run": len(self.checks),
            "tolerances": self.tolerances,
            "failures": [c.to_json() for c in self.failures],
        }


def _check_reverb(x_in, x_out, params, tol):
    room = RoomSpec(
        dims_m=tuple(params["dims_m"]),
        rt60_s=params["rt60_s"],
        source_m=tuple(params["source_m"]),
        mic_m=tuple(params["mic_m"]),
    )
    est = estimate_rt60(simulate_rir(room, x_in.sample_rate_hz))
    rel = abs(est - params["rt60_s"]) / params["rt60_s"]
    yield "rt60_replay", rel <= tol["rt60_relative"], (
        f"requested {params['rt60_s']:.3f} s, estimated {est:.3f} s "
        f"({rel * 100:.1f}% off)"
    ), est


def _check_noise(x_in, x_out, params, tol):
    measured = measure_snr(x_in, x_out)
    err = abs(measured - params["snr_db"])
    yield "snr_exact", err <= tol["snr_db"], (
        f"recorded {params['snr_db']:.6f} dB, measured {measured:.6f} dB"
    ), measured


def _check_bandlimit(x_in, x_out, params, tol):
    inter = params["intermediate_rate_hz"]
    if inter >= x_out.sample_rate_hz:
        return  # no band was removed; nothing to measure
    above = band_energy_above(x_out, inter / 2.0)
    yield "band_removed", above <= tol["band_above_max_db"], (
        f"{above:.1f} dB above {inter / 2:.0f} Hz"
    ), above


def _check_clip(x_in, x_out, params, tol):
    lo, hi = params["threshold_lo"], params["threshold_hi"]
    out_min, out_max = float(x_out.samples.min()), float(x_out.samples.max())
    yield "clip_bounds", out_min == lo and out_max == hi, (
        f"thresholds ({lo:.6g}, {hi:.6g}), output range ({out_min:.6g}, {out_max:.6g})"
    ), out_max
    interior = (x_in.samples > lo) & (x_in.samples < hi)
    changed = int(np.count_nonzero(x_out.samples[interior] != x_in.samples[interior]))
    yield "clip_interior_untouched", changed == 0, (
        f"{changed} interior samples changed"
    ), float(changed)


def _check_codec(x_in, x_out, params, tol):
    peak = params.get("peak_correlation")
    if peak is None:
        yield "codec_correlation", False, "record lacks peak_correlation", None
        return
    yield "codec_correlation", peak >= tol["codec_min_correlation"], (
        f"peak correlation {peak:.3f}"
    ), peak


def _check_packet_loss(x_in, x_out, params, tol):
    fs = x_out.sample_rate_hz
    slack = tol["packet_run_slack_samples"]
    lo_ms, hi_ms = params["segment_range_ms"]
    segments = params.get("segments_ms", [])
    zeroed = 0
    all_zero = True
    lengths_ok = True
    for start_ms, len_ms in segments:
        start = int(round(start_ms * fs / 1000.0))
        length = int(round(len_ms * fs / 1000.0))
        zeroed += length
        if np.any(x_out.samples[start : start + length] != 0.0):
            all_zero = False
        if not (lo_ms - slack * 1000.0 / fs) <= len_ms <= (hi_ms + slack * 1000.0 / fs):
            lengths_ok = False
    yield "loss_segments_zeroed", all_zero, (
        f"{len(segments)} recorded segments"
    ), None
    yield "loss_segment_lengths", lengths_ok, (
        f"range ({lo_ms:g}, {hi_ms:g}) ms"
    ), None
    frac = params["loss_fraction"]
    reached = zeroed >= frac * len(x_out)
    bounded = zeroed < frac * len(x_out) + int(round(hi_ms * fs / 1000.0)) + slack
    yield "loss_fraction", reached and bounded, (
        f"zeroed {zeroed / len(x_out):.4f} of samples against target {frac:g}"
    ), zeroed / len(x_out)


_OP_CHECKS = {
    "reverb": _check_reverb,
    "noise": _check_noise,
    "bandlimit": _check_bandlimit,
    "clip": _check_clip,
    "codec": _check_codec,
    "packet_loss": _check_packet_loss,
}


def validate_manifest(
    manifest_path: str | Path,
    clean_root: str | Path,
    pool: NoisePool | None,
    backend: CodecBackend,
    tolerances: dict | None = None,
    limit: int | None = None,
) -> ValidationReport:
    """Replay each manifest entry op by op and check every stage against the
    oracles. Returns a report; callers decide what failure means."""
    tol = dict(VALIDATE_TOLERANCES)
    if tolerances:
        tol.update(tolerances)
    clean_root = Path(clean_root)
    report = ValidationReport(tolerances=tol)
    try:
        lines = Path(manifest_path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoError(f"cannot read manifest {manifest_path}: {exc}") from exc
    for line in lines:
        if not line.strip():
            continue
        if limit is not None and report.entries >= limit:
            break
        entry = json.loads(line)
        record = DegradationRecord.from_json(entry["record"])
        utt = entry["utterance_id"]
        x = read_wav(clean_root / utt)
        for op in record.ops:
            if not op.applied:
                continue
            x_in = x
            x = apply_recorded_op(x, op, pool, backend)
            for check, passed, detail, measured in _OP_CHECKS[op.op](
                x_in, x, op.params, tol
            ):
                report.checks.append(
                    CheckResult(
                        utterance_id=utt,
                        variant_index=record.variant_index,
                        op=op.op,
                        check=check,
                        passed=bool(passed),
                        detail=detail,
                        measured=None if measured is None else float(measured),
                    )
                )
        noisy_path = Path(entry["noisy_path"])
        if not noisy_path.is_absolute():
            noisy_path = Path(manifest_path).parent / noisy_path
        degraded = read_wav(noisy_path)
        same_len = len(degraded) == len(x) and degraded.sample_rate_hz == x.sample_rate_hz
        report.checks.append(
            CheckResult(
                utterance_id=utt,
                variant_index=record.variant_index,
                op="*",
                check="output_shape",
                passed=same_len,
                detail=f"{len(degraded)} samples at {degraded.sample_rate_hz} Hz",
            )
        )
        report.entries += 1
    return report
