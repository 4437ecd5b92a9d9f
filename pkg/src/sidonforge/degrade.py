"""The six degradation ops and their parameter sampler.

Fixed op order: reverb, noise, bandlimit, clip, codec, packet_loss. Each op
is gated by an independent coin flip; `sample_params` draws the flips first
(in op order) and then the parameters of every applied op, so a record fully
determines the transform. Ops that need randomness at apply time (noise entry
choice, loss segment placement) get their own child seeds drawn here, which
makes replaying a record bit-identical.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .audio import SUPPORTED_RATES, Waveform, fft_convolve, resample, rms
from .codec import CodecBackend, transcode
from .errors import RateMismatch, SilentSignal
from .noise import NoisePool, draw_noise
from .rir import RoomSpec, sample_room, simulate_rir

OP_ORDER = ("reverb", "noise", "bandlimit", "clip", "codec", "packet_loss")

_SEED_BOUND = 2**63
_SEGMENT_ATTEMPT_CAP = 10_000


@dataclass
class DegradationConfig:
    """Parameter ranges for the sampler. Defaults match the corpus recipe."""

    per_op_probability: float = 0.5
    rt60_range_s: tuple[float, float] = (0.1, 2.0)
    room_dim_range_m: tuple[float, float] = (2.0, 20.0)
    snr_range_db: tuple[float, float] = (-5.0, 20.0)
    bandlimit_rates_hz: tuple[int, ...] = SUPPORTED_RATES
    clip_lo_quantile_range: tuple[float, float] = (0.0, 0.10)
    clip_hi_quantile_range: tuple[float, float] = (0.90, 1.00)
    mp3_bitrate_range_kbps: tuple[float, float] = (65.0, 245.0)
    packet_loss_total_fraction: float = 0.09
    packet_segment_range_ms: tuple[float, float] = (20.0, 200.0)

    def validate(self) -> None:
        if not 0.0 <= self.per_op_probability <= 1.0:
            raise ValueError(f"per_op_probability {self.per_op_probability}")
        for name in (
            "rt60_range_s",
            "room_dim_range_m",
            "snr_range_db",
            "clip_lo_quantile_range",
            "clip_hi_quantile_range",
            "mp3_bitrate_range_kbps",
            "packet_segment_range_ms",
        ):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} has lo > hi: ({lo}, {hi})")
        if self.rt60_range_s[0] <= 0:
            raise ValueError("rt60 range must be positive")
        if self.room_dim_range_m[0] <= 0:
            raise ValueError("room dimensions must be positive")
        for q in (*self.clip_lo_quantile_range, *self.clip_hi_quantile_range):
            if not 0.0 <= q <= 1.0:
                raise ValueError(f"clip quantile {q} outside [0, 1]")
        if not set(self.bandlimit_rates_hz) <= set(SUPPORTED_RATES):
            raise ValueError(
                f"bandlimit rates {self.bandlimit_rates_hz} outside the "
                f"supported set {SUPPORTED_RATES}"
            )
        if not 0.0 <= self.packet_loss_total_fraction < 1.0:
            raise ValueError(f"packet_loss_total_fraction {self.packet_loss_total_fraction}")
        if self.packet_segment_range_ms[0] <= 0:
            raise ValueError("packet segment durations must be positive")


@dataclass
class OpRecord:
    """One op's gate decision plus its realized parameters."""

    op: str
    applied: bool
    params: dict[str, Any] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"op": self.op, "applied": self.applied, "params": self.params}

    @classmethod
    def from_json(cls, obj: dict) -> "OpRecord":
        return cls(op=obj["op"], applied=bool(obj["applied"]),
                   params=dict(obj.get("params") or {}))


@dataclass
class DegradationRecord:
    """Everything needed to replay one degraded variant bit-for-bit."""

    rng_seed: int
    variant_index: int
    ops: list[OpRecord]

    def to_json(self) -> dict:
        return {
            "rng_seed": self.rng_seed,
            "variant_index": self.variant_index,
            "ops": [o.to_json() for o in self.ops],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DegradationRecord":
        return cls(
            rng_seed=int(obj["rng_seed"]),
            variant_index=int(obj["variant_index"]),
            ops=[OpRecord.from_json(o) for o in obj["ops"]],
        )


def sample_params(
    cfg: DegradationConfig,
    rng: np.random.Generator,
    rng_seed: int = 0,
    variant_index: int = 0,
) -> DegradationRecord:
    """Draw one variant's gate flips and parameters.

    Draw order is part of the record contract: six gate flips in op order,
    then per applied op (in op order): reverb room, noise snr + child seed,
    bandlimit rate, clip quantile pair, codec bitrate, packet-loss child
    seed. `rng_seed` is provenance metadata echoed into the record; the
    caller seeds `rng` itself.
    """
    flips = [bool(rng.random() < cfg.per_op_probability) for _ in OP_ORDER]
    applied = dict(zip(OP_ORDER, flips))
    ops = []

    params: dict[str, Any] = {}
    if applied["reverb"]:
        room, rejected = sample_room(rng, cfg.rt60_range_s, cfg.room_dim_range_m)
        params = {
            "rt60_s": room.rt60_s,
            "dims_m": list(room.dims_m),
            "source_m": list(room.source_m),
            "mic_m": list(room.mic_m),
            "rejected_draws": rejected,
        }
    ops.append(OpRecord("reverb", applied["reverb"], params))

    params = {}
    if applied["noise"]:
        params = {
            "snr_db": float(rng.uniform(*cfg.snr_range_db)),
            "noise_seed": int(rng.integers(0, _SEED_BOUND)),
        }
    ops.append(OpRecord("noise", applied["noise"], params))

    params = {}
    if applied["bandlimit"]:
        choice = int(rng.integers(0, len(cfg.bandlimit_rates_hz)))
        params = {"intermediate_rate_hz": int(cfg.bandlimit_rates_hz[choice])}
    ops.append(OpRecord("bandlimit", applied["bandlimit"], params))

    params = {}
    if applied["clip"]:
        params = {
            "lo_quantile": float(rng.uniform(*cfg.clip_lo_quantile_range)),
            "hi_quantile": float(rng.uniform(*cfg.clip_hi_quantile_range)),
        }
    ops.append(OpRecord("clip", applied["clip"], params))

    params = {}
    if applied["codec"]:
        params = {"bitrate_kbps": float(rng.uniform(*cfg.mp3_bitrate_range_kbps))}
    ops.append(OpRecord("codec", applied["codec"], params))

    params = {}
    if applied["packet_loss"]:
        params = {
            "loss_fraction": cfg.packet_loss_total_fraction,
            "segment_range_ms": list(cfg.packet_segment_range_ms),
            "segment_seed": int(rng.integers(0, _SEED_BOUND)),
        }
    ops.append(OpRecord("packet_loss", applied["packet_loss"], params))

    return DegradationRecord(rng_seed=rng_seed, variant_index=variant_index, ops=ops)


def quantile_thresholds(samples: np.ndarray, lo_q: float, hi_q: float) -> tuple[float, float]:
    """Linearly interpolated order-statistic quantiles (type 7).

    threshold(q) = s[i] + (q*(n-1) - i) * (s[i+1] - s[i]) with i = floor(q*(n-1))
    over the sorted samples. Written out explicitly so thresholds are
    reproducible bit-for-bit from the record.
    """
    s = np.sort(np.asarray(samples, dtype=np.float64))
    return _interp_sorted(s, lo_q), _interp_sorted(s, hi_q)


def _interp_sorted(s: np.ndarray, q: float) -> float:
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"quantile {q} outside [0, 1]")
    pos = q * (s.size - 1)
    i = int(math.floor(pos))
    if i >= s.size - 1:
        return float(s[-1])
    return float(s[i] + (pos - i) * (s[i + 1] - s[i]))


def draw_loss_segments(
    n: int,
    sample_rate_hz: int,
    loss_fraction: float,
    segment_range_ms: tuple[float, float],
    rng: np.random.Generator,
) -> list[tuple[int, int]]:
    """Accumulate non-touching (start, length) spans until the zeroed count
    reaches loss_fraction * n.

    Candidates that overlap or abut an accepted span are rejected, so every
    resulting zero-run is exactly one drawn segment and never exceeds the
    segment duration cap.
    """
    target = loss_fraction * n
    max_len = int(round(segment_range_ms[1] * sample_rate_hz / 1000.0))
    if target <= 0:
        return []
    if max_len > n:
        raise ValueError(
            f"signal of {n} samples cannot hold a "
            f"{segment_range_ms[1]:g} ms segment"
        )
    spans: list[tuple[int, int]] = []
    zeroed = 0
    attempts = 0
    while zeroed < target and attempts < _SEGMENT_ATTEMPT_CAP:
        attempts += 1
        dur_ms = rng.uniform(*segment_range_ms)
        length = max(int(round(dur_ms * sample_rate_hz / 1000.0)), 1)
        start = int(rng.integers(0, n - length + 1))
        end = start + length
        if any(start <= e and s <= end for s, e in spans):
            continue
        spans.append((start, end))
        zeroed += length
    spans.sort()
    return [(s, e - s) for s, e in spans]


def op_reverb(w: Waveform, room: RoomSpec) -> Waveform:
    """Convolve with the room's impulse response, truncated to input length."""
    return fft_convolve(w, simulate_rir(room, w.sample_rate_hz))


def op_mix_noise(w: Waveform, noise: Waveform, snr_db: float) -> Waveform:
    """Add noise scaled so the clean/noise RMS ratio hits `snr_db` exactly."""
    if noise.sample_rate_hz != w.sample_rate_hz:
        raise RateMismatch(
            f"noise at {noise.sample_rate_hz} Hz, signal at {w.sample_rate_hz} Hz"
        )
    if len(noise) < len(w):
        raise ValueError(f"noise ({len(noise)}) shorter than signal ({len(w)})")
    segment = noise.samples[: len(w)]
    signal_rms = rms(w)
    noise_rms = float(np.sqrt(np.mean(np.square(segment))))
    if signal_rms == 0.0 or noise_rms == 0.0:
        raise SilentSignal("zero-RMS operand in noise mixing")
    gain = (signal_rms / noise_rms) * 10.0 ** (-snr_db / 20.0)
    return Waveform(w.samples + gain * segment, w.sample_rate_hz)


def _fit_length(samples: np.ndarray, n: int) -> np.ndarray:
    if len(samples) < n:
        return np.concatenate([samples, np.zeros(n - len(samples))])
    return samples[:n]


def op_bandlimit(w: Waveform, intermediate_rate_hz: int) -> Waveform:
    """Round-trip through a lower (or equal/higher) rate; length preserved."""
    down = resample(w, intermediate_rate_hz)
    up = resample(down, w.sample_rate_hz)
    return Waveform(_fit_length(up.samples, len(w)), w.sample_rate_hz)


def op_clip(w: Waveform, lo_quantile: float, hi_quantile: float) -> Waveform:
    """Hard-clip to the two amplitude quantiles of the signal itself."""
    t_lo, t_hi = quantile_thresholds(w.samples, lo_quantile, hi_quantile)
    return Waveform(np.clip(w.samples, t_lo, t_hi), w.sample_rate_hz)


def op_codec(w: Waveform, bitrate_kbps: float, backend: CodecBackend) -> Waveform:
    """Lossy round trip at the given bitrate; see apply() for rate fallback."""
    return transcode(backend, w, bitrate_kbps).waveform


def op_packet_loss(
    w: Waveform,
    loss_fraction: float,
    segment_range_ms: tuple[float, float],
    rng: np.random.Generator,
) -> Waveform:
    """Zero out non-touching random segments until the loss fraction is met."""
    spans = draw_loss_segments(
        len(w), w.sample_rate_hz, loss_fraction, segment_range_ms, rng
    )
    out = w.samples.copy()
    for start, length in spans:
        out[start : start + length] = 0.0
    return Waveform(out, w.sample_rate_hz)


def _nearest_rate(rate: int, candidates: tuple[int, ...]) -> int:
    # nearest by absolute difference, ties toward the higher rate
    usable = sorted(set(candidates) & set(SUPPORTED_RATES))
    if not usable:
        raise ValueError(f"no usable codec rates among {candidates}")
    return min(usable, key=lambda r: (abs(r - rate), -r))


def _apply_codec(w: Waveform, op: OpRecord, backend: CodecBackend) -> Waveform:
    bitrate = op.params["bitrate_kbps"]
    work = w
    detour = None
    if (
        backend.supported_rates_hz is not None
        and w.sample_rate_hz not in backend.supported_rates_hz
    ):
        detour = _nearest_rate(w.sample_rate_hz, backend.supported_rates_hz)
        work = resample(w, detour)
    result = transcode(backend, work, bitrate)
    out = result.waveform
    if detour is not None:
        out = resample(out, w.sample_rate_hz)
    op.params["alignment_lag_samples"] = result.alignment_lag_samples
    op.params["peak_correlation"] = result.peak_correlation
    if detour is not None:
        op.params["resampled_for_codec_hz"] = detour
    return Waveform(_fit_length(out.samples, len(w)), w.sample_rate_hz)


def apply_recorded_op(
    w: Waveform,
    op: OpRecord,
    pool: NoisePool | None,
    backend: CodecBackend,
) -> Waveform:
    """Apply a single op from its record, writing realized values back in.

    Replays are bit-identical because all randomness comes from child seeds
    stored in the record.
    """
    p = op.params
    if op.op == "reverb":
        room = RoomSpec(
            dims_m=tuple(p["dims_m"]),
            rt60_s=p["rt60_s"],
            source_m=tuple(p["source_m"]),
            mic_m=tuple(p["mic_m"]),
        )
        return op_reverb(w, room)
    if op.op == "noise":
        if pool is None:
            raise ValueError("noise op requires a noise pool")
        draw = draw_noise(
            pool, len(w), w.sample_rate_hz, np.random.default_rng(p["noise_seed"])
        )
        p["noise_id"] = draw.entry_id
        p["loop_count"] = draw.loop_count
        return op_mix_noise(w, draw.waveform, p["snr_db"])
    if op.op == "bandlimit":
        return op_bandlimit(w, p["intermediate_rate_hz"])
    if op.op == "clip":
        t_lo, t_hi = quantile_thresholds(w.samples, p["lo_quantile"], p["hi_quantile"])
        p["threshold_lo"] = t_lo
        p["threshold_hi"] = t_hi
        return Waveform(np.clip(w.samples, t_lo, t_hi), w.sample_rate_hz)
    if op.op == "codec":
        return _apply_codec(w, op, backend)
    if op.op == "packet_loss":
        spans = draw_loss_segments(
            len(w),
            w.sample_rate_hz,
            p["loss_fraction"],
            tuple(p["segment_range_ms"]),
            np.random.default_rng(p["segment_seed"]),
        )
        p["segments_ms"] = [
            [start * 1000.0 / w.sample_rate_hz, length * 1000.0 / w.sample_rate_hz]
            for start, length in spans
        ]
        out = w.samples.copy()
        for start, length in spans:
            out[start : start + length] = 0.0
        return Waveform(out, w.sample_rate_hz)
    raise ValueError(f"unknown op {op.op!r}")


def apply(
    w: Waveform,
    record: DegradationRecord,
    pool: NoisePool | None,
    backend: CodecBackend,
    stage_seconds: dict[str, float] | None = None,
) -> Waveform:
    """Run every applied op in the record, in order.

    Sample count and rate are preserved. A packet-loss op on a signal shorter
    than the maximum segment is downgraded to not-applied in the record.
    `stage_seconds`, when given, accumulates wall time per op name.
    """
    out = w
    for op in record.ops:
        if not op.applied:
            continue
        if op.op == "packet_loss":
            max_len_ms = tuple(op.params["segment_range_ms"])[1]
            if len(out) * 1000.0 < max_len_ms * out.sample_rate_hz:
                op.applied = False
                op.params["skipped_short_signal"] = True
                continue
        t0 = time.perf_counter()
        out = apply_recorded_op(out, op, pool, backend)
        if stage_seconds is not None:
            stage_seconds[op.op] = stage_seconds.get(op.op, 0.0) + (
                time.perf_counter() - t0
            )
        if len(out) != len(w) or out.sample_rate_hz != w.sample_rate_hz:
            raise AssertionError(f"op {op.op} broke the length/rate contract")
    if out is w:
        out = Waveform(w.samples.copy(), w.sample_rate_hz)
    return out
