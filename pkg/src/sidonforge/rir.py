"""Rectangular-room impulse responses via the image-source method.

A room is a shoebox with a single frequency-flat absorption coefficient on
all six walls, derived from the requested decay time by the inverse Sabine
relation. Image sources are enumerated up to a reflection order bound, each
contributing an 81-tap windowed-sinc fractional-delay kernel scaled by
sqrt(1 - absorption) per wall bounce and 1/(4*pi*distance) spreading loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AbsorptionInfeasible, DecayRangeUnavailable, InvalidGeometry

SPEED_OF_SOUND_MPS = 343.0
SABINE_CONSTANT = 0.161
MAX_ORDER_CAP = 32

FRAC_DELAY_TAPS = 81
_HALF_KERNEL = (FRAC_DELAY_TAPS - 1) // 2

# Schroeder fit window on the normalized energy decay curve, in dB.
_FIT_TOP_DB = -5.0
_FIT_BOTTOM_DB = -25.0

_PLACEMENT_ATTEMPT_CAP = 100_000


@dataclass
class RoomSpec:
    """Geometry plus target decay time for one simulated room."""

    dims_m: tuple[float, float, float]
    rt60_s: float
    source_m: tuple[float, float, float]
    mic_m: tuple[float, float, float]
    speed_of_sound_mps: float = SPEED_OF_SOUND_MPS
    max_order_cap: int = MAX_ORDER_CAP
    sabine_constant: float = SABINE_CONSTANT

    def __post_init__(self):
        self.dims_m = tuple(float(v) for v in self.dims_m)
        self.source_m = tuple(float(v) for v in self.source_m)
        self.mic_m = tuple(float(v) for v in self.mic_m)
        if len(self.dims_m) != 3 or len(self.source_m) != 3 or len(self.mic_m) != 3:
            raise InvalidGeometry("dims, source, and mic must be 3-vectors")
        if any(d <= 0 for d in self.dims_m):
            raise InvalidGeometry(f"nonpositive room dimension: {self.dims_m}")
        if self.rt60_s <= 0:
            raise InvalidGeometry(f"nonpositive rt60: {self.rt60_s}")
        for name, pos in (("source", self.source_m), ("mic", self.mic_m)):
            if any(not (0.0 < p < d) for p, d in zip(pos, self.dims_m)):
                raise InvalidGeometry(
                    f"{name} {pos} not strictly inside room {self.dims_m}"
                )
        sep = math.dist(self.source_m, self.mic_m)
        if sep <= 0.01:
            raise InvalidGeometry(
                f"source and mic {sep * 100:.2f} cm apart; need more than 1 cm"
            )


@dataclass
class Rir:
    """Impulse response taps at a fixed sample rate."""

    taps: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=np.float64)
        if self.taps.ndim != 1 or self.taps.size == 0:
            raise ValueError("taps must be a nonempty 1-D array")
        if not np.all(np.isfinite(self.taps)):
            raise ValueError("taps contain NaN or Inf")
        self.sample_rate_hz = int(self.sample_rate_hz)
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")


def inverse_sabine(
    rt60_s: float,
    dims_m: tuple[float, float, float],
    speed_of_sound_mps: float = SPEED_OF_SOUND_MPS,
    max_order_cap: int = MAX_ORDER_CAP,
    sabine_constant: float = SABINE_CONSTANT,
) -> tuple[float, int]:
    """Absorption coefficient and image order bound for a target decay time.

    absorption = k * V / (rt60 * S) with V the volume and S the total wall
    area; k defaults to 0.161 s/m but the exact 24*ln(10)/c variant can be
    passed instead. The order bound covers c * rt60 of propagation across the
    smallest dimension, capped to keep enumeration tractable.
    """
    lx, ly, lz = (float(v) for v in dims_m)
    if min(lx, ly, lz) <= 0 or rt60_s <= 0:
        raise InvalidGeometry(f"bad room for inverse sabine: dims={dims_m} rt60={rt60_s}")
    volume = lx * ly * lz
    surface = 2.0 * (lx * ly + ly * lz + lx * lz)
    absorption = sabine_constant * volume / (rt60_s * surface)
    if absorption > 1.0:
        raise AbsorptionInfeasible(
            f"absorption {absorption:.4f} > 1 for dims={dims_m}, rt60={rt60_s} s"
        )
    max_order = math.ceil(speed_of_sound_mps * rt60_s / min(lx, ly, lz))
    return absorption, min(max_order, max_order_cap)


def _frac_delay_kernel(delays: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tap indices and windowed-sinc weights for fractional sample delays.

    Hann window of width FRAC_DELAY_TAPS over a full-band sinc; at an exact
    integer delay the kernel collapses to a single unit tap.
    """
    base = np.ceil(delays - _HALF_KERNEL).astype(np.int64)
    idx = base[:, None] + np.arange(FRAC_DELAY_TAPS)[None, :]
    t = idx - delays[:, None]
    window = 0.5 * (1.0 + np.cos(2.0 * np.pi * t / FRAC_DELAY_TAPS))
    kernel = np.sinc(t) * window
    # snap delays that are integer up to float noise: the full-band sinc is
    # exactly a unit tap there, but sin(pi*t) evaluates to ~1e-16 instead of 0
    nearest = np.rint(t)
    near_int = np.abs(t - nearest) < 1e-9
    kernel[near_int] = (nearest[near_int] == 0.0).astype(np.float64)
    return idx, kernel


def simulate_rir(
    room: RoomSpec,
    sample_rate_hz: int,
    absorption: float | None = None,
    max_order: int | None = None,
) -> Rir:
    """Synthesize the room's impulse response at the given rate.

    `absorption` and `max_order` override the inverse-Sabine values when
    given (handy for pinning a free-field response with max_order=0).
    """
    fs = int(sample_rate_hz)
    if fs <= 0:
        raise ValueError("sample_rate_hz must be positive")
    if absorption is None or max_order is None:
        sab_absorption, sab_order = inverse_sabine(
            room.rt60_s,
            room.dims_m,
            speed_of_sound_mps=room.speed_of_sound_mps,
            max_order_cap=room.max_order_cap,
            sabine_constant=room.sabine_constant,
        )
        if absorption is None:
            absorption = sab_absorption
        if max_order is None:
            max_order = sab_order
    if not (0.0 <= absorption <= 1.0):
        raise AbsorptionInfeasible(f"absorption {absorption} outside [0, 1]")
    reflection = math.sqrt(1.0 - absorption)  # energy loss -> amplitude per bounce

    # Per axis: mirror parity p in {0,1} and lattice shift r give image
    # coordinate (1-2p)*src + 2*r*L and per-axis order |r+p| + |r|.
    span = (max_order + 1) // 2 + 1
    r = np.arange(-span, span + 1)
    axis_coord = []
    axis_order = []
    for src, dim in zip(room.source_m, room.dims_m):
        coords = np.empty(2 * r.size)
        orders = np.empty(2 * r.size, dtype=np.int64)
        for p in (0, 1):
            coords[p * r.size : (p + 1) * r.size] = (1 - 2 * p) * src + 2.0 * r * dim
            # image (1-2p)*src + 2rL reflects |r-p| times off one wall and
            # |r| times off the other
            orders[p * r.size : (p + 1) * r.size] = np.abs(r - p) + np.abs(r)
        axis_coord.append(coords)
        axis_order.append(orders)

    order = (
        axis_order[0][:, None, None]
        + axis_order[1][None, :, None]
        + axis_order[2][None, None, :]
    )
    keep = order <= max_order
    dx = axis_coord[0] - room.mic_m[0]
    dy = axis_coord[1] - room.mic_m[1]
    dz = axis_coord[2] - room.mic_m[2]
    dist_sq = (
        dx[:, None, None] ** 2 + dy[None, :, None] ** 2 + dz[None, None, :] ** 2
    )
    dists = np.sqrt(dist_sq[keep])
    orders = order[keep].astype(np.float64)

    amps = reflection**orders / (4.0 * np.pi * dists)
    delays = dists * fs / room.speed_of_sound_mps

    idx, weights = _frac_delay_kernel(delays)
    contrib = amps[:, None] * weights
    n = int(np.max(idx)) + 1
    flat_idx = idx.ravel()
    flat_val = contrib.ravel()
    causal = flat_idx >= 0  # drop kernel pre-ring that would land before t=0
    taps = np.bincount(flat_idx[causal], weights=flat_val[causal], minlength=n)
    return Rir(taps, fs)


def estimate_rt60(rir: Rir) -> float:
    """Decay time via the Schroeder integral.

    Backward-integrate tap energy, normalize to 0 dB, fit a least-squares
    line over the -5..-25 dB span, and extrapolate the 20 dB fit slope to a
    full 60 dB of decay.
    """
    fs = rir.sample_rate_hz
    if rir.taps.size < max(int(0.010 * fs), 2):
        raise ValueError("impulse response shorter than 10 ms")
    energy = np.cumsum((rir.taps**2)[::-1])[::-1]
    if energy[0] <= 0:
        raise DecayRangeUnavailable("impulse response carries no energy")
    nonzero = np.flatnonzero(energy > 0)
    energy = energy[: nonzero[-1] + 1]
    db = 10.0 * np.log10(energy / energy[0])
    top = np.flatnonzero(db <= _FIT_TOP_DB)
    bottom = np.flatnonzero(db <= _FIT_BOTTOM_DB)
    if top.size == 0 or bottom.size == 0:
        raise DecayRangeUnavailable(
            f"decay curve never reaches {_FIT_BOTTOM_DB} dB; cannot fit"
        )
    lo, hi = top[0], bottom[0]
    if hi <= lo:
        raise DecayRangeUnavailable("decay fit span is empty")
    t = np.arange(lo, hi + 1) / fs
    slope, _intercept = np.polyfit(t, db[lo : hi + 1], 1)
    if slope >= 0:
        raise DecayRangeUnavailable("energy decay curve is not decreasing")
    return -60.0 / slope


def sample_room(
    rng: np.random.Generator,
    rt60_range_s: tuple[float, float],
    dim_range_m: tuple[float, float],
    wall_margin_m: float = 0.5,
    min_separation_m: float = 1.0,
    sabine_constant: float = SABINE_CONSTANT,
) -> tuple[RoomSpec, int]:
    """Draw a feasible RoomSpec; returns it plus the count of rejected draws.

    Draw order per attempt: rt60, then the three dimensions; infeasible
    (absorption > 1) pairs are redrawn. Then source and mic positions,
    uniform inside the margin box, redrawn as a pair until separated.
    """
    rejected = 0
    for _ in range(_PLACEMENT_ATTEMPT_CAP):
        rt60 = rng.uniform(*rt60_range_s)
        dims = tuple(rng.uniform(dim_range_m[0], dim_range_m[1]) for _ in range(3))
        try:
            inverse_sabine(rt60, dims, sabine_constant=sabine_constant)
        except AbsorptionInfeasible:
            rejected += 1
            continue
        break
    else:
        raise InvalidGeometry(
            f"no feasible rt60/dims pair in {_PLACEMENT_ATTEMPT_CAP} draws for "
            f"rt60 range {rt60_range_s}, dim range {dim_range_m}"
        )
    if min(dims) <= 2 * wall_margin_m:
        raise InvalidGeometry(
            f"room {dims} too small for a {wall_margin_m} m wall margin"
        )
    for _ in range(_PLACEMENT_ATTEMPT_CAP):
        source = tuple(rng.uniform(wall_margin_m, d - wall_margin_m) for d in dims)
        mic = tuple(rng.uniform(wall_margin_m, d - wall_margin_m) for d in dims)
        if math.dist(source, mic) >= min_separation_m:
            return (
                RoomSpec(
                    dims_m=dims,
                    rt60_s=rt60,
                    source_m=source,
                    mic_m=mic,
                    sabine_constant=sabine_constant,
                ),
                rejected,
            )
    raise InvalidGeometry(
        f"could not place source/mic {min_separation_m} m apart in room {dims}"
    )
