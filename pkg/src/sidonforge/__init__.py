"""Deterministic speech-degradation toolkit.

Builds paired clean/degraded corpora by pushing each utterance through up to
six chained degradations (room reverb, additive noise, band limitation,
amplitude clipping, lossy codec, packet loss), each applied by an independent
coin flip with parameters drawn from documented ranges. Every output carries
a replayable record of exactly what was done to it.
"""

from .audio import (
    SUPPORTED_RATES,
    Waveform,
    fft_convolve,
    read_wav,
    resample,
    rms,
    wav_info,
    write_wav,
)
from .codec import CodecBackend, TranscodeResult, mp3_lame_backend, transcode
from .degrade import (
    OP_ORDER,
    DegradationConfig,
    DegradationRecord,
    OpRecord,
    apply,
    op_bandlimit,
    op_clip,
    op_codec,
    op_mix_noise,
    op_packet_loss,
    op_reverb,
    sample_params,
)
from .errors import (
    AbsorptionInfeasible,
    AlignmentFailure,
    BackendFailure,
    BackendUnavailable,
    DecayRangeUnavailable,
    EmptyPool,
    FatalConfig,
    InvalidGeometry,
    IoError,
    MalformedWav,
    RateMismatch,
    SidonForgeError,
    SilentResidual,
    SilentSignal,
    UnsupportedEncoding,
    UnsupportedRate,
)
from .noise import NoiseDraw, NoiseEntry, NoisePool, build_index, draw_noise, load_index
from .oracles import (
    ValidationReport,
    band_energy_above,
    measure_snr,
    measure_zero_runs,
    validate_manifest,
)
from .pipeline import (
    MANIFEST_SCHEMA,
    PipelineConfig,
    RtfReport,
    RunSummary,
    bench_rtf,
    derive_seed,
    load_config,
    run_pipeline,
)
from .rir import Rir, RoomSpec, estimate_rt60, inverse_sabine, sample_room, simulate_rir

__version__ = "0.1.0"
