"""The six degradation operators, the parameter sampler, and apply()."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sidonforge.audio import Waveform, rms
from sidonforge.codec import CodecBackend
from sidonforge.degrade import (
    OP_ORDER,
    DegradationConfig,
    DegradationRecord,
    apply,
    draw_loss_segments,
    op_bandlimit,
    op_clip,
    op_mix_noise,
    op_packet_loss,
    op_reverb,
    quantile_thresholds,
    sample_params,
)
from sidonforge.errors import RateMismatch, SilentSignal, UnsupportedRate
from sidonforge.rir import Rir, RoomSpec, estimate_rt60

from conftest import speechish


def tone(freq, fs, dur, amp=1.0):
    t = np.arange(int(fs * dur)) / fs
    return Waveform(amp * np.sin(2 * np.pi * freq * t), fs)


def peak_amp(w, freq):
    a = len(w) // 10
    sl = w.samples[a : len(w) - a]
    spec = np.abs(np.fft.rfft(sl)) * 2.0 / len(sl)
    return float(spec[int(round(freq * len(sl) / w.sample_rate_hz))])


class TestSampler:
    def test_six_ops_in_order(self):
        rec = sample_params(DegradationConfig(), np.random.default_rng(0))
        assert [o.op for o in rec.ops] == list(OP_ORDER)
        assert OP_ORDER == (
            "reverb", "noise", "bandlimit", "clip", "codec", "packet_loss",
        )

    def test_probability_zero(self):
        cfg = DegradationConfig(per_op_probability=0.0)
        rec = sample_params(cfg, np.random.default_rng(1))
        assert all(not o.applied for o in rec.ops)
        assert all(o.params == {} for o in rec.ops)

    def test_probability_one_ranges(self):
        cfg = DegradationConfig(per_op_probability=1.0)
        for seed in range(40):
            rec = sample_params(cfg, np.random.default_rng(seed))
            assert all(o.applied for o in rec.ops)
            by = {o.op: o.params for o in rec.ops}
            assert cfg.rt60_range_s[0] <= by["reverb"]["rt60_s"] <= cfg.rt60_range_s[1]
            for d in by["reverb"]["dims_m"]:
                assert cfg.room_dim_range_m[0] <= d <= cfg.room_dim_range_m[1]
            assert cfg.snr_range_db[0] <= by["noise"]["snr_db"] <= cfg.snr_range_db[1]
            assert by["bandlimit"]["intermediate_rate_hz"] in cfg.bandlimit_rates_hz
            assert 0.0 <= by["clip"]["lo_quantile"] <= 0.10
            assert 0.90 <= by["clip"]["hi_quantile"] <= 1.00
            assert 65.0 <= by["codec"]["bitrate_kbps"] <= 245.0
            assert by["packet_loss"]["loss_fraction"] == 0.09
            assert by["packet_loss"]["segment_range_ms"] == [20.0, 200.0]

    def test_deterministic(self):
        a = sample_params(DegradationConfig(), np.random.default_rng(42))
        b = sample_params(DegradationConfig(), np.random.default_rng(42))
        assert a.to_json() == b.to_json()

    def test_seed_and_variant_echoed(self):
        rec = sample_params(
            DegradationConfig(), np.random.default_rng(0), rng_seed=777, variant_index=2
        )
        assert (rec.rng_seed, rec.variant_index) == (777, 2)

    def test_record_json_roundtrip(self):
        rec = sample_params(
            DegradationConfig(per_op_probability=1.0), np.random.default_rng(9)
        )
        back = DegradationRecord.from_json(rec.to_json())
        assert back.to_json() == rec.to_json()

    def test_config_validation(self):
        with pytest.raises(ValueError):
            DegradationConfig(per_op_probability=1.5).validate()
        with pytest.raises(ValueError):
            DegradationConfig(snr_range_db=(20.0, -5.0)).validate()
        with pytest.raises(ValueError):
            DegradationConfig(bandlimit_rates_hz=(8000, 11025)).validate()
        with pytest.raises(ValueError):
            DegradationConfig(packet_loss_total_fraction=1.0).validate()


class TestQuantiles:
    def test_interpolated_low_threshold(self):
        x = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])
        t_lo, t_hi = quantile_thresholds(x, 0.05, 1.0)
        assert t_lo == pytest.approx(-0.9, abs=1e-12)
        assert t_hi == 1.0

    @staticmethod
    def slow_quantile(values, q):
        """Sort-and-interpolate reference in plain Python."""
        s = sorted(float(v) for v in values)
        pos = q * (len(s) - 1)
        i = int(math.floor(pos))
        if i >= len(s) - 1:
            return s[-1]
        return s[i] + (pos - i) * (s[i + 1] - s[i])

    @settings(max_examples=60, deadline=None)
    @given(
        seed=st.integers(0, 2 ** 32 - 1),
        n=st.integers(2, 300),
        lo=st.floats(0.0, 0.10),
        hi=st.floats(0.90, 1.00),
    )
    def test_matches_sorted_interpolation_exactly(self, seed, n, lo, hi):
        x = np.random.default_rng(seed).standard_normal(n)
        t_lo, t_hi = quantile_thresholds(x, lo, hi)
        assert t_lo == self.slow_quantile(x, lo)
        assert t_hi == self.slow_quantile(x, hi)
        # numpy's lerp associates differently; agreement within an ulp or two
        assert t_lo == pytest.approx(float(np.quantile(x, lo)), rel=1e-12, abs=1e-15)
        assert t_hi == pytest.approx(float(np.quantile(x, hi)), rel=1e-12, abs=1e-15)

    def test_out_of_range_quantile(self):
        with pytest.raises(ValueError):
            quantile_thresholds(np.zeros(4), -0.1, 0.9)


class TestClip:
    def test_full_range_is_identity(self):
        x = np.random.default_rng(0).standard_normal(500)
        out = op_clip(Waveform(x, 16000), 0.0, 1.0)
        assert np.array_equal(out.samples, x)

    def test_worked_values(self):
        w = Waveform(np.array([-1.0, -0.5, 0.0, 0.5, 1.0]), 16000)
        out = op_clip(w, 0.05, 1.0)
        assert np.allclose(out.samples, [-0.9, -0.5, 0.0, 0.5, 1.0], atol=1e-12)

    def test_constant_signal_unchanged(self):
        w = Waveform(np.full(64, 0.3), 16000)
        out = op_clip(w, 0.07, 0.93)
        assert np.array_equal(out.samples, w.samples)

    def test_interior_samples_bitwise_unchanged(self):
        x = np.random.default_rng(1).standard_normal(2000)
        out = op_clip(Waveform(x, 16000), 0.05, 0.95)
        t_lo, t_hi = quantile_thresholds(x, 0.05, 0.95)
        inside = (x >= t_lo) & (x <= t_hi)
        assert np.array_equal(out.samples[inside], x[inside])
        assert out.samples.min() == t_lo and out.samples.max() == t_hi

    def test_positive_signal_gets_floor(self):
        x = np.random.default_rng(2).uniform(0.2, 1.0, 1000)
        out = op_clip(Waveform(x, 16000), 0.10, 1.0)
        t_lo, _ = quantile_thresholds(x, 0.10, 1.0)
        assert t_lo > 0
        assert out.samples.min() == t_lo  # raised, not zeroed


class TestMixNoise:
    def test_gain_snr20(self):
        w = Waveform(np.full(1000, 0.1), 16000)
        noise = Waveform(np.full(1500, 0.1), 16000)
        out = op_mix_noise(w, noise, 20.0)
        # g = (0.1/0.1) * 10^-1 = 0.1
        assert np.allclose(out.samples, 0.1 + 0.1 * 0.1, atol=1e-12)

    def test_gain_snr0_equal_rms(self):
        rng = np.random.default_rng(10)
        x = rng.standard_normal(4000)
        n = rng.standard_normal(4000)
        n *= rms(Waveform(x, 16000)) / rms(Waveform(n, 16000))
        out = op_mix_noise(Waveform(x, 16000), Waveform(n, 16000), 0.0)
        gain = (out.samples - x) / n
        assert np.allclose(gain, 1.0, atol=1e-9)

    def test_gain_snr_minus5(self):
        rng = np.random.default_rng(11)
        x = rng.standard_normal(4000)
        n = rng.standard_normal(4000)
        n *= rms(Waveform(x, 16000)) / rms(Waveform(n, 16000))
        out = op_mix_noise(Waveform(x, 16000), Waveform(n, 16000), -5.0)
        gain = (out.samples - x) / n
        assert np.allclose(gain, 10 ** 0.25, atol=1e-9)
        assert 10 ** 0.25 == pytest.approx(1.7783, abs=1e-4)

    def test_empirical_snr_exact(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            x = rng.standard_normal(3000)
            n = rng.standard_normal(4000)
            snr = rng.uniform(-5, 20)
            out = op_mix_noise(Waveform(x, 16000), Waveform(n, 16000), snr)
            added = out.samples - x
            got = 20 * math.log10(
                rms(Waveform(x, 16000)) / rms(Waveform(added, 16000))
            )
            assert abs(got - snr) <= 1e-6

    def test_gain_uses_truncated_segment_only(self):
        x = np.random.default_rng(12).standard_normal(100)
        n = np.concatenate([np.full(100, 0.1), np.full(100, 10.0)])
        out = op_mix_noise(Waveform(x, 16000), Waveform(n, 16000), 0.0)
        added = out.samples - x
        got = 20 * math.log10(rms(Waveform(x, 16000)) / rms(Waveform(added, 16000)))
        assert abs(got) <= 1e-9  # loud unused tail must not skew the gain

    def test_silent_operands(self):
        live = Waveform(np.ones(100), 16000)
        dead = Waveform(np.zeros(100), 16000)
        with pytest.raises(SilentSignal):
            op_mix_noise(dead, live, 0.0)
        with pytest.raises(SilentSignal):
            op_mix_noise(live, dead, 0.0)

    def test_rate_mismatch(self):
        with pytest.raises(RateMismatch):
            op_mix_noise(
                Waveform(np.ones(10), 16000), Waveform(np.ones(10), 8000), 0.0
            )

    def test_short_noise_rejected(self):
        with pytest.raises(ValueError):
            op_mix_noise(
                Waveform(np.ones(100), 16000), Waveform(np.ones(50), 16000), 0.0
            )


class TestBandlimit:
    def test_same_rate_is_transparent(self):
        w = tone(1000.0, 48000, 0.5)
        out = op_bandlimit(w, 48000)
        err_db = 20 * math.log10(peak_amp(out, 1000.0))
        assert abs(err_db) <= 0.01

    def test_ten_khz_removed_via_8k(self):
        w = tone(10_000.0, 48000, 1.0)
        out = op_bandlimit(w, 8000)
        assert 20 * math.log10(max(peak_amp(out, 10_000.0), 1e-30)) <= -60.0

    def test_one_khz_survives_via_8k(self):
        w = tone(1000.0, 48000, 1.0)
        out = op_bandlimit(w, 8000)
        assert abs(20 * math.log10(peak_amp(out, 1000.0))) <= 0.1

    @pytest.mark.parametrize("inter", [8000, 16000, 22050, 24000, 44100, 48000])
    def test_length_and_rate_preserved(self, inter):
        w = Waveform(np.random.default_rng(3).standard_normal(48013), 48000)
        out = op_bandlimit(w, inter)
        assert len(out) == len(w) and out.sample_rate_hz == 48000

    def test_unsupported_intermediate(self):
        with pytest.raises(UnsupportedRate):
            op_bandlimit(tone(440.0, 16000, 0.1), 11025)


class TestPacketLoss:
    def test_thirty_second_budget(self):
        x = np.random.default_rng(99).standard_normal(480000) * 0.1
        out = op_packet_loss(
            Waveform(x, 16000), 0.09, (20.0, 200.0), np.random.default_rng(0)
        )
        zeroed = int(np.sum(out.samples == 0.0))
        assert 43200 <= zeroed <= 46400

    def test_run_lengths_within_drawn_range(self):
        x = np.random.default_rng(99).standard_normal(480000) * 0.1
        out = op_packet_loss(
            Waveform(x, 16000), 0.09, (20.0, 200.0), np.random.default_rng(1)
        )
        mask = out.samples == 0.0
        edges = np.flatnonzero(np.diff(np.concatenate([[0], mask.view(np.int8), [0]])))
        runs = edges[1::2] - edges[::2]
        lo = 20.0 * 16000 / 1000 - 1
        hi = 200.0 * 16000 / 1000 + 1
        assert runs.size > 0
        assert np.all((runs >= lo) & (runs <= hi))

    def test_zero_fraction_is_identity(self):
        x = np.random.default_rng(5).standard_normal(8000)
        out = op_packet_loss(
            Waveform(x, 16000), 0.0, (20.0, 200.0), np.random.default_rng(0)
        )
        assert np.array_equal(out.samples, x)

    def test_deterministic(self):
        x = np.random.default_rng(6).standard_normal(64000)
        a = op_packet_loss(Waveform(x, 16000), 0.09, (20.0, 200.0),
                           np.random.default_rng(4))
        b = op_packet_loss(Waveform(x, 16000), 0.09, (20.0, 200.0),
                           np.random.default_rng(4))
        assert np.array_equal(a.samples, b.samples)

    def test_segments_never_touch(self):
        spans = draw_loss_segments(
            480000, 16000, 0.09, (20.0, 200.0), np.random.default_rng(2)
        )
        assert spans == sorted(spans)
        for (s1, l1), (s2, _l2) in zip(spans, spans[1:]):
            assert s2 > s1 + l1  # a shared edge would merge two runs

    def test_signal_shorter_than_max_segment(self):
        with pytest.raises(ValueError):
            draw_loss_segments(1000, 16000, 0.09, (20.0, 200.0),
                               np.random.default_rng(0))


class TestReverbOp:
    ROOM = RoomSpec((6, 5, 4), 0.5, (1.5, 2.0, 1.2), (4.5, 3.0, 2.8))

    def test_length_preserved(self):
        w = Waveform(speechish(np.random.default_rng(8), 8000, 16000), 16000)
        out = op_reverb(w, self.ROOM)
        assert len(out) == len(w) and out.sample_rate_hz == 16000

    def test_near_identity_geometry(self):
        # rt60 chosen so inverse sabine lands on absorption 1: every
        # reflection dies and only the 0.1 m direct path remains
        dims = (6.0, 5.0, 4.0)
        rt60 = 0.161 * 120.0 / 148.0
        room = RoomSpec(dims, rt60, (2.0, 2.0, 2.0), (2.1, 2.0, 2.0))
        w = tone(1000.0, 16000, 0.5)
        out = op_reverb(w, room)
        want_gain = 1.0 / (4 * math.pi * 0.1)
        assert rms(out) / rms(w) == pytest.approx(want_gain, rel=0.02)

    def test_click_decay_matches_target(self):
        click = np.zeros(16000)
        click[0] = 1.0
        room = RoomSpec(
            (6, 5, 4), 0.8, (1.5, 2.0, 1.2), (4.5, 3.0, 2.8), max_order_cap=48
        )
        out = op_reverb(Waveform(click, 16000), room)
        est = estimate_rt60(Rir(out.samples, 16000))
        assert abs(est - 0.8) / 0.8 <= 0.25


class TestApply:
    def _record(self, flags, params=None):
        from sidonforge.degrade import OpRecord

        params = params or {}
        ops = [
            OpRecord(name, name in flags, dict(params.get(name, {})))
            for name in OP_ORDER
        ]
        return DegradationRecord(rng_seed=0, variant_index=0, ops=ops)

    def test_all_flags_false_is_bit_exact(self):
        w = Waveform(np.random.default_rng(20).standard_normal(5000), 16000)
        out = apply(w, self._record(set()), None, CodecBackend())
        assert out is not w
        assert np.array_equal(out.samples, w.samples)

    def test_fullrange_clip_only_is_identity(self):
        w = Waveform(np.random.default_rng(21).standard_normal(5000), 16000)
        rec = self._record({"clip"}, {"clip": {"lo_quantile": 0.0, "hi_quantile": 1.0}})
        out = apply(w, rec, None, CodecBackend())
        assert np.array_equal(out.samples, w.samples)

    def test_replay_is_bit_identical(self, noise_index):
        from sidonforge.noise import load_index

        pool = load_index(noise_index)
        w = Waveform(speechish(np.random.default_rng(22), 16000, 16000), 16000)
        rec = sample_params(
            DegradationConfig(per_op_probability=1.0, room_dim_range_m=(4.0, 8.0),
                              rt60_range_s=(0.2, 0.5)),
            np.random.default_rng(1234),
        )
        a = apply(w, rec, pool, CodecBackend())
        b = apply(w, DegradationRecord.from_json(rec.to_json()), pool, CodecBackend())
        assert np.array_equal(a.samples, b.samples)
        assert len(a) == len(w) and a.sample_rate_hz == w.sample_rate_hz

    def test_short_signal_downgrades_packet_loss(self):
        w = Waveform(np.random.default_rng(23).standard_normal(1600), 16000)  # 0.1 s
        rec = self._record(
            {"packet_loss"},
            {"packet_loss": {
                "loss_fraction": 0.09,
                "segment_range_ms": [20.0, 200.0],
                "segment_seed": 7,
            }},
        )
        out = apply(w, rec, None, CodecBackend())
        assert np.array_equal(out.samples, w.samples)
        pl = rec.ops[5]
        assert not pl.applied and pl.params["skipped_short_signal"] is True
