"""Command-line surface.

Verbs: degrade (run the pipeline), rir (synthesize one impulse response),
index-noise (build a noise-pool index), validate (re-check a manifest
against the oracles), bench (RTF harness), inspect (manifest stats).

Exit codes: 0 success, 1 fatal error before/while starting, 2 completed
with per-item failures.
"""

from __future__ import annotations

import argparse
import json
import logging
import shlex
import subprocess
import sys
import tempfile
from collections import Counter
from pathlib import Path

import numpy as np

from .audio import Waveform, read_wav, write_wav
from .codec import CodecBackend
from .errors import DecayRangeUnavailable, FatalConfig, SidonForgeError
from .noise import build_index, load_index
from .oracles import validate_manifest
from .pipeline import (
    PipelineConfig,
    RunSummary,
    bench_rtf,
    load_config,
    run_pipeline,
)
from .rir import Rir, RoomSpec, estimate_rt60, simulate_rir

log = logging.getLogger("sidonforge")

_CONFIG_KEY_DOC = """\
config file keys (TOML; flags override the file):
  clean_root                 directory of clean WAVs (required)
  out_root                   output tree, disjoint from clean_root (required)
  noise_index                noise-pool JSONL (required unless probability 0)
  corpus_map                 JSON prefix rules adding dataset_name/language
  global_seed                master seed, default 0
  variants_per_utterance     default 4
  workers                    default: all cores
  output_bit_depth           16 | 24 | 32f, default 16

[degradation]
  per_op_probability         default 0.5
  rt60_range_s               default [0.1, 2.0]
  room_dim_range_m           default [2.0, 20.0]
  snr_range_db               default [-5.0, 20.0]
  bandlimit_rates_hz         default [8000, 16000, 22050, 24000, 44100, 48000]
  clip_lo_quantile_range     default [0.0, 0.10]
  clip_hi_quantile_range     default [0.90, 1.00]
  mp3_bitrate_range_kbps     default [65.0, 245.0]
  packet_loss_total_fraction default 0.09
  packet_segment_range_ms    default [20.0, 200.0]

[codec]
  kind                       identity | external, default identity
  encode_cmd / decode_cmd    templates with {input} {output} {bitrate_kbps}
  supported_rates_hz         rates the external coder accepts
  max_concurrent             cap on simultaneous coder subprocesses
"""


def _triple(text: str) -> tuple[float, float, float]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected x,y,z, got {text!r}")
    return tuple(parts)


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(","))


def cmd_degrade(args) -> int:
    overrides = {
        "clean_root": args.clean_root,
        "out_root": args.out_root,
        "noise_index": args.noise_index,
        "global_seed": args.seed,
        "variants_per_utterance": args.variants,
        "workers": args.workers,
        "output_bit_depth": args.bit_depth,
        "per_op_probability": args.probability,
    }
    cfg = load_config(args.config, overrides)
    print(json.dumps(cfg.to_json(), indent=2, sort_keys=True))
    if args.dry_run:
        return 0
    summary = run_pipeline(cfg, progress=True)
    _print_summary(summary)
    return 2 if summary.failures else 0


def _print_summary(s: RunSummary) -> None:
    print(
        f"degraded {s.utterances} utterances -> "
        f"{s.variants_written} written + {s.variants_reused} reused variants"
    )
    print(
        f"audio: {s.hours_in:.3f} h in, {s.hours_out:.3f} h out; "
        f"wall {s.wall_seconds:.1f} s"
    )
    if s.failures:
        print(f"{len(s.failures)} task(s) failed:", file=sys.stderr)
        for failure in s.failures[:20]:
            print(
                f"  {failure['utterance_id']} v{failure['variant_index']}: "
                f"[{failure['error']}] {failure['message']}",
                file=sys.stderr,
            )
        if len(s.failures) > 20:
            print(f"  ... and {len(s.failures) - 20} more", file=sys.stderr)


def cmd_rir(args) -> int:
    room = RoomSpec(
        dims_m=args.dims,
        rt60_s=args.rt60,
        source_m=args.src,
        mic_m=args.mic,
        max_order_cap=args.max_order_cap,
    )
    rir = simulate_rir(room, args.rate)
    write_wav(Waveform(rir.taps, rir.sample_rate_hz), args.out, bit_depth="32f")
    print(f"wrote {args.out}: {rir.taps.size} taps at {args.rate} Hz")
    if args.estimate:
        try:
            print(f"estimated rt60: {estimate_rt60(rir):.3f} s (target {args.rt60:g} s)")
        except DecayRangeUnavailable as exc:
            print(f"rt60 estimate unavailable: {exc}", file=sys.stderr)
    return 0


def cmd_index_noise(args) -> int:
    root = Path(args.root)
    if args.convert_cmd:
        converted = 0
        for path in sorted(root.rglob("*")):
            if not path.is_file() or path.suffix.lower() == ".wav":
                continue
            target = path.with_suffix(".wav")
            if target.exists():
                continue
            argv = [
                part.format(input=str(path), output=str(target))
                for part in shlex.split(args.convert_cmd)
            ]
            proc = subprocess.run(argv, capture_output=True)
            if proc.returncode != 0:
                log.warning(
                    "conversion failed for %s: %s",
                    path,
                    proc.stderr.decode(errors="replace")[-200:],
                )
            else:
                converted += 1
        if converted:
            print(f"converted {converted} file(s) to WAV")
    pool = build_index(root, args.out)
    print(f"indexed {len(pool)} noise file(s) -> {args.out}")
    if pool.skipped:
        report = Path(args.out).with_name(Path(args.out).name + ".skipped.jsonl")
        with open(report, "w", encoding="utf-8") as f:
            for file_id, reason in pool.skipped:
                f.write(json.dumps({"id": file_id, "reason": reason}) + "\n")
        print(f"skipped {len(pool.skipped)} file(s), see {report}", file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    pool = None
    backend = CodecBackend()
    clean_root = args.clean_root
    if args.config:
        cfg = load_config(args.config, {})
        backend = cfg.codec
        if cfg.noise_index is not None:
            pool = load_index(cfg.noise_index)
        if clean_root is None:
            clean_root = cfg.clean_root
    if args.noise_index:
        pool = load_index(args.noise_index)
    if clean_root is None:
        raise FatalConfig("validate needs --clean-root or --config")
    report = validate_manifest(
        args.manifest, clean_root, pool, backend, limit=args.limit
    )
    print(json.dumps(report.to_json(), indent=2))
    print(
        f"validated {report.entries} entries: {len(report.checks)} checks, "
        f"{len(report.failures)} failed",
        file=sys.stderr,
    )
    for check in report.failures[:50]:
        print(
            f"  {check.utterance_id} v{check.variant_index} {check.op}/"
            f"{check.check}: {check.detail}",
            file=sys.stderr,
        )
    if args.report:
        Path(args.report).write_text(
            json.dumps(report.to_json(), indent=2) + "\n", encoding="utf-8"
        )
    return 0 if report.ok else 2


def cmd_bench(args) -> int:
    if args.config:
        cfg = load_config(args.config, {})
        reports = bench_rtf(
            cfg, args.batches, args.duration, args.rate, args.repeats
        )
    else:
        # self-contained: synthetic noise pool and identity codec
        with tempfile.TemporaryDirectory(prefix="sidonforge-bench-") as td:
            noise_dir = Path(td) / "noise"
            noise_dir.mkdir()
            rng = np.random.default_rng(0)
            write_wav(
                Waveform(rng.standard_normal(5 * 16000) * 0.05, 16000),
                noise_dir / "bench_noise.wav",
            )
            index = Path(td) / "noise_index.jsonl"
            build_index(noise_dir, index)
            cfg = PipelineConfig(
                clean_root=Path(td) / "unused_in",
                out_root=Path(td) / "unused_out",
                noise_index=index,
            )
            reports = bench_rtf(
                cfg, args.batches, args.duration, args.rate, args.repeats
            )
    if args.json:
        print(json.dumps([r.to_json() for r in reports], indent=2))
        return 0
    print(f"{'batch':>5} {'audio s':>8} {'wall s':>8} {'rtf':>10}")
    for r in reports:
        print(
            f"{r.batch_size:>5} {r.audio_seconds:>8.1f} "
            f"{r.wall_seconds:>8.3f} {r.rtf:>10.6f}"
        )
        stages = ", ".join(
            f"{op} {sec:.3f}s" for op, sec in sorted(r.stage_seconds.items())
        )
        print(f"      stages: {stages}")
    return 0


def _print_hist(label: str, values: list[float], unit: str, bins: int = 8) -> None:
    if not values:
        return
    lo, hi = min(values), max(values)
    if lo == hi:
        print(f"  {label}: all {lo:g} {unit} ({len(values)} draws)")
        return
    counts, edges = np.histogram(values, bins=bins, range=(lo, hi))
    peak = counts.max()
    print(f"  {label} ({unit}):")
    for k, n in enumerate(counts):
        bar = "#" * max(1 if n else 0, round(30 * n / peak))
        print(f"    {edges[k]:>8.2f}..{edges[k + 1]:<8.2f} {n:>5} {bar}")


def cmd_inspect(args) -> int:
    lines = Path(args.manifest).read_text(encoding="utf-8").splitlines()
    entries = [json.loads(line) for line in lines if line.strip()]
    if not entries:
        print("manifest is empty")
        return 0
    utterances = {e["utterance_id"] for e in entries}
    hours = sum(e["duration_s"] for e in entries) / 3600.0
    rates = Counter(e["sample_rate_hz"] for e in entries)
    applied = Counter()
    params: dict[str, list[float]] = {
        "rt60_s": [], "snr_db": [], "bitrate_kbps": [], "loss_fraction": []
    }
    intermediates = Counter()
    for e in entries:
        for op in e["record"]["ops"]:
            if not op["applied"]:
                continue
            applied[op["op"]] += 1
            for key, bucket in params.items():
                if key in op["params"]:
                    bucket.append(float(op["params"][key]))
            if op["op"] == "bandlimit":
                intermediates[op["params"]["intermediate_rate_hz"]] += 1
    print(f"{len(entries)} variants of {len(utterances)} utterances, {hours:.3f} h")
    print("sample rates: " + ", ".join(f"{r} Hz x{n}" for r, n in sorted(rates.items())))
    print("op application rates:")
    for op in ("reverb", "noise", "bandlimit", "clip", "codec", "packet_loss"):
        print(f"  {op:<12} {applied.get(op, 0) / len(entries):.3f}")
    print("parameter histograms:")
    _print_hist("rt60", params["rt60_s"], "s")
    _print_hist("snr", params["snr_db"], "dB")
    _print_hist("mp3 bitrate", params["bitrate_kbps"], "kbps")
    if intermediates:
        print("  bandlimit intermediate rates:")
        for rate, n in sorted(intermediates.items()):
            print(f"    {rate:>6} Hz {n:>5}")
    langs = Counter(e.get("language") for e in entries if e.get("language"))
    if langs:
        print("languages: " + ", ".join(f"{k} x{v}" for k, v in langs.most_common()))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sidonforge",
        description="Deterministic speech-degradation pipeline",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser(
        "degrade",
        help="degrade a clean corpus tree",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=_CONFIG_KEY_DOC,
    )
    p.add_argument("--config", required=True, help="TOML config file")
    p.add_argument("--clean-root")
    p.add_argument("--out-root")
    p.add_argument("--noise-index")
    p.add_argument("--seed", type=int, dest="seed")
    p.add_argument("--variants", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--bit-depth", choices=("16", "24", "32f"), dest="bit_depth")
    p.add_argument("--probability", type=float,
                   help="override the per-op application probability")
    p.add_argument("--dry-run", action="store_true",
                   help="validate config, print it, touch nothing")
    p.set_defaults(func=cmd_degrade)

    p = sub.add_parser("rir", help="synthesize one room impulse response")
    p.add_argument("--rt60", type=float, required=True)
    p.add_argument("--dims", type=_triple, required=True, metavar="X,Y,Z")
    p.add_argument("--src", "--source", type=_triple, required=True,
                   metavar="X,Y,Z", dest="src")
    p.add_argument("--mic", type=_triple, required=True, metavar="X,Y,Z")
    p.add_argument("--rate", type=int, default=48000)
    p.add_argument("--out", required=True)
    p.add_argument("--max-order-cap", type=int, default=32)
    p.add_argument("--estimate", action="store_true",
                   help="also print the Schroeder rt60 estimate")
    p.set_defaults(func=cmd_rir)

    p = sub.add_parser("index-noise", help="index a noise directory")
    p.add_argument("--root", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--convert-cmd",
                   help="command template with {input}/{output} run on non-WAV files")
    p.set_defaults(func=cmd_index_noise)

    p = sub.add_parser("validate", help="re-check a manifest against the oracles")
    p.add_argument("--manifest", required=True)
    p.add_argument("--clean-root")
    p.add_argument("--noise-index")
    p.add_argument("--config")
    p.add_argument("--limit", type=int)
    p.add_argument("--report", help="write the JSON report here")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("bench", help="real-time-factor harness, all ops forced on")
    p.add_argument("--config")
    p.add_argument("--batches", type=_int_list, default=(1, 2, 4, 8))
    p.add_argument("--duration", type=float, default=30.0)
    p.add_argument("--rate", type=int, default=16000)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="summarize a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except SidonForgeError as exc:
        print(f"error[{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
