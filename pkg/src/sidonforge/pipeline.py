"""Corpus-level orchestration: config loading, seeding, runs, benchmarks.

A run walks every WAV under the clean root, derives one seed per
(utterance, variant) pair, samples a degradation record, renders the
degraded file into a mirrored tree, and appends the record to a JSONL
manifest. Interrupted runs resume from the journal; finished manifests are
sorted and written atomically, so two runs with the same config and seed
produce byte-identical manifests regardless of worker count.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import multiprocessing
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # 3.10
    import tomli as tomllib

from . import codec as codec_mod
from .audio import Waveform, read_wav, rms, wav_info, write_wav
from .codec import CodecBackend
from .degrade import DegradationConfig, DegradationRecord, apply, sample_params
from .errors import FatalConfig, IoError, SidonForgeError
from .noise import NoisePool, load_index

MANIFEST_SCHEMA = "sidon_forge_manifest_v1"
MANIFEST_NAME = "manifest.jsonl"
JOURNAL_NAME = "manifest.partial.jsonl"
FAILURES_NAME = "failures.jsonl"
CONFIG_ECHO_NAME = "effective_config.json"

BIT_DEPTHS = ("16", "24", "32f")


def derive_seed(global_seed: int, utterance_id: str, variant_index: int) -> int:
    """Stable 64-bit task seed: blake2b of \"seed:variant:id\", little-endian."""
    msg = f"{global_seed}:{variant_index}:{utterance_id}".encode("utf-8")
    return int.from_bytes(hashlib.blake2b(msg, digest_size=8).digest(), "little")


@dataclass
class PipelineConfig:
    clean_root: Path
    out_root: Path
    noise_index: Path | None = None
    corpus_map: Path | None = None
    global_seed: int = 0
    variants_per_utterance: int = 4
    workers: int = 1
    output_bit_depth: str = "16"
    degradation: DegradationConfig = field(default_factory=DegradationConfig)
    codec: CodecBackend = field(default_factory=CodecBackend)

    def validate(self) -> None:
        try:
            self.degradation.validate()
        except ValueError as exc:
            raise FatalConfig(f"degradation config: {exc}") from exc
        if self.variants_per_utterance < 1:
            raise FatalConfig("variants_per_utterance must be at least 1")
        if self.workers < 1:
            raise FatalConfig("workers must be at least 1")
        if self.output_bit_depth not in BIT_DEPTHS:
            raise FatalConfig(
                f"output_bit_depth {self.output_bit_depth!r} not in {BIT_DEPTHS}"
            )
        clean = Path(self.clean_root).resolve()
        out = Path(self.out_root).resolve()
        if clean == out or clean in out.parents or out in clean.parents:
            raise FatalConfig("clean_root and out_root must be disjoint trees")
        if self.noise_index is None and self.degradation.per_op_probability > 0:
            raise FatalConfig("noise_index is required when ops can apply")

    def to_json(self) -> dict:
        def convert(value):
            if isinstance(value, Path):
                return str(value)
            if dataclasses.is_dataclass(value):
                return {
                    f.name: convert(getattr(value, f.name))
                    for f in dataclasses.fields(value)
                }
            if isinstance(value, tuple):
                return list(value)
            return value

        return convert(self)


_TOP_LEVEL_KEYS = {
    "clean_root",
    "out_root",
    "noise_index",
    "corpus_map",
    "global_seed",
    "variants_per_utterance",
    "workers",
    "output_bit_depth",
    "degradation",
    "codec",
}
_PATH_KEYS = ("clean_root", "out_root", "noise_index", "corpus_map")


def _build_section(cls, obj: dict, section: str):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(obj) - names
    if unknown:
        raise FatalConfig(f"unknown keys in [{section}]: {sorted(unknown)}")
    fixed = {}
    for key, value in obj.items():
        if isinstance(value, list):
            value = tuple(value)
        fixed[key] = value
    try:
        return cls(**fixed)
    except (TypeError, ValueError) as exc:
        raise FatalConfig(f"bad [{section}] section: {exc}") from exc


def load_config(path: str | Path, overrides: dict | None = None) -> PipelineConfig:
    """Parse a TOML config file; `overrides` (flag values) win over the file.

    Relative paths in the file resolve against the file's directory; override
    paths resolve against the caller's cwd.
    """
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except OSError as exc:
        raise FatalConfig(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise FatalConfig(f"{path}: {exc}") from exc
    unknown = set(raw) - _TOP_LEVEL_KEYS
    if unknown:
        raise FatalConfig(f"unknown config keys: {sorted(unknown)}")
    base = path.parent
    fields: dict = {}
    for key in _PATH_KEYS:
        if key in raw:
            fields[key] = (base / raw.pop(key)).resolve()
    degradation = _build_section(
        DegradationConfig, raw.pop("degradation", {}), "degradation"
    )
    codec = _build_section(CodecBackend, raw.pop("codec", {}), "codec")
    fields.update(raw)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key in _PATH_KEYS:
            fields[key] = Path(value).resolve()
        elif key == "per_op_probability":
            degradation = dataclasses.replace(degradation, per_op_probability=value)
            continue
        else:
            fields[key] = value
    missing = {"clean_root", "out_root"} - set(fields)
    if missing:
        raise FatalConfig(f"config lacks required keys: {sorted(missing)}")
    fields.setdefault("workers", os.cpu_count() or 1)
    try:
        cfg = PipelineConfig(degradation=degradation, codec=codec, **fields)
    except TypeError as exc:
        raise FatalConfig(f"bad config: {exc}") from exc
    cfg.validate()
    return cfg


def discover_utterances(clean_root: str | Path) -> list[str]:
    """Sorted root-relative POSIX ids of every WAV under the clean tree."""
    root = Path(clean_root)
    if not root.is_dir():
        raise FatalConfig(f"clean_root {root} is not a directory")
    return sorted(
        p.relative_to(root).as_posix()
        for p in root.rglob("*")
        if p.is_file() and p.suffix.lower() == ".wav"
    )


def variant_filename(utterance_id: str, variant_index: int) -> str:
    return f"{utterance_id}.v{variant_index}.wav"


def _load_corpus_map(path: Path | None) -> list[dict]:
    if path is None:
        return []
    try:
        rules = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise FatalConfig(f"cannot read corpus map {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise FatalConfig(f"corpus map {path}: {exc}") from exc
    if not isinstance(rules, list):
        raise FatalConfig("corpus map must be a JSON array of rules")
    return rules


def _map_utterance(rules: list[dict], utterance_id: str) -> tuple[str | None, str | None]:
    for rule in rules:
        if utterance_id.startswith(rule.get("prefix", "")):
            return rule.get("dataset_name"), rule.get("language")
    return None, None


# Worker-side state, populated once per process by the pool initializer (the
# parent also uses it for inline runs).
_WORKER: dict = {}


def _init_worker(cfg: PipelineConfig, pool: NoisePool | None, rules: list[dict]):
    _WORKER["cfg"] = cfg
    _WORKER["pool"] = pool
    _WORKER["rules"] = rules


def _process_task(task: tuple[str, int]) -> dict:
    utterance_id, variant_index = task
    cfg: PipelineConfig = _WORKER["cfg"]
    rel_out = variant_filename(utterance_id, variant_index)
    out_path = Path(cfg.out_root) / rel_out
    tmp = out_path.with_name(out_path.name + ".tmp")
    try:
        clean = read_wav(Path(cfg.clean_root) / utterance_id)
        seed = derive_seed(cfg.global_seed, utterance_id, variant_index)
        rng = np.random.default_rng(seed)
        record = sample_params(
            cfg.degradation, rng, rng_seed=seed, variant_index=variant_index
        )
        noisy = apply(clean, record, _WORKER["pool"], cfg.codec)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        write_wav(noisy, tmp, cfg.output_bit_depth)
        os.replace(tmp, out_path)
        dataset, language = _map_utterance(_WORKER["rules"], utterance_id)
        entry = {
            "schema": MANIFEST_SCHEMA,
            "utterance_id": utterance_id,
            "variant_index": variant_index,
            "clean_path": str((Path(cfg.clean_root) / utterance_id).resolve()),
            "noisy_path": rel_out,
            "num_samples": len(clean),
            "sample_rate_hz": clean.sample_rate_hz,
            "duration_s": clean.duration_s,
            "dataset_name": dataset,
            "language": language,
            "record": record.to_json(),
        }
        return {"entry": entry}
    except Exception as exc:  # per-utterance isolation: record and continue
        tmp.unlink(missing_ok=True)
        return {
            "failure": {
                "utterance_id": utterance_id,
                "variant_index": variant_index,
                "error": type(exc).__name__,
                "message": str(exc),
            }
        }


def _load_existing_entries(out_root: Path) -> dict[tuple[str, int], dict]:
    entries: dict[tuple[str, int], dict] = {}
    for name in (MANIFEST_NAME, JOURNAL_NAME):
        path = out_root / name
        if not path.exists():
            continue
        for line in path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn tail write from an interrupted run
            entries[(obj["utterance_id"], obj["variant_index"])] = obj
    return entries


def _entry_reusable(out_root: Path, entry: dict) -> bool:
    out_path = out_root / entry["noisy_path"]
    try:
        info = wav_info(out_path)
    except SidonForgeError:
        return False
    return (
        info.frames == entry["num_samples"]
        and info.sample_rate_hz == entry["sample_rate_hz"]
    )


@dataclass
class RunSummary:
    utterances: int
    variants_written: int
    variants_reused: int
    failures: list[dict]
    hours_in: float
    hours_out: float
    wall_seconds: float

    def to_json(self) -> dict:
        return self.__dict__.copy()


def run_pipeline(cfg: PipelineConfig, progress: bool = False) -> RunSummary:
    """Degrade the whole clean tree; returns a summary with any per-utterance
    failures (the run keeps going past them). With `progress` on, prints a
    running hours-in/hours-out/ETA line to stderr."""
    started = time.perf_counter()
    cfg.validate()
    cfg.codec.validate()
    utterances = discover_utterances(cfg.clean_root)
    if not utterances:
        raise FatalConfig(f"no WAV files under {cfg.clean_root}")
    pool = load_index(cfg.noise_index) if cfg.noise_index is not None else None
    rules = _load_corpus_map(cfg.corpus_map)
    out_root = Path(cfg.out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    (out_root / CONFIG_ECHO_NAME).write_text(
        json.dumps(cfg.to_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    existing = _load_existing_entries(out_root)
    kept: dict[tuple[str, int], dict] = {}
    tasks: list[tuple[str, int]] = []
    for utterance_id in utterances:
        for k in range(cfg.variants_per_utterance):
            previous = existing.get((utterance_id, k))
            if previous is not None and _entry_reusable(out_root, previous):
                kept[(utterance_id, k)] = previous
            else:
                tasks.append((utterance_id, k))

    if cfg.codec.max_concurrent is not None and cfg.codec.kind == "external":
        codec_mod.set_subprocess_gate(
            multiprocessing.BoundedSemaphore(cfg.codec.max_concurrent)
        )

    journal_path = out_root / JOURNAL_NAME
    failures: list[dict] = []
    fresh: dict[tuple[str, int], dict] = {}
    done = 0
    run_seen: set[str] = set()
    run_hours_in = 0.0
    run_hours_out = 0.0
    step = max(1, len(tasks) // 100)
    with open(journal_path, "a", encoding="utf-8") as journal:

        def take(result: dict) -> None:
            nonlocal done, run_hours_in, run_hours_out
            done += 1
            if "entry" in result:
                entry = result["entry"]
                fresh[(entry["utterance_id"], entry["variant_index"])] = entry
                journal.write(json.dumps(entry, sort_keys=True) + "\n")
                journal.flush()
                run_hours_out += entry["duration_s"] / 3600.0
                if entry["utterance_id"] not in run_seen:
                    run_seen.add(entry["utterance_id"])
                    run_hours_in += entry["duration_s"] / 3600.0
            else:
                failures.append(result["failure"])
            if progress and (done % step == 0 or done == len(tasks)):
                elapsed = time.perf_counter() - started
                eta = elapsed / done * (len(tasks) - done)
                print(
                    f"progress {done}/{len(tasks)} variants, "
                    f"{run_hours_in:.3f} h in, {run_hours_out:.3f} h out, "
                    f"eta {eta:.0f} s",
                    file=sys.stderr,
                )

        if cfg.workers == 1 or len(tasks) <= 1:
            _init_worker(cfg, pool, rules)
            for task in tasks:
                take(_process_task(task))
        else:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(
                max_workers=cfg.workers,
                mp_context=ctx,
                initializer=_init_worker,
                initargs=(cfg, pool, rules),
            ) as pool_exec:
                pending = [pool_exec.submit(_process_task, t) for t in tasks]
                for future in as_completed(pending):
                    take(future.result())

    merged = {**kept, **fresh}
    ordered = sorted(merged.values(), key=lambda e: (e["utterance_id"], e["variant_index"]))
    manifest_path = out_root / MANIFEST_NAME
    tmp = manifest_path.with_name(manifest_path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        for entry in ordered:
            f.write(json.dumps(entry, sort_keys=True) + "\n")
    os.replace(tmp, manifest_path)
    journal_path.unlink(missing_ok=True)

    failures_path = out_root / FAILURES_NAME
    if failures:
        with open(failures_path, "w", encoding="utf-8") as f:
            for failure in sorted(
                failures, key=lambda e: (e["utterance_id"], e["variant_index"])
            ):
                f.write(json.dumps(failure, sort_keys=True) + "\n")
    else:
        failures_path.unlink(missing_ok=True)

    seen: set[str] = set()
    hours_in = 0.0
    hours_out = 0.0
    for entry in ordered:
        if entry["utterance_id"] not in seen:
            seen.add(entry["utterance_id"])
            hours_in += entry["duration_s"] / 3600.0
        hours_out += entry["duration_s"] / 3600.0
    return RunSummary(
        utterances=len(utterances),
        variants_written=len(fresh),
        variants_reused=len(kept),
        failures=failures,
        hours_in=hours_in,
        hours_out=hours_out,
        wall_seconds=time.perf_counter() - started,
    )


@dataclass
class RtfReport:
    batch_size: int
    repeats: int
    audio_seconds: float
    wall_seconds: float
    rtf: float
    stage_seconds: dict[str, float]

    def to_json(self) -> dict:
        return self.__dict__.copy()


def bench_rtf(
    cfg: PipelineConfig,
    batch_sizes: tuple[int, ...] = (1, 2, 4, 8),
    duration_s: float = 30.0,
    sample_rate_hz: int = 16000,
    repeats: int = 3,
) -> list[RtfReport]:
    """Wall-clock / audio-time ratio with every op forced on.

    Inputs are seeded Gaussian noise at 0.1 RMS. One untimed warm-up apply
    precedes the timed repeats so filter design and FFT planning stay out of
    the numbers.
    """
    pool = load_index(cfg.noise_index) if cfg.noise_index is not None else None
    forced = dataclasses.replace(cfg.degradation, per_op_probability=1.0)
    reports = []
    for batch in batch_sizes:
        items = []
        for i in range(batch):
            seed = derive_seed(cfg.global_seed, f"bench/{batch}/{i}", 0)
            rng = np.random.default_rng(seed)
            x = rng.standard_normal(int(duration_s * sample_rate_hz))
            w = Waveform(x, sample_rate_hz)
            w = Waveform(x * (0.1 / rms(w)), sample_rate_hz)
            record = sample_params(forced, rng, rng_seed=seed, variant_index=0)
            items.append((w, record))
        apply(items[0][0], items[0][1], pool, cfg.codec)  # warm-up
        stage: dict[str, float] = {}
        t0 = time.perf_counter()
        for _ in range(repeats):
            for w, record in items:
                apply(w, record, pool, cfg.codec, stage_seconds=stage)
        wall = time.perf_counter() - t0
        audio = batch * duration_s * repeats
        reports.append(
            RtfReport(
                batch_size=batch,
                repeats=repeats,
                audio_seconds=audio,
                wall_seconds=wall,
                rtf=wall / audio,
                stage_seconds=stage,
            )
        )
    return reports
