"""Background-noise pool: directory indexing plus seeded draws.

An index is a JSON-lines file, one entry per WAV found under the pool root,
sorted by id (the root-relative POSIX path). Files that fail to parse are
skipped and reported, never indexed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import Waveform, read_wav, resample, wav_info
from .errors import EmptyPool, IoError, SidonForgeError

_DECODE_ATTEMPTS = 3


@dataclass(frozen=True)
class NoiseEntry:
    id: str
    path: str
    duration_s: float
    sample_rate_hz: int


@dataclass
class NoisePool:
    entries: list[NoiseEntry]
    root: Path | None = None
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def __post_init__(self):
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate ids in noise pool")

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class NoiseDraw:
    waveform: Waveform
    entry_id: str
    loop_count: int


def build_index(root: str | Path, index_out: str | Path) -> NoisePool:
    """Scan `root` recursively for WAVs and write a JSONL index.

    Unreadable or non-WAV files are listed in the returned pool's `skipped`
    (id, reason) pairs and left out of the index.
    """
    root = Path(root)
    if not root.is_dir():
        raise IoError(f"noise root {root} is not a directory")
    entries = []
    skipped = []
    for path in sorted(root.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(root).as_posix()
        if path.suffix.lower() != ".wav":
            skipped.append((rel, "not a WAV file"))
            continue
        try:
            info = wav_info(path)
        except SidonForgeError as exc:
            skipped.append((rel, str(exc)))
            continue
        entries.append(
            NoiseEntry(
                id=rel,
                path=str(path.resolve()),
                duration_s=info.duration_s,
                sample_rate_hz=info.sample_rate_hz,
            )
        )
    if not entries:
        raise EmptyPool(f"no usable WAV files under {root}")
    entries.sort(key=lambda e: e.id)
    index_out = Path(index_out)
    tmp = index_out.with_name(index_out.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as f:
        for e in entries:
            f.write(json.dumps(e.__dict__, sort_keys=True) + "\n")
    tmp.replace(index_out)
    return NoisePool(entries=entries, root=root, skipped=skipped)


def load_index(path: str | Path) -> NoisePool:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoError(f"cannot read noise index {path}: {exc}") from exc
    entries = []
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            entries.append(
                NoiseEntry(
                    id=obj["id"],
                    path=obj["path"],
                    duration_s=float(obj["duration_s"]),
                    sample_rate_hz=int(obj["sample_rate_hz"]),
                )
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise IoError(f"{path}:{lineno}: bad index line: {exc}") from exc
    if not entries:
        raise EmptyPool(f"noise index {path} holds no entries")
    return NoisePool(entries=entries)


def draw_noise(
    pool: NoisePool,
    target_len: int,
    target_rate_hz: int,
    rng: np.random.Generator,
) -> NoiseDraw:
    """Pick a pool entry uniformly, resample to the target rate, and loop or
    truncate it to exactly `target_len` samples.

    A failed decode skips to a fresh uniform draw, up to three attempts; the
    last error propagates after that.
    """
    if len(pool) == 0:
        raise EmptyPool("cannot draw from an empty noise pool")
    if target_len < 1:
        raise ValueError("target_len must be positive")
    w = None
    entry = None
    for attempt in range(_DECODE_ATTEMPTS):
        entry = pool.entries[int(rng.integers(0, len(pool)))]
        try:
            w = read_wav(entry.path)
            break
        except SidonForgeError:
            if attempt == _DECODE_ATTEMPTS - 1:
                raise
    if w.sample_rate_hz != target_rate_hz:
        w = resample(w, target_rate_hz)
    loop_count = -(-target_len // len(w))  # ceil division
    samples = w.samples
    if loop_count > 1:
        samples = np.tile(samples, loop_count)
    return NoiseDraw(
        waveform=Waveform(samples[:target_len].copy(), target_rate_hz),
        entry_id=entry.id,
        loop_count=loop_count,
    )
