"""Shared fixtures: a small deterministic clean-speech tree and a noise pool.

Session-scoped so the expensive WAV synthesis happens once; anything that
mutates an output tree gets its own tmp_path.
"""

import numpy as np
import pytest

from sidonforge.audio import Waveform, write_wav
from sidonforge.noise import build_index


def speechish(rng, n, fs):
    """Amplitude-modulated tone pile plus noise; enough spectral spread to
    survive every op without degenerating to silence."""
    t = np.arange(n) / fs
    env = 0.4 + 0.3 * np.sin(2 * np.pi * 2.7 * t)
    x = np.zeros(n)
    for f, a in ((220, 0.35), (470, 0.22), (1300, 0.12), (2600, 0.06)):
        x += a * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    x = env * x + 0.02 * rng.standard_normal(n)
    return np.clip(0.5 * x, -0.99, 0.99)


@pytest.fixture(scope="session")
def clean_tree(tmp_path_factory):
    root = tmp_path_factory.mktemp("clean")
    rng = np.random.default_rng(101)
    layout = [
        ("a/utt_000.wav", 16000, 0.9),
        ("a/utt_001.wav", 16000, 0.5),
        ("a/deep/utt_002.wav", 16000, 0.7),
        ("b/utt_003.wav", 16000, 1.1),
        ("b/utt_004.wav", 48000, 0.4),
        ("utt_005.wav", 16000, 0.6),
    ]
    for rel, fs, dur in layout:
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        n = int(fs * dur)
        write_wav(Waveform(speechish(rng, n, fs), fs), path)
    return root


@pytest.fixture(scope="session")
def noise_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("noise")
    rng = np.random.default_rng(202)
    specs = [
        ("babble.wav", 16000, 2.0),
        ("hum.wav", 16000, 0.3),       # shorter than most signals: forces looping
        ("street.wav", 48000, 1.0),
        ("fan.wav", 16000, 1.5),
    ]
    for name, fs, dur in specs:
        n = int(fs * dur)
        x = 0.1 * rng.standard_normal(n)
        write_wav(Waveform(x, fs), root / name)
    (root / "notes.txt").write_text("not audio\n", encoding="utf-8")
    return root


@pytest.fixture(scope="session")
def noise_index(noise_dir, tmp_path_factory):
    out = tmp_path_factory.mktemp("index") / "noise_index.jsonl"
    build_index(noise_dir, out)
    return out


# One line per acceptance criterion, echoed after the run so the verdicts
# stay visible even with output capture on.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.ensure_newline()
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
