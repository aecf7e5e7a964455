"""Shared helpers for the test suite (importable by name, unlike conftest)."""

import os
import sys

import numpy as np

from audiocert import audio_io
from audiocert.types import AudioClip

REFERENCE_BRIDGE = os.path.join(os.path.dirname(__file__), "reference_echo_bridge.py")


def reference_bridge_cmd(*flags):
    return [sys.executable, REFERENCE_BRIDGE, *flags]


def synth_clip(seed, seconds=0.5, rate=16000):
    """Deterministic tone+noise clip used across fixtures."""
    rng = np.random.default_rng((0xA0D10, seed))
    freq = rng.uniform(200.0, 2400.0)
    amp = rng.uniform(0.2, 0.6)
    t = np.arange(int(seconds * rate)) / rate
    x = amp * np.sin(2 * np.pi * freq * t) + rng.normal(0.0, 0.01, t.size)
    return AudioClip(x, rate)


def write_dataset(tmp_path, n_items, *, labels=("bonafide", "spoof"), seconds=0.5):
    """Write n_items synthetic WAVs plus a tab-separated manifest; returns its path."""
    man = tmp_path / "dataset.tsv"
    lines = []
    for i in range(n_items):
        clip = synth_clip(i, seconds=seconds)
        path = tmp_path / f"clip_{i:03d}.wav"
        audio_io.save_wav(path, clip)
        lines.append(f"{path.name}\t{labels[i % len(labels)]}")
    man.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return man


def write_corpus(tmp_path, groups, *, seconds=0.25):
    """Write a corpus manifest: groups is {name: clip_count}; returns its path."""
    man = tmp_path / "corpus.tsv"
    lines = []
    idx = 0
    for name, count in groups.items():
        for _ in range(count):
            clip = synth_clip(1000 + idx, seconds=seconds)
            path = tmp_path / f"gen_{name}_{idx:03d}.wav"
            audio_io.save_wav(path, clip)
            lines.append(f"{path.name}\t{name}")
            idx += 1
    man.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return man
