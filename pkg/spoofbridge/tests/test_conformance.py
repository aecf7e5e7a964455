"""Wire-level interop with the primary client, for every backend.

These tests put a real child process behind audiocert's BridgeScorer, so
they cover process startup, the handshake, pipelined batches, and shutdown
exactly as a verification job would drive them.
"""
import base64
import math
import struct
import sys

import numpy as np
import pytest

from audiocert import scorer as sc
from audiocert.errors import ScorerError
from audiocert.types import AudioClip

from bridge_support import bridge_cmd


def make_clip(seed, samples=2000, rate=16000):
    rng = np.random.default_rng((0xC11F, seed))
    x = 0.3 * np.sin(np.arange(samples) * rng.uniform(0.01, 0.4)) \
        + rng.normal(0.0, 0.01, samples)
    return AudioClip(x, rate)


def expected_echo(clip):
    f32 = clip.samples.astype("<f4")
    vals = struct.unpack(f"<{f32.size}f", f32.tobytes())
    return min(max(math.fsum(abs(v) for v in vals) / len(vals), 0.0), 1.0)


class TestEchoFixtureOnTheWire:
    def test_handshake_name(self):
        with sc.BridgeScorer(bridge_cmd("--fixture", "echo")) as bridge:
            bridge.score(make_clip(0))
            assert bridge.name == "spoofbridge-echo"

    def test_batch_equals_sequential_and_matches_reference_value(self):
        clips = [make_clip(i) for i in range(100)]
        with sc.BridgeScorer(bridge_cmd("--fixture", "echo")) as bridge:
            batch = bridge.score_batch(clips)
        with sc.BridgeScorer(bridge_cmd("--fixture", "echo")) as bridge:
            sequential = [bridge.score(c) for c in clips]
        assert batch == sequential
        for clip, res in zip(clips, batch):
            assert res.p_bonafide == expected_echo(clip)
            assert res.p_spoof == 1.0 - expected_echo(clip)


class TestConstantFixtureOnTheWire:
    def test_every_response_is_the_constant(self):
        clips = [make_clip(i) for i in range(10)]
        with sc.BridgeScorer(bridge_cmd("--fixture", "constant:0.8")) as bridge:
            results = bridge.score_batch(clips)
            assert bridge.name == "spoofbridge-constant(0.8)"
        assert all(r.p_bonafide == 0.8 for r in results)
        assert all(r.p_spoof == pytest.approx(0.2, abs=1e-12) for r in results)


class TestRealModelOnTheWire:
    def test_scores_parse_and_repeat_across_processes(self, tiny_checkpoint):
        cmd = bridge_cmd("--model", str(tiny_checkpoint), "--model-rate", "8000")
        clips = [make_clip(i, samples=4000) for i in range(8)]
        with sc.BridgeScorer(cmd) as bridge:
            first = bridge.score_batch(clips)
            assert bridge.name == "spoofbridge:tiny_detector.pt"
        with sc.BridgeScorer(cmd) as bridge:
            second = bridge.score_batch(clips)
        assert first == second
        for r in first:
            assert 0.0 < r.p_bonafide < 1.0
            assert r.p_spoof + r.p_bonafide == pytest.approx(1.0, abs=1e-9)

    def test_unloadable_model_fails_the_handshake(self, tmp_path):
        cmd = bridge_cmd("--model", str(tmp_path / "missing.pt"))
        with sc.BridgeScorer(cmd, timeout=10.0) as bridge:
            with pytest.raises(ScorerError):
                bridge.score(make_clip(0))

    def test_probe_reports_deterministic(self, tiny_checkpoint):
        cmd = bridge_cmd("--model", str(tiny_checkpoint))
        with sc.BridgeScorer(cmd) as bridge:
            out = sc.probe_scorer(bridge)
        assert out["deterministic"]
        assert out["name"] == "spoofbridge:tiny_detector.pt"


class TestConsoleScript:
    def test_module_and_script_agree(self):
        import subprocess

        line = '{"hello": 1}\n'
        by_module = subprocess.run(
            [sys.executable, "-m", "spoofbridge", "--fixture", "echo"],
            input=line, capture_output=True, text=True, timeout=30)
        by_script = subprocess.run(
            ["spoofbridge", "--fixture", "echo"],
            input=line, capture_output=True, text=True, timeout=30)
        assert by_module.stdout == by_script.stdout
        assert by_module.returncode == by_script.returncode == 0

    def test_requires_a_backend(self):
        import subprocess

        r = subprocess.run([sys.executable, "-m", "spoofbridge"],
                           capture_output=True, text=True, timeout=30)
        assert r.returncode != 0
