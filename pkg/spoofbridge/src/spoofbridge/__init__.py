"""Scorer child process for the newline-delimited JSON bridge protocol.

The parent writes one JSON object per line on stdin and reads one per line
on stdout: a handshake {"hello": 1} answered by {"hello": 1, "name": ...},
then requests {"id", "sr", "pcm_b64"} answered by {"id", "p_spoof",
"p_bonafide"}. A request the child cannot serve gets {"id", "error"} and the
loop continues; only a scorer that cannot be constructed at all aborts the
process, before the handshake.

Three scorer backends: the `echo` fixture (p_bonafide = clamp(mean(|pcm|),
0, 1), bit-compatible with the protocol's reference implementation), the
`constant:P` fixture, and a TorchScript model adapter (see model.py, imported
lazily so fixture children never pay the torch import).
"""
from __future__ import annotations

import base64
import json
import math
import struct
import sys
from dataclasses import dataclass

__version__ = "0.1.0"

__all__ = ["BridgeConfig", "serve", "build_scorer", "EchoFixture", "ConstantFixture"]


@dataclass(frozen=True)
class BridgeConfig:
    """Exactly one of model_id / fixture_mode selects the backend."""

    model_id: str | None = None
    fixture_mode: str | None = None  # "echo" | "constant:P"
    device: str = "cpu"              # "cpu" | "accelerator"
    logits_to_probs: str = "softmax"  # "softmax" | "identity"
    swap_heads: bool = False
    model_rate: int = 16000
    name: str | None = None

    def __post_init__(self):
        if (self.model_id is None) == (self.fixture_mode is None):
            raise ValueError("exactly one of model_id or fixture_mode must be set")
        if self.device not in ("cpu", "accelerator"):
            raise ValueError(f"device must be cpu or accelerator, got {self.device!r}")
        if self.logits_to_probs not in ("softmax", "identity"):
            raise ValueError(
                f"logits_to_probs must be softmax or identity, got {self.logits_to_probs!r}")
        if self.model_rate <= 0:
            raise ValueError(f"model_rate must be positive, got {self.model_rate}")
        if self.fixture_mode is not None:
            parse_fixture(self.fixture_mode)


def parse_fixture(text):
    """Validate a fixture spec and return its parsed form."""
    if text == "echo":
        return ("echo",)
    if text.startswith("constant:"):
        try:
            p = float(text.split(":", 1)[1])
        except ValueError:
            raise ValueError(f"bad constant fixture {text!r}") from None
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"constant fixture probability must be in [0, 1], got {p}")
        return ("constant", p)
    raise ValueError(f"unknown fixture mode {text!r} (expected echo or constant:P)")


class EchoFixture:
    """p_bonafide is the mean absolute sample value, clamped to [0, 1].

    fsum over the decoded float32 samples keeps the value identical to the
    reference child regardless of summation strategy elsewhere.
    """

    name = "spoofbridge-echo"

    def score(self, sr, pcm_b64):
        raw = base64.b64decode(pcm_b64)
        count = len(raw) // 4
        if count == 0:
            return 1.0, 0.0
        samples = struct.unpack(f"<{count}f", raw[: 4 * count])
        pb = min(max(math.fsum(abs(s) for s in samples) / count, 0.0), 1.0)
        return 1.0 - pb, pb


class ConstantFixture:
    def __init__(self, p_bonafide):
        self.p = float(p_bonafide)
        self.name = f"spoofbridge-constant({self.p:g})"

    def score(self, sr, pcm_b64):
        return 1.0 - self.p, self.p


def build_scorer(config: BridgeConfig):
    if config.fixture_mode is not None:
        parsed = parse_fixture(config.fixture_mode)
        return EchoFixture() if parsed[0] == "echo" else ConstantFixture(parsed[1])
    from . import model

    return model.TorchModelScorer(
        config.model_id, model_rate=config.model_rate, device=config.device,
        logits_to_probs=config.logits_to_probs, swap_heads=config.swap_heads)


def serve(config: BridgeConfig, stdin=None, stdout=None):
    """Run the request loop until stdin closes.

    The scorer is built first: a backend that cannot start must fail the
    process before the parent ever sees a handshake.
    """
    fin = sys.stdin if stdin is None else stdin
    fout = sys.stdout if stdout is None else stdout
    scorer = build_scorer(config)
    name = config.name or scorer.name

    def emit(record):
        fout.write(json.dumps(record, separators=(",", ":")) + "\n")
        fout.flush()

    for line in fin:
        line = line.strip()
        if not line:
            continue
        try:
            req = json.loads(line)
        except json.JSONDecodeError:
            emit({"id": 0, "error": "unparseable request"})
            continue
        if not isinstance(req, dict):
            emit({"id": 0, "error": "request must be a JSON object"})
            continue
        if req.get("hello") == 1:
            emit({"hello": 1, "name": name})
            continue
        rid = req.get("id")
        if not isinstance(rid, int) or "pcm_b64" not in req:
            emit({"id": rid if isinstance(rid, int) else 0,
                  "error": "missing id or pcm_b64"})
            continue
        sr = req.get("sr", 16000)
        if not isinstance(sr, int) or sr <= 0:
            emit({"id": rid, "error": f"bad sample rate {sr!r}"})
            continue
        try:
            p_spoof, p_bonafide = scorer.score(sr, req["pcm_b64"])
        except Exception as exc:  # noqa: BLE001 - any per-request failure is an error record
            emit({"id": rid, "error": f"{type(exc).__name__}: {exc}"})
            continue
        emit({"id": rid, "p_spoof": p_spoof, "p_bonafide": p_bonafide})
