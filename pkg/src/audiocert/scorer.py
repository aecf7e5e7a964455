"""Scorer backends: builtin logistic scorers and the child-process bridge.

Every scorer maps an AudioClip to a ScoreResult (p_spoof, p_bonafide). The
bridge speaks newline-delimited JSON over a child's stdin/stdout:

    request   {"id": <uint64>, "sr": <uint32>, "pcm_b64": "<base64 LE float32>"}
    response  {"id": <uint64>, "p_spoof": <float>, "p_bonafide": <float>}
    error     {"id": <uint64>, "error": "<message>"}

plus a one-time handshake: client sends {"hello": 1}, child replies
{"hello": 1, "name": "<model name>"}. Responses may arrive out of order and
are matched by id. Probability pairs must sum to 1 within 1e-3 and are
renormalized on ingestion; larger drift is a protocol error.
"""
from __future__ import annotations

import base64
import json
import math
import os
import selectors
import shlex
import subprocess
import time
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ScorerError
from .types import AudioClip, Direction

SUM_TOLERANCE = 1e-3


@dataclass(frozen=True)
class ScoreResult:
    p_spoof: float
    p_bonafide: float

    def __post_init__(self):
        s = self.p_spoof + self.p_bonafide
        if not (math.isfinite(s) and abs(s - 1.0) <= 1e-6):
            raise ScorerError(f"probabilities must sum to 1, got {self.p_spoof}, {self.p_bonafide}")

    @classmethod
    def from_raw(cls, p_spoof, p_bonafide, *, context=""):
        """Validate and renormalize a raw probability pair from a backend."""
        try:
            ps, pb = float(p_spoof), float(p_bonafide)
        except (TypeError, ValueError):
            raise ScorerError(f"non-numeric probabilities {p_spoof!r}, {p_bonafide!r} {context}")
        if not (math.isfinite(ps) and math.isfinite(pb)) or ps < 0.0 or pb < 0.0:
            raise ScorerError(f"invalid probabilities ({ps}, {pb}) {context}")
        s = ps + pb
        if abs(s - 1.0) > SUM_TOLERANCE:
            raise ScorerError(f"probabilities sum to {s}, outside 1 +- {SUM_TOLERANCE} {context}")
        return cls(ps / s, pb / s)


def classify(result: ScoreResult) -> Direction:
    """Strictly-greater rule: p_bonafide must exceed 1/2, ties go to spoof."""
    return Direction.BONA_FIDE if result.p_bonafide > 0.5 else Direction.SPOOF


def _logistic(u):
    if u >= 0:
        return 1.0 / (1.0 + math.exp(-u))
    e = math.exp(u)
    return e / (1.0 + e)


class ConstantScorer:
    """Fixed output regardless of input; useful for plumbing tests."""

    def __init__(self, p_spoof=0.1):
        self.result = ScoreResult.from_raw(p_spoof, 1.0 - p_spoof)

    @property
    def name(self):
        return f"builtin-constant({self.result.p_spoof:g})"

    def score(self, clip: AudioClip) -> ScoreResult:
        return self.result

    def score_batch(self, clips):
        return [self.result for _ in clips]

    def clone(self):
        return self

    def close(self):
        pass


class EnergyScorer:
    """Logistic of log-RMS energy: louder audio looks more bona fide."""

    def __init__(self, a=0.25, c=-30.0):
        self.a = float(a)
        self.c = float(c)

    @property
    def name(self):
        return f"builtin-energy(a={self.a:g},c={self.c:g})"

    def score(self, clip: AudioClip) -> ScoreResult:
        rms = float(np.sqrt(np.mean(clip.samples**2)))
        feature = 20.0 * math.log10(rms + 1e-12)
        pb = _logistic(self.a * (feature - self.c))
        return ScoreResult(1.0 - pb, pb)

    def score_batch(self, clips):
        return [self.score(c) for c in clips]

    def clone(self):
        return self

    def close(self):
        pass


class CentroidScorer:
    """Logistic of the spectral centroid: energy above `c` Hz looks spoofed."""

    def __init__(self, a=0.004, c=2000.0):
        self.a = float(a)
        self.c = float(c)

    @property
    def name(self):
        return f"builtin-centroid(a={self.a:g},c={self.c:g})"

    def score(self, clip: AudioClip) -> ScoreResult:
        x = clip.samples
        mags = np.abs(np.fft.rfft(x * np.hanning(len(x)))) if len(x) > 1 else np.zeros(1)
        total = float(mags.sum())
        if total <= 0.0:
            centroid = 0.0
        else:
            freqs = np.fft.rfftfreq(len(x), 1.0 / clip.rate)
            centroid = float((freqs * mags).sum() / total)
        pb = _logistic(self.a * (self.c - centroid))
        return ScoreResult(1.0 - pb, pb)

    def score_batch(self, clips):
        return [self.score(c) for c in clips]

    def clone(self):
        return self

    def close(self):
        pass


def encode_pcm(clip: AudioClip) -> str:
    return base64.b64encode(clip.samples.astype("<f4").tobytes()).decode("ascii")


class BridgeScorer:
    """Client for a scorer living in a child process behind the JSON protocol.

    The child is started lazily on first use. Batch traffic is pumped through
    a selector loop so a stalled child cannot deadlock the client against a
    full pipe, and every response is matched to its request id.
    """

    def __init__(self, command, *, timeout=30.0, name=None):
        if isinstance(command, str):
            command = shlex.split(command)
        if not command:
            raise ConfigError("bridge command is empty")
        self.command = list(command)
        self.timeout = float(timeout)
        self._proc = None
        self._buffer = b""
        self._next_id = 0
        self._name = name

    @property
    def name(self):
        return self._name or f"bridge({self.command[0]})"

    def clone(self):
        return BridgeScorer(self.command, timeout=self.timeout, name=self._name)

    # -- process management ------------------------------------------------

    def _ensure_started(self):
        if self._proc is not None and self._proc.poll() is None:
            return
        try:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0)
        except OSError as exc:
            raise ScorerError(f"cannot start bridge {self.command!r}: {exc}") from exc
        self._buffer = b""
        reply = self._exchange([b'{"hello": 1}\n'], want=1, what="handshake")
        rec = reply[0]
        if rec.get("hello") != 1 or not isinstance(rec.get("name"), str):
            self._kill()
            raise ScorerError(f"bad handshake reply {rec!r}", payload=rec)
        self._name = rec["name"]

    def _kill(self):
        if self._proc is None:
            return
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        self._proc.kill()
        self._proc.wait()
        self._proc = None

    def close(self):
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.close()
                self._proc.wait(timeout=2.0)
            except (OSError, subprocess.TimeoutExpired):
                pass
        self._kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- wire loop -----------------------------------------------------------

    def _exchange(self, payloads, want, what):
        """Write `payloads` and collect `want` JSON records, duplex, with a
        deadline. Raises ScorerError on timeout, EOF, or unparseable output."""
        proc = self._proc
        outgoing = b"".join(payloads)
        records = []
        deadline = time.monotonic() + self.timeout
        sel = selectors.DefaultSelector()
        sel.register(proc.stdout, selectors.EVENT_READ)
        if outgoing:
            os.set_blocking(proc.stdin.fileno(), False)
            sel.register(proc.stdin, selectors.EVENT_WRITE)
        try:
            while len(records) < want:
                while b"\n" in self._buffer:
                    line, self._buffer = self._buffer.split(b"\n", 1)
                    if not line.strip():
                        continue
                    try:
                        records.append(json.loads(line))
                    except json.JSONDecodeError as exc:
                        raise ScorerError(
                            f"bridge emitted a malformed record during {what}: {line[:200]!r}",
                            payload=line) from exc
                    if len(records) == want:
                        return records
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise ScorerError(
                        f"bridge timeout after {self.timeout}s during {what} "
                        f"({len(records)}/{want} records)")
                for key, _ in sel.select(timeout=remaining):
                    if key.fileobj is proc.stdout:
                        chunk = os.read(proc.stdout.fileno(), 1 << 16)
                        if not chunk:
                            raise ScorerError(
                                f"bridge exited during {what} "
                                f"(rc={proc.poll()}, got {len(records)}/{want})")
                        self._buffer += chunk
                    else:
                        try:
                            sent = os.write(proc.stdin.fileno(), outgoing[:1 << 16])
                        except (BrokenPipeError, OSError) as exc:
                            raise ScorerError(f"bridge stdin closed during {what}") from exc
                        outgoing = outgoing[sent:]
                        if not outgoing:
                            sel.unregister(proc.stdin)
            return records
        except ScorerError:
            self._kill()
            raise
        finally:
            sel.close()

    # -- scoring -------------------------------------------------------------

    def score_batch(self, clips):
        if not clips:
            return []
        self._ensure_started()
        ids = []
        payloads = []
        for clip in clips:
            rid = self._next_id
            self._next_id += 1
            ids.append(rid)
            req = {"id": rid, "sr": int(clip.rate), "pcm_b64": encode_pcm(clip)}
            payloads.append(json.dumps(req, separators=(",", ":")).encode() + b"\n")
        records = self._exchange(payloads, want=len(clips), what=f"batch of {len(clips)}")
        by_id = {}
        for rec in records:
            rid = rec.get("id")
            if rid not in set(ids):
                self._kill()
                raise ScorerError(f"bridge answered unknown id {rid!r}", payload=rec)
            if rid in by_id:
                self._kill()
                raise ScorerError(f"bridge answered id {rid} twice", payload=rec)
            if "error" in rec:
                self._kill()
                raise ScorerError(f"bridge error for id {rid}: {rec['error']}", payload=rec)
            by_id[rid] = rec
        out = []
        for rid in ids:
            rec = by_id[rid]
            try:
                out.append(ScoreResult.from_raw(
                    rec.get("p_spoof"), rec.get("p_bonafide"), context=f"(id {rid})"))
            except ScorerError:
                self._kill()
                raise
        return out

    def score(self, clip: AudioClip) -> ScoreResult:
        return self.score_batch([clip])[0]


def probe_scorer(scorer) -> dict:
    """Score a fixed probe tone twice and report identity, determinism, latency."""
    from . import audio_io

    probe = audio_io.tone(440.0, 1.0, 16000, amplitude=0.5)
    t0 = time.monotonic()
    first = scorer.score(probe)
    t1 = time.monotonic()
    second = scorer.score(probe)
    t2 = time.monotonic()
    return {
        "name": scorer.name,
        "p_spoof": first.p_spoof,
        "p_bonafide": first.p_bonafide,
        "deterministic": first == second,
        "latency_ms": [(t1 - t0) * 1000.0, (t2 - t1) * 1000.0],
        "initial_class": classify(first).value,
    }


def parse_scorer_spec(text) -> object:
    """Build a scorer from a CLI-style spec string.

    constant[:P]          fixed p_spoof = P (default 0.1)
    energy[:a=A,c=C]      logistic of log-RMS energy
    centroid[:a=A,c=C]    logistic of spectral centroid
    bridge:CMD ARGS...    child process speaking the JSON protocol
    """
    if not text:
        raise ConfigError("empty scorer spec")
    kind, _, rest = text.partition(":")
    kind = kind.strip().lower()
    if kind == "bridge":
        if not rest.strip():
            raise ConfigError("bridge spec needs a command, e.g. bridge:python3 model.py")
        return BridgeScorer(rest.strip())
    if kind == "constant":
        try:
            return ConstantScorer(float(rest)) if rest else ConstantScorer()
        except ValueError:
            raise ConfigError(f"bad constant scorer spec {text!r}")
    if kind in ("energy", "centroid"):
        cls = EnergyScorer if kind == "energy" else CentroidScorer
        kwargs = {}
        if rest:
            for part in rest.split(","):
                key, _, val = part.partition("=")
                if key.strip() not in ("a", "c"):
                    raise ConfigError(f"unknown scorer parameter {key!r} in {text!r}")
                try:
                    kwargs[key.strip()] = float(val)
                except ValueError:
                    raise ConfigError(f"bad scorer parameter value in {text!r}")
        return cls(**kwargs)
    raise ConfigError(f"unknown scorer kind {kind!r} "
                      f"(expected constant, energy, centroid, or bridge)")
