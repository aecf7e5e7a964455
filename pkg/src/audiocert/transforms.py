"""Parametric audio perturbations.

A TransformSpec describes a family of perturbations with parameter ranges;
sample_params draws one concrete parameter set theta (all randomness lives in
theta, including noise seeds and asset choices), and apply(spec, clip, theta)
is a pure function of its arguments. This split is what makes certification
runs replayable: a (seed, j, i) triple fixes theta, and theta fixes the audio.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal

from . import audio_io
from .errors import AssetError, ConfigError
from .types import AudioClip

GAIN = "gain"
LOW_PASS = "low_pass"
HIGH_PASS = "high_pass"
BAND_PASS = "band_pass"
GAUSSIAN_NOISE = "gaussian_noise"
BACKGROUND_NOISE = "background_noise"
PITCH_SHIFT = "pitch_shift"
TIME_STRETCH = "time_stretch"
RIR = "rir"
COMPOSITE = "composite"

KINDS = (GAIN, LOW_PASS, HIGH_PASS, BAND_PASS, GAUSSIAN_NOISE, BACKGROUND_NOISE,
         PITCH_SHIFT, TIME_STRETCH, RIR, COMPOSITE)

# fixed parameter draw order per kind, so theta is reproducible from the seed
_PARAM_ORDER = {
    GAIN: ("gain_db",),
    LOW_PASS: ("cutoff_hz",),
    HIGH_PASS: ("cutoff_hz",),
    BAND_PASS: ("center_hz", "width_ratio"),
    GAUSSIAN_NOISE: ("sigma",),
    BACKGROUND_NOISE: ("snr_db",),
    PITCH_SHIFT: ("semitones",),
    TIME_STRETCH: ("rate",),
    RIR: (),
    COMPOSITE: (),
}


class AssetBank:
    """Read-only bank of audio assets (noise beds, impulse responses).

    Loaded once, resampled to the working rate up front, and shared across
    worker threads.
    """

    def __init__(self, clips, source=""):
        if not clips:
            raise AssetError(f"asset bank is empty ({source or 'in-memory'})")
        self.clips = list(clips)
        self.source = source

    @classmethod
    def from_manifest(cls, manifest_path, rate):
        clips = []
        try:
            with open(manifest_path, encoding="utf-8") as fh:
                lines = [ln.strip() for ln in fh]
        except OSError as exc:
            raise AssetError(f"cannot read asset manifest {manifest_path}: {exc}") from exc
        import os
        base = os.path.dirname(os.path.abspath(manifest_path))
        for ln in lines:
            if not ln or ln.startswith("#"):
                continue
            path = ln if os.path.isabs(ln) else os.path.join(base, ln)
            clip = audio_io.load_wav(path)
            if clip.rate != rate:
                clip = audio_io.resample(clip, rate)
            clips.append(clip)
        return cls(clips, source=str(manifest_path))

    def __len__(self):
        return len(self.clips)

    def clip(self, index) -> AudioClip:
        return self.clips[int(index)]


@dataclass(frozen=True)
class TransformSpec:
    kind: str
    params: dict = field(default_factory=dict)   # name -> (lo, hi)
    children: tuple = ()
    assets: AssetBank | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown transform kind {self.kind!r}")
        for name in _PARAM_ORDER[self.kind]:
            if name not in self.params:
                raise ConfigError(f"{self.kind} needs a range for {name!r}")
            lo, hi = self.params[name]
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ConfigError(f"{self.kind}.{name}: bad range {(lo, hi)}")
        if self.kind == COMPOSITE and not self.children:
            raise ConfigError("composite transform needs at least one child")
        if self.kind in (BACKGROUND_NOISE, RIR) and self.assets is None:
            raise ConfigError(f"{self.kind} needs an asset bank")


def gain(lo_db, hi_db):
    return TransformSpec(GAIN, {"gain_db": (float(lo_db), float(hi_db))})


def low_pass(lo_hz, hi_hz):
    return TransformSpec(LOW_PASS, {"cutoff_hz": (float(lo_hz), float(hi_hz))})


def high_pass(lo_hz, hi_hz):
    return TransformSpec(HIGH_PASS, {"cutoff_hz": (float(lo_hz), float(hi_hz))})


def band_pass(center_hz, width_ratio):
    return TransformSpec(BAND_PASS, {"center_hz": (float(center_hz[0]), float(center_hz[1])),
                                     "width_ratio": (float(width_ratio[0]), float(width_ratio[1]))})


def gaussian_noise(lo_sigma, hi_sigma):
    return TransformSpec(GAUSSIAN_NOISE, {"sigma": (float(lo_sigma), float(hi_sigma))})


def background_noise(bank, lo_snr_db, hi_snr_db):
    return TransformSpec(BACKGROUND_NOISE, {"snr_db": (float(lo_snr_db), float(hi_snr_db))},
                         assets=bank)


def pitch_shift(lo_semitones, hi_semitones):
    return TransformSpec(PITCH_SHIFT, {"semitones": (float(lo_semitones), float(hi_semitones))})


def time_stretch(lo_rate, hi_rate):
    if lo_rate <= 0:
        raise ConfigError(f"stretch rate must be positive, got {lo_rate}")
    return TransformSpec(TIME_STRETCH, {"rate": (float(lo_rate), float(hi_rate))})


def rir(bank):
    return TransformSpec(RIR, {}, assets=bank)


def composite(*children):
    return TransformSpec(COMPOSITE, {}, children=tuple(children))


def sample_params(spec: TransformSpec, seed) -> dict:
    """Draw one theta for the spec; seed may be an int or a tuple of ints."""
    rng = np.random.default_rng(seed)
    return _draw(spec, rng)


def _draw(spec: TransformSpec, rng: np.random.Generator) -> dict:
    theta = {}
    for name in _PARAM_ORDER[spec.kind]:
        lo, hi = spec.params[name]
        theta[name] = float(rng.uniform(lo, hi))
    if spec.kind == GAUSSIAN_NOISE:
        theta["noise_seed"] = int(rng.integers(0, 2**63))
    elif spec.kind == BACKGROUND_NOISE:
        theta["asset_index"] = int(rng.integers(0, len(spec.assets)))
        theta["offset"] = float(rng.random())
    elif spec.kind == RIR:
        theta["asset_index"] = int(rng.integers(0, len(spec.assets)))
    elif spec.kind == COMPOSITE:
        theta["children"] = [_draw(child, rng) for child in spec.children]
    return theta


def apply(spec: TransformSpec, clip: AudioClip, theta: dict) -> AudioClip:
    """Apply one concrete perturbation. Pure: output depends only on arguments."""
    fn = _APPLIERS[spec.kind]
    return fn(spec, clip, theta)


# ---------------------------------------------------------------------------
# individual transforms


def _apply_gain(spec, clip, theta):
    factor = 10.0 ** (theta["gain_db"] / 20.0)
    return AudioClip(clip.samples * factor, clip.rate)


def _butter_filter(clip, btype, edges_hz):
    nyq = clip.rate / 2.0
    for f in np.atleast_1d(edges_hz):
        if not 0.0 < f < nyq:
            raise ConfigError(f"filter edge {f} Hz outside (0, {nyq}) at rate {clip.rate}")
    order = 2 if btype == "bandpass" else 4  # biquad cascade, 4th order overall
    sos = signal.butter(order, edges_hz, btype=btype, fs=clip.rate, output="sos")
    return AudioClip(signal.sosfilt(sos, clip.samples), clip.rate)


def _apply_low_pass(spec, clip, theta):
    return _butter_filter(clip, "lowpass", theta["cutoff_hz"])


def _apply_high_pass(spec, clip, theta):
    return _butter_filter(clip, "highpass", theta["cutoff_hz"])


def _apply_band_pass(spec, clip, theta):
    center = theta["center_hz"]
    b = theta["width_ratio"]
    lo = center * (1.0 - b / 2.0)
    hi = center * (1.0 + b / 2.0)
    return _butter_filter(clip, "bandpass", [lo, hi])


def _apply_gaussian_noise(spec, clip, theta):
    noise = np.random.default_rng(theta["noise_seed"]).normal(0.0, theta["sigma"], len(clip))
    return AudioClip(clip.samples + noise, clip.rate)


def _apply_background_noise(spec, clip, theta):
    bed = spec.assets.clip(theta["asset_index"]).samples
    n = len(clip)
    if len(bed) >= n:
        start = int(math.floor(theta["offset"] * (len(bed) - n + 1)))
        seg = bed[start:start + n]
    else:
        reps = int(math.ceil((n + len(bed)) / len(bed)))
        tiled = np.tile(bed, reps)
        start = int(math.floor(theta["offset"] * len(bed)))
        seg = tiled[start:start + n]
    p_sig = float(np.mean(clip.samples**2))
    p_bed = float(np.mean(seg**2))
    if p_sig == 0.0:
        raise ConfigError("cannot target an SNR against silent input")
    if p_bed == 0.0:
        raise AssetError(f"noise asset {theta['asset_index']} is silent over the mixed span")
    scale = math.sqrt(p_sig / (p_bed * 10.0 ** (theta["snr_db"] / 10.0)))
    return AudioClip(clip.samples + scale * seg, clip.rate)


def _linear_resample_to(x, n_out):
    if len(x) == 1:
        return np.full(n_out, x[0])
    src = np.linspace(0.0, len(x) - 1.0, n_out)
    return np.interp(src, np.arange(len(x)), x)


def _wsola(x, rate, sr):
    """Waveform-similarity overlap-add time stretch.

    rate > 1 shortens (speeds up), rate < 1 lengthens; the output has exactly
    ceil(len(x)/rate) samples. 40 ms Hann windows at 50% overlap; each
    analysis segment may deviate up to +-5 ms from its nominal position to
    maximize cross-correlation with the natural continuation of the previous
    segment.
    """
    n_in = len(x)
    n_out = int(math.ceil(n_in / rate))
    win = int(round(0.040 * sr))
    win -= win % 2
    seek = int(round(0.005 * sr))
    if n_in <= win + 2 * seek or n_out <= win:
        return _linear_resample_to(x, n_out)
    hop = win // 2
    w = np.hanning(win)
    sw = np.lib.stride_tricks.sliding_window_view(x, win)
    max_start = n_in - win

    out = np.zeros(n_out + win)
    acc = np.zeros(n_out + win)
    n_frames = (n_out - win) // hop + 2
    prev = 0
    for f in range(n_frames):
        p_out = f * hop
        nominal = min(int(round(p_out * rate)), max_start)
        if f == 0:
            sel = nominal
        else:
            ref_start = min(prev + hop, max_start)
            ref = sw[ref_start]
            lo = max(0, nominal - seek)
            hi = min(max_start, nominal + seek)
            cand = sw[lo:hi + 1]
            norms = np.sqrt(np.einsum("ij,ij->i", cand, cand)) + 1e-12
            sel = lo + int(np.argmax(cand @ ref / norms))
        out[p_out:p_out + win] += sw[sel] * w
        acc[p_out:p_out + win] += w
        prev = sel
    y = out[:n_out] / np.maximum(acc[:n_out], 1e-12)
    return y


def _apply_time_stretch(spec, clip, theta):
    y = _wsola(clip.samples, theta["rate"], clip.rate)
    return AudioClip(y, clip.rate)


def _apply_pitch_shift(spec, clip, theta):
    # shift by r semitones: stretch time by 2^(r/12), then interpolate back to
    # the original length, which compresses the spectrum by the same factor
    factor = 2.0 ** (theta["semitones"] / 12.0)
    stretched = _wsola(clip.samples, 1.0 / factor, clip.rate)
    return AudioClip(_linear_resample_to(stretched, len(clip)), clip.rate)


def _apply_rir(spec, clip, theta):
    ir = spec.assets.clip(theta["asset_index"]).samples
    wet = signal.fftconvolve(clip.samples, ir)[:len(clip)]
    peak_in = float(np.max(np.abs(clip.samples)))
    peak_wet = float(np.max(np.abs(wet)))
    if peak_wet > 0.0 and peak_in > 0.0:
        wet = wet * (peak_in / peak_wet)
    return AudioClip(wet, clip.rate)


def _apply_composite(spec, clip, theta):
    thetas = theta["children"]
    if len(thetas) != len(spec.children):
        raise ConfigError("composite theta does not match its children")
    for child, ct in zip(spec.children, thetas):
        clip = apply(child, clip, ct)
    return clip


_APPLIERS = {
    GAIN: _apply_gain,
    LOW_PASS: _apply_low_pass,
    HIGH_PASS: _apply_high_pass,
    BAND_PASS: _apply_band_pass,
    GAUSSIAN_NOISE: _apply_gaussian_noise,
    BACKGROUND_NOISE: _apply_background_noise,
    PITCH_SHIFT: _apply_pitch_shift,
    TIME_STRETCH: _apply_time_stretch,
    RIR: _apply_rir,
    COMPOSITE: _apply_composite,
}
