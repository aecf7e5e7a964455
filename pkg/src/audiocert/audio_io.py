"""WAV loading/saving and sample-rate conversion.

Files are normalized on load to mono float64 in [-1, 1]. Supported encodings:
PCM16 (scaled by 1/32768), PCM32, float32, float64. Multichannel input is
mean-downmixed.
"""
from __future__ import annotations

import numpy as np
from scipy.io import wavfile

from .errors import AudioFormatError
from .types import AudioClip

_SCALES = {
    np.dtype(np.int16): 1.0 / 32768.0,
    np.dtype(np.int32): 1.0 / 2147483648.0,
    np.dtype(np.float32): 1.0,
    np.dtype(np.float64): 1.0,
}


def load_wav(path) -> AudioClip:
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except Exception as exc:
        raise AudioFormatError(f"cannot read {path}: {exc}") from exc
    scale = _SCALES.get(data.dtype)
    if scale is None:
        raise AudioFormatError(f"{path}: unsupported sample format {data.dtype}")
    samples = data.astype(np.float64) * scale
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    elif samples.ndim != 1:
        raise AudioFormatError(f"{path}: unsupported channel layout {data.shape}")
    if samples.size == 0:
        raise AudioFormatError(f"{path}: empty audio stream")
    if not np.all(np.isfinite(samples)):
        raise AudioFormatError(f"{path}: non-finite samples")
    return AudioClip(samples, int(rate))


def save_wav(path, clip: AudioClip, *, clip_to_unit=False) -> None:
    """Write float32 WAV. Values outside [-1, 1] are preserved unless
    clip_to_unit is set (transforms such as gain can exceed full scale)."""
    samples = clip.samples
    if clip_to_unit:
        samples = np.clip(samples, -1.0, 1.0)
    wavfile.write(path, clip.rate, samples.astype(np.float32))


def tone(freq_hz, seconds, rate=16000, amplitude=0.5, phase=0.0) -> AudioClip:
    """Sine test fixture."""
    t = np.arange(int(round(seconds * rate))) / rate
    return AudioClip(amplitude * np.sin(2.0 * np.pi * freq_hz * t + phase), rate)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Band-limited resampling with a 64-tap Hann-windowed sinc kernel.

    The kernel is normalized per output sample so DC passes at unit gain;
    when downsampling the sinc cutoff shrinks to the target Nyquist.
    """
    target_rate = int(target_rate)
    if target_rate <= 0:
        raise AudioFormatError(f"target rate must be positive, got {target_rate}")
    if target_rate == clip.rate:
        return clip.copy()
    x = clip.samples
    ratio = target_rate / clip.rate
    n_out = max(1, int(round(len(x) * ratio)))
    taps = 64
    half = taps // 2
    fc = 0.5 * min(1.0, ratio)  # in units of the input rate

    padded = np.concatenate([np.zeros(half), x, np.zeros(half + 1)])
    out = np.empty(n_out)
    offsets = np.arange(-(half - 1), half + 1)  # -31 .. 32
    for s in range(0, n_out, 65536):
        e = min(n_out, s + 65536)
        pos = np.arange(s, e) / ratio
        base = np.floor(pos).astype(np.int64)
        frac = pos - base
        arg = frac[:, None] - offsets[None, :]
        kern = 2.0 * fc * np.sinc(2.0 * fc * arg)
        kern *= 0.5 * (1.0 + np.cos(np.pi * arg / half))
        kern /= kern.sum(axis=1, keepdims=True)
        idx = base[:, None] + offsets[None, :] + half
        out[s:e] = (padded[idx] * kern).sum(axis=1)
    return AudioClip(out, target_rate)
