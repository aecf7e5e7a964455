"""TorchScript model adapter behind the bridge protocol.

The checkpoint is treated as interchangeable: any scripted module taking a
(1, T) float32 waveform and returning two values per item works. Head order
follows the (p_spoof, p_bonafide) convention, index 0 = spoof; checkpoints
trained with flipped heads set swap_heads instead of being rewritten.
"""
from __future__ import annotations

import base64
import os

import numpy as np
import torch


def resolve_device(device: str) -> torch.device:
    if device == "cpu":
        return torch.device("cpu")
    if torch.cuda.is_available():
        return torch.device("cuda")
    if getattr(torch.backends, "mps", None) is not None and torch.backends.mps.is_available():
        return torch.device("mps")
    raise RuntimeError("no accelerator available; run with device=cpu")


def linear_resample(x: np.ndarray, sr_in: int, sr_out: int) -> np.ndarray:
    if sr_in == sr_out or x.size == 0:
        return x
    n_out = max(1, round(x.size * sr_out / sr_in))
    t_out = np.arange(n_out, dtype=np.float64) * (sr_in / sr_out)
    return np.interp(t_out, np.arange(x.size, dtype=np.float64), x)


class TorchModelScorer:
    """Wraps a torch.jit checkpoint; inference is pinned to eval mode,
    no_grad, and a single intra-op thread so repeated calls on the same
    input give the same floats."""

    def __init__(self, model_id, *, model_rate=16000, device="cpu",
                 logits_to_probs="softmax", swap_heads=False):
        self.model_id = str(model_id)
        self.model_rate = int(model_rate)
        self.logits_to_probs = logits_to_probs
        self.swap_heads = bool(swap_heads)
        self.device = resolve_device(device)
        torch.set_num_threads(1)
        self.module = torch.jit.load(self.model_id, map_location=self.device)
        self.module.eval()

    @property
    def name(self):
        return f"spoofbridge:{os.path.basename(self.model_id)}"

    def score(self, sr, pcm_b64):
        raw = base64.b64decode(pcm_b64)
        x = np.frombuffer(raw, dtype="<f4").astype(np.float64)
        if x.size == 0:
            raise ValueError("empty pcm payload")
        x = linear_resample(x, int(sr), self.model_rate)
        wave = torch.from_numpy(x.astype(np.float32)).unsqueeze(0).to(self.device)
        with torch.no_grad():
            out = self.module(wave)
        v = torch.as_tensor(out).detach().reshape(-1)
        if v.numel() < 2:
            raise ValueError(f"model returned {v.numel()} values, need 2")
        head = v[:2].to(torch.float64)
        if self.swap_heads:
            head = head.flip(0)
        if self.logits_to_probs == "softmax":
            head = torch.softmax(head, dim=0)
        p_spoof, p_bonafide = float(head[0]), float(head[1])
        return p_spoof, p_bonafide
