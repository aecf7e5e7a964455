"""Shared value types: class labels and in-memory audio."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np


class Direction(enum.Enum):
    """Class a certificate protects: the classifier keeps calling the input this."""

    BONA_FIDE = "bona_fide"
    SPOOF = "spoof"

    @property
    def t_sign(self) -> int:
        # bona fide certificates bound P[Z < 1/2] with t < 0,
        # spoof certificates bound P[Z > 1/2] with t > 0
        return -1 if self is Direction.BONA_FIDE else 1

    def flipped(self) -> "Direction":
        return Direction.SPOOF if self is Direction.BONA_FIDE else Direction.BONA_FIDE


@dataclass
class AudioClip:
    """Mono audio held as float64 samples in [-1, 1] plus a sample rate in Hz."""

    samples: np.ndarray
    rate: int

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError(f"clip samples must be 1-D, got shape {arr.shape}")
        if int(self.rate) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.rate}")
        self.samples = arr
        self.rate = int(self.rate)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def seconds(self) -> float:
        return len(self) / self.rate

    def copy(self) -> "AudioClip":
        return AudioClip(self.samples.copy(), self.rate)
