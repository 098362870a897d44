"""WAV loading and conversion to 16 kHz mono."""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly

TARGET_RATE = 16000


class AudioError(Exception):
    """Unreadable, empty, or unusable input audio."""


def load_wav(path) -> tuple[np.ndarray, int]:
    """Read a WAV file as float64 samples in [-1, 1], any channel count."""
    path = Path(path)
    if not path.is_file():
        raise AudioError(f"{path}: not a readable file")
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise AudioError(f"{path}: cannot decode WAV ({exc})") from exc
    if data.size == 0:
        raise AudioError(f"{path}: zero-length audio")
    if np.issubdtype(data.dtype, np.integer):
        scale = float(max(abs(np.iinfo(data.dtype).min), np.iinfo(data.dtype).max))
        samples = data.astype(np.float64) / scale
    else:
        samples = data.astype(np.float64)
    return samples, int(rate)


def to_16k_mono(samples: np.ndarray, rate: int) -> np.ndarray:
    """Average channels, then polyphase-resample to 16 kHz."""
    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    if rate != TARGET_RATE:
        ratio = Fraction(TARGET_RATE, rate)
        samples = resample_poly(samples, ratio.numerator, ratio.denominator)
    return np.ascontiguousarray(samples, dtype=np.float64)
