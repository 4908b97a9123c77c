"""WAV reading and writing (32-bit float PCM)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import ParseError


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a WAV file as float64 with shape (channels, n).

    Integer PCM is scaled to [-1, 1).
    """
    try:
        rate, data = wavfile.read(Path(path))
    except (ValueError, OSError) as exc:
        raise ParseError(f"cannot read audio file {path}: {exc}") from None
    if np.issubdtype(data.dtype, np.integer):
        data = data.astype(np.float64) / float(-np.iinfo(data.dtype).min)
    else:
        data = data.astype(np.float64)
    data = data[:, None] if data.ndim == 1 else data
    data = data.T
    return np.ascontiguousarray(data), int(rate)


def write_wav(path, samples, sample_rate: int) -> None:
    """Write (channels, n) or (n,) samples as 32-bit float WAV."""
    x = np.asarray(samples, dtype=np.float32)
    if x.ndim == 2:
        x = x.T if x.shape[0] > 1 else x[0]
    wavfile.write(Path(path), int(sample_rate), np.ascontiguousarray(x))
