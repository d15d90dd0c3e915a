"""WAV ingestion and fixed-window partitioning.

Loads PCM RIFF/WAVE files into normalized mono clips and slices them into
consecutive non-overlapping analysis snippets (3 s by default, matching the
recorder's 3-minute files -> sixty snippets).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile


class WavFormatError(ValueError):
    """Raised for WAV files this toolkit cannot ingest (bad encoding, empty data)."""


@dataclass(frozen=True)
class AudioClip:
    """Mono audio, samples normalized to [-1, 1]."""

    samples: np.ndarray
    sample_rate: int
    source_path: str

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass(frozen=True)
class AudioSnippet:
    """One fixed-duration window cut from an AudioClip."""

    samples: np.ndarray
    sample_rate: int
    source_path: str
    offset_seconds: float
    snippet_index: int

    @property
    def duration_seconds(self) -> float:
        return len(self.samples) / self.sample_rate


# Full-scale divisor per integer sample dtype. scipy returns 24-bit data
# upshifted into int32, so the int32 divisor covers it.
_INT_PEAK = {
    np.dtype(np.int16): 2.0**15,
    np.dtype(np.int32): 2.0**31,
}


def load_audio(path: str) -> AudioClip:
    """Read a PCM WAV file as a normalized mono clip.

    Multichannel input is downmixed by arithmetic mean. Integer samples are
    divided by the full-scale value of their bit depth; float samples are
    clipped to [-1, 1].
    """
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # scipy warns on non-data chunks
            rate, data = wavfile.read(path)
    except ValueError as exc:
        raise WavFormatError(f"{path}: {exc}") from exc
    if data.size == 0:
        raise WavFormatError(f"{path}: zero-length audio")
    if data.ndim > 1:
        samples = data.astype(np.float64).mean(axis=1)
    else:
        samples = data.astype(np.float64)
    if data.dtype == np.uint8:
        samples = (samples - 128.0) / 128.0
    elif data.dtype in _INT_PEAK:
        samples = samples / _INT_PEAK[data.dtype]
    elif np.issubdtype(data.dtype, np.floating):
        samples = np.clip(samples, -1.0, 1.0)
    else:
        raise WavFormatError(f"{path}: unsupported sample format {data.dtype}")
    if not np.all(np.isfinite(samples)):
        raise WavFormatError(f"{path}: non-finite samples")
    samples.flags.writeable = False
    return AudioClip(samples=samples, sample_rate=int(rate), source_path=str(path))


def partition(clip: AudioClip, window_seconds: float = 3.0) -> list[AudioSnippet]:
    """Cut a clip into consecutive non-overlapping windows.

    A trailing remainder shorter than one window is discarded; a clip shorter
    than one window yields an empty list.
    """
    if window_seconds <= 0:
        raise ValueError("window_seconds must be positive")
    window = int(round(window_seconds * clip.sample_rate))
    if window <= 0:
        raise ValueError("window shorter than one sample")
    n = len(clip.samples) // window
    snippets = []
    for i in range(n):
        chunk = clip.samples[i * window : (i + 1) * window]
        snippets.append(
            AudioSnippet(
                samples=chunk,
                sample_rate=clip.sample_rate,
                source_path=clip.source_path,
                offset_seconds=i * window / clip.sample_rate,
                snippet_index=i,
            )
        )
    return snippets
