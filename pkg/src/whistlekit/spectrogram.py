"""Snippet-to-spectrogram conversion.

The pipeline works on an inverted grayscale convention: intensity 0 encodes
black (maximum spectral energy) and 1 encodes white, so whistles appear as
dark ridges. Axes are matrix coordinates: x = time-frame index, y =
frequency-bin index with y = 0 at DC.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DB_EPS = 1e-10

_WINDOWS = {
    "hann": np.hanning,
    "hamming": np.hamming,
    "rectangular": np.ones,
}


@dataclass(frozen=True)
class StftConfig:
    window_length: int = 256
    hop: int = 128
    window_function: str = "hann"

    def __post_init__(self) -> None:
        if not 0 < self.hop <= self.window_length:
            raise ValueError("require 0 < hop <= window_length")
        if self.window_function not in _WINDOWS:
            raise ValueError(f"unknown window function {self.window_function!r}")


@dataclass(frozen=True)
class Spectrogram:
    """Grayscale intensity grid I(x, y) in [0, 1], indexed [frame, bin]."""

    intensity: np.ndarray
    frame_duration: float
    bin_width: float
    source: str

    @property
    def n_frames(self) -> int:
        return self.intensity.shape[0]

    @property
    def n_bins(self) -> int:
        return self.intensity.shape[1]


def frame_count(n_samples: int, cfg: StftConfig) -> int:
    return (n_samples - cfg.window_length) // cfg.hop + 1


def compute_spectrogram(snippet, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """Magnitude STFT -> dB -> per-image min-max normalization -> inversion.

    dB values are 20*log10(|X| + eps). A constant-dB image (digital silence)
    normalizes to all-white so that "no energy anywhere" never looks dark.
    """
    samples = np.asarray(snippet.samples, dtype=np.float64)
    if len(samples) < cfg.window_length:
        raise ValueError(
            f"snippet of {len(samples)} samples shorter than window {cfg.window_length}"
        )
    n_frames = frame_count(len(samples), cfg)
    window = _WINDOWS[cfg.window_function](cfg.window_length)
    frames = np.lib.stride_tricks.sliding_window_view(samples, cfg.window_length)[
        :: cfg.hop
    ][:n_frames]
    magnitude = np.abs(np.fft.rfft(frames * window, axis=1))
    db = 20.0 * np.log10(magnitude + DB_EPS)
    lo, hi = db.min(), db.max()
    if hi == lo:
        intensity = np.ones_like(db)
    else:
        intensity = 1.0 - (db - lo) / (hi - lo)
    intensity.flags.writeable = False
    return Spectrogram(
        intensity=intensity,
        frame_duration=cfg.hop / snippet.sample_rate,
        bin_width=snippet.sample_rate / cfg.window_length,
        source=f"{snippet.source_path}:{snippet.snippet_index}",
    )


def as_grid(image) -> np.ndarray:
    """Accept either a Spectrogram or a bare 2-D array."""
    grid = getattr(image, "intensity", image)
    return np.asarray(grid, dtype=np.float64)
