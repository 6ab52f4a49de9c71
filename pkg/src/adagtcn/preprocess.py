"""Fixation segmentation and per-band EEG features.

Turns co-registered fixations and raw EEG into the ``p x n`` matrix the model
consumes: one column per first fixation on a word, one row per
(electrode, band) pair.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateWindowError,
    DimensionError,
    EmptySessionError,
    PaddingOverflowError,
    ParameterError,
)

#: (name, low Hz, high Hz) in the order features are emitted per electrode.
BANDS: tuple[tuple[str, float, float], ...] = (
    ("theta1", 4.0, 6.0),
    ("theta2", 6.5, 8.0),
    ("alpha1", 8.5, 10.0),
    ("alpha2", 10.5, 13.0),
    ("beta1", 13.5, 18.0),
    ("beta2", 18.5, 30.0),
    ("gamma1", 30.5, 40.0),
    ("gamma2", 40.0, 49.5),
)
N_BANDS = len(BANDS)
MIN_SAMPLE_RATE = 2 * max(hi for _, _, hi in BANDS)
DEFAULT_MAX_LENGTH = 168


@dataclass(frozen=True)
class FixationEvent:
    word_index: int
    onset: float
    duration: float
    gaze_x: float = 0.0

    def __post_init__(self):
        if self.duration <= 0:
            raise ParameterError(f"fixation duration must be positive, got {self.duration}")

    @property
    def window(self) -> tuple[float, float]:
        return (self.onset, self.onset + self.duration)


@dataclass
class RawEegSegment:
    samples: np.ndarray  # electrodes x time
    sample_rate: float

    @property
    def electrode_count(self) -> int:
        return self.samples.shape[0]


@dataclass
class BandSequence:
    """Per-session features; column ``t`` is valid iff ``mask[t]``."""

    features: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        if self.features.ndim != 2 or self.features.shape[1] != self.mask.shape[0]:
            raise DimensionError(
                f"features {self.features.shape} and mask {self.mask.shape} disagree")

    @classmethod
    def from_features(cls, features: np.ndarray) -> "BandSequence":
        features = np.asarray(features, dtype=np.float64)
        return cls(features, np.ones(features.shape[1], dtype=bool))

    @property
    def p(self) -> int:
        return self.features.shape[0]

    @property
    def width(self) -> int:
        return self.features.shape[1]

    @property
    def n(self) -> int:
        """Number of valid (unpadded) columns."""
        return int(self.mask.sum())

    def valid_features(self) -> np.ndarray:
        return self.features[:, self.mask]

    def pad(self, max_length: int) -> "BandSequence":
        return assemble_session(list(self.valid_features().T), max_length)


def segment_ffd(fixations: list[FixationEvent]) -> list[tuple[int, tuple[float, float]]]:
    """Keep only the first fixation on each word, in visit order."""
    if not fixations:
        raise EmptySessionError("session has no fixations")
    seen: set[int] = set()
    windows = []
    last_onset = -np.inf
    for fix in fixations:
        if fix.onset < last_onset:
            raise ParameterError("fixations must be sorted by onset")
        last_onset = fix.onset
        if fix.word_index in seen:
            continue
        seen.add(fix.word_index)
        windows.append((fix.word_index, fix.window))
    return windows


def _band_masks(freqs: np.ndarray) -> list[np.ndarray]:
    masks = []
    for i, (_, lo, hi) in enumerate(BANDS):
        m = (freqs >= lo) & (freqs <= hi)
        # a shared edge belongs to the higher band
        if i + 1 < N_BANDS and BANDS[i + 1][1] == hi:
            m &= freqs < hi
        masks.append(m)
    return masks


def band_features(segment: RawEegSegment, statistic: str = "mean_magnitude") -> np.ndarray:
    """Mean band-limited signal per electrode and band, electrode-major.

    Each band is isolated with a rectangular mask on the real DFT of the
    window; the statistic is the mean absolute value (or mean square) of the
    inverse transform.
    """
    if segment.sample_rate < MIN_SAMPLE_RATE:
        raise ParameterError(
            f"sample rate {segment.sample_rate} Hz below the {MIN_SAMPLE_RATE} Hz minimum")
    x = np.asarray(segment.samples, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"samples must be electrodes x time, got shape {x.shape}")
    t = x.shape[1]
    if t < 2:
        raise DegenerateWindowError(f"window of {t} samples; need at least 2")
    spectrum = np.fft.rfft(x, axis=1)
    freqs = np.fft.rfftfreq(t, d=1.0 / segment.sample_rate)
    out = np.empty((x.shape[0], N_BANDS))
    for b, m in enumerate(_band_masks(freqs)):
        band = np.fft.irfft(spectrum * m, n=t, axis=1)
        if statistic == "mean_magnitude":
            out[:, b] = np.abs(band).mean(axis=1)
        elif statistic == "mean_power":
            out[:, b] = (band * band).mean(axis=1)
        else:
            raise ParameterError(f"unknown band statistic {statistic!r}")
    return out.reshape(-1)


def assemble_session(per_word: list[np.ndarray],
                     max_length: int = DEFAULT_MAX_LENGTH) -> BandSequence:
    n = len(per_word)
    if n > max_length:
        raise PaddingOverflowError(
            f"session has {n} fixations but max length is {max_length}; raise max_length")
    if n == 0:
        raise EmptySessionError("no per-word features to assemble")
    cols = np.stack([np.asarray(v, dtype=np.float64) for v in per_word], axis=1)
    features = np.zeros((cols.shape[0], max_length))
    features[:, :n] = cols
    mask = np.zeros(max_length, dtype=bool)
    mask[:n] = True
    return BandSequence(features, mask)


def extract_window(eeg: np.ndarray, sample_rate: float,
                   window: tuple[float, float]) -> RawEegSegment:
    """Slice a continuous ``electrodes x time`` recording (t=0 at sample 0)."""
    start = int(round(window[0] * sample_rate / 1000.0))
    stop = start + int(round((window[1] - window[0]) * sample_rate / 1000.0))
    return RawEegSegment(np.asarray(eeg)[:, start:stop], sample_rate)


def session_from_raw(fixations: list[FixationEvent], eeg: np.ndarray, sample_rate: float,
                     max_length: int = DEFAULT_MAX_LENGTH,
                     statistic: str = "mean_magnitude") -> BandSequence:
    windows = segment_ffd(fixations)
    per_word = [band_features(extract_window(eeg, sample_rate, w), statistic)
                for _, w in windows]
    return assemble_session(per_word, max_length)
