"""Tempo and pitch augmentation of raw audio, with matching annotation updates."""
from __future__ import annotations

import numpy as np

from .annotations import AnnotationTrack, scale_annotation_times
from .audio_io import AudioClip, resample_array
from .errors import RateOutOfRange
from .features import istft, stft

N_FFT = 2048
HOP = 512


def _peak_regions(mag: np.ndarray) -> np.ndarray:
    """Index of the governing spectral peak for every bin."""
    n = len(mag)
    padded = np.concatenate([[-1.0, -1.0], mag, [-1.0, -1.0]])
    windows = np.lib.stride_tricks.sliding_window_view(padded, 5)
    peaks = np.flatnonzero(mag >= windows.max(axis=1))
    if len(peaks) == 0:
        return np.arange(n)
    # each bin follows the nearest peak (boundary at the midpoint)
    mids = (peaks[:-1] + peaks[1:]) / 2.0
    return peaks[np.searchsorted(mids, np.arange(n), side="right")]


def phase_vocoder(D: np.ndarray, rate: float, hop: int = HOP) -> np.ndarray:
    """Time-scale an STFT by ``rate`` (>1 is faster).

    Peak bins advance by their measured instantaneous frequency; the
    remaining bins keep their analysis-frame phase offset to the peak that
    governs them (identity phase locking). Without the locking, repeated
    frames at rates below 1 drift neighbouring bins out of phase.
    """
    n_bins, T = D.shape
    n_fft = 2 * (n_bins - 1)
    steps = np.arange(0, T, rate)
    out = np.zeros((n_bins, len(steps)), dtype=np.complex128)
    advance = 2.0 * np.pi * hop * np.arange(n_bins) / n_fft
    Dp = np.pad(D, ((0, 0), (0, 2)))
    angles = np.angle(Dp)
    phase = angles[:, 0].copy()
    prev_phase = phase
    for t, step in enumerate(steps):
        i = int(step)
        frac = step - i
        mag = (1.0 - frac) * np.abs(Dp[:, i]) + frac * np.abs(Dp[:, i + 1])
        if t > 0:
            dphi = angles[:, i + 1] - angles[:, i] - advance
            dphi -= 2.0 * np.pi * np.round(dphi / (2.0 * np.pi))
            peak_of = _peak_regions(mag)
            ref = angles[:, i] if frac < 0.5 else angles[:, i + 1]
            peak_phase = prev_phase + advance + dphi
            phase = peak_phase[peak_of] + ref - ref[peak_of]
        out[:, t] = mag * np.exp(1j * phase)
        prev_phase = phase
    return out


def time_stretch(y: np.ndarray, rate: float) -> np.ndarray:
    """Phase-vocoder time stretch; output length is ``round(len(y) / rate)``."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    y = np.asarray(y, dtype=np.float64)
    if rate == 1.0:
        return y.copy()
    D = stft(y, N_FFT, HOP)
    n_out = int(round(len(y) / rate))
    return istft(phase_vocoder(D, rate, HOP), HOP, n_out)


def pitch_shift(y: np.ndarray, sr: int, semitones: float) -> np.ndarray:
    """Resample, then stretch back to the original duration."""
    if semitones == 0:
        return np.asarray(y, dtype=np.float64).copy()
    factor = 2.0 ** (semitones / 12.0)
    shifted = resample_array(y, sr, sr / factor)
    out = time_stretch(shifted, len(shifted) / len(y))
    if len(out) < len(y):
        out = np.pad(out, (0, len(y) - len(out)))
    return out[:len(y)]


def augment_track(clip: AudioClip, track: AnnotationTrack, tempo_rate: float = 1.0,
                  semitones: float = 0.0, tempo_range=(0.8, 1.2), pitch_range=(-2.0, 2.0)):
    """Apply tempo change ``tempo_rate`` and transposition ``semitones``.

    Tempo shortens the audio by ``1/tempo_rate`` and scales boundary times
    likewise; transposition leaves timing untouched.
    """
    if not tempo_range[0] <= tempo_rate <= tempo_range[1]:
        raise RateOutOfRange(f"tempo rate {tempo_rate} outside {tuple(tempo_range)}")
    if not pitch_range[0] <= semitones <= pitch_range[1]:
        raise RateOutOfRange(f"{semitones} semitones outside {tuple(pitch_range)}")
    y = clip.samples
    if semitones != 0:
        y = pitch_shift(y, clip.sample_rate, semitones)
    if tempo_rate != 1.0:
        y = time_stretch(y, tempo_rate)
    peak = np.abs(y).max(initial=0.0)
    if peak > 1.0:
        y = y / peak
    out = AudioClip(y, clip.sample_rate, clip.source_path)
    return out, scale_annotation_times(track, tempo_rate)
