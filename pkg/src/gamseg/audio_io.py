"""WAV decoding and band-limited resampling."""
from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np
import scipy.io.wavfile
import scipy.signal

from .errors import UnreadableFile, UnsupportedEncoding

TARGET_SR = 22050

# zero crossings on each side of the windowed sinc, per unit rate
HALF_TAPS = 32
KAISER_BETA = 8.6
ROLLOFF = 0.95


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    source_path: Optional[str] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError("AudioClip samples must be one-dimensional")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self):
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def decode_audio(path) -> AudioClip:
    """Read a PCM WAV file (16-bit int or 32-bit float, 1-2 channels).

    Channels are averaged to mono; the native sample rate is kept.
    """
    path = os.fspath(path)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.io.wavfile.WavFileWarning)
            sr, data = scipy.io.wavfile.read(path)
    except FileNotFoundError as exc:
        raise UnreadableFile(f"{path}: no such file") from exc
    except ValueError as exc:
        msg = str(exc)
        if "unknown wave file format" in msg.lower() or "unsupported" in msg.lower():
            raise UnsupportedEncoding(f"{path}: {msg}") from exc
        raise UnreadableFile(f"{path}: {msg}") from exc
    except (OSError, EOFError) as exc:
        raise UnreadableFile(f"{path}: {exc}") from exc

    if data.ndim == 2 and data.shape[1] > 2:
        raise UnsupportedEncoding(f"{path}: {data.shape[1]} channels (max 2)")
    if data.dtype == np.int16:
        x = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        x = data.astype(np.float64)
    else:
        raise UnsupportedEncoding(f"{path}: sample type {data.dtype}")
    if x.ndim == 2:
        x = x.mean(axis=1)
    if len(x) == 0:
        raise UnreadableFile(f"{path}: no samples")
    if not np.all(np.isfinite(x)):
        raise UnreadableFile(f"{path}: non-finite samples")
    return AudioClip(x, int(sr), path)


def write_wav(path, clip: AudioClip, pcm16: bool = False):
    """Write a mono clip as 32-bit float (default) or 16-bit PCM WAV."""
    x = np.asarray(clip.samples)
    if pcm16:
        data = np.clip(np.round(x * 32767.0), -32768, 32767).astype(np.int16)
    else:
        data = x.astype(np.float32)
    scipy.io.wavfile.write(os.fspath(path), int(clip.sample_rate), data)


def sinc_filter(up: int, down: int) -> np.ndarray:
    """Kaiser-windowed sinc low-pass prototype for an up/down polyphase resampler.

    Unit DC gain; cutoff just below the narrower of the two Nyquist limits.
    """
    max_rate = max(up, down)
    n_taps = 2 * HALF_TAPS * max_rate + 1
    return scipy.signal.firwin(n_taps, ROLLOFF / max_rate,
                               window=("kaiser", KAISER_BETA))


def resample_array(x: np.ndarray, source_rate: float, target_rate: float) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if source_rate == target_rate:
        return x.copy()
    ratio = Fraction(target_rate / source_rate).limit_denominator(1000) \
        if not (float(source_rate).is_integer() and float(target_rate).is_integer()) \
        else Fraction(int(target_rate), int(source_rate))
    up, down = ratio.numerator, ratio.denominator
    y = scipy.signal.resample_poly(x, up, down, window=sinc_filter(up, down))
    n_out = int(math.floor(len(x) * target_rate / source_rate + 0.5))
    if len(y) >= n_out:
        return y[:n_out]
    return np.pad(y, (0, n_out - len(y)))


def resample(clip: AudioClip, target_rate: int = TARGET_SR) -> AudioClip:
    """Band-limited (windowed-sinc, polyphase) sample-rate conversion."""
    if len(clip) == 0:
        raise ValueError("cannot resample an empty clip")
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == clip.sample_rate:
        return AudioClip(clip.samples.copy(), clip.sample_rate, clip.source_path)
    y = resample_array(clip.samples, clip.sample_rate, target_rate)
    return AudioClip(y, int(target_rate), clip.source_path)


def load_audio(path, target_rate: int = TARGET_SR) -> AudioClip:
    return resample(decode_audio(path), target_rate)
