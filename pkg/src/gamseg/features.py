"""Frame-level audio features: MFCC, CQT magnitude, onset envelope.

All extractors share one framing convention: frames are centred on
``t * hop`` samples, so a clip of ``N`` samples yields ``1 + N // hop``
frames.
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.fft

from .audio_io import TARGET_SR, AudioClip, resample_array
from .errors import BadMagic, ClipTooShort, ColumnMismatch, DimensionOverflow, IoError

N_MELS = 128
AMIN = 1e-10
TOP_DB = 80.0
FEATURE_MAGIC = b"FEAT0001"


@dataclass(frozen=True)
class FeatureConfig:
    window: int = 2048
    hop: int = 512
    n_mfcc: int = 13
    n_cqt_bins: int = 84
    cqt_fmin: float = 32.703
    bins_per_octave: int = 12
    sample_rate: int = TARGET_SR

    def __post_init__(self):
        if self.window <= 0 or self.window & (self.window - 1):
            raise ValueError(f"window must be a power of two, got {self.window}")
        if not 0 < self.hop <= self.window:
            raise ValueError("hop must be in (0, window]")
        if self.n_cqt_bins % self.bins_per_octave:
            raise ValueError("n_cqt_bins must be a whole number of octaves")

    @property
    def n_octaves(self) -> int:
        return self.n_cqt_bins // self.bins_per_octave

    @property
    def n_features(self) -> int:
        return self.n_mfcc + self.n_cqt_bins + 1

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.hop

    def to_dict(self) -> dict:
        return dict(window=self.window, hop=self.hop, n_mfcc=self.n_mfcc,
                    n_cqt_bins=self.n_cqt_bins, cqt_fmin=self.cqt_fmin,
                    bins_per_octave=self.bins_per_octave,
                    sample_rate=self.sample_rate)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        return cls(**d)


def default_names(cfg: FeatureConfig = FeatureConfig()):
    return (("mfcc", cfg.n_mfcc), ("cqt", cfg.n_cqt_bins), ("onset", 1))


@dataclass
class FeatureMatrix:
    """Stacked, normalized features: rows are dimensions, columns are frames."""

    data: np.ndarray
    frame_rate: float
    names: tuple = field(default_factory=default_names)

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2:
            raise ValueError("FeatureMatrix data must be 2-D")

    @property
    def n_rows(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]


def n_frames(n_samples: int, hop: int) -> int:
    return 1 + n_samples // hop


def _check_clip(clip: AudioClip, cfg: FeatureConfig) -> np.ndarray:
    if clip.sample_rate != cfg.sample_rate:
        raise ValueError(f"clip is at {clip.sample_rate} Hz, expected {cfg.sample_rate}")
    if len(clip) < cfg.window:
        raise ClipTooShort(f"clip has {len(clip)} samples, need at least {cfg.window}")
    return clip.samples


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(x: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    """Centered, reflect-padded, Hann-windowed STFT; shape (1 + n_fft//2, T)."""
    x = np.asarray(x, dtype=np.float64)
    pad = n_fft // 2
    xp = np.pad(x, pad, mode="reflect")
    T = n_frames(len(x), hop)
    frames = np.lib.stride_tricks.sliding_window_view(xp, n_fft)[::hop][:T]
    return scipy.fft.rfft(frames * hann(n_fft), axis=1).T


def istft(S: np.ndarray, hop: int, length: int) -> np.ndarray:
    """Weighted overlap-add inverse of :func:`stft`."""
    n_fft = 2 * (S.shape[0] - 1)
    win = hann(n_fft)
    frames = scipy.fft.irfft(S.T, n=n_fft, axis=1) * win
    T = frames.shape[0]
    total = n_fft + hop * (T - 1)
    y = np.zeros(total)
    wss = np.zeros(total)
    for t in range(T):
        y[t * hop:t * hop + n_fft] += frames[t]
        wss[t * hop:t * hop + n_fft] += win ** 2
    nz = wss > 1e-8
    y[nz] /= wss[nz]
    pad = n_fft // 2
    y = y[pad:pad + length]
    if len(y) < length:
        y = np.pad(y, (0, length - len(y)))
    return y


def hz_to_mel(f):
    """Slaney mel scale: linear below 1 kHz, logarithmic above."""
    f = np.asarray(f, dtype=np.float64)
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    return np.where(f >= min_log_hz,
                    min_log_mel + np.log(np.maximum(f, 1e-12) / min_log_hz) / logstep,
                    f / f_sp)


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    f_sp = 200.0 / 3
    min_log_hz = 1000.0
    min_log_mel = min_log_hz / f_sp
    logstep = np.log(6.4) / 27.0
    return np.where(m >= min_log_mel,
                    min_log_hz * np.exp(logstep * (m - min_log_mel)),
                    f_sp * m)


def mel_filterbank(sr: int, n_fft: int, n_mels: int = N_MELS) -> np.ndarray:
    """Triangular, area-normalized mel filters; shape (n_mels, 1 + n_fft//2)."""
    fft_freqs = np.linspace(0.0, sr / 2.0, 1 + n_fft // 2)
    mel_pts = mel_to_hz(np.linspace(hz_to_mel(0.0), hz_to_mel(sr / 2.0), n_mels + 2))
    fdiff = np.diff(mel_pts)
    ramps = mel_pts[:, None] - fft_freqs[None, :]
    lower = -ramps[:-2] / fdiff[:-1, None]
    upper = ramps[2:] / fdiff[1:, None]
    weights = np.maximum(0.0, np.minimum(lower, upper))
    weights *= (2.0 / (mel_pts[2:] - mel_pts[:-2]))[:, None]
    return weights


def power_to_db(S: np.ndarray, top_db: float = TOP_DB) -> np.ndarray:
    log_spec = 10.0 * np.log10(np.maximum(AMIN, S))
    return np.maximum(log_spec, log_spec.max() - top_db)


def log_mel(clip: AudioClip, cfg: FeatureConfig) -> np.ndarray:
    x = _check_clip(clip, cfg)
    power = np.abs(stft(x, cfg.window, cfg.hop)) ** 2
    mel = mel_filterbank(cfg.sample_rate, cfg.window) @ power
    return power_to_db(mel)


def compute_mfcc(clip: AudioClip, cfg: FeatureConfig = FeatureConfig(),
                 _log_mel: np.ndarray | None = None) -> np.ndarray:
    S = log_mel(clip, cfg) if _log_mel is None else _log_mel
    return scipy.fft.dct(S, type=2, axis=0, norm="ortho")[:cfg.n_mfcc]


def cqt_frequencies(cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    return cfg.cqt_fmin * 2.0 ** (np.arange(cfg.n_cqt_bins) / cfg.bins_per_octave)


def _cqt_kernels(freqs: np.ndarray, sr: float, Q: float):
    """Complex Hann-windowed kernels centred in a common support.

    Scaled so a unit-amplitude sinusoid at the bin centre has magnitude 1.
    """
    lengths = np.ceil(Q * sr / freqs).astype(int)
    support = int(lengths.max()) | 1
    K = np.zeros((support, len(freqs)), dtype=np.complex128)
    for j, (f, n) in enumerate(zip(freqs, lengths)):
        w = np.hanning(n + 2)[1:-1]
        t = np.arange(n) - (n - 1) / 2.0
        k = w * np.exp(-2j * np.pi * f * t / sr) / (w.sum() / 2.0)
        start = (support - n) // 2
        K[start:start + n, j] = k
    return K


def compute_cqt_mag(clip: AudioClip, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Constant-Q magnitude via per-octave filterbanks on a decimated signal.

    The top octave is analyzed at the native rate; each lower octave halves
    the sample rate (and hop) so kernels stay short.
    """
    x = _check_clip(clip, cfg)
    T = n_frames(len(x), cfg.hop)
    B = cfg.bins_per_octave
    Q = 1.0 / (2.0 ** (1.0 / B) - 1.0)
    freqs = cqt_frequencies(cfg)
    out = np.zeros((cfg.n_cqt_bins, T))

    max_dec = 0
    while cfg.hop % (2 ** (max_dec + 1)) == 0 and max_dec + 1 < cfg.n_octaves:
        max_dec += 1

    sig = x
    sr = float(cfg.sample_rate)
    dec = 0
    for octave in range(cfg.n_octaves - 1, -1, -1):
        want = min(cfg.n_octaves - 1 - octave, max_dec)
        while dec < want:
            sig = resample_array(sig, 2, 1)
            sr /= 2.0
            dec += 1
        hop = cfg.hop // (2 ** dec)
        band = slice(octave * B, (octave + 1) * B)
        K = _cqt_kernels(freqs[band], sr, Q)
        half = K.shape[0] // 2
        need = (T - 1) * hop + K.shape[0]
        padded = np.zeros(max(need, len(sig) + 2 * half))
        padded[half:half + len(sig)] = sig
        frames = np.lib.stride_tricks.sliding_window_view(padded, K.shape[0])[::hop][:T]
        out[band] = np.abs(frames @ K).T
    return out


def compute_onset_env(clip: AudioClip, cfg: FeatureConfig = FeatureConfig(),
                      _log_mel: np.ndarray | None = None) -> np.ndarray:
    """Positive spectral flux of the log-mel spectrogram, shape (1, T).

    The flux is delayed by ``window // (2 * hop)`` frames so peaks land on
    the frame centred at the event rather than the first frame whose
    window touches it.
    """
    S = log_mel(clip, cfg) if _log_mel is None else _log_mel
    T = S.shape[1]
    flux = np.maximum(0.0, np.diff(S, axis=1)).sum(axis=0)
    lag = cfg.window // (2 * cfg.hop)
    env = np.zeros(T)
    body = flux[:max(0, T - 1 - lag)]
    env[1 + lag:1 + lag + len(body)] = body
    return env[None, :]


def zscore_normalize(m: np.ndarray) -> np.ndarray:
    """Per-row z-score with population std; near-constant rows become zero."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 1:
        return zscore_normalize(m[None, :])[0]
    mean = m.mean(axis=1, keepdims=True)
    std = m.std(axis=1, keepdims=True)
    flat = std[:, 0] < 1e-8
    out = (m - mean) / np.where(std < 1e-8, 1.0, std)
    out[flat] = 0.0
    return out


def stack_features(mfcc: np.ndarray, cqt: np.ndarray, onset: np.ndarray,
                   frame_rate: float = TARGET_SR / 512) -> FeatureMatrix:
    blocks = [np.atleast_2d(np.asarray(b, dtype=np.float64)) for b in (mfcc, cqt, onset)]
    cols = {b.shape[1] for b in blocks}
    if len(cols) != 1:
        raise ColumnMismatch(f"column counts differ: {[b.shape[1] for b in blocks]}")
    data = np.vstack([zscore_normalize(b) for b in blocks])
    names = (("mfcc", blocks[0].shape[0]), ("cqt", blocks[1].shape[0]),
             ("onset", blocks[2].shape[0]))
    return FeatureMatrix(data, frame_rate, names)


def extract_features(clip: AudioClip, cfg: FeatureConfig = FeatureConfig()) -> FeatureMatrix:
    """Full pipeline for a clip already at ``cfg.sample_rate``."""
    S = log_mel(clip, cfg)
    mfcc = compute_mfcc(clip, cfg, _log_mel=S)
    onset = compute_onset_env(clip, cfg, _log_mel=S)
    cqt = compute_cqt_mag(clip, cfg)
    return stack_features(mfcc, cqt, onset, cfg.frame_rate)


def write_feature_file(fm: FeatureMatrix, path) -> None:
    rows, cols = fm.data.shape
    try:
        with open(path, "wb") as fh:
            fh.write(FEATURE_MAGIC)
            fh.write(struct.pack("<IId", rows, cols, float(fm.frame_rate)))
            fh.write(fm.data.astype("<f4").tobytes(order="C"))
    except OSError as exc:
        raise IoError(str(exc)) from exc


def read_feature_file(path) -> FeatureMatrix:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if blob[:8] != FEATURE_MAGIC:
        raise BadMagic(f"{os.fspath(path)}: not a feature file")
    if len(blob) < 24:
        raise IoError(f"{os.fspath(path)}: truncated header")
    rows, cols, frame_rate = struct.unpack_from("<IId", blob, 8)
    if rows < 1 or cols < 1:
        raise DimensionOverflow(f"rows={rows} cols={cols}; both must be >= 1")
    payload = blob[24:]
    if rows * cols * 4 > len(payload):
        raise DimensionOverflow(
            f"header declares {rows}x{cols} but payload holds {len(payload) // 4} values")
    if rows * cols * 4 != len(payload):
        raise IoError(f"{os.fspath(path)}: trailing bytes after payload")
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float32)
    names = default_names() if rows == 98 else (("data", rows),)
    return FeatureMatrix(data, frame_rate, names)
