"""Unsupervised comparator: self-similarity matrix + checkerboard novelty."""
from __future__ import annotations

import numpy as np

from .audio_io import load_audio
from .errors import KernelTooLarge, SSMTooLarge
from .features import FeatureConfig, extract_features
from .postprocess import DEFAULT_HALF_WIDTH, BoundaryPrediction, peak_pick

MAX_FRAMES = 20000
DEFAULT_KERNEL = 128
# novelty is min-max scaled, so secondary boundaries sit well below 0.5
BASELINE_THRESHOLD = 0.1


class SelfSimilarityMatrix:
    def __init__(self, values: np.ndarray, frame_rate: float):
        self.values = values
        self.frame_rate = frame_rate

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


def compute_ssm(features, frame_rate: float | None = None) -> SelfSimilarityMatrix:
    """Cosine similarity between every pair of feature columns."""
    X = np.asarray(getattr(features, "data", features), dtype=np.float64)
    if frame_rate is None:
        frame_rate = getattr(features, "frame_rate", 1.0)
    T = X.shape[1]
    if T > MAX_FRAMES:
        raise SSMTooLarge(f"{T} frames exceeds the {MAX_FRAMES}-frame SSM cap")
    norms = np.linalg.norm(X, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    U = X / safe
    U[:, norms == 0] = 0.0
    S = np.clip(U.T @ U, -1.0, 1.0)
    S = 0.5 * (S + S.T)
    np.fill_diagonal(S, 1.0)
    return SelfSimilarityMatrix(S, frame_rate)


def checkerboard_kernel(L: int) -> np.ndarray:
    """2L x 2L kernel: +1 on the diagonal blocks, -1 off them, Gaussian taper (sigma = L/2)."""
    u = np.arange(-L, L) + 0.5
    sign = np.sign(u)
    taper = np.exp(-0.5 * (u / (L / 2.0)) ** 2)
    return np.outer(sign * taper, sign * taper)


def foote_novelty(ssm, L: int = DEFAULT_KERNEL) -> np.ndarray:
    """Novelty curve, min-max scaled to [0, 1].

    Position t compares frames [t-L, t) with [t, t+L); positions where the
    kernel does not fit inside the matrix are left at zero.
    """
    S = getattr(ssm, "values", ssm)
    T = S.shape[0]
    if L < 1 or 2 * L > T:
        raise KernelTooLarge(f"kernel half-width {L} needs at least {2 * L} frames, have {T}")
    K = checkerboard_kernel(L)
    nov = np.zeros(T)
    for t in range(L, T - L + 1):
        nov[t] = np.sum(K * S[t - L:t + L, t - L:t + L])
    valid = nov[L:T - L + 1]
    lo, hi = valid.min(), valid.max()
    if hi - lo < 1e-12:
        return np.zeros(T)
    out = np.zeros(T)
    out[L:T - L + 1] = (valid - lo) / (hi - lo)
    return out


def _as_logits(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 1e-12, 1 - 1e-12)
    return np.log(p) - np.log1p(-p)


def baseline_segment(audio_path, L: int = DEFAULT_KERNEL, half_width: int = DEFAULT_HALF_WIDTH,
                     threshold: float = BASELINE_THRESHOLD,
                     cfg: FeatureConfig = FeatureConfig()) -> BoundaryPrediction:
    """Audio file -> boundary times via SSM novelty and the shared peak picker."""
    fm = extract_features(load_audio(audio_path, cfg.sample_rate), cfg)
    return segment_features(fm, L, half_width, threshold)


def segment_features(fm, L: int = DEFAULT_KERNEL, half_width: int = DEFAULT_HALF_WIDTH,
                     threshold: float = BASELINE_THRESHOLD) -> BoundaryPrediction:
    T = fm.n_frames
    if 2 * L > T:
        # an exactly fitting kernel has one position and scales to nothing; leave room to slide
        L = max(1, T // 4)
    nov = foote_novelty(compute_ssm(fm), L)
    # novelty is already a [0, 1] score, so map it into logit space for the picker
    return peak_pick(_as_logits(nov), fm.frame_rate, half_width, threshold)
