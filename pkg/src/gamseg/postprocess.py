"""Peak picking, boundary matching, and hit-rate evaluation."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Sequence, Tuple

import numpy as np

from .errors import EmptyManifest, UnsortedInput
from .neuralnet.loss import sigmoid

DEFAULT_TOLERANCE = 3.0
DEFAULT_HALF_WIDTH = 64
DEFAULT_THRESHOLD = 0.5


@dataclass
class BoundaryPrediction:
    times: np.ndarray
    probabilities: np.ndarray

    def __len__(self):
        return len(self.times)

    def to_text(self) -> str:
        return "".join(f"{t:.6f}\t{p:.6f}\n" for t, p in zip(self.times, self.probabilities))


def local_max_frames(values, half_width: int = DEFAULT_HALF_WIDTH) -> np.ndarray:
    """Frames that are the maximum of their +-half_width window.

    On plateaus only the earliest frame of the window counts.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        return np.zeros(0, dtype=int)
    pad = np.full(half_width, -np.inf)
    windows = np.lib.stride_tricks.sliding_window_view(np.concatenate([pad, x, pad]),
                                                       2 * half_width + 1)
    is_max = x >= windows.max(axis=1)
    if half_width > 0:
        is_max &= x > windows[:, :half_width].max(axis=1)
    return np.flatnonzero(is_max)


def peak_pick(logits, frame_rate: float, half_width_frames: int = DEFAULT_HALF_WIDTH,
              threshold: float = DEFAULT_THRESHOLD) -> BoundaryPrediction:
    """Binarize a logit curve with a local-maximum filter and a probability floor."""
    x = np.asarray(logits, dtype=np.float64)
    frames = local_max_frames(x, half_width_frames)
    probs = sigmoid(x[frames]) if frames.size else np.zeros(0)
    keep = probs >= threshold
    frames, probs = frames[keep], probs[keep]
    return BoundaryPrediction(frames / float(frame_rate), probs)


def _check_sorted(name, seq):
    if np.any(np.diff(seq) < 0):
        raise UnsortedInput(f"{name} times must be sorted ascending")


def match_boundaries(pred_times, ref_times, tolerance: float = DEFAULT_TOLERANCE
                     ) -> List[Tuple[float, float]]:
    """Maximum one-to-one matching of predictions to references within ``tolerance``.

    Returns ``(ref_time, pred_time)`` pairs ordered by reference time.
    """
    pred = np.asarray(pred_times, dtype=np.float64).ravel()
    ref = np.asarray(ref_times, dtype=np.float64).ravel()
    _check_sorted("prediction", pred)
    _check_sorted("reference", ref)
    adj = [np.flatnonzero(np.abs(ref - p) <= tolerance).tolist() for p in pred]
    ref_owner = [-1] * len(ref)

    def augment(i, seen):
        for j in adj[i]:
            if seen[j]:
                continue
            seen[j] = True
            if ref_owner[j] < 0 or augment(ref_owner[j], seen):
                ref_owner[j] = i
                return True
        return False

    for i in range(len(pred)):
        if adj[i]:
            augment(i, [False] * len(ref))
    return [(float(ref[j]), float(pred[i])) for j, i in enumerate(ref_owner) if i >= 0]


def prf(n_matches: int, n_pred: int, n_ref: int) -> Tuple[float, float, float]:
    p = n_matches / n_pred if n_pred else 0.0
    r = n_matches / n_ref if n_ref else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return p, r, f


def evaluate_track(pred_times, ref_times, tolerance: float = DEFAULT_TOLERANCE):
    """Precision, recall and F1 of the hit-rate measure."""
    matches = match_boundaries(pred_times, ref_times, tolerance)
    return prf(len(matches), len(np.ravel(pred_times)), len(np.ravel(ref_times)))


@dataclass
class TrackResult:
    name: str
    precision: float
    recall: float
    f1: float
    matches: list = field(default_factory=list)
    n_pred: int = 0
    n_ref: int = 0


def _fmt(mean, std):
    return f"{mean:.3f} ({std:.2f})"


@dataclass
class EvalReport:
    tracks: List[TrackResult]
    tolerance: float = DEFAULT_TOLERANCE

    def summary(self) -> dict:
        out = {}
        for metric in ("precision", "recall", "f1"):
            vals = np.array([getattr(t, metric) for t in self.tracks], dtype=np.float64)
            mean = float(vals.mean()) if vals.size else 0.0
            std = float(vals.std()) if vals.size else 0.0
            out[metric] = {"mean": mean, "std": std, "formatted": _fmt(mean, std)}
        return out

    def to_dict(self) -> dict:
        return {
            "tolerance": self.tolerance,
            "std": "population",
            "n_tracks": len(self.tracks),
            "summary": self.summary(),
            "tracks": [
                {"name": t.name, "precision": t.precision, "recall": t.recall, "f1": t.f1,
                 "n_pred": t.n_pred, "n_ref": t.n_ref,
                 "matches": [[r, p] for r, p in t.matches]}
                for t in self.tracks
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table_row(self, label: str = "") -> str:
        s = self.summary()
        return "\t".join([label] + [s[m]["formatted"] for m in ("precision", "recall", "f1")])


def score_track(name: str, pred_times, ref_times, tolerance=DEFAULT_TOLERANCE) -> TrackResult:
    matches = match_boundaries(pred_times, ref_times, tolerance)
    n_pred, n_ref = len(np.ravel(pred_times)), len(np.ravel(ref_times))
    p, r, f = prf(len(matches), n_pred, n_ref)
    return TrackResult(name, p, r, f, matches, n_pred, n_ref)


def report_from_results(results: Sequence[TrackResult], tolerance=DEFAULT_TOLERANCE) -> EvalReport:
    if not results:
        raise EmptyManifest("no tracks to evaluate")
    return EvalReport(list(results), tolerance)
