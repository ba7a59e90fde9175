"""Audio -> boundaries with a trained model, and corpus-level evaluation."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .annotations import load_annotation
from .audio_io import load_audio
from .errors import EmptyManifest, FeatureExtractionFailed
from .features import FeatureConfig, extract_features
from .manifest import DatasetManifest
from .neuralnet.checkpoint import load_checkpoint
from .neuralnet.model import BoundaryModel
from .postprocess import (DEFAULT_HALF_WIDTH, DEFAULT_THRESHOLD, DEFAULT_TOLERANCE,
                          peak_pick, report_from_results, score_track)

log = logging.getLogger(__name__)

CHUNK_FRAMES = 2048
CHUNK_OVERLAP = 256


def chunk_starts(T: int, chunk: int, overlap: int) -> list:
    stride = chunk - overlap
    starts = [0]
    while starts[-1] + chunk < T:
        starts.append(starts[-1] + stride)
    return starts


def predict_logits(model: BoundaryModel, features, chunk: int = CHUNK_FRAMES,
                   overlap: int = CHUNK_OVERLAP) -> np.ndarray:
    """Eval-mode logits for a whole track, one per input frame.

    Long inputs run in overlapping windows; each window contributes only
    its centre, dropping ``overlap // 2`` frames at interior seams.
    """
    x = np.asarray(getattr(features, "data", features))
    T = x.shape[1]
    starts = chunk_starts(T, chunk, overlap)
    out = np.empty(T, dtype=np.float64)
    half = overlap // 2
    for k, s in enumerate(starts):
        e = min(s + chunk, T)
        logits = model.forward(x[:, s:e], train=False)
        if model.arch.max_pool:
            logits = np.repeat(logits, 2)[:e - s]
        keep_lo = s + (half if k > 0 else 0)
        keep_hi = e - (half if k < len(starts) - 1 else 0)
        out[keep_lo:keep_hi] = logits[keep_lo - s:keep_hi - s]
    return out


def feature_config_of(model: BoundaryModel) -> FeatureConfig:
    meta = getattr(model, "meta", {}) or {}
    if "feature_config" in meta:
        return FeatureConfig.from_dict(meta["feature_config"])
    return FeatureConfig()


def features_for(path, cfg: FeatureConfig):
    try:
        clip = load_audio(path, cfg.sample_rate)
    except FileNotFoundError as exc:
        raise FeatureExtractionFailed(path, "missing file") from exc
    return extract_features(clip, cfg)


def predict_boundaries(audio_path, model, half_width: int = DEFAULT_HALF_WIDTH,
                       threshold: float = DEFAULT_THRESHOLD):
    """Returns ``(BoundaryPrediction, logits)`` for one audio file.

    ``model`` may be a loaded model or a checkpoint path.
    """
    if not isinstance(model, BoundaryModel):
        model = load_checkpoint(model)
    cfg = feature_config_of(model)
    fm = features_for(audio_path, cfg)
    if fm.n_rows != model.arch.n_features:
        raise FeatureExtractionFailed(audio_path, f"extractor gives {fm.n_rows} rows, "
                                                  f"model expects {model.arch.n_features}")
    logits = predict_logits(model, fm)
    return peak_pick(logits, fm.frame_rate, half_width, threshold), logits


def _map(fn, items, threads: int = 1):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def evaluate_corpus(manifest: DatasetManifest, split: str, model, tolerance: float = DEFAULT_TOLERANCE,
                    half_width: int = DEFAULT_HALF_WIDTH, threshold: float = DEFAULT_THRESHOLD,
                    threads: int = 1):
    """Score every entry of ``split``; returns an :class:`EvalReport`."""
    entries = manifest.split(split)
    if not entries:
        raise EmptyManifest(f"split {split!r} is empty")
    if not isinstance(model, BoundaryModel):
        model = load_checkpoint(model)

    def one(entry):
        pred, _ = predict_boundaries(entry.audio_path, model, half_width, threshold)
        ref = load_annotation(entry.annotation_path, entry.annotation_format).interior_times()
        return score_track(entry.name, pred.times, ref, tolerance)

    return report_from_results(_map(one, entries, threads), tolerance)
