"""Chunked training loop, augmentation bookkeeping and grid search."""
from __future__ import annotations

import csv
import io
import itertools
import logging
import os
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Dict, List, Optional, Sequence

import numpy as np

from .annotations import AnnotationTrack, FrameTargets, boundaries_to_frame_targets, load_annotation
from .audio_io import load_audio
from .augment import augment_track
from .errors import (ArchitectureMismatch, EmptyManifest, FeatureExtractionFailed,
                     GamsegError, GridTooLarge, RateOutOfRange)
from .features import FeatureConfig, FeatureMatrix, extract_features
from .inference import _map, predict_logits
from .manifest import DatasetManifest
from .neuralnet.checkpoint import checkpoint_bytes, load_checkpoint
from .neuralnet.loss import weighted_bce_grad, weighted_bce_with_logits
from .neuralnet.model import BoundaryModel, ModelArchitecture
from .neuralnet.optim import Adam, clip_grad_norm
from .postprocess import peak_pick, report_from_results, score_track

log = logging.getLogger(__name__)

GRID_CAP = 16


@dataclass(frozen=True)
class TrainingConfig:
    """Hyperparameters of one training run.

    Parameters
    ----------
    epochs, lr, pos_weight
        Optimization length, Adam step size and positive-class loss weight.
    chunk_frames, chunk_overlap
        Length of the training windows and their overlap, in frames.
    seed
        Drives initialization, augmentation draws, shuffling and dropout.
    tempo_range, pitch_semitones
        Ranges the augmentation parameters are drawn from.
    copies_per_track
        Augmented copies generated once, up front, per training track.
    smear
        Half-width of positive-frame widening in the targets.
    grad_clip
        Global gradient-norm cap, or None.
    half_width, threshold, tolerance
        Peak-picking and evaluation settings used for validation.
    """

    epochs: int = 60
    lr: float = 0.01
    pos_weight: float = 100.0
    chunk_frames: int = 2048
    chunk_overlap: int = 256
    seed: int = 0
    tempo_range: tuple = (0.8, 1.2)
    pitch_semitones: tuple = (-2.0, 2.0)
    copies_per_track: int = 1
    smear: int = 0
    grad_clip: Optional[float] = None
    half_width: int = 64
    threshold: float = 0.5
    tolerance: float = 3.0

    def __post_init__(self):
        lo, hi = self.tempo_range
        if not 0 < lo <= hi:
            raise RateOutOfRange(f"bad tempo range {self.tempo_range}")
        p_lo, p_hi = self.pitch_semitones
        if not -12 <= p_lo <= p_hi <= 12:
            raise RateOutOfRange(f"bad pitch range {self.pitch_semitones}")
        if not 0 <= self.chunk_overlap < self.chunk_frames:
            raise ValueError("chunk_overlap must be in [0, chunk_frames)")
        if self.epochs < 0 or self.copies_per_track < 0 or self.smear < 0:
            raise ValueError("epochs, copies_per_track and smear must be non-negative")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["tempo_range"] = list(self.tempo_range)
        d["pitch_semitones"] = list(self.pitch_semitones)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingConfig":
        known = {f.name for f in fields(cls)}
        d = {k: v for k, v in d.items() if k in known}
        for k in ("tempo_range", "pitch_semitones"):
            if k in d:
                d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class TrainingChunk:
    features: np.ndarray  # (rows, chunk_frames), zero-padded
    targets: np.ndarray   # (chunk_frames,)
    mask: np.ndarray      # (chunk_frames,), 1 on real frames

    @property
    def n_valid(self) -> int:
        return int(self.mask.sum())


def make_training_chunks(fm, targets, cfg: TrainingConfig = TrainingConfig()) -> List[TrainingChunk]:
    """Cut a track into fixed windows of ``cfg.chunk_frames`` frames.

    Windows start every ``chunk_frames - chunk_overlap`` frames until one
    reaches the end; the last is zero-padded and its padding masked.
    """
    x = np.asarray(getattr(fm, "data", fm), dtype=np.float32)
    y = np.asarray(getattr(targets, "values", targets), dtype=np.float32)
    if x.shape[1] != len(y):
        raise ValueError(f"{x.shape[1]} feature frames but {len(y)} targets")
    T, n = len(y), cfg.chunk_frames
    stride = n - cfg.chunk_overlap
    chunks = []
    start = 0
    while True:
        end = min(start + n, T)
        cx = np.zeros((x.shape[0], n), dtype=np.float32)
        cy = np.zeros(n, dtype=np.float32)
        cm = np.zeros(n, dtype=np.float32)
        cx[:, :end - start] = x[:, start:end]
        cy[:end - start] = y[start:end]
        cm[:end - start] = 1.0
        chunks.append(TrainingChunk(cx, cy, cm))
        if start + n >= T:
            return chunks
        start += stride


def _pool_pairs(v: np.ndarray) -> np.ndarray:
    if len(v) % 2:
        v = np.append(v, 0.0)
    return v.reshape(-1, 2).max(axis=1)


def chunk_loss_and_grad(model: BoundaryModel, chunk: TrainingChunk, pos_weight: float,
                        rng=None, train: bool = True):
    """Loss on the unpadded part of ``chunk``; fills parameter grads when ``train``.

    Only the valid prefix is run through the network: right padding would
    otherwise leak into the backward LSTM direction.
    """
    n = chunk.n_valid
    logits = model.forward(chunk.features[:, :n], train=train, rng=rng)
    y, m = chunk.targets[:n], chunk.mask[:n]
    if model.arch.max_pool:
        y, m = _pool_pairs(y), _pool_pairs(m)
    loss = weighted_bce_with_logits(logits, y, pos_weight, m)
    if train:
        model.backward(weighted_bce_grad(logits, y, pos_weight, m))
    return loss


@dataclass
class Example:
    name: str
    features: FeatureMatrix
    track: AnnotationTrack
    targets: FrameTargets


def _load_example(entry, fcfg: FeatureConfig, smear: int, aug=None) -> Example:
    """Decode, optionally augment, extract. ``aug`` is ``(tempo, semitones, cfg)``."""
    try:
        clip = load_audio(entry.audio_path, fcfg.sample_rate)
        track = load_annotation(entry.annotation_path, entry.annotation_format)
        name = entry.name
        if aug is not None:
            tempo, semis, cfg = aug
            clip, track = augment_track(clip, track, tempo, semis, cfg.tempo_range,
                                        cfg.pitch_semitones)
            name = f"{name}@t{tempo:.4f}p{semis:+.4f}"
        fm = extract_features(clip, fcfg)
    except (GamsegError, OSError, ValueError) as exc:
        raise FeatureExtractionFailed(entry.audio_path, str(exc)) from exc
    targets = boundaries_to_frame_targets(track, fm.frame_rate, fm.n_frames, smear)
    return Example(name, fm, track, targets)


def augmentation_plan(entries, cfg: TrainingConfig) -> list:
    """``(entry, aug)`` jobs: every original, then seeded augmented copies."""
    jobs = [(e, None) for e in entries]
    for i, e in enumerate(entries):
        for c in range(cfg.copies_per_track):
            rng = np.random.default_rng([cfg.seed, 1, i, c])
            tempo = float(rng.uniform(*cfg.tempo_range))
            semis = float(rng.uniform(*cfg.pitch_semitones))
            jobs.append((e, (tempo, semis, cfg)))
    return jobs


def prepare_split(manifest: DatasetManifest, split: str, cfg: TrainingConfig,
                  fcfg: FeatureConfig, augment: bool = False, threads: int = 1) -> List[Example]:
    entries = manifest.split(split)
    jobs = augmentation_plan(entries, cfg) if augment else [(e, None) for e in entries]
    return _map(lambda job: _load_example(job[0], fcfg, cfg.smear, job[1]), jobs, threads)


def evaluate_examples(model: BoundaryModel, examples: Sequence[Example], cfg: TrainingConfig,
                      tolerance: float | None = None):
    tol = cfg.tolerance if tolerance is None else tolerance
    results = []
    for ex in examples:
        logits = predict_logits(model, ex.features, cfg.chunk_frames, cfg.chunk_overlap)
        pred = peak_pick(logits, ex.features.frame_rate, cfg.half_width, cfg.threshold)
        results.append(score_track(ex.name, pred.times, ex.track.interior_times(), tol))
    return report_from_results(results, tol)


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    val_precision: float = float("nan")
    val_recall: float = float("nan")
    val_f1: float = float("nan")


@dataclass
class TrainResult:
    final: BoundaryModel
    best: BoundaryModel
    best_epoch: int
    metrics: List[EpochMetrics] = field(default_factory=list)
    header: dict = field(default_factory=dict)

    def metrics_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_precision", "val_recall", "val_f1"])
        for m in self.metrics:
            w.writerow([m.epoch, repr(m.train_loss), repr(m.val_precision), repr(m.val_recall),
                        repr(m.val_f1)])
        return buf.getvalue()

    def final_bytes(self) -> bytes:
        return checkpoint_bytes(self.final, dict(self.header, epoch=len(self.metrics)))

    def best_bytes(self) -> bytes:
        return checkpoint_bytes(self.best, dict(self.header, epoch=self.best_epoch))


def output_paths(out) -> Dict[str, str]:
    """Final checkpoint at ``out``; best and metrics alongside it."""
    stem, ext = os.path.splitext(str(out))
    return {"final": str(out), "best": f"{stem}.best{ext or '.ckpt'}",
            "metrics": f"{stem}.metrics.csv"}


def _resolve_init(init, arch: ModelArchitecture | None, fcfg: FeatureConfig | None):
    if init is None:
        return None, arch or ModelArchitecture(), fcfg or FeatureConfig()
    model = init if isinstance(init, BoundaryModel) else load_checkpoint(init)
    meta = getattr(model, "meta", {}) or {}
    if fcfg is None:
        fcfg = FeatureConfig.from_dict(meta["feature_config"]) if "feature_config" in meta \
            else FeatureConfig()
    if arch is not None and arch != model.arch:
        raise ArchitectureMismatch(f"init checkpoint has {model.arch}, requested {arch}")
    if model.arch.n_features != fcfg.n_features:
        raise FeatureExtractionFailed(str(init) if not isinstance(init, BoundaryModel) else "<model>",
                                      f"checkpoint expects {model.arch.n_features} feature rows, "
                                      f"extractor produces {fcfg.n_features}")
    return model, model.arch, fcfg


def train(manifest: DatasetManifest, arch: ModelArchitecture | None = None,
          cfg: TrainingConfig = TrainingConfig(), init=None, out=None,
          feature_config: FeatureConfig | None = None, threads: int = 1,
          train_examples: List[Example] | None = None,
          val_examples: List[Example] | None = None) -> TrainResult:
    """Fit a boundary model on the ``train`` split of ``manifest``.

    Parameters
    ----------
    manifest : DatasetManifest
        Source of train (and optional val) entries.
    arch : ModelArchitecture, optional
        Network shape; taken from ``init`` when fine-tuning.
    cfg : TrainingConfig
    init : path or BoundaryModel, optional
        Starting weights for fine-tuning. Its feature row count must match
        the extractor.
    out : path, optional
        Where to write the final checkpoint; the best checkpoint and the
        metrics CSV go next to it (see :func:`output_paths`).
    threads : int
        Parallel feature extraction; the order of examples is fixed.
    train_examples, val_examples : list of Example, optional
        Pre-extracted data, used by grid search to avoid re-extraction.

    Returns
    -------
    TrainResult

    Notes
    -----
    Each epoch visits every chunk once in a seeded random order, one chunk
    per Adam step. The best checkpoint maximizes val F1 when a val split
    exists, otherwise minimizes train loss; ties keep the earlier epoch.
    """
    init_model, arch, fcfg = _resolve_init(init, arch, feature_config)
    if arch.n_features != fcfg.n_features:
        raise FeatureExtractionFailed("<config>", f"architecture expects {arch.n_features} rows, "
                                                  f"extractor produces {fcfg.n_features}")
    if train_examples is None:
        if not manifest.split("train"):
            raise EmptyManifest("manifest has no train entries")
        train_examples = prepare_split(manifest, "train", cfg, fcfg, augment=True, threads=threads)
        val_examples = prepare_split(manifest, "val", cfg, fcfg, threads=threads)
    val_examples = val_examples or []
    if not train_examples:
        raise EmptyManifest("no training examples")

    chunks = [c for ex in train_examples for c in make_training_chunks(ex.features, ex.targets, cfg)]
    if init_model is not None:
        model = init_model.astype(np.float32)
    else:
        model = BoundaryModel(arch, seed=cfg.seed)
    opt = Adam(model.params, lr=cfg.lr)
    dropout_rng = np.random.default_rng([cfg.seed, 2])
    header = {"feature_config": fcfg.to_dict(), "training_config": cfg.to_dict(),
              "seed": cfg.seed}
    log.info("training on %d chunks from %d examples (%d val)", len(chunks), len(train_examples),
             len(val_examples))

    metrics: List[EpochMetrics] = []
    best, best_epoch, best_key = model.copy(), 0, None
    for epoch in range(1, cfg.epochs + 1):
        order = np.random.default_rng([cfg.seed, 3, epoch]).permutation(len(chunks))
        losses = []
        for idx in order:
            losses.append(chunk_loss_and_grad(model, chunks[idx], cfg.pos_weight, dropout_rng))
            if cfg.grad_clip:
                clip_grad_norm(model.params, cfg.grad_clip)
            opt.step()
        row = EpochMetrics(epoch, float(np.mean(losses)))
        if val_examples:
            s = evaluate_examples(model, val_examples, cfg).summary()
            row.val_precision = s["precision"]["mean"]
            row.val_recall = s["recall"]["mean"]
            row.val_f1 = s["f1"]["mean"]
            key = row.val_f1
        else:
            key = -row.train_loss
        if best_key is None or key > best_key:
            best, best_epoch, best_key = model.copy(), epoch, key
        metrics.append(row)
        log.info("epoch %d loss %.5f val_f1 %.4f", epoch, row.train_loss, row.val_f1)

    result = TrainResult(model, best, best_epoch, metrics, header)
    model.meta = dict(header, epoch=cfg.epochs)
    best.meta = dict(header, epoch=best_epoch)
    if out is not None:
        paths = output_paths(out)
        with open(paths["final"], "wb") as fh:
            fh.write(result.final_bytes())
        with open(paths["best"], "wb") as fh:
            fh.write(result.best_bytes())
        with open(paths["metrics"], "w", encoding="utf-8") as fh:
            fh.write(result.metrics_csv())
    return result


@dataclass
class GridRow:
    params: dict
    val_precision: float
    val_recall: float
    val_f1: float
    final_train_loss: float


@dataclass
class GridResult:
    rows: List[GridRow]

    def to_text(self) -> str:
        keys = sorted({k for r in self.rows for k in r.params})
        lines = ["\t".join(["rank"] + keys + ["val_precision", "val_recall", "val_f1",
                                             "train_loss"])]
        for i, r in enumerate(self.rows, 1):
            lines.append("\t".join([str(i)] + [repr(r.params.get(k)) for k in keys] +
                                   [f"{r.val_precision:.4f}", f"{r.val_recall:.4f}",
                                    f"{r.val_f1:.4f}", f"{r.final_train_loss:.6f}"]))
        return "\n".join(lines) + "\n"


def grid_combinations(grid: Dict[str, Sequence], cap: int = GRID_CAP) -> List[dict]:
    keys = sorted(grid)
    size = int(np.prod([len(grid[k]) for k in keys])) if keys else 0
    if size == 0 or size > cap:
        raise GridTooLarge(size, cap)
    known = {f.name for f in fields(TrainingConfig)}
    unknown = set(keys) - known
    if unknown:
        raise ValueError(f"unknown hyperparameters: {sorted(unknown)}")
    return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]


def grid_search(manifest: DatasetManifest, grid: Dict[str, Sequence],
                cfg: TrainingConfig = TrainingConfig(), arch: ModelArchitecture | None = None,
                epochs: int | None = None, cap: int = GRID_CAP,
                feature_config: FeatureConfig | None = None, threads: int = 1) -> GridResult:
    """Train every grid combination and rank by val F1.

    ``epochs`` defaults to a sixth of ``cfg.epochs`` (at least one). Ties
    in F1 are broken by ascending lr, then ascending pos_weight.
    """
    combos = grid_combinations(grid, cap)
    if not manifest.split("val"):
        raise EmptyManifest("grid search needs a val split")
    arch = arch or ModelArchitecture()
    fcfg = feature_config or FeatureConfig()
    n_epochs = epochs if epochs is not None else max(1, cfg.epochs // 6)
    base = replace(cfg, epochs=n_epochs)
    # augmentation draws depend only on seed and ranges, so extract once
    train_ex = prepare_split(manifest, "train", base, fcfg, augment=True, threads=threads)
    val_ex = prepare_split(manifest, "val", base, fcfg, threads=threads)
    rows = []
    for params in combos:
        run_cfg = replace(base, **params)
        if run_cfg.smear != base.smear or run_cfg.copies_per_track != base.copies_per_track \
                or run_cfg.tempo_range != base.tempo_range \
                or run_cfg.pitch_semitones != base.pitch_semitones:
            tr = prepare_split(manifest, "train", run_cfg, fcfg, augment=True, threads=threads)
        else:
            tr = train_ex
        res = train(manifest, arch, run_cfg, feature_config=fcfg, train_examples=tr,
                    val_examples=[])
        s = evaluate_examples(res.final, val_ex, run_cfg).summary()
        rows.append(GridRow(params, s["precision"]["mean"], s["recall"]["mean"], s["f1"]["mean"],
                            res.metrics[-1].train_loss if res.metrics else float("nan")))
    rows.sort(key=lambda r: (-r.val_f1, r.params.get("lr", base.lr),
                             r.params.get("pos_weight", base.pos_weight)))
    return GridResult(rows)
