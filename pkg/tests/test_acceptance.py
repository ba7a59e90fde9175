"""Acceptance criteria, each run at its stated tolerance.

Every test records one PASS/FAIL line (shown in the terminal summary)
before asserting, so a failing criterion still reports its measured value.
The two training criteria take several minutes on one CPU core.
"""
import math
import os
import time

import numpy as np
import pytest

from gamseg.annotations import (CATEGORY_CODES, AnnotationTrack, BoundaryEvent,
                                boundaries_to_frame_targets, parse_annotation_file,
                                parse_annotation_text, serialize_annotation_file, time_to_frame)
from gamseg.audio_io import AudioClip
from gamseg.augment import augment_track
from gamseg.baseline import segment_features
from gamseg.cli import main
from gamseg.features import (FeatureConfig, compute_cqt_mag, compute_mfcc, compute_onset_env,
                             extract_features)
from gamseg.neuralnet import (REDUCED_ARCH, BoundaryModel, ModelArchitecture,
                              grad_finite_diff_check, weighted_bce_with_logits)
from gamseg.postprocess import (local_max_frames, match_boundaries, report_from_results,
                                score_track)
from gamseg.synth import Section, SynthSpec, Timbre, generate_corpus, generate_synthetic_track
from gamseg.training import TrainingConfig, evaluate_examples, prepare_split, train

from conftest import sine
from test_postprocess import brute_force_matches

FPS = 22050 / 512

# chosen on a separate tuning corpus (seed 11); evaluated here on seed 23
GENERALIZATION_ARCH = ModelArchitecture(conv1_filters=4, conv2_filters=8, hidden=16)
GENERALIZATION_CFG = TrainingConfig(epochs=60, lr=0.003, copies_per_track=0, smear=2, seed=0)
GENERALIZATION_CORPUS_SEED = 23


def test_criterion_01_paper_scale_results(acceptance_log):
    acceptance_log(1, False, "NOT REPRODUCIBLE: the annotated game-music audio is not "
                             "distributable; covered by criteria 2-10 instead")
    pytest.skip("paper-scale table needs the original non-distributable audio corpus")


def test_criterion_02_gradient_check(acceptance_log):
    t0 = time.perf_counter()
    errors = []
    for seed in range(5):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((98, 16))
        y = np.zeros(16)
        y[rng.integers(0, 16)] = 1.0
        model = BoundaryModel(REDUCED_ARCH, seed=seed, dtype=np.float64)
        errors.append(grad_finite_diff_check(model, x, y, seed=seed))
    elapsed = time.perf_counter() - t0
    ok = max(errors) < 1e-4 and elapsed < 60
    acceptance_log(2, ok, f"max rel err {max(errors):.2e} over 5 seeds, {elapsed:.1f} s")
    assert ok


def test_criterion_03_overfit_five_tracks(tmp_path, acceptance_log):
    t0 = time.perf_counter()
    m = generate_corpus(str(tmp_path), 5, seed=1)
    cfg = TrainingConfig(epochs=200, copies_per_track=0, seed=0)
    examples = prepare_split(m, "train", cfg, FeatureConfig())
    res = train(m, REDUCED_ARCH, cfg, train_examples=examples, val_examples=[])
    f1 = evaluate_examples(res.final, examples, cfg, tolerance=1.0).summary()["f1"]["mean"]
    elapsed = time.perf_counter() - t0
    ok = f1 >= 0.90 and elapsed < 600
    acceptance_log(3, ok, f"train-set F1 {f1:.3f} at 1 s after 200 epochs, {elapsed:.0f} s")
    assert ok


def test_criterion_04_generalization(tmp_path, acceptance_log):
    t0 = time.perf_counter()
    m = generate_corpus(str(tmp_path), 30, seed=GENERALIZATION_CORPUS_SEED, splits=(20, 0, 10))
    cfg = GENERALIZATION_CFG
    fcfg = FeatureConfig()
    train_ex = prepare_split(m, "train", cfg, fcfg, augment=True)
    test_ex = prepare_split(m, "test", cfg, fcfg)
    res = train(m, GENERALIZATION_ARCH, cfg, train_examples=train_ex, val_examples=[])
    learned = evaluate_examples(res.final, test_ex, cfg, tolerance=3.0).summary()["f1"]["mean"]
    foote = report_from_results([
        score_track(ex.name, segment_features(ex.features).times, ex.track.interior_times(), 3.0)
        for ex in test_ex]).summary()["f1"]["mean"]
    elapsed = time.perf_counter() - t0
    ok = learned >= 0.70 and learned >= foote
    acceptance_log(4, ok, f"held-out F1 learned {learned:.3f} vs novelty baseline {foote:.3f} "
                          f"(need >= 0.70 and >= baseline), {elapsed:.0f} s")
    assert learned >= 0.70
    assert learned >= foote


def test_criterion_05_matching_oracle(acceptance_log):
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(200):
        pred = np.sort(rng.uniform(0, 30, rng.integers(0, 11)))
        ref = np.sort(rng.uniform(0, 30, rng.integers(0, 11)))
        if len(match_boundaries(pred, ref, 3.0)) != brute_force_matches(pred, ref, 3.0):
            bad += 1
    acceptance_log(5, bad == 0, f"{200 - bad}/200 instances equal the exhaustive maximum")
    assert bad == 0


def _plain_bce(x, y):
    p = 1 / (1 + np.exp(-x))
    return float(np.mean(-(y * np.log(p) + (1 - y) * np.log(1 - p))))


def test_criterion_06_loss_closed_forms(acceptance_log):
    e1 = abs(weighted_bce_with_logits([0.0], [1.0], 100.0) - 100 * math.log(2))
    e2 = abs(weighted_bce_with_logits([0.0], [0.0], 100.0) - math.log(2))
    rng = np.random.default_rng(6)
    e3 = 0.0
    for _ in range(100):
        x = rng.uniform(-8, 8, 64)
        y = (rng.random(64) < 0.2).astype(float)
        e3 = max(e3, abs(weighted_bce_with_logits(x, y, 1.0) - _plain_bce(x, y)))
    ok = e1 < 1e-9 and e2 < 1e-9 and e3 < 1e-12
    acceptance_log(6, ok, f"closed-form errors {e1:.1e}, {e2:.1e}; unit-weight max diff {e3:.1e}")
    assert ok


def test_criterion_07_dsp_sanity(acceptance_log):
    C = compute_cqt_mag(sine(440.0, 3.0))
    hit = float(np.mean(np.abs(C.argmax(axis=0) - 45) <= 1))
    t = np.arange(4 * 22050) / 22050
    x = 0.3 * np.sin(2 * np.pi * 220 * t) * (1 + 0.5 * np.sin(2 * np.pi * 0.7 * t))
    x += 0.1 * np.random.default_rng(7).standard_normal(len(t))
    rows = extract_features(AudioClip(x, 22050)).data.astype(np.float64)
    live = rows.std(axis=1) > 0
    mean_err = float(np.abs(rows[live].mean(axis=1)).max())
    std_err = float(np.abs(rows[live].std(axis=1) - 1).max())
    rng = np.random.default_rng(70)
    agree = 0
    for n in rng.integers(2048, 40000, 50):
        clip = AudioClip(rng.uniform(-0.2, 0.2, n), 22050)
        Ts = {compute_mfcc(clip).shape[1], compute_cqt_mag(clip).shape[1],
              compute_onset_env(clip).shape[1]}
        agree += Ts == {1 + n // 512}
    ok = hit >= 0.9 and mean_err < 1e-6 and std_err < 1e-3 and agree == 50
    acceptance_log(7, ok, f"CQT bin 45+-1 in {hit:.0%} of frames; z-score |mean| {mean_err:.1e}, "
                          f"|std-1| {std_err:.1e}; frame counts agree {agree}/50")
    assert ok


def _random_track(rng):
    n = int(rng.integers(0, 12))
    times = np.round(np.cumsum(rng.uniform(0.001, 30, n + 2)), 9)
    times -= times[0]
    events = []
    for i, t in enumerate(times):
        if i == 0:
            codes = {"b"}
        elif i == len(times) - 1:
            codes = {"e"}
        else:
            codes = set(rng.choice(CATEGORY_CODES[:7], int(rng.integers(0, 3)), replace=False))
        fine = coarse = func = None
        if rng.random() < 0.8:
            fine = str(rng.choice(["a", "b'", "c", "A2"]))
            if rng.random() < 0.7:
                coarse = str(rng.choice(["A", "B", "C'"]))
                if rng.random() < 0.5:
                    func = str(rng.choice(["intro", "main theme", "bridge, part 2"]))
        events.append(BoundaryEvent(float(round(t, 9)), frozenset(codes), fine, coarse, func))
    return AnnotationTrack(events)


def test_criterion_08_annotation_roundtrip(example_annotation_path, acceptance_log):
    example = parse_annotation_file(example_annotation_path)
    ok_example = parse_annotation_text(serialize_annotation_file(example)) == example
    rng = np.random.default_rng(8)
    generated = sum(parse_annotation_text(serialize_annotation_file(t)) == t
                    for t in (_random_track(rng) for _ in range(200)))
    frame = time_to_frame(12.353015873, FPS)
    track = AnnotationTrack([BoundaryEvent(0.0, frozenset("b")),
                             BoundaryEvent(12.353015873, frozenset("t")),
                             BoundaryEvent(20.0, frozenset("e"))])
    target = np.flatnonzero(boundaries_to_frame_targets(track, FPS, 1000).values).tolist()
    ok = ok_example and generated == 200 and frame == 532 and target == [532]
    acceptance_log(8, ok, f"example file identity {ok_example}; {generated}/200 generated tracks; "
                          f"frame index {frame}")
    assert ok


def _pipeline(root):
    corpus = os.path.join(root, "corpus")
    argv_common = ["--seed", "3"]
    codes = [main(["synth", "--tracks", "4", "--test", "1", "--out", corpus,
                   "--sections", "2", "3", "--duration", "3", "5"] + argv_common)]
    ckpt = os.path.join(root, "model.ckpt")
    codes.append(main(["train", "--manifest", os.path.join(corpus, "manifest.jsonl"),
                       "--out", ckpt, "--epochs", "3", "--arch", "reduced"] + argv_common))
    report = os.path.join(root, "report.json")
    codes.append(main(["evaluate", "--manifest", os.path.join(corpus, "manifest.jsonl"),
                       "--checkpoint", ckpt, "--out", report] + argv_common))
    names = ["model.ckpt", "model.best.ckpt", "model.metrics.csv", "report.json"]
    return codes, {n: open(os.path.join(root, n), "rb").read() for n in names}


def test_criterion_09_determinism(tmp_path, acceptance_log):
    codes_a, a = _pipeline(str(tmp_path / "a"))
    codes_b, b = _pipeline(str(tmp_path / "b"))
    same = [n for n in a if a[n] == b[n]]
    ok = codes_a == codes_b == [0, 0, 0] and len(same) == len(a)
    acceptance_log(9, ok, f"{len(same)}/{len(a)} outputs byte-identical across two seeded runs")
    assert ok


def _onset_boundaries(clip, k):
    env = compute_onset_env(clip)[0]
    peaks = local_max_frames(env, 32)
    return np.sort(peaks[np.argsort(env[peaks])[::-1][:k]]) / FPS


def test_criterion_10_augmentation_consistency(acceptance_log):
    specs = [
        SynthSpec([Section(4.0, Timbre("sine", 220.0, 3), 0.0, 0.3),
                   Section(4.0, Timbre("saw", 146.83, 6), 0.0, 0.9),
                   Section(4.0, Timbre("square", 329.63, 2), 0.0, 0.5)], seed=1),
        SynthSpec([Section(5.0, Timbre("square", 110.0, 4), 0.0, 0.8),
                   Section(3.5, Timbre("sine", 440.0, 2), 0.0, 0.25)], seed=2),
    ]
    worst = 0.0
    for spec in specs:
        clip, track = generate_synthetic_track(spec)
        base = _onset_boundaries(clip, len(track.interior_times()))
        for rate in (0.8, 0.9, 1.1, 1.2):
            out, scaled = augment_track(clip, track, tempo_rate=rate)
            found = _onset_boundaries(out, len(scaled.interior_times()))
            worst = max(worst, np.abs(found - scaled.interior_times()).max(),
                        np.abs(found - base / rate).max())
    ok = worst <= 0.2
    acceptance_log(10, ok, f"max deviation of re-detected boundaries from 1/r scaling "
                           f"{worst:.3f} s (limit 0.2 s)")
    assert ok
