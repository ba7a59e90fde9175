import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gamseg.audio_io import AudioClip, write_wav
from gamseg.baseline import (BASELINE_THRESHOLD, checkerboard_kernel, compute_ssm,
                             baseline_segment, foote_novelty, segment_features)
from gamseg.errors import KernelTooLarge, SSMTooLarge
from gamseg.features import FeatureMatrix
from gamseg.postprocess import evaluate_track, local_max_frames
from gamseg.synth import Section, SynthSpec, Timbre, generate_synthetic_track


def _blocks(lengths, dim=6, seed=0):
    """Feature matrix of homogeneous blocks with mutually orthogonal columns."""
    rng = np.random.default_rng(seed)
    basis = np.linalg.qr(rng.standard_normal((dim, dim)))[0]
    cols = [np.repeat(basis[:, [k]], n, axis=1) for k, n in enumerate(lengths)]
    return np.concatenate(cols, axis=1)


def test_ssm_examples():
    X = np.array([[1.0, 1.0], [0.0, 1.0]])
    S = compute_ssm(X).values
    np.testing.assert_allclose(S, [[1, 1 / np.sqrt(2)], [1 / np.sqrt(2), 1]], atol=1e-12)
    np.testing.assert_allclose(compute_ssm(np.ones((3, 5))).values, np.ones((5, 5)))
    np.testing.assert_allclose(compute_ssm(np.eye(4)).values, np.eye(4))


def test_ssm_zero_columns():
    X = np.array([[1.0, 0.0, 2.0], [1.0, 0.0, 2.0]])
    S = compute_ssm(X).values
    assert S[1].tolist() == [0.0, 1.0, 0.0]
    assert S[:, 1].tolist() == [0.0, 1.0, 0.0]
    assert S[0, 2] == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 40), st.integers(0, 10 ** 6))
def test_ssm_symmetric_unit_diagonal(d, T, seed):
    X = np.random.default_rng(seed).standard_normal((d, T))
    S = compute_ssm(FeatureMatrix(X.astype(np.float32), 43.0))
    assert S.frame_rate == 43.0 and S.n_frames == T
    assert np.abs(S.values - S.values.T).max() <= 1e-6
    np.testing.assert_array_equal(np.diag(S.values), 1.0)
    assert np.all(np.abs(S.values) <= 1.0)


def test_ssm_size_cap():
    with pytest.raises(SSMTooLarge):
        compute_ssm(np.zeros((1, 20001)))


def test_kernel_structure():
    K = checkerboard_kernel(4)
    assert K.shape == (8, 8)
    np.testing.assert_allclose(K, K.T)
    assert (K[:4, :4] > 0).all() and (K[4:, 4:] > 0).all()
    assert (K[:4, 4:] < 0).all() and (K[4:, :4] < 0).all()
    assert K.sum() == pytest.approx(0.0, abs=1e-12)


def test_two_block_argmax_at_boundary():
    S = compute_ssm(_blocks([60, 80]))
    nov = foote_novelty(S, 16)
    assert abs(int(nov.argmax()) - 60) <= 1
    assert nov.min() == 0.0 and nov.max() == 1.0


def test_constant_ssm_is_flat():
    assert not foote_novelty(np.ones((50, 50)), 10).any()


def test_exact_fit():
    nov = foote_novelty(compute_ssm(_blocks([10, 10])), 10)
    assert len(nov) == 20
    assert np.count_nonzero(nov[:10]) == 0 and np.count_nonzero(nov[11:]) == 0


def test_kernel_too_large():
    with pytest.raises(KernelTooLarge):
        foote_novelty(np.eye(10), 6)
    with pytest.raises(KernelTooLarge):
        foote_novelty(np.eye(10), 0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 8))
def test_reversal_symmetry(seed, L):
    rng = np.random.default_rng(seed)
    X = np.cumsum(rng.standard_normal((5, 60)), axis=1)
    a = foote_novelty(compute_ssm(X), L)
    b = foote_novelty(compute_ssm(X[:, ::-1]), L)
    T = X.shape[1]
    np.testing.assert_allclose(b[L:T - L + 1], a[L:T - L + 1][::-1], atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(30, 80), min_size=2, max_size=4), st.integers(0, 1000))
def test_block_boundaries_are_top_peaks(lengths, seed):
    L = 12
    nov = foote_novelty(compute_ssm(_blocks(lengths, seed=seed)), L)
    peaks = local_max_frames(nov, 5)
    top = sorted(peaks[np.argsort(nov[peaks])[::-1][:len(lengths)]])
    for b in np.cumsum(lengths)[:-1]:
        assert min(abs(p - b) for p in top) <= 1


def _three_section_track(tmp_path):
    spec = SynthSpec([Section(9.0, Timbre("sine", 220.0, 3), 120.0, 0.5),
                      Section(9.0, Timbre("saw", 146.83, 6), 0.0, 0.7),
                      Section(9.0, Timbre("square", 329.63, 2), 150.0, 0.4)], seed=3)
    clip, track = generate_synthetic_track(spec)
    path = tmp_path / "three.wav"
    write_wav(path, clip)
    return path, track


def test_three_section_track_recovers_both_boundaries(tmp_path):
    path, track = _three_section_track(tmp_path)
    pred = baseline_segment(path)
    ref = track.interior_times()
    assert ref.tolist() == [9.0, 18.0]
    _, recall, _ = evaluate_track(pred.times, ref, 3.0)
    assert recall == 1.0


def test_single_texture_and_noise_contract(tmp_path):
    t = np.arange(22050 * 12) / 22050
    write_wav(tmp_path / "tone.wav", AudioClip(0.4 * np.sin(2 * np.pi * 220 * t), 22050))
    write_wav(tmp_path / "noise.wav",
              AudioClip(np.random.default_rng(0).uniform(-0.3, 0.3, len(t)), 22050))
    for name in ("tone.wav", "noise.wav"):
        times = baseline_segment(tmp_path / name).times
        assert np.all(np.diff(times) > 0)


def test_short_input_shrinks_kernel():
    fm = FeatureMatrix(_blocks([40, 40]).astype(np.float32), 43.0)
    pred = segment_features(fm, L=128, threshold=BASELINE_THRESHOLD)
    assert any(abs(t * 43.0 - 40) <= 1 for t in pred.times)
