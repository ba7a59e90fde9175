import os

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gamseg.annotations import parse_annotation_file
from gamseg.errors import SpecInvalid
from gamseg.manifest import load_manifest
from gamseg.synth import (Section, SynthSpec, Timbre, change_codes, generate_corpus,
                          generate_synthetic_track, random_synth_spec, split_counts)

A = Section(10.0, Timbre("sine", 220.0, 3), 120.0, 0.5)


def test_two_ten_second_sections():
    B = Section(10.0, Timbre("saw", 220.0, 3), 120.0, 0.5)
    clip, track = generate_synthetic_track(SynthSpec([A, B], seed=1))
    assert len(clip) == 20 * 22050
    assert track.interior_times().tolist() == [10.0]
    assert track.events[-1].is_end and track.events[-1].time == 20.0
    assert track.events[1].categories == {"t"}


@pytest.mark.parametrize("change,codes", [
    (dict(timbre=Timbre("sine", 330.0, 3)), {"p"}),
    (dict(timbre=Timbre("sine", 220.0, 5)), {"t"}),
    (dict(tempo=90.0), {"r"}),
    (dict(amplitude=0.9), {"d"}),
    (dict(tempo=0.0, amplitude=0.25), {"r", "d"}),
])
def test_change_codes(change, codes):
    B = Section(**{**A.__dict__, **change})
    assert change_codes(A, B) == codes
    _, track = generate_synthetic_track(SynthSpec([A, B]))
    assert track.events[1].categories == codes


def test_same_seed_same_audio():
    B = Section(4.0, Timbre("square", 110.0, 2), 0.0, 0.7)
    spec = SynthSpec([A, B], seed=9)
    a, _ = generate_synthetic_track(spec)
    b, _ = generate_synthetic_track(spec)
    assert a.samples.tobytes() == b.samples.tobytes()
    c, _ = generate_synthetic_track(SynthSpec([A, B], seed=10))
    assert c.samples.tobytes() != a.samples.tobytes()


@pytest.mark.parametrize("sections", [
    [A],
    [A, A],
    [A, Section(1.5, Timbre("saw"), 0.0, 0.5)],
    [A, Section(3.0, Timbre("noise"), 0.0, 0.5)],
    [A, Section(3.0, Timbre("sine", 3000.0, 8), 0.0, 0.5)],
    [A, Section(3.0, Timbre("saw"), 0.0, 1.5)],
])
def test_invalid_specs(sections):
    with pytest.raises(SpecInvalid):
        generate_synthetic_track(SynthSpec(sections))


def test_audio_is_bounded():
    loud = Section(3.0, Timbre("square", 110.0, 8), 180.0, 1.0)
    clip, _ = generate_synthetic_track(SynthSpec([A, loud], seed=2))
    assert np.abs(clip.samples).max() <= 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10 ** 6))
def test_boundaries_equal_cumulative_durations(seed):
    spec = random_synth_spec(np.random.default_rng(seed), duration=(2.0, 4.0))
    _, track = generate_synthetic_track(spec)
    edges = np.cumsum([s.duration for s in spec.sections])
    assert track.interior_times().tolist() == edges[:-1].tolist()
    assert track.duration == edges[-1]
    for ev in track.events[1:-1]:
        assert ev.categories


def test_split_counts():
    assert split_counts(10, 0.2, 0.1) == (7, 2, 1)
    with pytest.raises(SpecInvalid):
        split_counts(2, 0.5, 0.5)


def test_corpus_is_reproducible(tmp_path):
    kw = dict(seed=4, splits=(2, 1, 0), n_sections=(2, 2), duration=(2.0, 3.0))
    generate_corpus(tmp_path / "a", 3, **kw)
    generate_corpus(tmp_path / "b", 3, **kw)
    names = sorted(os.listdir(tmp_path / "a"))
    assert names == sorted(os.listdir(tmp_path / "b"))
    assert "manifest.jsonl" in names and len(names) == 7
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
    m = load_manifest(tmp_path / "a" / "manifest.jsonl")
    assert [e.split for e in m.entries] == ["train", "train", "val"]
    parse_annotation_file(m.entries[0].annotation_path)


def test_corpus_split_sum_checked(tmp_path):
    with pytest.raises(SpecInvalid):
        generate_corpus(tmp_path, 3, splits=(1, 1, 0))
