"""Synthetic multi-section tracks with known boundaries."""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from .annotations import AnnotationTrack, BoundaryEvent, write_annotation_file
from .audio_io import TARGET_SR, AudioClip, write_wav
from .errors import SpecInvalid
from .manifest import DatasetManifest, ManifestEntry, write_manifest

WAVEFORMS = ("sine", "square", "saw")
CROSSFADE = 0.05
NOISE_FLOOR = 0.005
PITCHES = (110.0, 146.83, 196.0, 261.63, 329.63, 440.0)


@dataclass(frozen=True)
class Timbre:
    waveform: str = "sine"
    base_freq: float = 220.0
    harmonics: int = 4


@dataclass(frozen=True)
class Section:
    duration: float
    timbre: Timbre = Timbre()
    tempo: float = 120.0  # clicks per minute; 0 disables clicks
    amplitude: float = 0.5


@dataclass
class SynthSpec:
    sections: List[Section]
    seed: int = 0
    sample_rate: int = TARGET_SR

    def validate(self):
        if len(self.sections) < 2:
            raise SpecInvalid("need at least two sections")
        for i, s in enumerate(self.sections):
            if s.duration < 2.0:
                raise SpecInvalid(f"section {i} shorter than 2 s")
            if s.timbre.waveform not in WAVEFORMS:
                raise SpecInvalid(f"unknown waveform {s.timbre.waveform!r}")
            if s.timbre.harmonics < 1 or s.timbre.base_freq <= 0:
                raise SpecInvalid(f"section {i}: bad timbre {s.timbre}")
            if s.tempo < 0 or not 0 < s.amplitude <= 1:
                raise SpecInvalid(f"section {i}: bad tempo/amplitude")
            if s.timbre.base_freq * s.timbre.harmonics >= self.sample_rate / 2:
                raise SpecInvalid(f"section {i}: partials exceed Nyquist")
        for i, (a, b) in enumerate(zip(self.sections, self.sections[1:])):
            if not change_codes(a, b):
                raise SpecInvalid(f"sections {i} and {i + 1} are identical")


def change_codes(a: Section, b: Section) -> frozenset:
    codes = set()
    if a.timbre.waveform != b.timbre.waveform or a.timbre.harmonics != b.timbre.harmonics:
        codes.add("t")
    if a.timbre.base_freq != b.timbre.base_freq:
        codes.add("p")
    if a.tempo != b.tempo:
        codes.add("r")
    if a.amplitude != b.amplitude:
        codes.add("d")
    return frozenset(codes)


def _partials(timbre: Timbre):
    if timbre.waveform == "sine":
        orders = np.arange(1, timbre.harmonics + 1)
        amps = 1.0 / orders ** 2
    elif timbre.waveform == "square":
        orders = np.arange(timbre.harmonics) * 2 + 1
        amps = 1.0 / orders
    else:
        orders = np.arange(1, timbre.harmonics + 1)
        amps = 1.0 / orders
    return orders, amps / amps.sum()


def _render_section(sec: Section, n0: int, n1: int, sec_start: int, sr: int, rng) -> np.ndarray:
    """Samples n0..n1 (global indices) of one section whose nominal start is sec_start."""
    t = np.arange(n0, n1) / sr
    tone = np.zeros(n1 - n0)
    orders, amps = _partials(sec.timbre)
    phases = rng.uniform(0, 2 * np.pi, len(orders))
    for k, a, ph in zip(orders, amps, phases):
        f = k * sec.timbre.base_freq
        if f < sr / 2:
            tone += a * np.sin(2 * np.pi * f * t + ph)
    clicks = np.zeros_like(tone)
    if sec.tempo > 0:
        period = int(round(sr * 60.0 / sec.tempo))
        burst_len = int(0.02 * sr)
        burst = rng.uniform(-1, 1, burst_len) * np.exp(-np.arange(burst_len) / (0.004 * sr))
        first = sec_start + ((n0 - sec_start) // period) * period
        for onset in range(first, n1, period):
            lo, hi = max(onset, n0), min(onset + burst_len, n1)
            if hi > lo:
                clicks[lo - n0:hi - n0] += burst[lo - onset:hi - onset]
    return sec.amplitude * (0.75 * tone + 0.25 * clicks)


def generate_synthetic_track(spec: SynthSpec):
    """Render ``spec``; returns ``(AudioClip, AnnotationTrack)``.

    Neighbouring sections overlap by a 50 ms linear crossfade centred on
    the nominal join, so boundaries sit exactly at cumulative durations.
    """
    spec.validate()
    sr = spec.sample_rate
    rng = np.random.default_rng(spec.seed)
    edges = np.concatenate([[0.0], np.cumsum([s.duration for s in spec.sections])])
    n_total = int(round(edges[-1] * sr))
    half_fade = int(round(CROSSFADE * sr / 2))
    out = np.zeros(n_total)
    for i, sec in enumerate(spec.sections):
        start = int(round(edges[i] * sr))
        end = int(round(edges[i + 1] * sr))
        n0 = max(0, start - half_fade) if i > 0 else 0
        n1 = min(n_total, end + half_fade) if i < len(spec.sections) - 1 else n_total
        sig = _render_section(sec, n0, n1, start, sr, rng)
        gain = np.ones(n1 - n0)
        idx = np.arange(n0, n1)
        if i > 0:
            ramp = (idx - (start - half_fade)) / (2 * half_fade)
            gain = np.minimum(gain, np.clip(ramp, 0, 1))
        if i < len(spec.sections) - 1:
            ramp = ((end + half_fade) - idx) / (2 * half_fade)
            gain = np.minimum(gain, np.clip(ramp, 0, 1))
        out[n0:n1] += sig * gain
    out += NOISE_FLOOR * rng.standard_normal(n_total)
    out = np.clip(out, -1.0, 1.0)

    labels = {}
    events = []
    for i, sec in enumerate(spec.sections):
        key = (sec.timbre, sec.tempo, sec.amplitude)
        letter = labels.setdefault(key, chr(ord("a") + len(labels) % 26))
        codes = frozenset("b") if i == 0 else change_codes(spec.sections[i - 1], sec)
        events.append(BoundaryEvent(float(edges[i]), codes, letter, letter.upper()))
    events.append(BoundaryEvent(float(edges[-1]), frozenset("e")))
    return AudioClip(out, sr), AnnotationTrack(events)


def random_synth_spec(rng, n_sections=(2, 4), duration=(6.0, 10.0), seed=None) -> SynthSpec:
    """Draw a spec whose neighbouring sections differ in one to three attributes."""
    n = int(rng.integers(n_sections[0], n_sections[1] + 1))

    def draw():
        return dict(
            waveform=str(rng.choice(WAVEFORMS)),
            base_freq=float(rng.choice(PITCHES)),
            harmonics=int(rng.integers(1, 9)),
            tempo=float(rng.choice([0.0, 90.0, 120.0, 150.0, 180.0])),
            amplitude=float(rng.choice([0.25, 0.45, 0.7, 0.9])),
        )

    groups = [("waveform", "harmonics"), ("base_freq",), ("tempo",), ("amplitude",)]
    attrs = draw()
    prev = dict(attrs)
    sections = []
    for i in range(n):
        if i > 0:
            fresh = draw()
            k = int(rng.integers(1, 4))
            for g in rng.permutation(len(groups))[:k]:
                for key in groups[g]:
                    attrs[key] = fresh[key]
            # a redraw can land on the old value; force at least one real change
            while _as_section(attrs, 1.0) == _as_section(prev, 1.0):
                attrs["base_freq"] = float(rng.choice(PITCHES))
        prev = dict(attrs)
        dur = float(np.round(rng.uniform(*duration), 2))
        sections.append(_as_section(attrs, dur))
    if seed is None:
        seed = int(rng.integers(0, 2 ** 31 - 1))
    return SynthSpec(sections, seed=seed)


def _as_section(a: dict, duration: float) -> Section:
    return Section(duration, Timbre(a["waveform"], a["base_freq"], a["harmonics"]),
                   a["tempo"], a["amplitude"])


def split_counts(n_tracks: int, val_fraction: float, test_fraction: float):
    n_test = int(round(n_tracks * test_fraction))
    n_val = int(round(n_tracks * val_fraction))
    n_train = n_tracks - n_val - n_test
    if n_train < 1:
        raise SpecInvalid("split fractions leave no training tracks")
    return n_train, n_val, n_test


def generate_corpus(out_dir, n_tracks: int, seed: int = 0, splits: Sequence[int] | None = None,
                    n_sections=(2, 4), duration=(6.0, 10.0)) -> DatasetManifest:
    """Write ``n_tracks`` WAV + annotation pairs and a ``manifest.jsonl``.

    ``splits`` gives (train, val, test) counts in that order; default is all train.
    """
    os.makedirs(out_dir, exist_ok=True)
    if splits is None:
        splits = (n_tracks, 0, 0)
    if sum(splits) != n_tracks:
        raise SpecInvalid("split counts must sum to the number of tracks")
    names = ["train"] * splits[0] + ["val"] * splits[1] + ["test"] * splits[2]
    entries = []
    for i in range(n_tracks):
        rng = np.random.default_rng([seed, i])
        spec = random_synth_spec(rng, n_sections, duration)
        clip, track = generate_synthetic_track(spec)
        wav = os.path.join(out_dir, f"track_{i:04d}.wav")
        ann = os.path.join(out_dir, f"track_{i:04d}.txt")
        write_wav(wav, clip)
        write_annotation_file(track, ann)
        entries.append(ManifestEntry(os.path.abspath(wav), os.path.abspath(ann), "savgm", names[i]))
    manifest = DatasetManifest(entries)
    write_manifest(manifest, os.path.join(out_dir, "manifest.jsonl"))
    return manifest
