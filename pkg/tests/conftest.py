import os

import numpy as np
import pytest

from gamseg.audio_io import AudioClip

DATA = os.path.join(os.path.dirname(__file__), "data")
EXAMPLE_ANNOTATION = os.path.join(DATA, "example_annotation.txt")
SR = 22050


def sine(freq, seconds=1.0, sr=SR, amp=0.5, phase=0.0):
    t = np.arange(int(round(seconds * sr))) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t + phase), sr)


@pytest.fixture
def example_annotation_path():
    return EXAMPLE_ANNOTATION


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """Three synthetic tracks: two train, one test."""
    from gamseg.synth import generate_corpus
    out = tmp_path_factory.mktemp("corpus")
    generate_corpus(str(out), 3, seed=5, splits=(2, 0, 1), n_sections=(2, 3), duration=(4.0, 6.0))
    return os.path.join(str(out), "manifest.jsonl")


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_log():
    """Record one PASS/FAIL line per acceptance criterion for the terminal summary."""
    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
