import argparse
import contextlib
import io
import json
import os
import subprocess
import sys

import numpy as np
import pytest

from gamseg.cli import COMMANDS, build_parser, main
from gamseg.features import read_feature_file

HELP_DIR = os.path.join(os.path.dirname(__file__), "data", "help")
# set GAMSEG_UPDATE_SNAPSHOTS=1 to rewrite the stored help text
UPDATE = os.environ.get("GAMSEG_UPDATE_SNAPSHOTS") == "1"
SMALL_ARCH = ["--arch", "reduced", "--conv1", "2", "--conv2", "2", "--hidden", "4", "--layers", "1"]


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _help_text(name):
    buf = io.StringIO()
    with contextlib.redirect_stdout(buf), pytest.raises(SystemExit):
        build_parser().parse_args(([name] if name else []) + ["--help"])
    return buf.getvalue()


@pytest.mark.parametrize("name", [None] + sorted(COMMANDS))
def test_help_snapshot(name, monkeypatch):
    monkeypatch.setenv("COLUMNS", "100")
    text = _help_text(name)
    path = os.path.join(HELP_DIR, f"{name or 'gamseg'}.txt")
    if UPDATE or not os.path.exists(path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    with open(path, encoding="utf-8") as fh:
        assert text == fh.read()


def _subparsers(parser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def test_every_optional_flag_documents_its_default(monkeypatch):
    monkeypatch.setenv("COLUMNS", "100")
    for name, sub in _subparsers(build_parser()).items():
        text = " ".join(_help_text(name).split())
        for action in sub._actions:
            if action.required or not action.option_strings or action.dest == "help":
                continue
            assert "(default:" in (action.help or "") or action.default is not None, \
                (name, action.dest)
        assert text.count("(default:") >= sum(
            1 for a in sub._actions if a.option_strings and not a.required and a.dest != "help")


def test_unknown_flag_is_a_usage_error(capsys):
    code, _, err = run(["predict", "--bogus-flag"], capsys)
    assert code == 1
    assert "usage:" in err


def test_missing_subcommand_and_bad_values(capsys):
    assert run([], capsys)[0] == 1
    assert run(["synth", "--out", "x", "--tracks", "many"], capsys)[0] == 1
    assert run(["--threads", "0", "stats", "a.txt"], capsys)[0] == 1
    assert run(["stats"], capsys)[0] == 1
    assert run(["tune", "--manifest", "m", "--grid", "lr"], capsys)[0] == 1
    assert run(["baseline"], capsys)[0] == 1


def test_runtime_errors_exit_two(tmp_path, capsys):
    code, _, err = run(["extract", "--audio", tmp_path / "missing.wav", "--out", tmp_path / "f"],
                       capsys)
    assert code == 2 and "UnreadableFile" in err
    bad = tmp_path / "bad.txt"
    bad.write_text("0.0\t[b], a\nnonsense\n")
    assert run(["stats", bad], capsys)[0] == 2


def test_stats_and_convert(tmp_path, capsys, example_annotation_path):
    code, out, _ = run(["stats", example_annotation_path, "--json"], capsys)
    assert code == 0
    assert json.loads(out)["histogram"] == {"rp": 10, "t": 6}
    two = tmp_path / "two.txt"
    two.write_text("0.0\tintro\n12.5\tverse\n40.0\tend\n")
    assert run(["annotate-convert", "--input", two, "--output", tmp_path / "s.txt"], capsys)[0] == 0
    text = (tmp_path / "s.txt").read_text().splitlines()
    assert text[0].startswith("0.000000000\t[b]") and text[-1].startswith("40.000000000\t[e]")
    code = run(["annotate-convert", "--input", tmp_path / "s.txt", "--output", tmp_path / "t.txt",
                "--from", "savgm", "--to", "two_column"], capsys)[0]
    assert code == 0 and "12.5" in (tmp_path / "t.txt").read_text()


def test_global_flags_before_or_after_subcommand():
    p = build_parser()
    assert p.parse_args(["--seed", "7", "synth", "--out", "x"]).seed == 7
    assert p.parse_args(["synth", "--out", "x", "--seed", "7"]).seed == 7
    assert p.parse_args(["synth", "--out", "x"]).seed == 0


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth -> train -> evaluate through the CLI, done twice with the same seed."""
    root = tmp_path_factory.mktemp("cli")
    outs = []
    for run_id in ("a", "b"):
        d = root / run_id
        corpus = d / "corpus"
        assert main(["synth", "--tracks", "3", "--test", "1", "--out", str(corpus), "--seed", "7",
                     "--sections", "2", "2", "--duration", "3", "4"]) == 0
        ckpt = d / "model.ckpt"
        assert main(["train", "--manifest", str(corpus / "manifest.jsonl"), "--out", str(ckpt),
                     "--epochs", "2", "--copies", "0", "--seed", "7"] + SMALL_ARCH) == 0
        report = d / "report.json"
        assert main(["evaluate", "--manifest", str(corpus / "manifest.jsonl"), "--split", "test",
                     "--checkpoint", str(ckpt), "--tolerance", "3.0", "--out", str(report)]) == 0
        outs.append(d)
    return outs


def test_pipeline_outputs_exist(pipeline):
    d = pipeline[0]
    for name in ("model.ckpt", "model.best.ckpt", "model.metrics.csv", "report.json"):
        assert (d / name).exists()
    rep = json.loads((d / "report.json").read_text())
    assert rep["tolerance"] == 3.0 and rep["std"] == "population"
    for metric in ("precision", "recall", "f1"):
        assert set(rep["summary"][metric]) == {"mean", "std", "formatted"}


def test_pipeline_is_byte_identical(pipeline):
    a, b = pipeline
    for name in ("model.ckpt", "model.best.ckpt", "model.metrics.csv", "report.json",
                 "corpus/track_0000.wav", "corpus/manifest.jsonl"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_predict_extract_baseline(pipeline, tmp_path, capsys):
    d = pipeline[0]
    wav = d / "corpus" / "track_0002.wav"
    code, out, _ = run(["predict", "--audio", wav, "--checkpoint", d / "model.ckpt",
                        "--logits-out", tmp_path / "logits.feat"], capsys)
    assert code == 0
    curve = read_feature_file(tmp_path / "logits.feat")
    assert curve.data.shape[0] == 1
    for line in out.splitlines():
        t, p = map(float, line.split("\t"))
        assert p >= 0.5
    assert run(["extract", "--audio", wav, "--out", tmp_path / "x.feat"], capsys)[0] == 0
    assert read_feature_file(tmp_path / "x.feat").data.shape == (98, curve.data.shape[1])
    code, out, _ = run(["baseline", "--audio", wav], capsys)
    assert code == 0
    assert np.all(np.diff([float(x.split("\t")[0]) for x in out.splitlines()]) > 0)
    code, out, _ = run(["baseline", "--manifest", d / "corpus" / "manifest.jsonl"], capsys)
    assert code == 0 and json.loads(out)["n_tracks"] == 1


def test_fine_tune_and_tune(pipeline, tmp_path, capsys):
    d = pipeline[0]
    manifest = d / "corpus" / "manifest.jsonl"
    code = run(["train", "--manifest", manifest, "--out", tmp_path / "ft.ckpt", "--epochs", "1",
                "--copies", "0", "--init-checkpoint", d / "model.ckpt"], capsys)[0]
    assert code == 0 and (tmp_path / "ft.ckpt").exists()
    # the synthetic corpus has no val split, which grid search needs
    code, _, err = run(["tune", "--manifest", manifest, "--grid", "lr=0.01,0.02",
                        "--grid-epochs", "1", "--copies", "0"] + SMALL_ARCH, capsys)
    assert code == 2 and "EmptyManifest" in err


def test_console_script_entry_point():
    proc = subprocess.run([sys.executable, "-m", "gamseg.cli", "predict", "--bogus-flag"],
                          capture_output=True, text=True)
    assert proc.returncode == 1 and "usage:" in proc.stderr
