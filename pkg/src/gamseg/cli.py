"""``gamseg`` command-line entry point."""
from __future__ import annotations

import argparse
import json
import logging
import sys


from . import annotations as ann
from .errors import GamsegError

log = logging.getLogger("gamseg")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage problems exit with status 1 instead of argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


class _FMT(argparse.ArgumentDefaultsHelpFormatter):
    """Append the default unless the flag is required or documents its own."""

    def _get_help_string(self, action):
        text = action.help or ""
        if action.required or action.default is None or "(default:" in text:
            return text
        return super()._get_help_string(action)


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    # subcommand copies default to SUPPRESS so they do not clobber values given
    # before the subcommand; their help spells the default out by hand
    specs = [("--seed", dict(type=int), 0, "random seed for generation, augmentation and training"),
             ("--threads", dict(type=int), 1, "worker threads for per-track stages"),
             ("--verbose", dict(action="store_true"), False, "log progress to stderr")]
    for flag, kw, default, text in specs:
        if suppress:
            p.add_argument(flag, default=argparse.SUPPRESS, help=f"{text} (default: {default})", **kw)
        else:
            p.add_argument(flag, default=default, help=text, **kw)


def _feature_flags(p):
    p.add_argument("--window", type=int, default=2048, help="analysis window (samples)")
    p.add_argument("--hop", type=int, default=512, help="hop size (samples)")
    p.add_argument("--n-mfcc", type=int, default=13, help="MFCC coefficients kept")


def _peak_flags(p, threshold=0.5):
    p.add_argument("--half-width", type=int, default=64, help="peak-picking half window (frames)")
    p.add_argument("--threshold", type=float, default=threshold,
                   help="minimum boundary probability")


def _arch_flags(p):
    p.add_argument("--arch", choices=("full", "reduced"), default="full",
                   help="preset: full (32/64 conv, 128 hidden) or reduced (2/4 conv, 8 hidden)")
    p.add_argument("--conv1", type=int, default=None, help="first conv filter count (default: from --arch)")
    p.add_argument("--conv2", type=int, default=None, help="second conv filter count (default: from --arch)")
    p.add_argument("--hidden", type=int, default=None, help="LSTM hidden size (default: from --arch)")
    p.add_argument("--layers", type=int, default=None, help="BiLSTM layer count (default: from --arch)")
    p.add_argument("--dropout", type=float, default=None,
                   help="dropout between layers (default: from --arch)")
    p.add_argument("--max-pool", action="store_true", help="pool over time after the convs")


def _train_flags(p):
    p.add_argument("--manifest", required=True, help="dataset manifest (JSON Lines)")
    p.add_argument("--epochs", type=int, default=60, help="training epochs")
    p.add_argument("--lr", type=float, default=0.01, help="Adam learning rate")
    p.add_argument("--pos-weight", type=float, default=100.0, help="positive-class loss weight")
    p.add_argument("--chunk-frames", type=int, default=2048, help="training window (frames)")
    p.add_argument("--chunk-overlap", type=int, default=256, help="window overlap (frames)")
    p.add_argument("--copies", type=int, default=1, help="augmented copies per training track")
    p.add_argument("--tempo-range", type=float, nargs=2, default=[0.8, 1.2],
                   metavar=("LO", "HI"), help="tempo augmentation range")
    p.add_argument("--pitch-range", type=float, nargs=2, default=[-2.0, 2.0],
                   metavar=("LO", "HI"), help="pitch augmentation range (semitones)")
    p.add_argument("--smear", type=int, default=0, help="target widening half-width (frames)")
    p.add_argument("--grad-clip", type=float, default=None, help="gradient norm cap (default: no clipping)")
    p.add_argument("--tolerance", type=float, default=3.0, help="validation hit tolerance (s)")
    _peak_flags(p)
    _arch_flags(p)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gamseg", formatter_class=_FMT,
                     description="Music boundary segmentation: features, training, evaluation.")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def cmd(name, help_text):
        return sub.add_parser(name, help=help_text, description=help_text, parents=[common],
                              formatter_class=_FMT)

    p = cmd("extract", "audio file -> feature file")
    p.add_argument("--audio", required=True, help="input audio (WAV)")
    p.add_argument("--out", required=True, help="output feature file")
    _feature_flags(p)

    p = cmd("annotate-convert", "convert between two-column and category annotations")
    p.add_argument("--input", required=True, help="annotation to read")
    p.add_argument("--output", required=True, help="annotation to write")
    p.add_argument("--from", dest="src_format", choices=("two_column", "savgm"),
                   default="two_column", help="input format")
    p.add_argument("--to", dest="dst_format", choices=("two_column", "savgm"),
                   default="savgm", help="output format")

    p = cmd("stats", "boundary category histogram over annotations")
    p.add_argument("files", nargs="*", help="annotation files")
    p.add_argument("--manifest", default=None,
                   help="take annotations from a manifest instead (default: none)")
    p.add_argument("--json", action="store_true", help="print JSON instead of a text chart")

    p = cmd("synth", "generate a synthetic corpus with known boundaries")
    p.add_argument("--tracks", type=int, default=20, help="number of tracks")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--val", type=int, default=0, help="tracks assigned to the val split")
    p.add_argument("--test", type=int, default=0, help="tracks assigned to the test split")
    p.add_argument("--sections", type=int, nargs=2, default=[2, 4], metavar=("MIN", "MAX"),
                   help="sections per track")
    p.add_argument("--duration", type=float, nargs=2, default=[6.0, 10.0], metavar=("MIN", "MAX"),
                   help="section duration range (s)")

    p = cmd("train", "train a boundary model")
    _train_flags(p)
    p.add_argument("--out", required=True, help="final checkpoint path")
    p.add_argument("--init-checkpoint", default=None, help="start from these weights (default: fresh init)")

    p = cmd("tune", "grid search over training hyperparameters")
    _train_flags(p)
    p.add_argument("--grid", action="append", default=[], metavar="NAME=V1,V2",
                   help="hyperparameter values to try (repeatable)")
    p.add_argument("--grid-epochs", type=int, default=10, help="epochs per grid point")
    p.add_argument("--cap", type=int, default=16, help="maximum number of grid points")
    p.add_argument("--out", default=None, help="write the ranked table here (default: stdout)")

    p = cmd("predict", "audio + checkpoint -> boundary times")
    p.add_argument("--audio", required=True, help="input audio (WAV)")
    p.add_argument("--checkpoint", required=True, help="model checkpoint")
    p.add_argument("--out", default=None, help="prediction text file (default: stdout)")
    p.add_argument("--logits-out", default=None,
                   help="dump the logit curve as a feature file (default: not written)")
    _peak_flags(p)

    p = cmd("evaluate", "score a checkpoint on a manifest split")
    p.add_argument("--manifest", required=True, help="dataset manifest")
    p.add_argument("--split", choices=("train", "val", "test"), default="test", help="split")
    p.add_argument("--checkpoint", required=True, help="model checkpoint")
    p.add_argument("--tolerance", type=float, default=3.0, help="hit tolerance (s)")
    p.add_argument("--out", default=None, help="JSON report file (default: stdout)")
    _peak_flags(p)

    p = cmd("baseline", "self-similarity novelty segmentation")
    p.add_argument("--audio", default=None, help="single audio file (default: none)")
    p.add_argument("--manifest", default=None, help="evaluate a manifest split instead (default: none)")
    p.add_argument("--split", choices=("train", "val", "test"), default="test", help="split")
    p.add_argument("--kernel", type=int, default=128, help="checkerboard half-width (frames)")
    p.add_argument("--tolerance", type=float, default=3.0, help="hit tolerance (s)")
    p.add_argument("--out", default=None, help="output file (default: stdout)")
    _peak_flags(p, threshold=0.1)
    return parser


def _emit(text: str, path) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _feature_config(args):
    from .features import FeatureConfig
    return FeatureConfig(window=args.window, hop=args.hop, n_mfcc=args.n_mfcc)


def _arch(args):
    from .neuralnet.model import REDUCED_ARCH, ModelArchitecture
    a = REDUCED_ARCH if args.arch == "reduced" else ModelArchitecture()
    over = {"conv1_filters": args.conv1, "conv2_filters": args.conv2, "hidden": args.hidden,
            "layers": args.layers, "dropout": args.dropout}
    d = a.to_dict()
    d.update({k: v for k, v in over.items() if v is not None})
    if args.max_pool:
        d["max_pool"] = True
    return ModelArchitecture.from_dict(d)


def _training_config(args):
    from .training import TrainingConfig
    return TrainingConfig(epochs=args.epochs, lr=args.lr, pos_weight=args.pos_weight,
                          chunk_frames=args.chunk_frames, chunk_overlap=args.chunk_overlap,
                          seed=args.seed, tempo_range=tuple(args.tempo_range),
                          pitch_semitones=tuple(args.pitch_range), copies_per_track=args.copies,
                          smear=args.smear, grad_clip=args.grad_clip, half_width=args.half_width,
                          threshold=args.threshold, tolerance=args.tolerance)


def _parse_grid(items):
    grid = {}
    for item in items:
        name, sep, values = item.partition("=")
        if not sep or not values:
            raise UsageError(f"bad --grid entry {item!r}; expected NAME=V1,V2")
        conv = int if name.strip().replace("-", "_") in ("epochs", "smear", "copies_per_track",
                                                         "chunk_frames", "chunk_overlap") else float
        try:
            grid[name.strip().replace("-", "_")] = [conv(v) for v in values.split(",")]
        except ValueError as exc:
            raise UsageError(f"bad --grid values in {item!r}") from exc
    return grid


def cmd_extract(args):
    from .audio_io import load_audio
    from .features import extract_features, write_feature_file
    cfg = _feature_config(args)
    fm = extract_features(load_audio(args.audio, cfg.sample_rate), cfg)
    write_feature_file(fm, args.out)
    log.info("wrote %d x %d features to %s", fm.n_rows, fm.n_frames, args.out)


def cmd_annotate_convert(args):
    track = ann.load_annotation(args.input, args.src_format)
    if args.dst_format == "savgm":
        text = ann.serialize_annotation_file(track)
    else:
        text = ann.serialize_two_column(track)
    _emit(text, args.output)


def cmd_stats(args):
    tracks = [ann.parse_annotation_file(f) for f in args.files]
    if args.manifest:
        from .manifest import load_manifest
        m = load_manifest(args.manifest)
        tracks += [ann.load_annotation(e.annotation_path, e.annotation_format) for e in m.entries]
    if not tracks:
        raise UsageError("stats needs annotation files or --manifest")
    stats = ann.corpus_stats(tracks)
    if args.json:
        _emit(json.dumps(stats, indent=2, sort_keys=True) + "\n", None)
    else:
        _emit(ann.format_stats_report(stats) + "\n", None)


def cmd_synth(args):
    from .synth import generate_corpus
    n_train = args.tracks - args.val - args.test
    if n_train < 1 or args.val < 0 or args.test < 0:
        raise UsageError("--val/--test leave no training tracks")
    m = generate_corpus(args.out, args.tracks, seed=args.seed,
                        splits=(n_train, args.val, args.test),
                        n_sections=tuple(args.sections), duration=tuple(args.duration))
    log.info("wrote %d tracks to %s", len(m), args.out)


def cmd_train(args):
    from .manifest import load_manifest
    from .training import train
    arch = None if args.init_checkpoint else _arch(args)
    res = train(load_manifest(args.manifest), arch, _training_config(args),
                init=args.init_checkpoint, out=args.out, threads=args.threads)
    log.info("best epoch %d; final loss %.5f", res.best_epoch,
             res.metrics[-1].train_loss if res.metrics else float("nan"))


def cmd_tune(args):
    from .manifest import load_manifest
    from .training import grid_search
    grid = _parse_grid(args.grid) or {"lr": [args.lr], "pos_weight": [args.pos_weight]}
    res = grid_search(load_manifest(args.manifest), grid, _training_config(args), _arch(args),
                      epochs=args.grid_epochs, cap=args.cap, threads=args.threads)
    _emit(res.to_text(), args.out)


def cmd_predict(args):
    from .features import FeatureMatrix, write_feature_file
    from .inference import feature_config_of, predict_boundaries
    from .neuralnet.checkpoint import load_checkpoint
    model = load_checkpoint(args.checkpoint)
    pred, logits = predict_boundaries(args.audio, model, args.half_width, args.threshold)
    _emit(pred.to_text(), args.out)
    if args.logits_out:
        rate = feature_config_of(model).frame_rate
        write_feature_file(FeatureMatrix(logits[None, :], rate, (("logit", 1),)), args.logits_out)


def cmd_evaluate(args):
    from .inference import evaluate_corpus
    from .manifest import load_manifest
    report = evaluate_corpus(load_manifest(args.manifest), args.split, args.checkpoint,
                             args.tolerance, args.half_width, args.threshold, args.threads)
    _emit(report.to_json() + "\n", args.out)


def cmd_baseline(args):
    from .baseline import baseline_segment
    if (args.audio is None) == (args.manifest is None):
        raise UsageError("give exactly one of --audio or --manifest")
    if args.audio:
        pred = baseline_segment(args.audio, args.kernel, args.half_width, args.threshold)
        _emit(pred.to_text(), args.out)
        return
    from .inference import _map
    from .manifest import load_manifest
    from .postprocess import report_from_results, score_track
    from .errors import EmptyManifest
    entries = load_manifest(args.manifest).split(args.split)
    if not entries:
        raise EmptyManifest(f"split {args.split!r} is empty")

    def one(e):
        pred = baseline_segment(e.audio_path, args.kernel, args.half_width, args.threshold)
        ref = ann.load_annotation(e.annotation_path, e.annotation_format).interior_times()
        return score_track(e.name, pred.times, ref, args.tolerance)

    report = report_from_results(_map(one, entries, args.threads), args.tolerance)
    _emit(report.to_json() + "\n", args.out)


COMMANDS = {
    "extract": cmd_extract, "annotate-convert": cmd_annotate_convert, "stats": cmd_stats,
    "synth": cmd_synth, "train": cmd_train, "tune": cmd_tune, "predict": cmd_predict,
    "evaluate": cmd_evaluate, "baseline": cmd_baseline,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads < 1:
        parser.print_usage(sys.stderr)
        print("gamseg: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"gamseg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (GamsegError, OSError, ValueError, KeyError) as exc:
        print(f"gamseg: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
