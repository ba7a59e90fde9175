"""Music boundary detection: features, a CNN + BiLSTM tagger, and a novelty baseline."""
from .annotations import AnnotationTrack, BoundaryEvent, parse_annotation_file
from .audio_io import AudioClip, load_audio
from .baseline import baseline_segment, compute_ssm, foote_novelty
from .errors import GamsegError
from .features import FeatureConfig, FeatureMatrix, extract_features
from .inference import evaluate_corpus, predict_boundaries
from .manifest import DatasetManifest, ManifestEntry, load_manifest
from .neuralnet import BoundaryModel, ModelArchitecture, load_checkpoint
from .postprocess import BoundaryPrediction, EvalReport, evaluate_track, match_boundaries, peak_pick
from .synth import SynthSpec, generate_corpus, generate_synthetic_track
from .training import TrainingConfig, grid_search, train

__version__ = "0.1.0"

__all__ = [
    "AnnotationTrack", "AudioClip", "BoundaryEvent", "BoundaryModel", "BoundaryPrediction",
    "DatasetManifest", "EvalReport", "FeatureConfig", "FeatureMatrix", "GamsegError",
    "ManifestEntry", "ModelArchitecture", "SynthSpec", "TrainingConfig", "baseline_segment",
    "compute_ssm", "evaluate_corpus", "evaluate_track", "extract_features", "foote_novelty",
    "generate_corpus", "generate_synthetic_track", "grid_search", "load_audio", "load_checkpoint",
    "load_manifest", "match_boundaries", "parse_annotation_file", "peak_pick",
    "predict_boundaries", "train",
]
