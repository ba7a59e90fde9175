"""JSON Lines dataset manifests."""
from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from typing import List

from .errors import EmptyManifest

SPLITS = ("train", "val", "test")
FORMATS = ("savgm", "two_column")


@dataclass(frozen=True)
class ManifestEntry:
    audio_path: str
    annotation_path: str
    annotation_format: str = "savgm"
    split: str = "train"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        if self.annotation_format not in FORMATS:
            raise ValueError(f"unknown annotation format {self.annotation_format!r}")

    @property
    def name(self) -> str:
        return os.path.splitext(os.path.basename(self.audio_path))[0]


@dataclass
class DatasetManifest:
    entries: List[ManifestEntry]

    def split(self, name: str) -> List[ManifestEntry]:
        return [e for e in self.entries if e.split == name]

    def __len__(self):
        return len(self.entries)


def load_manifest(path, check_paths: bool = True) -> DatasetManifest:
    """Read a manifest; relative paths resolve against the manifest's directory."""
    base = os.path.dirname(os.path.abspath(path))
    entries = []
    with open(path, encoding="utf-8") as fh:
        for no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{no}: {exc}") from exc
            raw = dict(raw)
            for key in ("audio_path", "annotation_path"):
                if not os.path.isabs(raw[key]):
                    raw[key] = os.path.normpath(os.path.join(base, raw[key]))
            entries.append(ManifestEntry(**raw))
    if not entries:
        raise EmptyManifest(f"{path}: no entries")
    seen = {}
    for e in entries:
        prev = seen.setdefault(e.audio_path, e.split)
        if prev != e.split:
            raise ValueError(f"{e.audio_path} appears in both {prev} and {e.split}")
        if check_paths:
            for p in (e.audio_path, e.annotation_path):
                if not os.path.exists(p):
                    raise FileNotFoundError(p)
    return DatasetManifest(entries)


def write_manifest(manifest: DatasetManifest, path, relative_to=None) -> None:
    base = relative_to if relative_to is not None else os.path.dirname(os.path.abspath(path))
    with open(path, "w", encoding="utf-8") as fh:
        for e in manifest.entries:
            d = asdict(e)
            for key in ("audio_path", "annotation_path"):
                d[key] = os.path.relpath(d[key], base)
            fh.write(json.dumps(d, sort_keys=True) + "\n")
