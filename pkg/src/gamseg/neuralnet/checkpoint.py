"""Binary checkpoint: magic, JSON header, then named f32 tensors."""
from __future__ import annotations

import json
import os
import struct

import numpy as np

from ..errors import ArchitectureMismatch, BadMagic, IoError
from .model import BoundaryModel, ModelArchitecture
from .tensor import Tensor

MAGIC = b"GMSEG001"


def checkpoint_bytes(model: BoundaryModel, meta: dict | None = None) -> bytes:
    header = dict(meta if meta is not None else getattr(model, "meta", {}) or {})
    header["architecture"] = model.arch.to_dict()
    header_blob = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", len(header_blob)), header_blob]
    for name, t in model.params.items():
        name_blob = name.encode("utf-8")
        arr = np.ascontiguousarray(t.data, dtype="<f4")
        parts.append(struct.pack("<I", len(name_blob)))
        parts.append(name_blob)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes(order="C"))
    return b"".join(parts)


def save_checkpoint(model: BoundaryModel, path, meta: dict | None = None) -> None:
    try:
        with open(path, "wb") as fh:
            fh.write(checkpoint_bytes(model, meta))
    except OSError as exc:
        raise IoError(str(exc)) from exc


class _Reader:
    def __init__(self, blob, path):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.blob):
            raise IoError(f"{self.path}: truncated checkpoint")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]


def load_checkpoint(path, expected_arch: ModelArchitecture | None = None) -> BoundaryModel:
    """Rebuild a float32 model; the header is attached as ``model.meta``."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    where = os.fspath(path)
    if blob[:8] != MAGIC:
        raise BadMagic(f"{where}: not a checkpoint")
    r = _Reader(blob, where)
    r.take(8)
    try:
        header = json.loads(r.take(r.u32()).decode("utf-8"))
        arch = ModelArchitecture.from_dict(header["architecture"])
    except (ValueError, KeyError, TypeError) as exc:
        raise IoError(f"{where}: bad header ({exc})") from exc
    if expected_arch is not None and arch != expected_arch:
        raise ArchitectureMismatch(f"checkpoint has {arch}, expected {expected_arch}")

    model = BoundaryModel(arch, init=False)
    shapes = model.expected_shapes()
    while r.pos < len(blob):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        n = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(dims).astype(np.float32)
        if name not in shapes:
            raise ArchitectureMismatch(f"unexpected tensor {name!r}")
        if tuple(dims) != shapes[name]:
            raise ArchitectureMismatch(f"{name}: shape {dims} but architecture implies {shapes[name]}")
        if name in model.params:
            raise ArchitectureMismatch(f"duplicate tensor {name!r}")
        model.params[name] = Tensor(data)
    missing = [k for k in shapes if k not in model.params]
    if missing:
        raise ArchitectureMismatch(f"missing tensors: {missing}")
    model.params = type(model.params)((k, model.params[k]) for k in shapes)
    model.meta = header
    return model
