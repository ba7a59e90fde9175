"""CNN + bidirectional LSTM frame classifier."""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import GraphNotBuilt, ShapeMismatch
from . import layers as L
from .tensor import Tensor


@dataclass(frozen=True)
class ModelArchitecture:
    n_features: int = 98
    conv1_filters: int = 32
    conv2_filters: int = 64
    hidden: int = 128
    layers: int = 2
    dropout: float = 0.5
    max_pool: bool = False

    @property
    def conv_filters(self) -> tuple:
        return tuple(f for f in (self.conv1_filters, self.conv2_filters) if f > 0)

    @property
    def lstm_input(self) -> int:
        filters = self.conv_filters
        return (filters[-1] if filters else 1) * self.n_features

    @property
    def fc_input(self) -> int:
        return 2 * self.hidden if self.layers > 0 else self.lstm_input

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelArchitecture":
        return cls(**d)


REDUCED_ARCH = ModelArchitecture(conv1_filters=2, conv2_filters=4, hidden=8)


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class BoundaryModel:
    """conv -> ReLU -> conv -> ReLU -> [pool] -> BiLSTM stack -> FC, one logit per frame."""

    def __init__(self, arch: ModelArchitecture = ModelArchitecture(), seed: int = 0,
                 dtype=np.float32, init: bool = True):
        self.arch = arch
        self.dtype = np.dtype(dtype)
        self.params: "OrderedDict[str, Tensor]" = OrderedDict()
        self._cache = None
        if init:
            self._init_params(np.random.default_rng(seed))

    def _init_params(self, rng):
        a = self.arch
        c_in = 1
        for k, c_out in enumerate(a.conv_filters, start=1):
            w = _glorot(rng, (c_out, c_in, 3, 3), c_in * 9, c_out * 9)
            self._add(f"conv{k}.weight", w)
            self._add(f"conv{k}.bias", np.zeros(c_out))
            c_in = c_out
        H = a.hidden
        bound = 1.0 / np.sqrt(H) if H else 0.0
        d_in = a.lstm_input
        for layer in range(a.layers):
            for direction in ("fwd", "bwd"):
                prefix = f"lstm.l{layer}.{direction}"
                self._add(f"{prefix}.w_ih", rng.uniform(-bound, bound, (4 * H, d_in)))
                self._add(f"{prefix}.w_hh", rng.uniform(-bound, bound, (4 * H, H)))
                b = rng.uniform(-bound, bound, 4 * H)
                b[H:2 * H] += 1.0
                self._add(f"{prefix}.bias", b)
            d_in = 2 * H
        self._add("fc.weight", _glorot(rng, (1, a.fc_input), a.fc_input, 1))
        self._add("fc.bias", np.zeros(1))

    def _add(self, name, value):
        self.params[name] = Tensor(np.asarray(value, dtype=self.dtype))

    def expected_shapes(self) -> dict:
        shapes = {}
        a = self.arch
        c_in = 1
        for k, c_out in enumerate(a.conv_filters, start=1):
            shapes[f"conv{k}.weight"] = (c_out, c_in, 3, 3)
            shapes[f"conv{k}.bias"] = (c_out,)
            c_in = c_out
        d_in, H = a.lstm_input, a.hidden
        for layer in range(a.layers):
            for direction in ("fwd", "bwd"):
                prefix = f"lstm.l{layer}.{direction}"
                shapes[f"{prefix}.w_ih"] = (4 * H, d_in)
                shapes[f"{prefix}.w_hh"] = (4 * H, H)
                shapes[f"{prefix}.bias"] = (4 * H,)
            d_in = 2 * H
        shapes["fc.weight"] = (1, a.fc_input)
        shapes["fc.bias"] = (1,)
        return shapes

    def p(self, name) -> np.ndarray:
        return self.params[name].data

    def n_parameters(self) -> int:
        return sum(t.data.size for t in self.params.values())

    def astype(self, dtype) -> "BoundaryModel":
        other = BoundaryModel(self.arch, dtype=dtype, init=False)
        for name, t in self.params.items():
            other.params[name] = t.astype(dtype)
        return other

    def copy(self) -> "BoundaryModel":
        return self.astype(self.dtype)

    def zero_grad(self):
        for t in self.params.values():
            t.zero_grad()

    def output_length(self, T: int) -> int:
        return (T + 1) // 2 if self.arch.max_pool else T

    def forward(self, features, train: bool = False, rng=None) -> np.ndarray:
        """Logits for a (n_features, T) feature grid.

        In train mode the intermediate values are kept for :meth:`backward`
        and dropout is active (drawn from ``rng``).
        """
        x = getattr(features, "data", features)
        x = np.asarray(x)
        a = self.arch
        if x.ndim != 2 or x.shape[0] != a.n_features:
            raise ShapeMismatch(f"model expects ({a.n_features}, T) input, got {x.shape}")
        if train and rng is None:
            rng = np.random.default_rng(0)
        cache = {}
        h = np.ascontiguousarray(x.T, dtype=self.dtype)[None]  # (1, T, F)
        for k in range(1, len(a.conv_filters) + 1):
            h, cache[f"conv{k}"] = L.conv2d_forward(h, self.p(f"conv{k}.weight"),
                                                    self.p(f"conv{k}.bias"))
            h, cache[f"relu{k}"] = L.relu_forward(h)
        if a.max_pool:
            h, cache["pool"] = L.maxpool_time_forward(h)
        conv_shape = h.shape
        seq = np.ascontiguousarray(h.transpose(1, 0, 2).reshape(h.shape[1], -1))
        for layer in range(a.layers):
            if layer > 0 and train and a.dropout > 0:
                mask = L.dropout_mask(seq.shape, a.dropout, rng, self.dtype)
                cache[f"drop{layer}"] = mask
                seq = seq * mask
            pre = f"lstm.l{layer}"
            fwd, cache[f"{pre}.fwd"] = L.lstm_forward(
                seq, self.p(f"{pre}.fwd.w_ih"), self.p(f"{pre}.fwd.w_hh"), self.p(f"{pre}.fwd.bias"))
            bwd, cache[f"{pre}.bwd"] = L.lstm_forward(
                seq, self.p(f"{pre}.bwd.w_ih"), self.p(f"{pre}.bwd.w_hh"), self.p(f"{pre}.bwd.bias"),
                reverse=True)
            seq = np.concatenate([fwd, bwd], axis=1)
        out, cache["fc"] = L.linear_forward(seq, self.p("fc.weight"), self.p("fc.bias"))
        cache["conv_shape"] = conv_shape
        self._cache = cache if train else None
        return out[:, 0]

    def backward(self, dlogits) -> None:
        """Populate ``.grad`` of every parameter from d(loss)/d(logits)."""
        cache = self._cache
        if cache is None:
            raise GraphNotBuilt("backward() needs a preceding forward(train=True)")
        a = self.arch
        self.zero_grad()
        g = np.asarray(dlogits, dtype=self.dtype).reshape(-1, 1)
        dseq, dw, db = L.linear_backward(g, cache["fc"], self.p("fc.weight"))
        self.params["fc.weight"].accumulate(dw)
        self.params["fc.bias"].accumulate(db)
        H = a.hidden
        for layer in reversed(range(a.layers)):
            pre = f"lstm.l{layer}"
            dx_f, dwi, dwh, dbi = L.lstm_backward(np.ascontiguousarray(dseq[:, :H]), cache[f"{pre}.fwd"])
            self.params[f"{pre}.fwd.w_ih"].accumulate(dwi)
            self.params[f"{pre}.fwd.w_hh"].accumulate(dwh)
            self.params[f"{pre}.fwd.bias"].accumulate(dbi)
            dx_b, dwi, dwh, dbi = L.lstm_backward(np.ascontiguousarray(dseq[:, H:]), cache[f"{pre}.bwd"])
            self.params[f"{pre}.bwd.w_ih"].accumulate(dwi)
            self.params[f"{pre}.bwd.w_hh"].accumulate(dwh)
            self.params[f"{pre}.bwd.bias"].accumulate(dbi)
            dseq = dx_f + dx_b
            if f"drop{layer}" in cache:
                dseq = dseq * cache[f"drop{layer}"]
        n_conv = len(a.conv_filters)
        if n_conv == 0:
            return
        c, T, F = cache["conv_shape"]
        dh = dseq.reshape(T, c, F).transpose(1, 0, 2)
        if a.max_pool:
            dh = L.maxpool_time_backward(dh, cache["pool"])
        for k in range(n_conv, 0, -1):
            dh = L.relu_backward(dh, cache[f"relu{k}"])
            dh, dw, db = L.conv2d_backward(dh, cache[f"conv{k}"], need_input_grad=k > 1)
            self.params[f"conv{k}.weight"].accumulate(dw)
            self.params[f"conv{k}.bias"].accumulate(db)
