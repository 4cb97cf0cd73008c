"""The three regression architectures and their lifecycle.

``dwmrpm`` feeds every 110-long sample (108 normalized months + latitude +
longitude) to two paths trained jointly:

  * deep: dense 300/200/100 with ReLU, dropout 0.3 after each hidden layer
  * wide: one valid 1D conv (100 filters of length 5) + global average pool

and combines them with a linear head ``k_cn . h_cn + k_d . h_d + bias``.
The ``mlp`` baseline is the deep stack with a scalar dense output; the
``cnn`` baseline is two conv layers + global average pool + scalar dense.
All three consume the identical sample encoding.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import nn_core
from .nn_core import (
    Activation,
    Conv1DLayer,
    DenseLayer,
    DropoutLayer,
    DropoutMode,
    GradientTape,
    Parameter,
    he_init,
)
from .data_pipeline import NormalizationParams, denormalize
from .errors import ContractError, ShapeError

MODEL_KINDS = ("dwmrpm", "mlp", "cnn")
COORDS_WIRINGS = ("both", "deep-only")

MODEL_FILE_VERSION = 1


@dataclass
class ModelSpec:
    kind: str = "dwmrpm"
    input_len: int = 110            # window months + 2 coordinates
    deep_widths: tuple = (300, 200, 100)
    dropout_rate: float = 0.3
    conv_filters: int = 100
    kernel_len: int = 5
    conv_layers: int | None = None  # resolved by kind: dwmrpm 1, cnn 2
    seed: int = 0
    coords_wiring: str = "both"     # wide path sees coords too, or months only
    head_bias: bool = True          # scalar bias on the joint head

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ContractError(f"unknown model kind {self.kind!r}")
        if self.coords_wiring not in COORDS_WIRINGS:
            raise ContractError(f"unknown coords wiring {self.coords_wiring!r}")
        if self.conv_layers is None:
            self.conv_layers = 2 if self.kind == "cnn" else 1
        if self.input_len < 3:
            raise ShapeError("input_len must cover at least one month plus coordinates")

    def wide_input_len(self) -> int:
        return self.input_len if self.coords_wiring == "both" else self.input_len - 2

    def to_dict(self):
        d = asdict(self)
        d["deep_widths"] = list(self.deep_widths)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["deep_widths"] = tuple(d["deep_widths"])
        return cls(**d)


# ---------------------------------------------------------------------------
# joint head
# ---------------------------------------------------------------------------

class JointHead:
    """Scalar combination of the two path outputs: k_cn.h_cn + k_d.h_d + bias."""

    def __init__(self, k_cn: Parameter, k_d: Parameter, bias: Parameter | None):
        self.k_cn = k_cn
        self.k_d = k_d
        self.bias = bias

    def forward(self, h_cn, h_d, tape: GradientTape | None = None):
        y = h_cn @ self.k_cn.value + h_d @ self.k_d.value
        if self.bias is not None:
            y = y + self.bias.value[0]
        if tape is not None:
            def _backward(g, sink, h_cn=h_cn, h_d=h_d, head=self):
                sink.add_param(head.k_cn, g @ h_cn)
                sink.add_param(head.k_d, g @ h_d)
                if head.bias is not None:
                    sink.add_param(head.bias, np.array([g.sum()]))
                sink.add(h_cn, np.outer(g, head.k_cn.value))
                sink.add(h_d, np.outer(g, head.k_d.value))

            tape.record(y, _backward)
        return y


# ---------------------------------------------------------------------------
# networks
# ---------------------------------------------------------------------------

class _DeepStack:
    """Dense/dropout tower shared by the dwmrpm deep path and the mlp baseline."""

    def __init__(self, input_len, widths, dropout_rate, seeds, with_dropout):
        self.layers = []
        in_dim = input_len
        for i, width in enumerate(widths):
            self.layers.append(DenseLayer.create(
                in_dim, width, Activation.RELU, int(seeds[i]), name=f"deep{i}"))
            in_dim = width
        self.dropouts = [DropoutLayer(dropout_rate) for _ in widths] if with_dropout else None

    def forward(self, x, tape, mode, rng):
        a = x
        for i, layer in enumerate(self.layers):
            a = nn_core.dense_forward(layer, a, tape)
            if self.dropouts is not None:
                a = nn_core.dropout_forward(self.dropouts[i], a, rng, tape, mode=mode)
        return a

    def parameters(self):
        params = []
        for layer in self.layers:
            params.extend([layer.weights, layer.bias])
        return params


class DwmrpmNet:
    def __init__(self, spec: ModelSpec):
        seeds = np.random.SeedSequence(spec.seed).generate_state(8)
        self.spec = spec
        self.deep = _DeepStack(spec.input_len, spec.deep_widths,
                               spec.dropout_rate, seeds[:3], with_dropout=True)
        wide_len = spec.wide_input_len()
        if wide_len < spec.kernel_len:
            raise ShapeError(
                f"wide input length {wide_len} shorter than kernel {spec.kernel_len}"
            )
        self.conv = Conv1DLayer.create(spec.conv_filters, spec.kernel_len,
                                       int(seeds[3]), name="wide_conv")
        head_bias = Parameter("head.bias", np.zeros(1)) if spec.head_bias else None
        self.head = JointHead(
            Parameter("head.k_cn",
                      he_init((spec.conv_filters,), spec.conv_filters, int(seeds[4]))),
            Parameter("head.k_d",
                      he_init((spec.deep_widths[-1],), spec.deep_widths[-1], int(seeds[5]))),
            head_bias,
        )

    def paths(self, x, tape=None, mode=DropoutMode.EVAL, rng=None):
        """Return (h_cn, h_d) so the joint decomposition stays inspectable."""
        h_d = self.deep.forward(x, tape, mode, rng)
        xw = x if self.spec.coords_wiring == "both" else x[:, :-2]
        fmap = nn_core.conv1d_forward(self.conv, xw[:, None, :], tape)
        h_cn = nn_core.global_avg_pool(fmap, tape)
        return h_cn, h_d

    def forward(self, x, tape=None, mode=DropoutMode.EVAL, rng=None):
        h_cn, h_d = self.paths(x, tape, mode, rng)
        return self.head.forward(h_cn, h_d, tape)

    def parameters(self):
        params = self.deep.parameters()
        params.extend([self.conv.kernels, self.conv.biases,
                       self.head.k_cn, self.head.k_d])
        if self.head.bias is not None:
            params.append(self.head.bias)
        return params


class MlpNet:
    def __init__(self, spec: ModelSpec):
        seeds = np.random.SeedSequence(spec.seed).generate_state(8)
        self.spec = spec
        self.deep = _DeepStack(spec.input_len, spec.deep_widths,
                               spec.dropout_rate, seeds[:3], with_dropout=False)
        self.out = DenseLayer.create(spec.deep_widths[-1], 1, Activation.IDENTITY,
                                     int(seeds[3]), name="out")

    def forward(self, x, tape=None, mode=DropoutMode.EVAL, rng=None):
        a = self.deep.forward(x, tape, mode, rng)
        y = nn_core.dense_forward(self.out, a, tape)
        return _squeeze_column(y, tape)

    def parameters(self):
        return self.deep.parameters() + [self.out.weights, self.out.bias]


class CnnNet:
    def __init__(self, spec: ModelSpec):
        seeds = np.random.SeedSequence(spec.seed).generate_state(8)
        self.spec = spec
        length = spec.input_len
        self.convs = []
        in_channels = 1
        for i in range(spec.conv_layers):
            if length < spec.kernel_len:
                raise ShapeError(
                    f"conv layer {i}: input length {length} shorter than kernel"
                )
            self.convs.append(Conv1DLayer.create(
                spec.conv_filters, spec.kernel_len, int(seeds[i]),
                in_channels=in_channels, name=f"conv{i}"))
            length = length - spec.kernel_len + 1
            in_channels = spec.conv_filters
        self.out = DenseLayer.create(spec.conv_filters, 1, Activation.IDENTITY,
                                     int(seeds[spec.conv_layers]), name="out")

    def forward(self, x, tape=None, mode=DropoutMode.EVAL, rng=None):
        a = x[:, None, :]
        for conv in self.convs:
            a = nn_core.conv1d_forward(conv, a, tape)
        pooled = nn_core.global_avg_pool(a, tape)
        y = nn_core.dense_forward(self.out, pooled, tape)
        return _squeeze_column(y, tape)

    def parameters(self):
        params = []
        for conv in self.convs:
            params.extend([conv.kernels, conv.biases])
        params.extend([self.out.weights, self.out.bias])
        return params


def _squeeze_column(y, tape):
    """(B, 1) -> (B,) as a recorded op so adjoints flow back through it."""
    out = y[:, 0]
    if tape is not None:
        def _backward(g, sink, y=y):
            sink.add(y, g[:, None])

        tape.record(out, _backward)
    return out


_NET_CLASSES = {"dwmrpm": DwmrpmNet, "mlp": MlpNet, "cnn": CnnNet}


def build_model(spec: ModelSpec):
    """Instantiate the architecture for ``spec`` with He-initialized weights."""
    return _NET_CLASSES[spec.kind](spec)


def parameter_count(net) -> int:
    return sum(p.value.size for p in net.parameters())


# ---------------------------------------------------------------------------
# trained model: inference and serialization
# ---------------------------------------------------------------------------

@dataclass
class TrainedModel:
    """Architecture + learned parameters + the normalization used to train."""

    spec: ModelSpec
    net: object
    norm_params: NormalizationParams
    metadata: dict = field(default_factory=dict)

    def forward_normalized(self, inputs) -> np.ndarray:
        """Eval-mode predictions on the normalized scale for a (N, D) batch."""
        x = np.asarray(inputs, dtype=np.float64)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        if xb.shape[1] != self.spec.input_len:
            raise ShapeError(
                f"expected inputs of length {self.spec.input_len}, got {xb.shape[1]}"
            )
        y = self.net.forward(xb, tape=None, mode=DropoutMode.EVAL, rng=None)
        return y[0] if single else y


def predict(model: TrainedModel, sample) -> tuple:
    """One sample in, (normalized prediction, prediction in mm) out."""
    inputs = sample.inputs if hasattr(sample, "inputs") else sample
    normalized = float(model.forward_normalized(inputs))
    mm = float(denormalize(normalized, model.norm_params))
    return normalized, mm


def predict_many(model: TrainedModel, samples, batch_size: int = 32):
    """Batched eval-mode predictions; returns (normalized, mm) arrays.

    Chunked so conv layers never materialize huge sliding-window buffers.
    """
    if len(samples) == 0:
        return np.empty(0), np.empty(0)
    x = np.stack([s.inputs for s in samples])
    chunks = [model.forward_normalized(x[i:i + batch_size])
              for i in range(0, x.shape[0], batch_size)]
    normalized = np.concatenate(chunks)
    return normalized, denormalize(normalized, model.norm_params)


def model_to_json_dict(model: TrainedModel) -> dict:
    params = {p.name: {"shape": list(p.value.shape),
                       "data": [float(v) for v in p.value.ravel()]}
              for p in model.net.parameters()}
    return {
        "format_version": MODEL_FILE_VERSION,
        "spec": model.spec.to_dict(),
        "parameters": params,
        "normalization": {"i_min": model.norm_params.i_min,
                          "i_max": model.norm_params.i_max},
        "metadata": model.metadata,
    }


def save_model(model: TrainedModel, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json_dict(model), fh, sort_keys=True,
                  separators=(",", ":"))
        fh.write("\n")


def load_model(path) -> TrainedModel:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != MODEL_FILE_VERSION:
        raise ContractError(f"{path}: unsupported model file version")
    spec = ModelSpec.from_dict(doc["spec"])
    net = build_model(spec)
    for param in net.parameters():
        entry = doc["parameters"].get(param.name)
        if entry is None:
            raise ContractError(f"{path}: missing parameter {param.name}")
        value = np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        if value.shape != param.value.shape:
            raise ShapeError(
                f"{path}: parameter {param.name} has shape {value.shape}, "
                f"expected {param.value.shape}"
            )
        param.value = value
    norm = NormalizationParams(doc["normalization"]["i_min"],
                               doc["normalization"]["i_max"])
    return TrainedModel(spec, net, norm, doc.get("metadata", {}))


def dataset_fingerprint(path) -> str:
    """sha256 of a dataset file, stored at train time and checked at eval time."""
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
