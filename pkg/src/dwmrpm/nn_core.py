"""Minimal differentiable-layer toolkit.

Everything is built on float64 numpy arrays: a "tensor" here is simply an
ndarray (shape + row-major data). The module provides the five layer kinds
needed by the rainfall models (dense, valid 1D convolution, global average
pooling, inverted dropout, concatenation), He initialization, and a
GradientTape that records forward operations so that reverse-mode
differentiation can recover d(loss)/d(parameter) for every parameter.

Conventions:
  * dense inputs are ``(in,)`` or batched ``(batch, in)``
  * conv inputs are ``(length,)`` for a single-channel signal,
    ``(channels, length)``, or batched ``(batch, channels, length)``
  * ReLU's derivative at exactly 0 is taken to be 0
  * convolution is cross-correlation (no kernel flip), stride 1, no padding
"""

from __future__ import annotations

import enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, InvalidParameterError, ShapeError


class Activation(enum.Enum):
    RELU = "relu"
    IDENTITY = "identity"


class DropoutMode(enum.Enum):
    TRAIN = "train"
    EVAL = "eval"


class Parameter:
    """A named, trainable float64 array. Identity (not value) keys gradients."""

    __slots__ = ("name", "value")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.ascontiguousarray(value, dtype=np.float64)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def he_init(shape, fan_in: int, seed: int) -> np.ndarray:
    """Draw i.i.d. N(0, 2/fan_in) values, bit-reproducible for a given seed."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        raise ShapeError("he_init: shape must have at least one dimension")
    if any(s <= 0 for s in shape):
        raise ShapeError(f"he_init: non-positive dimension in shape {shape}")
    if fan_in < 1:
        raise InvalidParameterError(f"he_init: fan_in must be >= 1, got {fan_in}")
    rng = np.random.default_rng(seed)
    return rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)


class GradientTape:
    """Ordered record of forward operations.

    Each record pairs the op's output array with a closure that, given the
    adjoint of that output, pushes adjoints onto the op's inputs and gradient
    contributions onto its parameters. The tape holds references to every
    output array, so ``id()`` keys stay unique for its lifetime.
    """

    def __init__(self):
        self._records = []  # list of (output ndarray, backward closure)

    def record(self, output: np.ndarray, backward_fn):
        self._records.append((output, backward_fn))

    def __len__(self):
        return len(self._records)

    @property
    def records(self):
        return self._records


class _AdjointSink:
    """Accumulates adjoints by array identity and gradients by Parameter."""

    def __init__(self):
        self.by_array = {}   # id(ndarray) -> adjoint ndarray
        self.params = {}     # Parameter -> gradient ndarray

    def add(self, array: np.ndarray, adjoint: np.ndarray):
        key = id(array)
        if key in self.by_array:
            self.by_array[key] = self.by_array[key] + adjoint
        else:
            self.by_array[key] = adjoint

    def add_param(self, param: Parameter, grad: np.ndarray):
        if param in self.params:
            self.params[param] = self.params[param] + grad
        else:
            self.params[param] = grad


def backward(tape: GradientTape, loss) -> dict:
    """Walk the tape in reverse and return {Parameter: gradient}.

    ``loss`` must be the scalar produced by the tape's final recorded op
    (its value seeds the chain with adjoint 1.0). Dropout masks drawn in the
    forward pass are captured in the closures and reused exactly.
    """
    if len(tape) == 0:
        raise ContractError("backward: tape recorded no operations")
    final_out, _ = tape.records[-1]
    if loss is not final_out:
        raise ContractError("backward: loss is not the tape's final output")
    if np.size(final_out) != 1:
        raise ContractError(
            f"backward: tape must end in a scalar, got shape {np.shape(final_out)}"
        )

    sink = _AdjointSink()
    sink.add(final_out, np.ones_like(np.asarray(final_out, dtype=np.float64)))
    for output, backward_fn in reversed(tape.records):
        adjoint = sink.by_array.pop(id(output), None)
        if adjoint is None:
            continue  # dead branch: output never reached the loss
        backward_fn(adjoint, sink)
    return sink.params


# ---------------------------------------------------------------------------
# dense
# ---------------------------------------------------------------------------

class DenseLayer:
    """Fully connected layer ``f(W x + b)`` with f in {ReLU, identity}."""

    def __init__(self, weights: Parameter, bias: Parameter,
                 activation: Activation = Activation.RELU):
        if weights.value.ndim != 2:
            raise ShapeError("DenseLayer: weights must be 2-D [out, in]")
        if bias.value.shape != (weights.value.shape[0],):
            raise ShapeError("DenseLayer: bias must be 1-D [out]")
        self.weights = weights
        self.bias = bias
        self.activation = activation

    @classmethod
    def create(cls, in_dim: int, out_dim: int, activation: Activation,
               seed: int, name: str = "dense"):
        w = Parameter(f"{name}.weights", he_init((out_dim, in_dim), in_dim, seed))
        b = Parameter(f"{name}.bias", np.zeros(out_dim))
        return cls(w, b, activation)

    @property
    def in_dim(self):
        return self.weights.value.shape[1]

    @property
    def out_dim(self):
        return self.weights.value.shape[0]


def dense_forward(layer: DenseLayer, x, tape: GradientTape | None = None) -> np.ndarray:
    """``f(W x + b)`` for a single input vector or a batch of them."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != layer.in_dim:
        raise ShapeError(
            f"dense_forward: expected input of length {layer.in_dim}, "
            f"got shape {x.shape}"
        )
    w, b = layer.weights, layer.bias
    z = xb @ w.value.T + b.value
    relu = layer.activation is Activation.RELU
    out_b = np.maximum(z, 0.0) if relu else z
    out = out_b[0] if single else out_b

    if tape is not None:
        def _backward(g, sink, xb=xb, z=z, w=w, b=b, relu=relu, single=single):
            gb = g[None, :] if single else g
            gz = np.where(z > 0, gb, 0.0) if relu else gb
            sink.add_param(w, gz.T @ xb)
            sink.add_param(b, gz.sum(axis=0))
            gx = gz @ w.value
            sink.add(x, gx[0] if single else gx)

        tape.record(out, _backward)
    return out


# ---------------------------------------------------------------------------
# 1D convolution (valid, stride 1)
# ---------------------------------------------------------------------------

class Conv1DLayer:
    """Valid cross-correlation with per-(filter, channel) kernels.

    ``kernels`` may be ``[filters, kernel_len]`` for a single input channel
    (the common case here) or ``[filters, channels, kernel_len]`` when the
    layer consumes a multi-channel feature map, in which case each output
    filter sums its per-channel correlations.
    """

    def __init__(self, kernels: Parameter, biases: Parameter):
        kv = kernels.value
        if kv.ndim == 2:
            kv = kv.reshape(kv.shape[0], 1, kv.shape[1])
            kernels.value = kv
        if kv.ndim != 3:
            raise ShapeError("Conv1DLayer: kernels must be 2-D or 3-D")
        if kv.shape[0] < 1:
            raise ShapeError("Conv1DLayer: need at least one filter")
        if biases.value.shape != (kv.shape[0],):
            raise ShapeError("Conv1DLayer: biases must be 1-D [filters]")
        self.kernels = kernels
        self.biases = biases

    @classmethod
    def create(cls, filters: int, kernel_len: int, seed: int,
               in_channels: int = 1, name: str = "conv"):
        fan_in = in_channels * kernel_len
        k = Parameter(f"{name}.kernels",
                      he_init((filters, in_channels, kernel_len), fan_in, seed))
        b = Parameter(f"{name}.biases", np.zeros(filters))
        return cls(k, b)

    @property
    def filters(self):
        return self.kernels.value.shape[0]

    @property
    def in_channels(self):
        return self.kernels.value.shape[1]

    @property
    def kernel_len(self):
        return self.kernels.value.shape[2]


def conv1d_forward(layer: Conv1DLayer, x, tape: GradientTape | None = None) -> np.ndarray:
    """Slide every kernel over the input; output length is L - K + 1.

    Accepts ``(L,)``, ``(channels, L)`` or ``(batch, channels, L)`` input and
    returns ``(filters, P)`` or ``(batch, filters, P)`` accordingly.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        xb, squeeze = x[None, None, :], "single"
    elif x.ndim == 2:
        xb, squeeze = x[None, :, :], "single"
    elif x.ndim == 3:
        xb, squeeze = x, "batch"
    else:
        raise ShapeError(f"conv1d_forward: unsupported input ndim {x.ndim}")

    k = layer.kernels.value
    klen = layer.kernel_len
    if xb.shape[1] != layer.in_channels:
        raise ShapeError(
            f"conv1d_forward: expected {layer.in_channels} channel(s), "
            f"got {xb.shape[1]}"
        )
    if xb.shape[2] < klen:
        raise ShapeError(
            f"conv1d_forward: input length {xb.shape[2]} shorter than "
            f"kernel length {klen}"
        )

    windows = sliding_window_view(xb, klen, axis=2)  # (B, C, P, K)
    out_b = np.tensordot(windows, k, axes=([1, 3], [1, 2]))  # (B, P, F)
    out_b = np.ascontiguousarray(out_b.transpose(0, 2, 1)) + layer.biases.value[:, None]
    out = out_b[0] if squeeze == "single" else out_b

    if tape is not None:
        kern, bias = layer.kernels, layer.biases
        positions = out_b.shape[2]

        def _backward(g, sink, windows=windows, xb=xb, kern=kern, bias=bias,
                      klen=klen, positions=positions, squeeze=squeeze):
            gb = g[None, ...] if squeeze == "single" else g  # (B, F, P)
            dk = np.tensordot(gb, windows, axes=([0, 2], [0, 2]))  # (F, C, K)
            sink.add_param(kern, dk)
            sink.add_param(bias, gb.sum(axis=(0, 2)))
            dx = np.zeros_like(xb)
            kv = kern.value
            for j in range(klen):
                contrib = np.tensordot(gb, kv[:, :, j], axes=([1], [0]))  # (B, P, C)
                dx[:, :, j:j + positions] += contrib.transpose(0, 2, 1)
            if squeeze == "single":
                dx = dx[0] if x.ndim == 2 else dx[0, 0]
            sink.add(x, dx)

        tape.record(out, _backward)
    return out


# ---------------------------------------------------------------------------
# global average pooling
# ---------------------------------------------------------------------------

def global_avg_pool(feature_maps, tape: GradientTape | None = None) -> np.ndarray:
    """Mean over the position axis: ``(filters, P) -> (filters,)``."""
    x = np.asarray(feature_maps, dtype=np.float64)
    if x.ndim not in (2, 3):
        raise ShapeError("global_avg_pool: expected (filters, P) or (batch, filters, P)")
    positions = x.shape[-1]
    if positions < 1:
        raise ShapeError("global_avg_pool: zero positions")
    out = x.mean(axis=-1)

    if tape is not None:
        def _backward(g, sink, x=x, positions=positions):
            sink.add(x, np.repeat((g / positions)[..., None], positions, axis=-1))

        tape.record(out, _backward)
    return out


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------

class DropoutLayer:
    """Inverted dropout: train-mode output has the same expectation as its input."""

    def __init__(self, rate: float, mode: DropoutMode = DropoutMode.EVAL):
        if not 0.0 <= rate < 1.0:
            raise InvalidParameterError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self.mode = mode


def dropout_forward(layer: DropoutLayer, x, rng: np.random.Generator | None = None,
                    tape: GradientTape | None = None,
                    mode: DropoutMode | None = None) -> np.ndarray:
    """Zero each element with probability ``rate`` and rescale survivors.

    Eval mode is the identity map. ``mode`` overrides the layer's stored mode
    so read-only inference never has to mutate a shared layer object.
    """
    x = np.asarray(x, dtype=np.float64)
    effective = layer.mode if mode is None else mode
    if effective is DropoutMode.EVAL or layer.rate == 0.0:
        return x
    if rng is None:
        raise ContractError("dropout_forward: train mode needs an rng stream")
    keep = rng.random(x.shape) >= layer.rate
    scale = 1.0 / (1.0 - layer.rate)
    out = x * keep * scale

    if tape is not None:
        def _backward(g, sink, keep=keep, scale=scale):
            sink.add(x, g * keep * scale)

        tape.record(out, _backward)
    return out


# ---------------------------------------------------------------------------
# concatenation
# ---------------------------------------------------------------------------

def concat_forward(parts, tape: GradientTape | None = None) -> np.ndarray:
    """Concatenate along the last axis, splitting adjoints back on backward."""
    arrays = [np.asarray(p, dtype=np.float64) for p in parts]
    if not arrays:
        raise ShapeError("concat_forward: nothing to concatenate")
    out = np.concatenate(arrays, axis=-1)

    if tape is not None:
        widths = [a.shape[-1] for a in arrays]

        def _backward(g, sink, arrays=tuple(arrays), widths=tuple(widths)):
            offset = 0
            for arr, width in zip(arrays, widths):
                sink.add(arr, g[..., offset:offset + width])
                offset += width

        tape.record(out, _backward)
    return out
