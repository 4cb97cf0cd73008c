"""Layer forwards and reverse-mode gradients, step by step.

Builds the individual building blocks (dense, 1D convolution, global average
pooling, dropout), runs them forward while recording on a GradientTape, then
walks the tape backward and cross-checks one gradient against a finite
difference.
"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

import numpy as np

from dwmrpm import (
    Activation,
    Conv1DLayer,
    DenseLayer,
    DropoutLayer,
    DropoutMode,
    GradientTape,
    Parameter,
    backward,
    concat_forward,
    conv1d_forward,
    dense_forward,
    dropout_forward,
    global_avg_pool,
    he_init,
)
from dwmrpm.optim import mse_loss

rng = np.random.default_rng(0)

# --- He initialization: zero-mean normal with variance 2 / fan_in ----------
weights = he_init((4, 6), fan_in=6, seed=1)
print("He-initialized 4x6 weights, sample variance ~ 2/6 =",
      round(weights.var(), 3))

# --- a tiny two-path network on a 12-long signal ----------------------------
x = rng.uniform(0.0, 1.0, size=12)

dense = DenseLayer(Parameter("w", he_init((4, 12), 12, seed=2)),
                   Parameter("b", np.zeros(4)), Activation.RELU)
conv = Conv1DLayer(Parameter("k", he_init((3, 5), 5, seed=3)),
                   Parameter("kb", np.zeros(3)))
drop = DropoutLayer(rate=0.3, mode=DropoutMode.TRAIN)

tape = GradientTape()
hidden = dense_forward(dense, x, tape)
hidden = dropout_forward(drop, hidden, rng=np.random.default_rng(4), tape=tape)
print("dense+dropout output:", np.round(hidden, 3))

fmap = conv1d_forward(conv, x, tape)
print("conv output shape (filters x positions):", fmap.shape)
pooled = global_avg_pool(fmap, tape)
print("pooled:", np.round(pooled, 3))

# a scalar "loss": squared distance of both paths' features to zero
features = concat_forward([hidden, pooled], tape)
loss = mse_loss(features, np.zeros(7), tape)
print("loss:", float(loss))

grads = backward(tape, loss)
print("gradient tensors per parameter:",
      {p.name: g.shape for p, g in grads.items()})

# --- verify one kernel gradient with a central finite difference ------------
h = 1e-6
index = (1, 0, 2)  # kernels are [filters, channels, taps]; one channel here


def conv_path_loss():
    # the dense/dropout branch does not depend on this kernel, so comparing
    # just the conv contribution gives the same derivative
    pooled_now = global_avg_pool(conv1d_forward(conv, x))
    return float(np.mean(pooled_now ** 2) * 3 / 7)


original = conv.kernels.value[index]
conv.kernels.value[index] = original + h
loss_plus = conv_path_loss()
conv.kernels.value[index] = original - h
loss_minus = conv_path_loss()
conv.kernels.value[index] = original

fd = (loss_plus - loss_minus) / (2 * h)
bp = grads[conv.kernels][index]
print(f"kernel[{index}] gradient: backward {bp:.10f} vs finite diff {fd:.10f}")
assert abs(fd - bp) < 1e-8
print("finite-difference check passed")
