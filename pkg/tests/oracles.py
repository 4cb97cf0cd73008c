"""Independent brute-force oracles used to check the library's fast paths.

Everything here is deliberately written with plain loops and no calls into
the package's forward/backward code, so a test that compares against these
functions really is a dual-route check.
"""

import numpy as np


def dense_oracle(weights, bias, x, relu):
    """Triple-checked matrix-vector product, one scalar at a time."""
    out_dim, in_dim = weights.shape
    out = np.empty(out_dim)
    for j in range(out_dim):
        acc = bias[j]
        for i in range(in_dim):
            acc += weights[j, i] * x[i]
        out[j] = max(acc, 0.0) if relu else acc
    return out


def conv1d_oracle(kernels, biases, x):
    """Sliding-window sum with explicit loops; x is (channels, length)."""
    if x.ndim == 1:
        x = x[None, :]
    filters, channels, klen = kernels.shape
    positions = x.shape[1] - klen + 1
    out = np.empty((filters, positions))
    for k in range(filters):
        for p in range(positions):
            acc = biases[k]
            for c in range(channels):
                for j in range(klen):
                    acc += kernels[k, c, j] * x[c, p + j]
            out[k, p] = acc
    return out


def global_avg_pool_oracle(fmap):
    filters, positions = fmap.shape
    out = np.empty(filters)
    for k in range(filters):
        acc = 0.0
        for p in range(positions):
            acc += fmap[k, p]
        out[k] = acc / positions
    return out


def adam_scalar_oracle(theta0, grads, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    """Closed-form scalar Adam recurrence; returns the value after each step."""
    theta = theta0
    m = v = 0.0
    values = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        theta = theta - lr * m_hat / (np.sqrt(v_hat) + eps)
        values.append(theta)
    return values


def fd_gradient(loss_fn, param, index, h=1e-5):
    """Central finite difference of loss_fn with respect to one element."""
    original = param.value[index]
    param.value[index] = original + h
    loss_plus = float(loss_fn())
    param.value[index] = original - h
    loss_minus = float(loss_fn())
    param.value[index] = original
    return (loss_plus - loss_minus) / (2.0 * h)


def gradients_close(fd, bp, rel_tol=1e-4, abs_tol=1e-8):
    """Comparison rule: relative below rel_tol, tiny values by absolute error."""
    scale = max(abs(fd), abs(bp))
    if scale < abs_tol:
        return abs(fd - bp) < abs_tol
    return abs(fd - bp) / scale < rel_tol


def dwmrpm_forward_oracle(net, x):
    """Plain-loop eval-mode forward pass for one 1-D input vector."""
    a = x
    for layer in net.deep.layers:
        a = dense_oracle(layer.weights.value, layer.bias.value, a, relu=True)
    h_d = a

    xw = x if net.spec.coords_wiring == "both" else x[:-2]
    fmap = conv1d_oracle(net.conv.kernels.value, net.conv.biases.value, xw)
    h_cn = global_avg_pool_oracle(fmap)

    y = 0.0
    for i in range(h_cn.shape[0]):
        y += net.head.k_cn.value[i] * h_cn[i]
    for i in range(h_d.shape[0]):
        y += net.head.k_d.value[i] * h_d[i]
    if net.head.bias is not None:
        y += net.head.bias.value[0]
    return y


def rmse_oracle(actual, predicted):
    acc = 0.0
    for a, p in zip(actual, predicted):
        acc += (a - p) ** 2
    return (acc / len(actual)) ** 0.5


def mae_oracle(actual, predicted):
    acc = 0.0
    for a, p in zip(actual, predicted):
        acc += abs(a - p)
    return acc / len(actual)
