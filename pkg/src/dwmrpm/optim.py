"""MSE loss, Adam, and the deterministic mini-batch training loop.

Reproducibility contract: a fixed ``TrainConfig.seed`` fixes the per-epoch
shuffle order and the dropout mask stream, so two runs with the same spec,
data and config produce bit-identical parameters and history.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import models as models_mod
from .data_pipeline import NormalizationParams
from .nn_core import DropoutMode, GradientTape, backward
from .errors import ContractError, ShapeError, TrainingDivergedError


def mse_loss(pred, target, tape: GradientTape | None = None):
    """Mean squared error as a 0-d array; records d/d(pred) = 2(pred-target)/N."""
    pred_arr = np.asarray(pred, dtype=np.float64)
    target_arr = np.asarray(target, dtype=np.float64)
    if pred_arr.shape != target_arr.shape:
        raise ShapeError(
            f"mse_loss: shape mismatch {pred_arr.shape} vs {target_arr.shape}"
        )
    if pred_arr.size < 1:
        raise ShapeError("mse_loss: need at least one element")
    diff = pred_arr - target_arr
    out = np.asarray(np.mean(diff * diff))

    if tape is not None:
        def _backward(g, sink, pred_arr=pred_arr, diff=diff):
            sink.add(pred_arr, g * 2.0 * diff / diff.size)

        tape.record(out, _backward)
    return out


class AdamState:
    """First/second moment accumulators plus the shared step counter."""

    def __init__(self, params, lr: float = 0.001, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {p: np.zeros_like(p.value) for p in params}
        self.v = {p: np.zeros_like(p.value) for p in params}


def adam_step(params, grads, state: AdamState):
    """Standard bias-corrected Adam update, in place on each parameter."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** state.t
    bc2 = 1.0 - b2 ** state.t
    for p in params:
        g = grads.get(p)
        if g is None:
            continue  # parameter untouched by this loss
        if not np.all(np.isfinite(g)):
            raise TrainingDivergedError(f"non-finite gradient for parameter {p.name}")
        m = state.m[p]
        v = state.v[p]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.value -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


@dataclass
class TrainConfig:
    epochs: int = 200
    batch_size: int = 8
    lr: float = 0.001
    seed: int = 0
    shuffle: bool = True
    select: str = "best"  # "best": best-validation-epoch weights; "final": last epoch

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr <= 0:
            raise ContractError("TrainConfig: epochs >= 0, batch_size >= 1, lr > 0")
        if self.select not in ("best", "final"):
            raise ContractError(f"TrainConfig: unknown select {self.select!r}")


@dataclass
class TrainHistory:
    train_mse: list = field(default_factory=list)
    val_mse: list = field(default_factory=list)
    best_epoch: int | None = None

    def to_json_dict(self):
        rows = [
            {"epoch": i, "train_mse": t,
             "val_mse": None if np.isnan(v) else v}
            for i, (t, v) in enumerate(zip(self.train_mse, self.val_mse))
        ]
        return {"best_epoch": self.best_epoch, "rows": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=1) + "\n"


def _as_arrays(samples):
    x = np.stack([np.asarray(s.inputs, dtype=np.float64) for s in samples])
    y = np.array([s.target for s in samples], dtype=np.float64)
    return x, y


def evaluate_mse(net, x, y, batch_size: int = 32) -> float:
    """Eval-mode MSE; touches no parameter or optimizer state.

    Chunked so conv layers never materialize huge sliding-window buffers.
    """
    if x.shape[0] == 0:
        return float("nan")
    total = 0.0
    for start in range(0, x.shape[0], batch_size):
        xb = x[start:start + batch_size]
        yb = y[start:start + batch_size]
        pred = net.forward(xb, tape=None, mode=DropoutMode.EVAL, rng=None)
        total += float(np.sum((pred - yb) ** 2))
    return total / x.shape[0]


def train(spec, train_set, val_set, cfg: TrainConfig,
          norm_params=None, data_fingerprint: str = "",
          dropout_eval: bool = False):
    """Mini-batch Adam over shuffled batches; returns (TrainedModel, TrainHistory).

    Dropout runs in train mode during updates and eval mode for the per-epoch
    train/validation measurements. ``dropout_eval=True`` disables the masks
    during updates too; that turns the run into a pure capacity probe
    (useful for overfitting diagnostics) rather than the regularized default.
    The returned model carries the parameters of the best-validation epoch
    (cfg.select == "best", the default) or of the final epoch; with an empty
    validation set it always carries the final ones.
    """
    if len(train_set) == 0:
        raise ContractError("train: empty training set")
    x_train, y_train = _as_arrays(train_set)
    if x_train.shape[1] != spec.input_len:
        raise ShapeError(
            f"train: samples have {x_train.shape[1]} inputs, spec wants {spec.input_len}"
        )
    x_val, y_val = (_as_arrays(val_set) if len(val_set)
                    else (np.empty((0, spec.input_len)), np.empty(0)))

    net = models_mod.build_model(spec)
    params = net.parameters()
    state = AdamState(params, lr=cfg.lr)
    shuffle_seed, dropout_seed = np.random.SeedSequence(cfg.seed).spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seed)
    dropout_rng = np.random.default_rng(dropout_seed)

    history = TrainHistory()
    best_val = np.inf
    best_values = None
    n = x_train.shape[0]
    update_mode = DropoutMode.EVAL if dropout_eval else DropoutMode.TRAIN

    for epoch in range(cfg.epochs):
        order = shuffle_rng.permutation(n) if cfg.shuffle else np.arange(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            tape = GradientTape()
            pred = net.forward(x_train[idx], tape=tape,
                               mode=update_mode, rng=dropout_rng)
            loss = mse_loss(pred, y_train[idx], tape)
            if not np.isfinite(loss):
                raise TrainingDivergedError(f"loss diverged at epoch {epoch}")
            grads = backward(tape, loss)
            adam_step(params, grads, state)

        train_mse = evaluate_mse(net, x_train, y_train)
        val_mse = evaluate_mse(net, x_val, y_val)
        history.train_mse.append(train_mse)
        history.val_mse.append(val_mse)
        if np.isfinite(val_mse) and val_mse < best_val:
            best_val = val_mse
            history.best_epoch = epoch
            if cfg.select == "best":
                best_values = [p.value.copy() for p in params]

    if cfg.select == "best" and best_values is not None:
        for p, value in zip(params, best_values):
            p.value = value

    norm = norm_params if norm_params is not None else NormalizationParams(0.0, 100.0)
    metadata = {
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "batch_size": cfg.batch_size,
        "lr": cfg.lr,
        "select": cfg.select,
        "best_epoch": history.best_epoch,
        "data_fingerprint": data_fingerprint,
    }
    return models_mod.TrainedModel(spec, net, norm, metadata), history
