"""Adam optimizer and the training loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import CnnArchitecture, CnnModel, backward, forward, init_model, loss, one_hot


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    epochs: int = 200
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.1

    def __post_init__(self):
        if min(self.learning_rate, self.epochs, self.batch_size) <= 0:
            raise ValueError("learning_rate, epochs and batch_size must be positive")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")


class AdamState:
    """First/second moment accumulators, one pair per parameter."""

    def __init__(self, model: CnnModel):
        self.m = {name: np.zeros_like(arr) for name, arr in model.param_items()}
        self.v = {name: np.zeros_like(arr) for name, arr in model.param_items()}


def adam_step(model: CnnModel, grads, opt: AdamState, t: int, *,
              lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> CnnModel:
    """Standard bias-corrected Adam update, applied in place (t is 1-based)."""
    if t < 1:
        raise ValueError("Adam step index t is 1-based")
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, param in model.param_items():
        g = grads[name]
        m = opt.m[name]
        v = opt.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        param -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return model


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float = float("nan")
    val_acc: float = float("nan")


def _accuracy(probs, labels) -> float:
    pred = probs.argmax(axis=2).T           # (B, w)
    return float((pred == labels).mean())


def train(inputs, labels, arch: CnnArchitecture, config: TrainConfig):
    """Train one model for a fixed window count.

    inputs: (N, n_tx, n_bins) normalized series, labels: (N, w) symbol
    indices. A seeded shuffle carves off the validation split (diagnostic
    only); each epoch reshuffles the training set and walks it in
    batch_size mini-batches. Returns (model, [EpochStats...]).
    """
    x = np.asarray(inputs, dtype=np.float64)
    lab = np.asarray(labels, dtype=np.int64)
    if x.ndim != 3 or x.shape[0] == 0:
        raise ValueError("inputs must be a non-empty (N, n_tx, n_bins) array")
    if lab.shape != (x.shape[0], arch.w):
        raise ValueError(f"labels must have shape (N, {arch.w}), got {lab.shape}")
    x = x[:, None, :, :]

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x7A]))
    perm = rng.permutation(x.shape[0])
    n_val = int(round(config.validation_fraction * x.shape[0]))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    if train_idx.size < config.batch_size:
        raise ValueError(f"batch_size {config.batch_size} exceeds the "
                         f"{train_idx.size}-sample training split")
    x_val, lab_val = x[val_idx], lab[val_idx]
    y_val = one_hot(lab_val, arch.n_tx) if n_val else None

    model = init_model(arch, config.seed)
    opt = AdamState(model)
    trace = []
    t = 0
    for epoch in range(1, config.epochs + 1):
        order = train_idx[rng.permutation(train_idx.size)]
        loss_sum = 0.0
        acc_sum = 0.0
        for start in range(0, order.size, config.batch_size):
            batch = order[start:start + config.batch_size]
            xb, labb = x[batch], lab[batch]
            yb = one_hot(labb, arch.n_tx)
            probs, cache = forward(model, xb, mode="train")
            batch_loss = loss(probs, yb)
            grads = backward(model, cache, yb)
            t += 1
            adam_step(model, grads, opt, t, lr=config.learning_rate,
                      beta1=config.beta1, beta2=config.beta2, eps=config.eps)
            loss_sum += batch_loss * batch.size
            acc_sum += _accuracy(probs, labb) * batch.size
        stats = EpochStats(epoch=epoch,
                           train_loss=loss_sum / order.size,
                           train_acc=acc_sum / order.size)
        if n_val:
            probs_val, _ = forward(model, x_val, mode="eval")
            stats.val_loss = loss(probs_val, y_val)
            stats.val_acc = _accuracy(probs_val, lab_val)
        trace.append(stats)
    return model, trace
