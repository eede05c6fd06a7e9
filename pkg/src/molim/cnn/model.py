"""From-scratch CNN for window-wise symbol classification.

Backbone: four valid 2x2 convolutions (stride 1, no padding), each followed
by batch normalization and ReLU, then a dense ReLU layer. One softmax head
of n_tx logits per symbol window shares that backbone. The input is the
normalized region-by-time count matrix treated as a one-channel image
(regions as height), float64 throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BN_EPS = 1e-5
BN_MOMENTUM = 0.9          # running = momentum * running + (1 - momentum) * batch
PROB_CLAMP = 1e-12


@dataclass(frozen=True)
class CnnArchitecture:
    w: int                       # number of symbol windows = classifier heads
    n_tx: int = 8
    n_bins: int = 50
    n_conv_layers: int = 4
    kernel: tuple = (2, 2)
    filters: int = 32            # 512 reproduces the full-scale model
    dense_width: int = 512

    def __post_init__(self):
        if self.w < 1:
            raise ValueError("need at least one window head")
        kh, kw = self.kernel
        h, wd = self.conv_output_hw
        if h < 1 or wd < 1:
            raise ValueError(
                f"{self.n_conv_layers} valid {kh}x{kw} convolutions shrink an "
                f"{self.n_tx}x{self.n_bins} input to {h}x{wd}")

    @property
    def conv_output_hw(self):
        kh, kw = self.kernel
        return (self.n_tx - self.n_conv_layers * (kh - 1),
                self.n_bins - self.n_conv_layers * (kw - 1))

    @property
    def flat_dim(self) -> int:
        h, w = self.conv_output_hw
        return self.filters * h * w


class CnnModel:
    """Parameter container. Learnable arrays are exposed through
    param_items() in a fixed order shared by the optimizer, the gradient
    dict, and the checkpoint format."""

    def __init__(self, arch: CnnArchitecture):
        self.arch = arch
        self.conv_kernels = []
        self.conv_biases = []
        self.bn_gamma = []
        self.bn_beta = []
        self.bn_running_mean = []
        self.bn_running_var = []
        kh, kw = arch.kernel
        c_in = 1
        for _ in range(arch.n_conv_layers):
            self.conv_kernels.append(np.zeros((arch.filters, c_in, kh, kw)))
            self.conv_biases.append(np.zeros(arch.filters))
            self.bn_gamma.append(np.ones(arch.filters))
            self.bn_beta.append(np.zeros(arch.filters))
            self.bn_running_mean.append(np.zeros(arch.filters))
            self.bn_running_var.append(np.ones(arch.filters))
            c_in = arch.filters
        self.dense_w = np.zeros((arch.flat_dim, arch.dense_width))
        self.dense_b = np.zeros(arch.dense_width)
        self.head_w = [np.zeros((arch.dense_width, arch.n_tx)) for _ in range(arch.w)]
        self.head_b = [np.zeros(arch.n_tx) for _ in range(arch.w)]

    def param_items(self):
        for l in range(self.arch.n_conv_layers):
            yield f"conv{l}.kernel", self.conv_kernels[l]
            yield f"conv{l}.bias", self.conv_biases[l]
            yield f"bn{l}.gamma", self.bn_gamma[l]
            yield f"bn{l}.beta", self.bn_beta[l]
        yield "dense.weight", self.dense_w
        yield "dense.bias", self.dense_b
        for n in range(self.arch.w):
            yield f"head{n}.weight", self.head_w[n]
            yield f"head{n}.bias", self.head_b[n]

    def state_items(self):
        for l in range(self.arch.n_conv_layers):
            yield f"bn{l}.running_mean", self.bn_running_mean[l]
            yield f"bn{l}.running_var", self.bn_running_var[l]

    def get_array(self, name: str) -> np.ndarray:
        for key, arr in list(self.param_items()) + list(self.state_items()):
            if key == name:
                return arr
        raise KeyError(name)


def init_model(arch: CnnArchitecture, seed: int) -> CnnModel:
    """He-initialized backbone (variance 2/fan_in), unit-gamma batch norm,
    zero biases. Head weights start at zero so the untrained network emits
    the uniform distribution (initial loss is exactly ln n_tx)."""
    model = CnnModel(arch)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC44]))
    kh, kw = arch.kernel
    c_in = 1
    for l in range(arch.n_conv_layers):
        fan_in = c_in * kh * kw
        model.conv_kernels[l][:] = rng.normal(
            0.0, math.sqrt(2.0 / fan_in), size=model.conv_kernels[l].shape)
        c_in = arch.filters
    model.dense_w[:] = rng.normal(
        0.0, math.sqrt(2.0 / arch.flat_dim), size=model.dense_w.shape)
    return model


def _conv_forward(x, kernel, bias):
    # valid cross-correlation via one im2col matmul
    f, c, kh, kw = kernel.shape
    windows = sliding_window_view(x, (kh, kw), axis=(2, 3))  # (B,C,Ho,Wo,kh,kw)
    cols = windows.transpose(0, 2, 3, 1, 4, 5).reshape(
        x.shape[0], windows.shape[2], windows.shape[3], c * kh * kw)
    out = cols @ kernel.reshape(f, -1).T + bias
    return out.transpose(0, 3, 1, 2), cols


def _conv_backward(dout, cols, kernel, x_shape):
    f, c, kh, kw = kernel.shape
    b, _, ho, wo = dout.shape
    dflat = dout.transpose(0, 2, 3, 1).reshape(-1, f)
    dkernel = (dflat.T @ cols.reshape(-1, c * kh * kw)).reshape(kernel.shape)
    dbias = dflat.sum(axis=0)
    dcols = (dflat @ kernel.reshape(f, -1)).reshape(b, ho, wo, c, kh, kw)
    dx = np.zeros(x_shape)
    for di in range(kh):
        for dj in range(kw):
            dx[:, :, di:di + ho, dj:dj + wo] += dcols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
    return dx, dkernel, dbias


def forward(model: CnnModel, x, mode: str = "train"):
    """Run the network on a (B, 1, n_tx, n_bins) batch.

    Returns (probs, cache) where probs has shape (w, B, n_tx) and every
    head row sums to one. Train mode normalizes with batch statistics and
    refreshes the running estimates; eval mode is a pure function of the
    stored running statistics.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    arch = model.arch
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[1:] != (1, arch.n_tx, arch.n_bins):
        raise ValueError(f"expected input (B, 1, {arch.n_tx}, {arch.n_bins}), "
                         f"got {x.shape}")
    cache = {"mode": mode, "x": x, "conv": []}
    a = x
    for l in range(arch.n_conv_layers):
        z, cols = _conv_forward(a, model.conv_kernels[l], model.conv_biases[l])
        if mode == "train":
            mu = z.mean(axis=(0, 2, 3))
            var = z.var(axis=(0, 2, 3))
            model.bn_running_mean[l][:] = (BN_MOMENTUM * model.bn_running_mean[l]
                                           + (1.0 - BN_MOMENTUM) * mu)
            model.bn_running_var[l][:] = (BN_MOMENTUM * model.bn_running_var[l]
                                          + (1.0 - BN_MOMENTUM) * var)
        else:
            mu = model.bn_running_mean[l]
            var = model.bn_running_var[l]
        ivar = 1.0 / np.sqrt(var + BN_EPS)
        xc = z - mu[None, :, None, None]
        xhat = xc * ivar[None, :, None, None]
        y = model.bn_gamma[l][None, :, None, None] * xhat + model.bn_beta[l][None, :, None, None]
        relu_mask = y > 0
        a_next = y * relu_mask
        cache["conv"].append({"a_in_shape": a.shape, "cols": cols, "xc": xc,
                              "ivar": ivar, "xhat": xhat, "relu_mask": relu_mask})
        a = a_next
    flat = a.reshape(a.shape[0], -1)
    dense_z = flat @ model.dense_w + model.dense_b
    dense_mask = dense_z > 0
    dense_a = dense_z * dense_mask
    cache.update(conv_out_shape=a.shape, flat=flat,
                 dense_mask=dense_mask, dense_a=dense_a)

    probs = np.empty((arch.w, x.shape[0], arch.n_tx))
    for n in range(arch.w):
        logits = dense_a @ model.head_w[n] + model.head_b[n]
        logits = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(logits)
        probs[n] = e / e.sum(axis=1, keepdims=True)
    cache["probs"] = probs
    return probs, cache


def loss(head_probs, one_hot_labels) -> float:
    """Categorical cross entropy per head, averaged over the batch and then
    over the heads. Probabilities are clamped below at 1e-12 in the log."""
    p = np.asarray(head_probs, dtype=float)
    y = np.asarray(one_hot_labels, dtype=float)
    if p.shape != y.shape:
        raise ValueError(f"probs {p.shape} and labels {y.shape} disagree")
    w, b = p.shape[0], p.shape[1]
    per_head = -(y * np.log(np.maximum(p, PROB_CLAMP))).sum(axis=(1, 2)) / b
    return float(per_head.sum() / w)


def backward(model: CnnModel, cache, one_hot_labels):
    """Exact gradients of loss() for every learnable parameter, including
    the batch-statistics pathway of the batch-norm layers. Requires a
    train-mode forward cache."""
    if cache["mode"] != "train":
        raise ValueError("backward needs a train-mode forward cache")
    arch = model.arch
    y = np.asarray(one_hot_labels, dtype=float)
    probs = cache["probs"]
    b = probs.shape[1]
    grads = {}
    dense_a = cache["dense_a"]
    d_dense_a = np.zeros_like(dense_a)
    for n in range(arch.w):
        dlogits = (probs[n] - y[n]) / (b * arch.w)
        grads[f"head{n}.weight"] = dense_a.T @ dlogits
        grads[f"head{n}.bias"] = dlogits.sum(axis=0)
        d_dense_a += dlogits @ model.head_w[n].T

    d_dense_z = d_dense_a * cache["dense_mask"]
    grads["dense.weight"] = cache["flat"].T @ d_dense_z
    grads["dense.bias"] = d_dense_z.sum(axis=0)
    d_flat = d_dense_z @ model.dense_w.T
    da = d_flat.reshape(cache["conv_out_shape"])

    for l in range(arch.n_conv_layers - 1, -1, -1):
        ly = cache["conv"][l]
        dy = da * ly["relu_mask"]
        gamma = model.bn_gamma[l]
        grads[f"bn{l}.gamma"] = (dy * ly["xhat"]).sum(axis=(0, 2, 3))
        grads[f"bn{l}.beta"] = dy.sum(axis=(0, 2, 3))
        n_per_ch = dy.shape[0] * dy.shape[2] * dy.shape[3]
        dxhat = dy * gamma[None, :, None, None]
        ivar = ly["ivar"][None, :, None, None]
        xc = ly["xc"]
        dvar = (dxhat * xc).sum(axis=(0, 2, 3)) * (-0.5) * ly["ivar"] ** 3
        dmu = (-(dxhat * ivar).sum(axis=(0, 2, 3))
               + dvar * (-2.0 / n_per_ch) * xc.sum(axis=(0, 2, 3)))
        dz = (dxhat * ivar
              + (2.0 / n_per_ch) * dvar[None, :, None, None] * xc
              + (dmu / n_per_ch)[None, :, None, None])
        da, dk, db = _conv_backward(dz, ly["cols"], model.conv_kernels[l],
                                    ly["a_in_shape"])
        grads[f"conv{l}.kernel"] = dk
        grads[f"conv{l}.bias"] = db
    return grads


def predict_batch(model: CnnModel, series_batch) -> np.ndarray:
    """Eval-mode decoding of a batch of normalized series matrices.
    Returns (B, w) symbol indices; per-head ties go to the lowest index."""
    x = np.asarray(series_batch, dtype=np.float64)
    if x.ndim == 3:
        x = x[:, None, :, :]
    probs, _ = forward(model, x, mode="eval")
    return probs.argmax(axis=2).T


def predict(model: CnnModel, normalized_series) -> np.ndarray:
    """Decode one sample: the per-head argmax over the n_tx probabilities."""
    x = np.asarray(normalized_series, dtype=np.float64)
    if x.shape != (model.arch.n_tx, model.arch.n_bins):
        raise ValueError(f"expected ({model.arch.n_tx}, {model.arch.n_bins}) "
                         f"series, got {x.shape}")
    return predict_batch(model, x[None])[0]


def one_hot(labels, n_classes: int) -> np.ndarray:
    """(N, w) integer labels -> (w, N, n_classes) one-hot array."""
    lab = np.asarray(labels, dtype=np.int64)
    out = np.zeros((lab.shape[1], lab.shape[0], n_classes))
    for n in range(lab.shape[1]):
        out[n, np.arange(lab.shape[0]), lab[:, n]] = 1.0
    return out
