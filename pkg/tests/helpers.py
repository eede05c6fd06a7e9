"""Shared oracles and fixtures for the test suite."""

import math

import numpy as np

from molim.cnn.model import forward, loss, one_hot


def uniform_sphere_points(n, center, radius, rng):
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return center + radius * v


def finite_difference_grads(model, x, labels, step=1e-4):
    """Central-difference gradient of the training loss for every learnable
    parameter. Batch-norm batch statistics are recomputed per probe, so this
    covers the statistics pathway too."""
    y = one_hot(labels, model.arch.n_tx)
    fd = {}
    for name, arr in model.param_items():
        g = np.zeros_like(arr)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            lp = loss(forward(model, x, mode="train")[0], y)
            flat[i] = orig - step
            lm = loss(forward(model, x, mode="train")[0], y)
            flat[i] = orig
            gflat[i] = (lp - lm) / (2.0 * step)
        fd[name] = g
    return fd


def mcd_oracle(window_counts):
    """Row-wise argmax with lowest-index tie break, written long-hand."""
    out = []
    for row in window_counts:
        best, best_val = 0, row[0]
        for j, v in enumerate(row):
            if v > best_val:
                best, best_val = j, v
        out.append(best)
    return out


def mle_greedy_oracle(window_counts, h, s, var_floor=1e-9):
    """Independent transcription of the sequential likelihood decoder:
    explicit loops over windows, candidates and regions."""
    n_tx, n_regions, n_slots = h.shape
    decisions = []
    for k in range(1, len(window_counts) + 1):
        mu_past = [0.0] * n_regions
        var_past = [0.0] * n_regions
        for z in range(1, k):
            slot = k - z
            if slot >= n_slots:
                continue
            xz = decisions[z - 1]
            for j in range(n_regions):
                p = h[xz][j][slot]
                mu_past[j] += s * p
                var_past[j] += s * p * (1.0 - p)
        best, best_ll = 0, -math.inf
        for i in range(n_tx):
            ll = 0.0
            for j in range(n_regions):
                p = h[i][j][0]
                mu = mu_past[j] + s * p
                var = max(var_past[j] + s * p * (1.0 - p), var_floor)
                r = window_counts[k - 1][j]
                ll += math.log(1.0 / math.sqrt(2.0 * math.pi * var))
                ll -= (r - mu) ** 2 / (2.0 * var)
            if ll > best_ll:
                best, best_ll = i, ll
        decisions.append(best)
    return decisions


def two_proportion_less(errors_a, n_a, errors_b, n_b):
    """One-sided pooled z-test that rate A < rate B; returns (z, p_value)."""
    pa, pb = errors_a / n_a, errors_b / n_b
    pool = (errors_a + errors_b) / (n_a + n_b)
    se = math.sqrt(pool * (1.0 - pool) * (1.0 / n_a + 1.0 / n_b))
    if se == 0.0:
        return 0.0, 0.5
    z = (pa - pb) / se
    p = 0.5 * math.erfc(-z / math.sqrt(2.0))   # Phi(z)
    return z, p
