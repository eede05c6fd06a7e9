"""Classic detectors: maximum count decoding and the sequential
symbol-by-symbol Gaussian maximum-likelihood estimator driven by simulated
channel coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diffusion import _EDGE_EPS, cohort_stream, run_emission
from .topology import Topology

# variance floor (molecules^2) applied inside the log-likelihood so empty
# pasts and zero coefficients stay finite without disturbing the argmax
VAR_FLOOR = 1e-9


def mcd_decode(window_counts) -> np.ndarray:
    """Per window, the region with the largest absorption count; ties go to
    the lowest index."""
    counts = np.atleast_2d(np.asarray(window_counts))
    return counts.argmax(axis=1)


@dataclass(frozen=True)
class ChannelCoefficients:
    """h[i, j, k]: fraction of molecules from transmitter i absorbed by
    region j during the (k+1)-th symbol slot after emission (k = 0 is the
    emission slot)."""
    h: np.ndarray          # (n_tx, n_regions, n_slots) float64
    t_s: float
    m_est: int

    @property
    def n_tx(self) -> int:
        return self.h.shape[0]

    @property
    def n_slots(self) -> int:
        return self.h.shape[2]


def bin_channel_events(event_times, event_regions, n_tx: int, t_s: float,
                       n_slots: int, m_est: int) -> np.ndarray:
    """Turn one transmitter's absorption event list into per-region,
    per-slot fractions of the emitted count."""
    h_i = np.zeros((n_tx, n_slots), np.float64)
    if len(event_times):
        times = np.asarray(event_times, dtype=float)
        regions = np.asarray(event_regions, dtype=np.int64)
        slots = (times / t_s + _EDGE_EPS).astype(np.int64)
        keep = slots < n_slots
        np.add.at(h_i, (regions[keep], slots[keep]), 1.0)
    return h_i / m_est


def estimate_channel(topology: Topology, t_s: float, n_slots: int, m_est: int,
                     rng_seed: int) -> ChannelCoefficients:
    """Estimate h by simulating, per transmitter, one emission of m_est
    molecules observed for n_slots * t_s seconds (independent of the config
    horizon). Transmitter i uses the stream keyed (rng_seed, i)."""
    cfg = topology.config
    if m_est < 1:
        raise ValueError("m_est must be >= 1")
    if n_slots < 1 or t_s <= 0:
        raise ValueError("need n_slots >= 1 and t_s > 0")
    horizon_steps = int(round(n_slots * t_s / cfg.dt_sim))
    h = np.empty((cfg.n_tx, cfg.n_tx, n_slots), np.float64)
    for i in range(cfg.n_tx):
        steps, regions = run_emission(topology, i, horizon_steps, m_est,
                                      cohort_stream(rng_seed, i))
        h[i] = bin_channel_events(steps * cfg.dt_sim, regions, cfg.n_tx,
                                  t_s, n_slots, m_est)
    return ChannelCoefficients(h=h, t_s=float(t_s), m_est=int(m_est))


@dataclass
class MleState:
    """Decisions made so far plus the per-symbol molecule scale used in the
    Gaussian mean/variance model."""
    s_mssk: float
    decided_symbols: list = field(default_factory=list)


def mle_past(state: MleState, h: np.ndarray, k: int):
    """Estimated mean and variance of interference arriving in window k
    (1-based) from the previously decided emissions.

    Window z < k contributes s * h[decision(z), :, k-z] (slot k-z+1 in
    1-based slot terms); slots beyond the estimated tail contribute nothing.
    """
    if k <= 0:
        raise ValueError("window index k is 1-based and must be >= 1")
    n_regions, n_slots = h.shape[1], h.shape[2]
    mu = np.zeros(n_regions)
    var = np.zeros(n_regions)
    for z in range(1, k):
        slot = k - z  # 0-based slot index of h
        if slot >= n_slots:
            continue
        hz = h[state.decided_symbols[z - 1], :, slot]
        mu += state.s_mssk * hz
        var += state.s_mssk * hz * (1.0 - hz)
    return mu, var


def mle_decode_window(R, state: MleState, h: np.ndarray) -> int:
    """Greedy per-window decision: the candidate transmitter maximizing the
    Gaussian log-likelihood of the observed region counts given the decided
    past. The decision is appended to the state."""
    R = np.asarray(R, dtype=float)
    k = len(state.decided_symbols) + 1
    mu_past, var_past = mle_past(state, h, k)
    h1 = h[:, :, 0]                                   # emission-slot coefficients
    mu = mu_past[None, :] + state.s_mssk * h1         # (n_tx, n_regions)
    var = var_past[None, :] + state.s_mssk * h1 * (1.0 - h1)
    var = np.maximum(var, VAR_FLOOR)
    ll = (-0.5 * np.log(2.0 * math.pi * var) - (R[None, :] - mu) ** 2 / (2.0 * var)).sum(axis=1)
    decision = int(np.argmax(ll))
    state.decided_symbols.append(decision)
    return decision


def mle_decode(window_counts, h: np.ndarray, s_mssk: float) -> np.ndarray:
    """Sequentially decode all windows, feeding each decision back into the
    interference model."""
    counts = np.atleast_2d(np.asarray(window_counts))
    state = MleState(s_mssk=float(s_mssk))
    return np.array([mle_decode_window(row, state, h) for row in counts],
                    dtype=np.int64)


def default_s_mssk(molecules_per_bit: float, n_tx: int) -> float:
    """Molecule scale of the MLE mean model: (log2(n_tx)/2) molecules per
    bit converts the per-bit budget to a per-symbol emission count."""
    return 0.5 * math.log2(n_tx) * molecules_per_bit
