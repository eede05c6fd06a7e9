"""Brownian Monte Carlo over the MISO topology.

Molecules are emitted at transmitter centers, advance by i.i.d. Gaussian
steps of per-axis variance 2*D*dt, reflect off their own origin transmitter
once they have left it, and are absorbed on first endpoint inside the
receiver sphere. Absorption events carry the step-end time and the region of
the segment-sphere intersection point.

Determinism: every emission window is a cohort with its own random stream,
seeded from (seed, window index). The engine consumes each cohort's stream
molecule by molecule in emission order, so a (config, symbols, M, seed)
tuple always produces byte-identical events no matter how simulations are
distributed across worker processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numba import njit

from .topology import Topology, wedge_index

# tolerance used when snapping float times onto window/bin boundaries;
# step endpoints are >= dt_sim/t_s apart so this can only affect true ties
_EDGE_EPS = 1e-9


@dataclass
class MoleculeState:
    position: np.ndarray
    origin_tx: int
    alive: bool = True
    has_exited_origin: bool = False


@dataclass(frozen=True)
class AbsorptionEvent:
    time: float
    region: int


@dataclass
class SampleRecord:
    """One simulated transmission of w symbols."""
    w: int
    t_s: float
    true_symbols: np.ndarray                # (w,) int
    events: list                            # [AbsorptionEvent], sorted by (time, region)
    window_counts: np.ndarray               # (w, n_tx) int64, exact event-time windows
    series: np.ndarray                      # (n_tx, n_bins) int32, dt_record bins
    normalized_series: np.ndarray           # (n_tx, n_bins) float64
    molecules_per_symbol: int
    n_survivors: int                        # still diffusing at the horizon

    @property
    def n_emitted(self) -> int:
        return self.w * self.molecules_per_symbol


def brownian_step(position, rng, diffusion_coeff: float, dt_sim: float):
    """One diffusion displacement: each coordinate gets an independent
    N(0, 2*D*dt) increment. Accepts a single point or an (..., 3) array."""
    p = np.asarray(position, dtype=float)
    sd = math.sqrt(2.0 * diffusion_coeff * dt_sim)
    return p + sd * rng.standard_normal(p.shape)


def _segment_sphere_hit(old, new, center, radius):
    """First intersection of segment old->new with the sphere, projected
    exactly onto the surface. Vectorized over rows; assumes old outside and
    new inside."""
    old = np.atleast_2d(np.asarray(old, dtype=float))
    new = np.atleast_2d(np.asarray(new, dtype=float))
    d = new - old
    oc = old - center
    a = np.einsum("ij,ij->i", d, d)
    b = 2.0 * np.einsum("ij,ij->i", oc, d)
    c = np.einsum("ij,ij->i", oc, oc) - radius * radius
    disc = np.maximum(b * b - 4.0 * a * c, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (-b - np.sqrt(disc)) / (2.0 * a)
    t = np.where((a > 0.0) & (c > 0.0), t, 0.0)
    t = np.clip(t, 0.0, 1.0)
    hit = old + t[:, None] * d
    rel = hit - center
    norm = np.linalg.norm(rel, axis=1)
    norm = np.where(norm > 0.0, norm, 1.0)
    return center + rel * (radius / norm)[:, None]


def _reflect_off_sphere(point, center, radius):
    """Mirror a penetrating point back out across the sphere surface along
    the radial normal (penetration depth is preserved outside)."""
    rel = np.asarray(point, dtype=float) - center
    r = float(np.linalg.norm(rel))
    if r < 1e-12:
        # degenerate: a point at the exact center has no normal; push it
        # out along +x to keep the update defined
        rel = np.array([1.0, 0.0, 0.0])
        r = 1.0
    return center + rel * ((2.0 * radius - r) / r)


def resolve_collisions(old_position, new_position, molecule: MoleculeState,
                       topology: Topology, step_end_time: float = 0.0):
    """Apply receiver absorption / origin reflection rules to one step.

    Returns (position, event-or-None) and updates the molecule in place.
    Absorption wins over reflection; reflected positions are not re-checked
    within the same step. The exit flag latches permanently on the first
    endpoint outside the origin sphere.
    """
    cfg = topology.config
    new = np.asarray(new_position, dtype=float)
    rel_rx = new - topology.rx_center
    if rel_rx @ rel_rx < cfg.r_rx * cfg.r_rx:
        hit = _segment_sphere_hit(old_position, new, topology.rx_center, cfg.r_rx)[0]
        region = int(wedge_index(np.arctan2(hit[1] - topology.rx_center[1],
                                            hit[0] - topology.rx_center[0]), cfg.n_tx))
        molecule.alive = False
        molecule.position = hit
        return hit, AbsorptionEvent(time=step_end_time, region=region)

    origin = topology.tx_centers[molecule.origin_tx]
    rel_o = new - origin
    d2 = rel_o @ rel_o
    if molecule.has_exited_origin:
        if d2 < cfg.r_tx * cfg.r_tx:
            new = _reflect_off_sphere(new, origin, cfg.r_tx)
    elif d2 >= cfg.r_tx * cfg.r_tx:
        molecule.has_exited_origin = True
    molecule.position = new
    return new, None


@njit(cache=True)
def _cohort_kernel(gen, n_mols, n_steps, sd, ox, oy, oz, r2_tx, two_r_tx,
                   rxx, rxy, rxz, r2_rx, abs_step, abs_old, abs_new):
    """Run one emission cohort to its horizon.

    All molecules start at the origin transmitter center and consume the
    cohort stream sequentially (3 draws per step, stopping on absorption).
    Absorptions are recorded as (local step, pre-step position, post-step
    position) for exact hit-point reconstruction outside the kernel.
    """
    n_abs = 0
    for _ in range(n_mols):
        x = ox
        y = oy
        z = oz
        exited = False
        for t in range(n_steps):
            px = x
            py = y
            pz = z
            x += sd * gen.standard_normal()
            y += sd * gen.standard_normal()
            z += sd * gen.standard_normal()
            dx = x - rxx
            dy = y - rxy
            dz = z - rxz
            if dx * dx + dy * dy + dz * dz < r2_rx:
                abs_step[n_abs] = t
                abs_old[n_abs, 0] = px
                abs_old[n_abs, 1] = py
                abs_old[n_abs, 2] = pz
                abs_new[n_abs, 0] = x
                abs_new[n_abs, 1] = y
                abs_new[n_abs, 2] = z
                n_abs += 1
                break
            dx = x - ox
            dy = y - oy
            dz = z - oz
            d2 = dx * dx + dy * dy + dz * dz
            if exited:
                if d2 < r2_tx:
                    r = math.sqrt(d2)
                    if r < 1e-12:
                        x = ox + two_r_tx
                        y = oy
                        z = oz
                    else:
                        s = (two_r_tx - r) / r
                        x = ox + dx * s
                        y = oy + dy * s
                        z = oz + dz * s
            elif d2 >= r2_tx:
                exited = True
    return n_abs


def cohort_stream(seed: int, window: int) -> np.random.Generator:
    """The random stream owned by one emission window of one simulation."""
    return np.random.Generator(np.random.SFC64(np.random.SeedSequence([seed, window])))


def run_emission(topology: Topology, origin_tx: int, n_steps: int, n_mols: int,
                 rng: np.random.Generator):
    """Simulate one emission of n_mols molecules from transmitter origin_tx
    for n_steps steps. Returns (local step-end indices, regions) of all
    absorptions, in molecule emission order."""
    cfg = topology.config
    ox, oy, oz = topology.tx_centers[origin_tx]
    rxx, rxy, rxz = topology.rx_center
    abs_step = np.empty(n_mols, np.int64)
    abs_old = np.empty((n_mols, 3), np.float64)
    abs_new = np.empty((n_mols, 3), np.float64)
    n_abs = _cohort_kernel(
        rng, n_mols, n_steps, cfg.step_std, ox, oy, oz,
        cfg.r_tx * cfg.r_tx, 2.0 * cfg.r_tx,
        rxx, rxy, rxz, cfg.r_rx * cfg.r_rx,
        abs_step, abs_old, abs_new)
    if n_abs == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    hits = _segment_sphere_hit(abs_old[:n_abs], abs_new[:n_abs],
                               topology.rx_center, cfg.r_rx)
    az = np.arctan2(hits[:, 1] - topology.rx_center[1],
                    hits[:, 0] - topology.rx_center[0])
    regions = wedge_index(az, cfg.n_tx)
    return abs_step[:n_abs] + 1, regions


def emission_step_of(k: int, t_s: float, dt_sim: float) -> int:
    """First simulation step whose start lies at/after the k-th window start."""
    return int(math.ceil(k * t_s / dt_sim - _EDGE_EPS))


def simulate_sequence(topology: Topology, true_symbols, t_s: float,
                      molecules_per_symbol: int, rng_seed: int) -> SampleRecord:
    """Simulate a w-symbol transmission and bin its absorptions.

    Window k (0-based) emits molecules_per_symbol molecules from transmitter
    true_symbols[k] at time k*t_s; everything diffuses until the config
    horizon T. window_counts uses exact event times (floor(t/t_s), capped at
    the last window); series uses dt_record bins over [0, T).
    """
    cfg = topology.config
    symbols = np.asarray(true_symbols, dtype=np.int64)
    w = symbols.size
    if w < 1:
        raise ValueError("true_symbols must contain at least one symbol")
    if symbols.min() < 0 or symbols.max() >= cfg.n_tx:
        raise ValueError("symbol indices must lie in [0, n_tx)")
    if molecules_per_symbol < 1:
        raise ValueError("molecules_per_symbol must be >= 1")
    if t_s <= 0:
        raise ValueError("t_s must be positive")
    if w * t_s > cfg.total_time * (1.0 + _EDGE_EPS):
        raise ValueError(f"w * t_s = {w * t_s:.6g} exceeds total_time {cfg.total_time}")
    if rng_seed < 0:
        raise ValueError("rng_seed must be non-negative")

    n_steps = cfg.n_steps
    all_steps = []
    all_regions = []
    n_absorbed = 0
    for k in range(w):
        e_k = emission_step_of(k, t_s, cfg.dt_sim)
        lifetime = n_steps - e_k
        if lifetime <= 0:
            continue
        steps, regions = run_emission(topology, int(symbols[k]), lifetime,
                                      molecules_per_symbol,
                                      cohort_stream(rng_seed, k))
        all_steps.append(steps + e_k)
        all_regions.append(regions)
        n_absorbed += steps.size

    if n_absorbed:
        steps = np.concatenate(all_steps)
        regions = np.concatenate(all_regions)
        order = np.lexsort((regions, steps))
        steps = steps[order]
        regions = regions[order]
    else:
        steps = np.empty(0, np.int64)
        regions = np.empty(0, np.int64)

    times = steps * cfg.dt_sim
    wins = np.minimum((times / t_s + _EDGE_EPS).astype(np.int64), w - 1)
    bins = np.minimum((times / cfg.dt_record + _EDGE_EPS).astype(np.int64),
                      cfg.n_bins - 1)

    window_counts = np.zeros((w, cfg.n_tx), np.int64)
    np.add.at(window_counts, (wins, regions), 1)
    series = np.zeros((cfg.n_tx, cfg.n_bins), np.int32)
    np.add.at(series, (regions, bins), 1)

    events = [AbsorptionEvent(time=float(t), region=int(r))
              for t, r in zip(times, regions)]
    record = SampleRecord(
        w=w, t_s=float(t_s), true_symbols=symbols, events=events,
        window_counts=window_counts, series=series,
        normalized_series=np.zeros_like(series, dtype=np.float64),
        molecules_per_symbol=int(molecules_per_symbol),
        n_survivors=w * int(molecules_per_symbol) - n_absorbed)
    return normalize_sample(record)


def normalize_sample(record: SampleRecord) -> SampleRecord:
    """Divide the binned series by the total absorbed count so the matrix
    sums to one (all zeros when nothing was absorbed)."""
    total = int(record.series.sum())
    if total > 0:
        normalized = record.series.astype(np.float64) / total
    else:
        normalized = np.zeros_like(record.series, dtype=np.float64)
    return replace(record, normalized_series=normalized)
