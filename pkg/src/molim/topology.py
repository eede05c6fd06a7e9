"""MISO geometry: transmitters on a uniform circular array, one spherical
absorbing receiver on the array axis, receiver surface split into equal
azimuthal wedges (one per transmitter).

Coordinate frame: UCA center at the origin, UCA axis = z-axis, transmitter 0
on the +x axis. Lengths in micrometers, times in seconds, D in um^2/s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Table-style defaults for the 8-Tx setup
DEFAULTS = dict(
    n_tx=8,
    r_tx=0.5,
    r_rx=5.0,
    d_rx=15.5,
    d_tx=10.0,
    diffusion_coeff=79.4,
    total_time=5.0,
    dt_sim=1e-4,
    dt_record=1e-1,
)

_CONFIG_ALIASES = {"d": "diffusion_coeff", "t": "total_time"}


@dataclass(frozen=True)
class TopologyConfig:
    n_tx: int = 8
    r_tx: float = 0.5          # transmitter radius
    r_rx: float = 5.0          # receiver radius
    d_rx: float = 15.5         # UCA center -> receiver center
    d_tx: float = 10.0         # UCA center -> closest transmitter point
    diffusion_coeff: float = 79.4
    total_time: float = 5.0
    dt_sim: float = 1e-4
    dt_record: float = 1e-1

    def __post_init__(self):
        n = self.n_tx
        if n < 2 or (n & (n - 1)) != 0:
            raise ValueError(f"n_tx must be a power of two >= 2, got {n}")
        for name in ("r_tx", "r_rx", "d_rx", "d_tx", "diffusion_coeff",
                     "total_time", "dt_sim", "dt_record"):
            v = getattr(self, name)
            if not (v > 0):
                raise ValueError(f"{name} must be strictly positive, got {v}")
        if self.dt_sim > self.dt_record:
            raise ValueError("dt_sim must not exceed dt_record")
        ratio = self.total_time / self.dt_record
        if abs(ratio - round(ratio)) > 1e-9 * ratio:
            raise ValueError("dt_record must divide total_time")

    @property
    def bits_per_symbol(self) -> int:
        return int(round(math.log2(self.n_tx)))

    @property
    def n_bins(self) -> int:
        return int(round(self.total_time / self.dt_record))

    @property
    def n_steps(self) -> int:
        return int(round(self.total_time / self.dt_sim))

    @property
    def step_std(self) -> float:
        """Per-axis standard deviation of one Brownian displacement."""
        return math.sqrt(2.0 * self.diffusion_coeff * self.dt_sim)


@dataclass(frozen=True)
class Topology:
    config: TopologyConfig
    tx_centers: np.ndarray = field(repr=False)   # (n_tx, 3)
    rx_center: np.ndarray = field(repr=False)    # (3,)
    region_azimuths: np.ndarray = field(repr=False)  # (n_tx,)


def build_topology(config: TopologyConfig) -> Topology:
    """Place transmitter centers at radius d_tx + r_tx on the z=0 circle and
    the receiver center at (0, 0, d_rx).

    d_tx is the closest UCA-center-to-transmitter distance, i.e. to the
    transmitter *surface*, hence the + r_tx.
    """
    n = config.n_tx
    radius = config.d_tx + config.r_tx
    az = 2.0 * np.pi * np.arange(n) / n
    tx = np.stack([radius * np.cos(az), radius * np.sin(az), np.zeros(n)], axis=1)
    rx = np.array([0.0, 0.0, config.d_rx])

    # geometric validity: no sphere interpenetration
    d_tx_rx = math.hypot(radius, config.d_rx)
    if d_tx_rx < config.r_tx + config.r_rx:
        raise ValueError(
            f"transmitter spheres intersect the receiver sphere "
            f"(center distance {d_tx_rx:.4g} < {config.r_tx + config.r_rx:.4g})")
    chord = 2.0 * radius * math.sin(math.pi / n)
    if chord < 2.0 * config.r_tx:
        raise ValueError(
            f"adjacent transmitter spheres intersect "
            f"(center distance {chord:.4g} < {2 * config.r_tx:.4g})")

    tx.setflags(write=False)
    rx.setflags(write=False)
    az.setflags(write=False)
    return Topology(config=config, tx_centers=tx, rx_center=rx, region_azimuths=az)


def wedge_index(azimuth, n_tx: int):
    """Map azimuth(s) in radians to wedge indices.

    Wedge i spans [phi_i - pi/n, phi_i + pi/n) with phi_i = 2*pi*i/n; the
    lower bound is inclusive so boundary azimuths resolve deterministically
    upward.
    """
    width = 2.0 * np.pi / n_tx
    theta = np.asarray(azimuth) % (2.0 * np.pi)
    idx = np.floor((theta + 0.5 * width) / width).astype(np.int64) % n_tx
    if np.ndim(azimuth) == 0:
        return int(idx)
    return idx


def region_of(hit_point, topology: Topology) -> int:
    """Region index of a point on the receiver sphere surface.

    Regions are azimuthal wedges about the UCA axis, centered on the
    conjugate transmitter azimuths; elevation is irrelevant.
    """
    p = np.asarray(hit_point, dtype=float)
    rel = p - topology.rx_center
    r = float(np.linalg.norm(rel))
    r_rx = topology.config.r_rx
    if abs(r - r_rx) > 1e-6 * r_rx:
        raise ValueError(f"point is not on the receiver surface (|p - c| = {r:.9g}, "
                         f"r_rx = {r_rx:.9g})")
    az = np.arctan2(rel[1], rel[0])
    return int(wedge_index(az, topology.config.n_tx))


def load_config(path) -> TopologyConfig:
    """Read a flat `key = value` config file. Unknown keys are rejected,
    missing keys fall back to the defaults. `#` starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
            key, _, val = line.partition("=")
            key = key.strip().lower()
            key = _CONFIG_ALIASES.get(key, key)
            if key not in DEFAULTS:
                raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
            values[key] = int(val) if key == "n_tx" else float(val)
    return TopologyConfig(**values)
