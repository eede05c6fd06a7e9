"""On-disk artifact formats.

All binary files are little-endian with an 8-byte magic and a u32 version.

dataset directory
    meta.txt     flat `key = value` text: topology config, seed, shape info
    samples.bin  header: magic "MOLIMDS1", version, w, n_tx, n_bins,
                 n_samples (u32 each); per sample: labels (w x u8),
                 window_counts (w*n_tx x i64), series (n_tx*n_bins x i32).
                 The normalized series is derived data and recomputed on
                 load; raw absorption events are not persisted.

channel cache file
    magic "MOLIMCH1", version, n_tx, n_regions, n_slots (u32), t_s (f64),
    m_est (u64), then the h tensor as f64, row-major (i, j, k).

model checkpoint file
    magic "MOLIMNN1", version, n_conv_layers, kh, kw, filters, dense_width,
    w, n_tx, n_bins (u32), then every learnable parameter in
    CnnModel.param_items() order followed by the batch-norm running stats
    in state_items() order, all f64. A `<file>.meta.txt` sidecar records
    w, training seed, epochs completed and final loss.

Writes go through a temp file + rename so partial artifacts never appear.
"""

from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, fields

import numpy as np

from .cnn.model import CnnArchitecture, CnnModel
from .decoders import ChannelCoefficients
from .diffusion import SampleRecord, normalize_sample
from .topology import TopologyConfig

DATASET_MAGIC = b"MOLIMDS1"
CHANNEL_MAGIC = b"MOLIMCH1"
MODEL_MAGIC = b"MOLIMNN1"
FORMAT_VERSION = 1


@dataclass
class Dataset:
    """A homogeneous batch of labelled simulations plus its provenance."""
    w: int
    t_s: float
    molecules_per_symbol: int
    samples: list                    # [SampleRecord]
    seed: int
    config: TopologyConfig
    config_hash: str = ""

    def __post_init__(self):
        if not self.config_hash:
            self.config_hash = config_hash(self.config)
        for rec in self.samples:
            if rec.w != self.w:
                raise ValueError(f"mixed window counts in dataset: {rec.w} != {self.w}")
            if rec.true_symbols.min() < 0 or rec.true_symbols.max() >= self.config.n_tx:
                raise ValueError("dataset labels out of range")


def config_hash(config: TopologyConfig) -> str:
    text = "\n".join(f"{f.name}={getattr(config, f.name)!r}" for f in fields(config))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _atomic_write(path, payload: bytes):
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def _write_meta(path, pairs):
    text = "".join(f"{k} = {v}\n" for k, v in pairs)
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _read_meta(path) -> dict:
    out = {}
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                key, _, val = line.partition("=")
                out[key.strip()] = val.strip()
    return out


def save_dataset(dataset: Dataset, directory):
    os.makedirs(directory, exist_ok=True)
    cfg = dataset.config
    n_tx, n_bins = cfg.n_tx, cfg.n_bins
    parts = [DATASET_MAGIC,
             struct.pack("<5I", FORMAT_VERSION, dataset.w, n_tx, n_bins,
                         len(dataset.samples))]
    for rec in dataset.samples:
        parts.append(rec.true_symbols.astype(np.uint8).tobytes())
        parts.append(rec.window_counts.astype("<i8").tobytes())
        parts.append(rec.series.astype("<i4").tobytes())
    _atomic_write(os.path.join(directory, "samples.bin"), b"".join(parts))

    pairs = [(f.name, getattr(cfg, f.name)) for f in fields(cfg)]
    pairs += [("seed", dataset.seed), ("w", dataset.w), ("t_s", dataset.t_s),
              ("molecules_per_symbol", dataset.molecules_per_symbol),
              ("n_samples", len(dataset.samples)),
              ("config_hash", dataset.config_hash)]
    _write_meta(os.path.join(directory, "meta.txt"), pairs)


def load_dataset(directory) -> Dataset:
    meta_path = os.path.join(directory, "meta.txt")
    bin_path = os.path.join(directory, "samples.bin")
    if not os.path.exists(meta_path) or not os.path.exists(bin_path):
        raise FileNotFoundError(
            f"no dataset at {directory!r}; build it first with "
            f"`molim gen-dataset --out ...`")
    meta = _read_meta(meta_path)
    cfg = TopologyConfig(
        n_tx=int(meta["n_tx"]), r_tx=float(meta["r_tx"]), r_rx=float(meta["r_rx"]),
        d_rx=float(meta["d_rx"]), d_tx=float(meta["d_tx"]),
        diffusion_coeff=float(meta["diffusion_coeff"]),
        total_time=float(meta["total_time"]), dt_sim=float(meta["dt_sim"]),
        dt_record=float(meta["dt_record"]))
    with open(bin_path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != DATASET_MAGIC:
        raise ValueError(f"{bin_path}: bad magic {blob[:8]!r}")
    version, w, n_tx, n_bins, n_samples = struct.unpack_from("<5I", blob, 8)
    if version != FORMAT_VERSION:
        raise ValueError(f"{bin_path}: unsupported version {version}")
    mps = int(meta["molecules_per_symbol"])
    t_s = float(meta["t_s"])
    off = 8 + 20
    samples = []
    for _ in range(n_samples):
        labels = np.frombuffer(blob, np.uint8, w, off).astype(np.int64)
        off += w
        counts = np.frombuffer(blob, "<i8", w * n_tx, off).reshape(w, n_tx).copy()
        off += 8 * w * n_tx
        series = np.frombuffer(blob, "<i4", n_tx * n_bins, off).reshape(n_tx, n_bins).copy()
        off += 4 * n_tx * n_bins
        rec = SampleRecord(
            w=w, t_s=t_s, true_symbols=labels, events=[],
            window_counts=counts, series=series,
            normalized_series=np.zeros_like(series, dtype=np.float64),
            molecules_per_symbol=mps,
            n_survivors=w * mps - int(series.sum()))
        samples.append(normalize_sample(rec))
    return Dataset(w=w, t_s=t_s, molecules_per_symbol=mps, samples=samples,
                   seed=int(meta["seed"]), config=cfg,
                   config_hash=meta["config_hash"])


def save_channel(coeffs: ChannelCoefficients, path):
    n_tx, n_regions, n_slots = coeffs.h.shape
    payload = (CHANNEL_MAGIC
               + struct.pack("<4I", FORMAT_VERSION, n_tx, n_regions, n_slots)
               + struct.pack("<dQ", coeffs.t_s, coeffs.m_est)
               + coeffs.h.astype("<f8").tobytes())
    _atomic_write(path, payload)


def load_channel(path) -> ChannelCoefficients:
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"no channel coefficients at {path!r}; build them first with "
            f"`molim estimate-channel --out ...`")
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != CHANNEL_MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:8]!r}")
    version, n_tx, n_regions, n_slots = struct.unpack_from("<4I", blob, 8)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    t_s, m_est = struct.unpack_from("<dQ", blob, 24)
    h = np.frombuffer(blob, "<f8", n_tx * n_regions * n_slots, 40)
    return ChannelCoefficients(h=h.reshape(n_tx, n_regions, n_slots).copy(),
                               t_s=t_s, m_est=int(m_est))


def save_checkpoint(model: CnnModel, path, *, seed: int, epochs: int,
                    final_loss: float):
    arch = model.arch
    kh, kw = arch.kernel
    parts = [MODEL_MAGIC,
             struct.pack("<9I", FORMAT_VERSION, arch.n_conv_layers, kh, kw,
                         arch.filters, arch.dense_width, arch.w, arch.n_tx,
                         arch.n_bins)]
    for _, arr in list(model.param_items()) + list(model.state_items()):
        parts.append(arr.astype("<f8").tobytes())
    _atomic_write(path, b"".join(parts))
    _write_meta(f"{path}.meta.txt",
                [("w", arch.w), ("seed", seed), ("epochs", epochs),
                 ("final_loss", repr(float(final_loss)))])


def load_checkpoint(path) -> CnnModel:
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"no model checkpoint at {path!r}; train it first with "
            f"`molim train --out ...`")
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:8] != MODEL_MAGIC:
        raise ValueError(f"{path}: bad magic {blob[:8]!r}")
    (version, n_conv, kh, kw, filters, dense_width, w, n_tx,
     n_bins) = struct.unpack_from("<9I", blob, 8)
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    arch = CnnArchitecture(w=w, n_tx=n_tx, n_bins=n_bins, n_conv_layers=n_conv,
                           kernel=(kh, kw), filters=filters,
                           dense_width=dense_width)
    model = CnnModel(arch)
    off = 8 + 36
    for _, arr in list(model.param_items()) + list(model.state_items()):
        flat = np.frombuffer(blob, "<f8", arr.size, off)
        arr[:] = flat.reshape(arr.shape)
        off += 8 * arr.size
    if off != len(blob):
        raise ValueError(f"{path}: trailing bytes ({len(blob) - off})")
    return model
