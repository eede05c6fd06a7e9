"""Experiment orchestration: dataset generation, BER evaluation sweeps and
the end-to-end pipeline.

Molecule budgets are quoted per bit; an emission sends
round(s_factor * molecules_per_bit) molecules per symbol with s_factor
defaulting to log2(n_tx)/2 (1.5 for eight transmitters), and the same count
feeds the MLE mean model. Reports always record both figures.
"""

from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import storage
from .cnn import CnnArchitecture, TrainConfig, predict_batch, train
from .coding import bit_duration, symbols_to_bits
from .decoders import ChannelCoefficients, bin_channel_events, mcd_decode, mle_decode
from .diffusion import cohort_stream, run_emission, simulate_sequence
from .storage import Dataset
from .topology import TopologyConfig, build_topology

CSV_HEADER = ("decoder", "coding", "w", "t_b_s", "molecules_per_bit",
              "molecules_per_symbol", "n_bits", "bit_errors", "ber", "seconds")
CODING_TAGS = {"natural": "NC", "gray": "GC"}
DECODER_TAGS = {"mcd": "MCD", "mle": "MLE", "cnn": "CNN"}


@dataclass(frozen=True)
class BerRow:
    decoder: str
    coding: str
    w: int
    t_b_s: float
    molecules_per_bit: float
    molecules_per_symbol: int
    n_bits: int
    bit_errors: int
    ber: float
    seconds: float


@dataclass
class BerReport:
    rows: list = field(default_factory=list)

    def write_csv(self, path):
        tmp = f"{path}.tmp"
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for r in self.rows:
                writer.writerow([r.decoder, r.coding, r.w, repr(r.t_b_s),
                                 repr(r.molecules_per_bit), r.molecules_per_symbol,
                                 r.n_bits, r.bit_errors, repr(r.ber), repr(r.seconds)])
        os.replace(tmp, path)

    @classmethod
    def read_csv(cls, path) -> "BerReport":
        rows = []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            if header != CSV_HEADER:
                raise ValueError(f"{path}: unexpected CSV header {header}")
            for rec in reader:
                rows.append(BerRow(
                    decoder=rec[0], coding=rec[1], w=int(rec[2]),
                    t_b_s=float(rec[3]), molecules_per_bit=float(rec[4]),
                    molecules_per_symbol=int(rec[5]), n_bits=int(rec[6]),
                    bit_errors=int(rec[7]), ber=float(rec[8]),
                    seconds=float(rec[9])))
        return cls(rows=rows)


def default_s_factor(n_tx: int) -> float:
    return 0.5 * math.log2(n_tx)


def molecules_per_symbol_for(molecules_per_bit: float, n_tx: int,
                             s_factor: float | None = None) -> int:
    if s_factor is None:
        s_factor = default_s_factor(n_tx)
    return max(1, int(round(s_factor * molecules_per_bit)))


def derive_seed(*parts) -> int:
    """Collapse a tuple of tags into one engine seed."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


def _simulate_one(args):
    config, w, t_s, mps, seed, index = args
    topo = build_topology(config)
    symbols = np.random.default_rng(
        np.random.SeedSequence([seed, index, 1])).integers(0, config.n_tx, w)
    return simulate_sequence(topo, symbols, t_s, mps, derive_seed(seed, index, 0))


def gen_samples(config: TopologyConfig, w: int, n_sims: int,
                molecules_per_symbol: int, seed: int, t_s: float | None = None,
                workers: int = 1) -> list:
    """n_sims independent simulations of w uniformly random symbols each.
    Simulation i draws its symbols from stream (seed, i, 1) and its engine
    seed from (seed, i, 0), so results do not depend on worker count."""
    if n_sims < 1:
        raise ValueError("n_sims must be >= 1")
    t_s = config.total_time / w if t_s is None else t_s
    jobs = [(config, w, t_s, molecules_per_symbol, seed, i) for i in range(n_sims)]
    if workers <= 1:
        return [_simulate_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_simulate_one, jobs, chunksize=1))


def gen_dataset(config: TopologyConfig, w: int, n_sims: int,
                molecules_per_symbol: int, seed: int, out_dir=None,
                t_s: float | None = None, workers: int = 1) -> Dataset:
    t_s = config.total_time / w if t_s is None else t_s
    samples = gen_samples(config, w, n_sims, molecules_per_symbol, seed,
                          t_s=t_s, workers=workers)
    dataset = Dataset(w=w, t_s=t_s, molecules_per_symbol=molecules_per_symbol,
                      samples=samples, seed=seed, config=config)
    if out_dir is not None:
        storage.save_dataset(dataset, out_dir)
    return dataset


def channel_event_table(config: TopologyConfig, m_est: int, seed: int,
                        horizon: float | None = None) -> list:
    """Per transmitter, the raw absorption (times, regions) of one m_est
    emission observed for `horizon` seconds (default: the config horizon).
    One table serves every slot width via bin_channel_events."""
    topo = build_topology(config)
    horizon = config.total_time if horizon is None else horizon
    n_steps = int(round(horizon / config.dt_sim))
    table = []
    for i in range(config.n_tx):
        steps, regions = run_emission(topo, i, n_steps, m_est,
                                      cohort_stream(seed, i))
        table.append((steps * config.dt_sim, regions))
    return table


def channel_from_table(table, n_tx: int, t_s: float, n_slots: int,
                       m_est: int) -> ChannelCoefficients:
    h = np.stack([bin_channel_events(times, regions, n_tx, t_s, n_slots, m_est)
                  for times, regions in table])
    return ChannelCoefficients(h=h, t_s=float(t_s), m_est=int(m_est))


def train_on_dataset(dataset: Dataset, arch: CnnArchitecture,
                     config: TrainConfig):
    """Fit one model to a persisted dataset (normalized series -> labels)."""
    ws = {rec.w for rec in dataset.samples}
    if len(ws) != 1 or dataset.w not in ws:
        raise ValueError(f"dataset mixes window counts: {sorted(ws)}")
    x = np.stack([rec.normalized_series for rec in dataset.samples])
    labels = np.stack([rec.true_symbols for rec in dataset.samples])
    return train(x, labels, arch, config)


def evaluate(samples, decoders, codings, *, channel=None, s_mssk=None,
             model=None, molecules_per_bit: float, csv_path=None) -> BerReport:
    """Decode every sample with every requested decoder and accumulate bit
    errors under each coding scheme. All rows of one call share the sample
    set, so their n_bits agree."""
    if not samples:
        raise ValueError("no samples to evaluate")
    for d in decoders:
        if d not in DECODER_TAGS:
            raise ValueError(f"unknown decoder {d!r}")
    for c in codings:
        if c not in CODING_TAGS:
            raise ValueError(f"unknown coding {c!r}")
    if "mle" in decoders and channel is None:
        raise FileNotFoundError(
            "MLE decoding needs channel coefficients; build them first with "
            "`molim estimate-channel`")
    if "cnn" in decoders and model is None:
        raise FileNotFoundError(
            "CNN decoding needs a trained checkpoint; build it first with "
            "`molim train`")

    w = samples[0].w
    t_s = samples[0].t_s
    mps = samples[0].molecules_per_symbol
    n_tx = samples[0].window_counts.shape[1]
    true_syms = np.concatenate([rec.true_symbols for rec in samples])

    decoded = {}
    timings = {}
    for dec in decoders:
        t0 = time.perf_counter()
        if dec == "mcd":
            out = [mcd_decode(rec.window_counts) for rec in samples]
        elif dec == "mle":
            s = float(mps if s_mssk is None else s_mssk)
            out = [mle_decode(rec.window_counts, channel.h, s) for rec in samples]
        else:
            x = np.stack([rec.normalized_series for rec in samples])
            out = list(predict_batch(model, x))
        decoded[dec] = np.concatenate(out)
        timings[dec] = time.perf_counter() - t0

    report = BerReport()
    t_b = bit_duration(t_s, n_tx)
    for dec in decoders:
        for coding in codings:
            true_bits = symbols_to_bits(true_syms, coding, n_tx)
            dec_bits = symbols_to_bits(decoded[dec], coding, n_tx)
            errors = int(np.count_nonzero(true_bits != dec_bits))
            report.rows.append(BerRow(
                decoder=DECODER_TAGS[dec], coding=CODING_TAGS[coding], w=w,
                t_b_s=t_b, molecules_per_bit=float(molecules_per_bit),
                molecules_per_symbol=mps, n_bits=true_bits.size,
                bit_errors=errors, ber=errors / true_bits.size,
                seconds=timings[dec]))
    if csv_path is not None:
        report.write_csv(csv_path)
    return report


def evaluate_fresh(config: TopologyConfig, w: int, eval_symbols: int,
                   molecules_per_bit: float, seed: int, decoders, codings, *,
                   channel=None, model=None, s_factor=None, workers: int = 1,
                   csv_path=None) -> BerReport:
    """Evaluate on freshly simulated transmissions totalling at least
    eval_symbols symbols."""
    n_sims = math.ceil(eval_symbols / w)
    mps = molecules_per_symbol_for(molecules_per_bit, config.n_tx, s_factor)
    samples = gen_samples(config, w, n_sims, mps, seed, workers=workers)
    return evaluate(samples, decoders, codings, channel=channel, model=model,
                    molecules_per_bit=molecules_per_bit, csv_path=csv_path)


def sweep_tb(config: TopologyConfig, w_list, channels: dict, models: dict,
             seed: int, *, molecules_per_bit: float = 750.0,
             eval_symbols: int = 400, decoders=("mcd", "mle", "cnn"),
             codings=("natural", "gray"), s_factor=None, workers: int = 1,
             csv_path=None) -> BerReport:
    """One evaluation per window count at a fixed per-bit molecule budget:
    the bit-duration sweep."""
    report = BerReport()
    for w in w_list:
        sub = evaluate_fresh(
            config, w, eval_symbols, molecules_per_bit,
            derive_seed(seed, 40, w, int(molecules_per_bit)),
            decoders, codings,
            channel=channels.get(w) if channels else None,
            model=models.get(w) if models else None,
            s_factor=s_factor, workers=workers)
        report.rows.extend(sub.rows)
    if csv_path is not None:
        report.write_csv(csv_path)
    return report


@dataclass(frozen=True)
class Profile:
    """Scale knobs for the end-to-end pipeline."""
    name: str
    windows: tuple
    n_sims_train: int
    m_train_per_symbol: int
    m_train_overrides: dict = field(default_factory=dict)
    filters: int = 32
    dense_width: int = 512
    epochs: int = 100
    batch_size: int = 64
    learning_rate: float = 0.001
    validation_fraction: float = 0.1
    m_est: int = 20_000
    eval_symbols: int = 400
    eval_budgets: tuple = (750.0, 1500.0)
    eval_budget_windows: tuple = (10,)
    sweep_budget: float = 750.0
    s_factor: float | None = None

    def m_train(self, w: int) -> int:
        return self.m_train_overrides.get(w, self.m_train_per_symbol)


DESK_PROFILE = Profile(
    name="desk",
    windows=(3, 6, 10),
    n_sims_train=200,
    m_train_per_symbol=20_000,
    m_train_overrides={3: 10_000, 6: 10_000},
    filters=32,
    epochs=100,
)

PAPER_PROFILE = Profile(
    name="paper",
    windows=tuple(range(3, 11)),
    n_sims_train=200,
    m_train_per_symbol=100_000,
    filters=512,
    epochs=200,
    m_est=100_000,
    eval_symbols=2000,
    eval_budgets=tuple(float(m) for m in range(750, 3251, 250)),
    eval_budget_windows=(10, 3),
)

PROFILES = {"desk": DESK_PROFILE, "paper": PAPER_PROFILE}


def run_all(profile: Profile, config: TopologyConfig, out_dir, seed: int,
            workers: int = 1, log=print) -> dict:
    """Datasets -> channel coefficients -> models -> BER reports.

    Every artifact is written atomically and skipped when already present,
    so an interrupted run resumes where it stopped. Returns the artifact
    paths keyed by stage.
    """
    paths = {"datasets": {}, "channels": {}, "models": {}, "reports": {}}
    for sub in ("datasets", "channels", "models", "reports"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)

    stage = "gen-datasets"
    try:
        for w in profile.windows:
            ds_dir = os.path.join(out_dir, "datasets", f"w{w}")
            paths["datasets"][w] = ds_dir
            if os.path.exists(os.path.join(ds_dir, "samples.bin")):
                log(f"[{stage}] w={w}: exists, skipping")
                continue
            t0 = time.perf_counter()
            gen_dataset(config, w, profile.n_sims_train, profile.m_train(w),
                        derive_seed(seed, 10, w), out_dir=ds_dir, workers=workers)
            log(f"[{stage}] w={w}: {profile.n_sims_train} sims in "
                f"{time.perf_counter() - t0:.1f}s")

        stage = "estimate-channels"
        missing = [w for w in profile.windows if not os.path.exists(
            os.path.join(out_dir, "channels", f"w{w}.chan"))]
        for w in profile.windows:
            paths["channels"][w] = os.path.join(out_dir, "channels", f"w{w}.chan")
        if missing:
            t0 = time.perf_counter()
            table = channel_event_table(config, profile.m_est, derive_seed(seed, 20))
            for w in missing:
                coeffs = channel_from_table(table, config.n_tx,
                                            config.total_time / w, w, profile.m_est)
                storage.save_channel(coeffs, paths["channels"][w])
            log(f"[{stage}] {len(missing)} slot widths from one "
                f"{profile.m_est}-molecule table in {time.perf_counter() - t0:.1f}s")
        else:
            log(f"[{stage}] all present, skipping")

        stage = "train-models"
        for w in profile.windows:
            ckpt = os.path.join(out_dir, "models", f"w{w}.ckpt")
            paths["models"][w] = ckpt
            if os.path.exists(ckpt):
                log(f"[{stage}] w={w}: exists, skipping")
                continue
            dataset = storage.load_dataset(paths["datasets"][w])
            arch = CnnArchitecture(w=w, n_tx=config.n_tx, n_bins=config.n_bins,
                                   filters=profile.filters,
                                   dense_width=profile.dense_width)
            tc = TrainConfig(learning_rate=profile.learning_rate,
                             epochs=profile.epochs, batch_size=profile.batch_size,
                             seed=derive_seed(seed, 30, w),
                             validation_fraction=profile.validation_fraction)
            t0 = time.perf_counter()
            model, trace = train_on_dataset(dataset, arch, tc)
            storage.save_checkpoint(model, ckpt, seed=tc.seed, epochs=tc.epochs,
                                    final_loss=trace[-1].train_loss)
            log(f"[{stage}] w={w}: loss {trace[0].train_loss:.4f} -> "
                f"{trace[-1].train_loss:.4f} in {time.perf_counter() - t0:.1f}s")

        stage = "evaluate"
        budget_csv = os.path.join(out_dir, "reports", "ber_vs_molecules.csv")
        paths["reports"]["budgets"] = budget_csv
        if not os.path.exists(budget_csv):
            report = BerReport()
            for w in profile.eval_budget_windows:
                channel = storage.load_channel(paths["channels"][w])
                model = storage.load_checkpoint(paths["models"][w])
                for budget in profile.eval_budgets:
                    t0 = time.perf_counter()
                    sub = evaluate_fresh(
                        config, w, profile.eval_symbols, budget,
                        derive_seed(seed, 40, w, int(budget)),
                        ("mcd", "mle", "cnn"), ("natural", "gray"),
                        channel=channel, model=model, s_factor=profile.s_factor,
                        workers=workers)
                    report.rows.extend(sub.rows)
                    log(f"[{stage}] w={w} M/bit={budget:g}: "
                        f"{time.perf_counter() - t0:.1f}s")
            report.write_csv(budget_csv)
        else:
            log(f"[{stage}] budget report exists, skipping")

        stage = "sweep-tb"
        sweep_csv = os.path.join(out_dir, "reports", "sweep_tb.csv")
        paths["reports"]["sweep_tb"] = sweep_csv
        if not os.path.exists(sweep_csv):
            channels = {w: storage.load_channel(paths["channels"][w])
                        for w in profile.windows}
            models = {w: storage.load_checkpoint(paths["models"][w])
                      for w in profile.windows}
            sweep_tb(config, profile.windows, channels, models, seed,
                     molecules_per_bit=profile.sweep_budget,
                     eval_symbols=profile.eval_symbols,
                     s_factor=profile.s_factor, workers=workers,
                     csv_path=sweep_csv)
            log(f"[{stage}] wrote {sweep_csv}")
        else:
            log(f"[{stage}] sweep report exists, skipping")
    except Exception as exc:
        raise RuntimeError(f"pipeline stage {stage!r} failed: {exc}") from exc
    return paths
