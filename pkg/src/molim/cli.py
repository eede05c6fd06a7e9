"""Command line front end.

    molim [--config FILE] [--seed N] [--out DIR] [--profile desk|paper]
          [--workers N] SUBCOMMAND [options]

Exit status is 0 on success; failures print the failing stage to stderr and
exit nonzero.
"""

from __future__ import annotations

import argparse
import sys

from . import storage
from .cnn import CnnArchitecture, TrainConfig
from .decoders import estimate_channel
from .experiments import (PROFILES, derive_seed, evaluate, evaluate_fresh,
                          gen_dataset, run_all, sweep_tb, train_on_dataset)
from .topology import TopologyConfig, build_topology, load_config


def _add_common(parser):
    parser.add_argument("--config", help="topology config file (key = value lines)")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--out", default="molim-out", help="output directory or file")
    parser.add_argument("--profile", choices=sorted(PROFILES), default="desk")
    parser.add_argument("--workers", type=int, default=1,
                        help="worker processes for simulations")


def build_parser():
    parser = argparse.ArgumentParser(prog="molim", description=__doc__)
    _add_common(parser)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-dataset", help="simulate and persist labelled samples")
    p.add_argument("--w", type=int, required=True)
    p.add_argument("--n-sims", type=int, required=True)
    p.add_argument("--molecules", type=int, required=True,
                   help="molecules emitted per symbol")

    p = sub.add_parser("estimate-channel", help="estimate h[i][j][k] coefficients")
    p.add_argument("--t-s", type=float, required=True)
    p.add_argument("--n-slots", type=int, required=True)
    p.add_argument("--m-est", type=int, default=20_000)

    p = sub.add_parser("train", help="train the CNN decoder on a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--filters", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)

    p = sub.add_parser("evaluate", help="BER of the decoders on samples")
    p.add_argument("--dataset", help="evaluate a persisted dataset")
    p.add_argument("--w", type=int, help="fresh-simulation window count")
    p.add_argument("--molecules-per-bit", type=float)
    p.add_argument("--eval-symbols", type=int, default=400)
    p.add_argument("--decoders", default="mcd,mle,cnn")
    p.add_argument("--codings", default="natural,gray")
    p.add_argument("--channel", help="channel coefficient cache file")
    p.add_argument("--checkpoint", help="trained model checkpoint")

    p = sub.add_parser("sweep-tb", help="fixed budget sweep over window counts")
    p.add_argument("--w-list", default="3,6,10")
    p.add_argument("--molecules-per-bit", type=float, default=750.0)
    p.add_argument("--eval-symbols", type=int, default=400)
    p.add_argument("--channels", help="comma list of w=channel-file pairs")
    p.add_argument("--checkpoints", help="comma list of w=checkpoint pairs")

    sub.add_parser("run-all", help="full pipeline at the selected profile")
    return parser


def _topology_config(args) -> TopologyConfig:
    return load_config(args.config) if args.config else TopologyConfig()


def _parse_map(text, loader):
    out = {}
    if text:
        for item in text.split(","):
            key, _, path = item.partition("=")
            out[int(key)] = loader(path)
    return out


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    config = _topology_config(args)
    profile = PROFILES[args.profile]
    try:
        if args.command == "gen-dataset":
            gen_dataset(config, args.w, args.n_sims, args.molecules, args.seed,
                        out_dir=args.out, workers=args.workers)
            print(f"wrote dataset {args.out}")

        elif args.command == "estimate-channel":
            coeffs = estimate_channel(build_topology(config), args.t_s,
                                      args.n_slots, args.m_est, args.seed)
            storage.save_channel(coeffs, args.out)
            print(f"wrote channel coefficients {args.out}")

        elif args.command == "train":
            dataset = storage.load_dataset(args.dataset)
            arch = CnnArchitecture(
                w=dataset.w, n_tx=config.n_tx, n_bins=config.n_bins,
                filters=args.filters or profile.filters,
                dense_width=profile.dense_width)
            tc = TrainConfig(
                learning_rate=args.lr or profile.learning_rate,
                epochs=args.epochs or profile.epochs,
                batch_size=args.batch_size or profile.batch_size,
                seed=args.seed,
                validation_fraction=profile.validation_fraction)
            model, trace = train_on_dataset(dataset, arch, tc)
            storage.save_checkpoint(model, args.out, seed=tc.seed,
                                    epochs=tc.epochs,
                                    final_loss=trace[-1].train_loss)
            print(f"wrote checkpoint {args.out} "
                  f"(loss {trace[0].train_loss:.4f} -> {trace[-1].train_loss:.4f})")

        elif args.command == "evaluate":
            decoders = tuple(args.decoders.split(","))
            codings = tuple(args.codings.split(","))
            channel = storage.load_channel(args.channel) if args.channel else None
            model = storage.load_checkpoint(args.checkpoint) if args.checkpoint else None
            if args.dataset:
                dataset = storage.load_dataset(args.dataset)
                per_bit = dataset.molecules_per_symbol / (
                    profile.s_factor or 0.5 * config.bits_per_symbol)
                report = evaluate(dataset.samples, decoders, codings,
                                  channel=channel, model=model,
                                  molecules_per_bit=per_bit, csv_path=args.out)
            else:
                if args.w is None or args.molecules_per_bit is None:
                    raise ValueError("need --dataset, or --w with --molecules-per-bit")
                report = evaluate_fresh(
                    config, args.w, args.eval_symbols, args.molecules_per_bit,
                    derive_seed(args.seed, 40, args.w, int(args.molecules_per_bit)),
                    decoders, codings, channel=channel, model=model,
                    s_factor=profile.s_factor, workers=args.workers,
                    csv_path=args.out)
            for row in report.rows:
                print(f"{row.decoder},{row.coding}: ber={row.ber:.4g} "
                      f"({row.bit_errors}/{row.n_bits})")
            print(f"wrote report {args.out}")

        elif args.command == "sweep-tb":
            w_list = [int(w) for w in args.w_list.split(",")]
            channels = _parse_map(args.channels, storage.load_channel)
            checkpoints = _parse_map(args.checkpoints, storage.load_checkpoint)
            decoders = ["mcd"]
            if channels:
                decoders.append("mle")
            if checkpoints:
                decoders.append("cnn")
            sweep_tb(config, w_list, channels, checkpoints, args.seed,
                     molecules_per_bit=args.molecules_per_bit,
                     eval_symbols=args.eval_symbols, decoders=tuple(decoders),
                     s_factor=profile.s_factor, workers=args.workers,
                     csv_path=args.out)
            print(f"wrote report {args.out}")

        elif args.command == "run-all":
            run_all(profile, config, args.out, args.seed, workers=args.workers)
            print(f"pipeline complete under {args.out}")
    except Exception as exc:
        print(f"molim {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
