"""Command line front end: run, account, split, synth.

Exit codes: 0 on success, 2 on configuration errors, 3 on dataset errors.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .accounting import AccountantLedger, privacy_spent
from .data import (Dataset, DatasetError, SynthSpec, generate_synthetic,
                   load_dataset, save_dataset)
from .graph import mask_subgraph, random_partition
from .harness import ConfigError, emit_results, load_config, run_experiment
from .rng import STREAM_PARTITION, Prng


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpgcn",
        description="Differentially private training for graph convolutional networks")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the config's seed list with one seed")
    p_run.add_argument("--out", default="results")

    p_acc = sub.add_parser("account", help="query the moments accountant")
    p_acc.add_argument("--q", type=float, required=True)
    p_acc.add_argument("--sigma", type=float, required=True)
    p_acc.add_argument("--steps", type=int, required=True)
    p_acc.add_argument("--delta", type=float, default=1e-5)

    p_split = sub.add_parser("split", help="partition a dataset's training nodes")
    p_split.add_argument("--dataset", required=True)
    p_split.add_argument("--s", type=int, required=True)
    p_split.add_argument("--seed", type=int, default=0)
    p_split.add_argument("--out", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--spec", required=True,
                         help="key=value file: block_sizes, p_intra, p_inter, "
                              "feature_dim, feature_shift, seed, name")
    p_synth.add_argument("--out", required=True)
    return parser


def _cmd_run(args) -> int:
    config = load_config(args.config)
    if args.seed is not None:
        from dataclasses import replace
        config = replace(config, seeds=(args.seed,))
    record = run_experiment(config)
    emit_results(record, args.out)
    agg = record.aggregate
    line = f"kind={record.config['kind']} optimizer={record.config['optimizer']}"
    if agg["f1_micro_mean"] is not None:
        line += (f" f1_micro={agg['f1_micro_mean']:.4f}"
                 f"±{agg['f1_micro_std']:.4f}")
    if agg["epsilon"] is not None:
        line += f" epsilon={agg['epsilon']:.4f}"
    if agg["seeds_failed"]:
        line += f" failed_seeds={agg['seeds_failed']}"
    print(line)
    print(f"results written to {args.out}")
    return 0


def _cmd_account(args) -> int:
    if not 0.0 < args.q <= 1.0:
        raise ConfigError("q must be in (0, 1]")
    if args.sigma <= 0 or args.steps < 1 or not 0.0 < args.delta < 1.0:
        raise ConfigError("need sigma > 0, steps >= 1, delta in (0, 1)")
    ledger = AccountantLedger()
    ledger.append(args.q, args.sigma, args.steps)
    eps, order = privacy_spent(ledger, args.delta)
    print(f"epsilon={eps:.6f} moment_order={order} "
          f"(q={args.q} sigma={args.sigma} steps={args.steps} delta={args.delta})")
    return 0


def _cmd_split(args) -> int:
    if args.s < 1:
        raise ConfigError("s must be positive")
    ds = load_dataset(args.dataset)
    rng = Prng(args.seed, STREAM_PARTITION)
    try:
        part = random_partition(ds.train_nodes, args.s, rng)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "assignment.tsv"), "w",
              encoding="utf-8", newline="\n") as fh:
        for node, k in zip(part.nodes, part.assignment):
            fh.write(f"{node}\t{k}\n")
    for k in range(args.s):
        sub = mask_subgraph(ds.graph, ds.features, ds.labels, part, k)
        piece = Dataset(
            name=f"{ds.name}-sub{k:03d}", graph=sub.graph,
            features=sub.features, labels=sub.labels,
            train_nodes=np.arange(sub.node_ids.size, dtype=np.int64),
            val_nodes=np.empty(0, dtype=np.int64),
            test_nodes=np.empty(0, dtype=np.int64),
            num_classes=ds.num_classes, feature_kind=ds.feature_kind)
        save_dataset(piece, os.path.join(args.out, f"subgraph_{k:03d}"))
    print(f"wrote {args.s} subgraphs and assignment.tsv to {args.out}")
    return 0


def _cmd_synth(args) -> int:
    spec_values = {}
    with open(args.spec, encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"expected key=value, got '{raw.strip()}'")
            key, _, value = (tok.strip() for tok in line.partition("="))
            spec_values[key] = value
    try:
        spec = SynthSpec(
            block_sizes=tuple(int(tok) for tok in
                              spec_values.pop("block_sizes").split(",")),
            p_intra=float(spec_values.pop("p_intra")),
            p_inter=float(spec_values.pop("p_inter")),
            feature_dim=int(spec_values.pop("feature_dim")),
            feature_shift=float(spec_values.pop("feature_shift", 1.0)),
            seed=int(spec_values.pop("seed", 0)),
            name=spec_values.pop("name", "synth"))
    except KeyError as exc:
        raise ConfigError(f"synth spec missing key {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad synth spec: {exc}") from exc
    if spec_values:
        raise ConfigError(f"unknown synth spec keys: {sorted(spec_values)}")
    save_dataset(generate_synthetic(spec), args.out)
    print(f"wrote synthetic dataset to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "account": _cmd_account,
                "split": _cmd_split, "synth": _cmd_synth}
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DatasetError as exc:
        print(f"dataset error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        # a missing config/spec file is a config error; datasets raise above
        print(f"config error: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    sys.exit(main())
