"""Experiment driver: full-graph and split training, with or without DP.

Three kinds. A: ordinary full-graph training. B: full-graph DP training,
where the single graph is the lot (q = 1). C: split training, where the
graph is cut into s induced subgraphs treated as examples; DP variants
sample lots of subgraphs, non-DP variants sweep them as minibatches.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import rng as streams
from .accounting import AccountantLedger, calibrate_noise, privacy_spent
from .data import Dataset, load_dataset
from .dp import (AdamState, DpNoiseSpec, adam_step, noisy_lot_gradient,
                 sample_lot, sgd_step)
from .graph import normalize_adjacency, random_partition, mask_subgraph
from .model import (backward, evaluate, forward, init_params, macro_f1,
                    masked_cross_entropy)
from .rng import Prng

_OPTIMIZERS = ("sgd", "adam", "sgd-dp", "adam-dp")


class ConfigError(ValueError):
    pass


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = ""
    kind: str = "A"
    optimizer: str = "adam"
    lr: float = 0.01
    max_epochs: int | None = None       # default 2000 for sgd*, 500 for adam*
    early_stopping: bool | None = None  # default on for non-DP, off for DP
    patience: int = 20
    dropout: float = 0.5
    hidden: int = 32
    clip_norm: float = 1.0
    sigma: float | None = None
    target_epsilon: float | None = None
    delta: float = 1e-5
    s: int = 1
    lot_size: int | None = None         # default s
    train_fraction: float = 1.0
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)

    @property
    def is_dp(self) -> bool:
        return self.optimizer.endswith("-dp")

    def finalized(self) -> "ExperimentConfig":
        """Fill defaults and validate; raises ConfigError on bad configs."""
        if self.kind not in ("A", "B", "C"):
            raise ConfigError(f"unknown kind '{self.kind}'")
        if self.optimizer not in _OPTIMIZERS:
            raise ConfigError(f"unknown optimizer '{self.optimizer}'")
        cfg = replace(
            self,
            max_epochs=self.max_epochs if self.max_epochs is not None
            else (500 if self.optimizer.startswith("adam") else 2000),
            early_stopping=self.early_stopping if self.early_stopping is not None
            else not self.is_dp,
            lot_size=self.lot_size if self.lot_size is not None else self.s,
        )
        if cfg.kind == "A" and cfg.is_dp:
            raise ConfigError("kind A is non-private; use sgd or adam")
        if cfg.kind == "B":
            if not cfg.is_dp:
                raise ConfigError("kind B needs a DP optimizer")
            if cfg.s != 1:
                raise ConfigError("kind B trains on the full graph; s must be 1")
        if cfg.kind == "C" and cfg.s < 2:
            raise ConfigError("kind C needs s >= 2 subgraphs")
        if cfg.is_dp:
            if (cfg.sigma is None) == (cfg.target_epsilon is None):
                raise ConfigError("DP runs need exactly one of sigma, target_epsilon")
            if cfg.sigma is not None and cfg.sigma <= 0:
                raise ConfigError("sigma must be positive")
            if cfg.target_epsilon is not None and cfg.target_epsilon <= 0:
                raise ConfigError("target_epsilon must be positive")
        elif cfg.sigma is not None or cfg.target_epsilon is not None:
            raise ConfigError("sigma/target_epsilon only apply to DP optimizers")
        if cfg.lr <= 0:
            raise ConfigError("lr must be positive")
        if cfg.max_epochs < 1 or cfg.patience < 1 or cfg.hidden < 1:
            raise ConfigError("max_epochs, patience, hidden must be positive")
        if not 0.0 <= cfg.dropout < 1.0:
            raise ConfigError("dropout must be in [0, 1)")
        if cfg.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive")
        if not 0.0 < cfg.train_fraction <= 1.0:
            raise ConfigError("train_fraction must be in (0, 1]")
        if not 1 <= cfg.lot_size <= cfg.s:
            raise ConfigError("lot_size must be in [1, s]")
        if cfg.delta <= 0 or cfg.delta >= 1:
            raise ConfigError("delta must be in (0, 1)")
        if not cfg.seeds:
            raise ConfigError("need at least one seed")
        return cfg

    @property
    def steps_per_epoch(self) -> int:
        if self.kind == "C" and self.is_dp:
            return max(1, self.s // (self.lot_size or self.s))
        return 1

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self)}
        out["seeds"] = list(self.seeds)
        return out


_BOOL_TOKENS = {"on": True, "off": False, "true": True, "false": False}


def parse_config_text(text: str) -> ExperimentConfig:
    """Flat key=value config; '#' comments; unknown keys are errors."""
    known = {f.name: f for f in fields(ExperimentConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got '{raw}'")
        key, _, value = (tok.strip() for tok in line.partition("="))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key '{key}'")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        values[key] = _parse_value(key, value, lineno)
    return ExperimentConfig(**values)


def _parse_value(key: str, value: str, lineno: int):
    try:
        if key in ("dataset", "kind", "optimizer"):
            return value
        if key == "early_stopping":
            return _BOOL_TOKENS[value.lower()]
        if key == "seeds":
            return tuple(int(tok) for tok in value.split(","))
        if key in ("max_epochs", "patience", "hidden", "s", "lot_size"):
            return int(value)
        return float(value)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"line {lineno}: bad value for '{key}': {value}") from exc


def load_config(path: str) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def early_stop_check(history, patience: int) -> tuple[bool, int]:
    """(stop now, best epoch) for a 1-indexed validation history.

    Stops once the best epoch lies patience or more epochs in the past;
    ties keep the first occurrence.
    """
    if patience < 1:
        raise ValueError("patience must be positive")
    scores = np.asarray(list(history), dtype=np.float64)
    if scores.size == 0:
        raise ValueError("empty validation history")
    best = int(np.argmax(scores)) + 1
    return scores.size - best >= patience, best


def hard_case_overlap(errors, baseline_errors) -> float:
    """|errors intersect baseline| / |baseline|."""
    base = set(int(i) for i in baseline_errors)
    if not base:
        raise ValueError("empty baseline error set")
    return len(base & set(int(i) for i in errors)) / len(base)


@dataclass
class SeedOutcome:
    seed: int
    f1_micro: float | None = None
    f1_macro: float | None = None
    epsilon: float | None = None
    moment_order: int | None = None
    epochs: int = 0
    seconds: float = 0.0
    final_loss: float | None = None
    failed: bool = False
    reason: str = ""
    errors: list[int] = field(default_factory=list)


@dataclass
class ResultsRecord:
    config: dict
    seeds: list[SeedOutcome]
    aggregate: dict
    metadata: dict


def _require_finite(value: float, what: str, epoch: int) -> None:
    if not math.isfinite(value):
        raise TrainingDiverged(f"non-finite {what} at epoch {epoch}")


class _Trainer:
    """One seed's training state; split out so kinds share the loop."""

    def __init__(self, dataset: Dataset, cfg: ExperimentConfig, seed: int,
                 sigma: float | None):
        self.ds, self.cfg, self.seed = dataset, cfg, seed
        self.rng_init = Prng(seed, streams.STREAM_INIT)
        self.rng_drop = Prng(seed, streams.STREAM_DROPOUT)
        self.rng_noise = Prng(seed, streams.STREAM_NOISE)
        self.rng_part = Prng(seed, streams.STREAM_PARTITION)
        self.rng_lot = Prng(seed, streams.STREAM_LOT)
        self.rng_sub = Prng(seed, streams.STREAM_SUBSAMPLE)
        self.adj = normalize_adjacency(dataset.graph)
        self.train_nodes = self._training_nodes()
        self.params = init_params(dataset.feature_dim, cfg.hidden,
                                  dataset.num_classes, self.rng_init)
        self.adam = AdamState.zeros(self.params.size) \
            if cfg.optimizer.startswith("adam") else None
        self.noise = DpNoiseSpec(cfg.clip_norm, sigma or 0.0) if cfg.is_dp else None
        self.ledger = AccountantLedger()
        if cfg.kind == "C":
            self._prepare_subgraphs()

    def _training_nodes(self) -> np.ndarray:
        nodes = self.ds.train_nodes
        if self.cfg.train_fraction < 1.0:
            keep = max(1, int(round(self.cfg.train_fraction * nodes.size)))
            pick = self.rng_sub.sample_without_replacement(nodes.size, keep)
            nodes = nodes[pick]
        if nodes.size == 0:
            raise ConfigError("no training nodes")
        return nodes

    def _prepare_subgraphs(self) -> None:
        part = random_partition(self.train_nodes, self.cfg.s, self.rng_part)
        self.subs = []
        seen = np.zeros(self.ds.num_nodes, dtype=bool)
        for k in range(self.cfg.s):
            sub = mask_subgraph(self.ds.graph, self.ds.features,
                                self.ds.labels, part, k)
            if seen[sub.node_ids].any():
                raise AssertionError("subgraphs share nodes")
            seen[sub.node_ids] = True
            # every stored edge must stay inside the subgraph's node set
            if sub.graph.indices.size and sub.graph.indices.max() >= sub.node_ids.size:
                raise AssertionError("cross-subgraph edge survived masking")
            self.subs.append((normalize_adjacency(sub.graph), sub.features,
                              sub.labels, np.arange(sub.node_ids.size)))

    def _full_gradient(self, epoch: int) -> np.ndarray:
        trace = forward(self.params, self.adj, self.ds.features,
                        self.cfg.dropout, training=True, rng=self.rng_drop)
        loss = masked_cross_entropy(trace.logits, self.ds.labels, self.train_nodes)
        _require_finite(loss, "loss", epoch)
        self.last_loss = loss
        grad = backward(self.params, trace, self.adj, self.ds.features,
                        self.ds.labels, self.train_nodes)
        if not np.isfinite(grad).all():
            raise TrainingDiverged(f"non-finite gradient at epoch {epoch}")
        return grad

    def _subgraph_gradient(self, k: int, epoch: int) -> np.ndarray:
        adj, feats, labels, mask = self.subs[k]
        trace = forward(self.params, adj, feats, self.cfg.dropout,
                        training=True, rng=self.rng_drop)
        loss = masked_cross_entropy(trace.logits, labels, mask)
        _require_finite(loss, "loss", epoch)
        self.last_loss = loss
        grad = backward(self.params, trace, adj, feats, labels, mask)
        if not np.isfinite(grad).all():
            raise TrainingDiverged(f"non-finite gradient at epoch {epoch}")
        return grad

    def _step(self, grad: np.ndarray) -> None:
        if self.adam is not None:
            adam_step(self.adam, self.params, grad, self.cfg.lr)
        else:
            sgd_step(self.params, grad, self.cfg.lr)

    def run_epoch(self, epoch: int) -> None:
        cfg = self.cfg
        if cfg.kind in ("A", "B"):
            grad = self._full_gradient(epoch)
            if cfg.is_dp:
                grad = noisy_lot_gradient([grad], self.noise, self.rng_noise)
                self.ledger.append(1.0, self.noise.noise_multiplier)
            self._step(grad)
        elif not cfg.is_dp:
            for k in self.rng_lot.permutation(cfg.s):
                self._step(self._subgraph_gradient(int(k), epoch))
        else:
            q = cfg.lot_size / cfg.s
            for _ in range(cfg.steps_per_epoch):
                lot = sample_lot(cfg.s, cfg.lot_size, self.rng_lot)
                grads = [self._subgraph_gradient(int(k), epoch)
                         for k in lot.example_ids]
                grad = noisy_lot_gradient(grads, self.noise, self.rng_noise)
                self.ledger.append(q, self.noise.noise_multiplier)
                self._step(grad)

    def val_score(self) -> float:
        return evaluate(self.params, self.adj, self.ds.features,
                        self.ds.labels, self.ds.val_nodes).micro_f1


def _train_single_seed(dataset: Dataset, cfg: ExperimentConfig, seed: int,
                       sigma: float | None) -> SeedOutcome:
    start = time.perf_counter()
    trainer = _Trainer(dataset, cfg, seed, sigma)
    history: list[float] = []
    best_params = None
    epochs_run = 0
    for epoch in range(1, cfg.max_epochs + 1):
        trainer.run_epoch(epoch)
        epochs_run = epoch
        if cfg.early_stopping:
            history.append(trainer.val_score())
            stop, best = early_stop_check(history, cfg.patience)
            if best == len(history):
                best_params = trainer.params.copy()
            if stop:
                break
    eval_params = best_params if (cfg.early_stopping and best_params is not None) \
        else trainer.params
    metrics = evaluate(eval_params, trainer.adj, dataset.features,
                       dataset.labels, dataset.test_nodes)
    outcome = SeedOutcome(seed=seed, f1_micro=metrics.micro_f1,
                          f1_macro=macro_f1(metrics.confusion),
                          epochs=epochs_run,
                          seconds=time.perf_counter() - start,
                          final_loss=trainer.last_loss,
                          errors=[int(i) for i in metrics.errors])
    if cfg.is_dp:
        eps, order = privacy_spent(trainer.ledger, cfg.delta)
        outcome.epsilon, outcome.moment_order = eps, order
    return outcome


def resolve_sigma(cfg: ExperimentConfig) -> float | None:
    """The noise multiplier a finalized config implies (None if non-DP)."""
    if not cfg.is_dp:
        return None
    if cfg.sigma is not None:
        return cfg.sigma
    q = cfg.lot_size / cfg.s if cfg.kind == "C" else 1.0
    return calibrate_noise(cfg.target_epsilon, cfg.delta, q,
                           cfg.max_epochs * cfg.steps_per_epoch)


def run_experiment(config: ExperimentConfig,
                   dataset: Dataset | None = None) -> ResultsRecord:
    """Train every seed, aggregate, and report; divergence is per-seed."""
    cfg = config.finalized()
    if dataset is None:
        dataset = load_dataset(cfg.dataset)
    if cfg.kind == "C":
        usable = max(1, int(round(cfg.train_fraction * dataset.train_nodes.size)))
        if cfg.s > usable:
            raise ConfigError(f"s={cfg.s} exceeds the {usable} usable training nodes")
    sigma = resolve_sigma(cfg)
    outcomes = []
    for seed in cfg.seeds:
        try:
            outcomes.append(_train_single_seed(dataset, cfg, seed, sigma))
        except TrainingDiverged as exc:
            outcomes.append(SeedOutcome(seed=seed, failed=True, reason=str(exc)))
    good = [o for o in outcomes if not o.failed]

    def stats(vals):
        if not vals:
            return None, None
        arr = np.asarray(vals, dtype=np.float64)
        return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0

    micro_mean, micro_std = stats([o.f1_micro for o in good])
    macro_mean, macro_std = stats([o.f1_macro for o in good])
    aggregate = {
        "f1_micro_mean": micro_mean, "f1_micro_std": micro_std,
        "f1_macro_mean": macro_mean, "f1_macro_std": macro_std,
        "epsilon": max((o.epsilon for o in good if o.epsilon is not None),
                       default=None),
        "seeds_failed": sum(o.failed for o in outcomes),
    }
    metadata = {
        "sigma": sigma,
        "test_metric_at": "best_val" if cfg.early_stopping else "final_epoch",
        "dataset_name": dataset.name,
    }
    return ResultsRecord(cfg.to_dict(), outcomes, aggregate, metadata)


def emit_results(record: ResultsRecord, out_dir: str) -> None:
    """Write results.json (exact values) and results.csv (one row per seed)."""
    os.makedirs(out_dir, exist_ok=True)
    payload = {
        "config": record.config,
        "seeds": [vars(o).copy() for o in record.seeds],
        "aggregate": record.aggregate,
        "metadata": record.metadata,
    }
    with open(os.path.join(out_dir, "results.json"), "w", encoding="utf-8",
              newline="\n") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")

    def cell(value):
        if value is None:
            return ""
        return repr(value) if isinstance(value, float) else str(value)

    rows = ["seed,f1_micro,f1_macro,epsilon,epochs,seconds"]
    rows += [",".join(cell(v) for v in
                      (o.seed, o.f1_micro, o.f1_macro, o.epsilon, o.epochs,
                       o.seconds))
             for o in record.seeds]
    with open(os.path.join(out_dir, "results.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.writelines(row + "\n" for row in rows)
