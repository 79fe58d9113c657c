"""Dataset directory format, loading/saving, and a planted-community generator.

A dataset directory holds meta.json, edges.tsv (i<j, sorted), features.csv
(dense) or features.tsv (sparse triplets), labels.tsv, and masks.tsv; all
text is UTF-8 with LF newlines. Serialization is deterministic, so saving
the same dataset twice produces byte-identical files.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from .graph import SparseGraph, build_graph
from .rng import STREAM_SYNTH, Prng

_MASK_TOKENS = ("train", "val", "test")


class DatasetError(ValueError):
    """Dataset format violation with a stable error code."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


@dataclass
class Dataset:
    name: str
    graph: SparseGraph
    features: np.ndarray   # (num_nodes, feature_dim) float64, finite
    labels: np.ndarray     # (num_nodes,) int64, -1 where unlabeled
    train_nodes: np.ndarray
    val_nodes: np.ndarray
    test_nodes: np.ndarray
    num_classes: int
    feature_kind: str = "dense"  # serialization hint: "dense" or "sparse"

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def validate(self) -> "Dataset":
        n = self.graph.num_nodes
        if self.features.shape[0] != n:
            raise DatasetError("shape-mismatch",
                               "feature rows do not match node count")
        if not np.isfinite(self.features).all():
            raise DatasetError("non-finite-feature", "features must be finite")
        if self.num_classes < 2:
            raise DatasetError("bad-meta", "need at least two classes")
        if self.labels.shape != (n,):
            raise DatasetError("shape-mismatch", "labels must be per-node")
        if self.labels.max(initial=-1) >= self.num_classes:
            raise DatasetError("label-out-of-range",
                               "label id exceeds num_classes")
        masks = np.concatenate([self.train_nodes, self.val_nodes, self.test_nodes])
        if masks.size and (masks.min() < 0 or masks.max() >= n):
            raise DatasetError("index-out-of-range", "mask node id out of range")
        if np.unique(masks).size != masks.size:
            raise DatasetError("overlapping-masks",
                               "a node appears in more than one mask")
        if masks.size and (self.labels[masks] < 0).any():
            raise DatasetError("unlabeled-masked-node",
                               "every masked node needs a label")
        return self


def _read_lines(path: str, kind: str) -> list[str]:
    if not os.path.exists(path):
        raise DatasetError("missing-file", f"{kind} file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh if line.strip()]


def load_dataset(path: str) -> Dataset:
    """Read and validate a dataset directory; fails loudly on inconsistency."""
    meta_path = os.path.join(path, "meta.json")
    if not os.path.exists(meta_path):
        raise DatasetError("missing-file", f"meta.json not found in {path}")
    with open(meta_path, encoding="utf-8") as fh:
        meta = json.load(fh)
    for key in ("name", "num_nodes", "num_classes", "feature_dim", "feature_kind"):
        if key not in meta:
            raise DatasetError("bad-meta", f"meta.json missing '{key}'")
    n, d, k = int(meta["num_nodes"]), int(meta["feature_dim"]), int(meta["num_classes"])
    kind = meta["feature_kind"]
    if kind not in ("dense", "sparse"):
        raise DatasetError("bad-meta", f"unknown feature_kind '{kind}'")

    edges = []
    prev = None
    for line in _read_lines(os.path.join(path, "edges.tsv"), "edges"):
        i, j = (int(tok) for tok in line.split("\t"))
        if not 0 <= i < j < n:
            raise DatasetError("index-out-of-range",
                               f"edge ({i}, {j}) violates 0 <= i < j < n")
        if prev is not None and (i, j) <= prev:
            raise DatasetError("bad-edge-order", "edges must be sorted, unique")
        prev = (i, j)
        edges.append((i, j))

    if kind == "dense":
        rows = _read_lines(os.path.join(path, "features.csv"), "features")
        if len(rows) != n:
            raise DatasetError("shape-mismatch",
                               f"expected {n} feature rows, got {len(rows)}")
        features = np.array([[float(v) for v in row.split(",")] for row in rows])
        if features.shape != (n, d):
            raise DatasetError("shape-mismatch", "feature row width mismatch")
    else:
        features = np.zeros((n, d))
        for line in _read_lines(os.path.join(path, "features.tsv"), "features"):
            node, dim, value = line.split("\t")
            node, dim = int(node), int(dim)
            if not (0 <= node < n and 0 <= dim < d):
                raise DatasetError("index-out-of-range",
                                   f"feature triplet ({node}, {dim}) out of range")
            features[node, dim] = float(value)
    if not np.isfinite(features).all():
        raise DatasetError("non-finite-feature", "features must be finite")

    labels = np.full(n, -1, dtype=np.int64)
    for line in _read_lines(os.path.join(path, "labels.tsv"), "labels"):
        node, cls = (int(tok) for tok in line.split("\t"))
        if not 0 <= node < n:
            raise DatasetError("index-out-of-range", f"label node {node}")
        if not 0 <= cls < k:
            raise DatasetError("label-out-of-range", f"class {cls} for node {node}")
        labels[node] = cls

    mask_of: dict[int, str] = {}
    for line in _read_lines(os.path.join(path, "masks.tsv"), "masks"):
        node, token = line.split("\t")
        node = int(node)
        if not 0 <= node < n:
            raise DatasetError("index-out-of-range", f"mask node {node}")
        if token not in _MASK_TOKENS:
            raise DatasetError("bad-mask-token", f"unknown mask '{token}'")
        if node in mask_of:
            raise DatasetError("overlapping-masks", f"node {node} masked twice")
        mask_of[node] = token

    def nodes_of(token):
        return np.array(sorted(i for i, t in mask_of.items() if t == token),
                        dtype=np.int64)

    try:
        graph = build_graph(n, edges)
    except ValueError as exc:
        raise DatasetError("bad-edge", str(exc)) from exc
    return Dataset(meta["name"], graph, features, labels, nodes_of("train"),
                   nodes_of("val"), nodes_of("test"), k, kind).validate()


def save_dataset(ds: Dataset, path: str) -> None:
    """Write the directory format deterministically (stable bytes)."""
    ds.validate()
    os.makedirs(path, exist_ok=True)

    def write(name, lines):
        with open(os.path.join(path, name), "w", encoding="utf-8", newline="\n") as fh:
            fh.writelines(line + "\n" for line in lines)

    meta = {"name": ds.name, "num_nodes": ds.num_nodes,
            "num_classes": ds.num_classes, "feature_dim": ds.feature_dim,
            "feature_kind": ds.feature_kind}
    write("meta.json", [json.dumps(meta, indent=2, sort_keys=True)])

    edges = []
    for i in range(ds.num_nodes):
        for j in ds.graph.neighbors(i):
            if i < j:
                edges.append(f"{i}\t{j}")
    write("edges.tsv", edges)

    if ds.feature_kind == "dense":
        write("features.csv",
              [",".join(repr(float(v)) for v in row) for row in ds.features])
    else:
        nz_i, nz_j = np.nonzero(ds.features)
        write("features.tsv",
              [f"{i}\t{j}\t{float(ds.features[i, j])!r}"
               for i, j in zip(nz_i, nz_j)])

    write("labels.tsv", [f"{i}\t{ds.labels[i]}"
                         for i in range(ds.num_nodes) if ds.labels[i] >= 0])
    tokens = [(int(i), t) for t, ids in (("train", ds.train_nodes),
                                         ("val", ds.val_nodes),
                                         ("test", ds.test_nodes)) for i in ids]
    write("masks.tsv", [f"{i}\t{t}" for i, t in sorted(tokens)])


@dataclass(frozen=True)
class SynthSpec:
    """Planted-community graph with class-shifted Gaussian features."""

    block_sizes: tuple[int, ...]
    p_intra: float
    p_inter: float
    feature_dim: int
    feature_shift: float = 1.0
    seed: int = 0
    name: str = "synth"

    def __post_init__(self):
        if len(self.block_sizes) < 2 or min(self.block_sizes) < 1:
            raise ValueError("need at least two nonempty blocks")
        for p in (self.p_intra, self.p_inter):
            if not 0.0 <= p <= 1.0:
                raise ValueError("edge probabilities must be in [0, 1]")
        if self.feature_dim < 1:
            raise ValueError("feature_dim must be positive")

    @property
    def num_nodes(self) -> int:
        return int(sum(self.block_sizes))

    @property
    def num_classes(self) -> int:
        return len(self.block_sizes)


def generate_synthetic(spec: SynthSpec) -> Dataset:
    """Sample the planted-community model; 60/20/20 train/val/test masks."""
    rng = Prng(spec.seed, STREAM_SYNTH)
    n, k = spec.num_nodes, spec.num_classes
    labels = np.repeat(np.arange(k, dtype=np.int64), spec.block_sizes)
    starts = np.concatenate([[0], np.cumsum(spec.block_sizes)])

    edges = []
    for b1 in range(k):
        lo1, hi1 = starts[b1], starts[b1 + 1]
        iu, ju = np.triu_indices(hi1 - lo1, 1)
        hit = rng.uniform(iu.size) < spec.p_intra
        edges.append(np.stack([iu[hit] + lo1, ju[hit] + lo1], axis=1))
        for b2 in range(b1 + 1, k):
            lo2, hi2 = starts[b2], starts[b2 + 1]
            m1, m2 = hi1 - lo1, hi2 - lo2
            hit = rng.uniform(m1 * m2) < spec.p_inter
            ii, jj = np.divmod(np.flatnonzero(hit), m2)
            edges.append(np.stack([ii + lo1, jj + lo2], axis=1))
    edge_array = np.concatenate(edges) if edges else np.empty((0, 2), dtype=np.int64)

    features = rng.normal((n, spec.feature_dim))
    features[np.arange(n), labels % spec.feature_dim] += spec.feature_shift

    perm = rng.permutation(n)
    n_train, n_val = int(0.6 * n), int(0.2 * n)
    return Dataset(spec.name, build_graph(n, edge_array), features, labels,
                   np.sort(perm[:n_train]),
                   np.sort(perm[n_train:n_train + n_val]),
                   np.sort(perm[n_train + n_val:]),
                   k).validate()
