"""One-time converter from the Planetoid citation-network pickles.

The upstream distribution ships each dataset as eight files named
ind.<name>.x / .y / .tx / .ty / .allx / .ally / .graph / .test.index
(pickled scipy matrices, numpy one-hot labels, an adjacency dict, and a
text list of test node ids). This module rebuilds the "full" split from
them: every labeled node outside the fixed 500-node validation range and
the listed test nodes is a training node, which yields 1208 train / 1000
test for cora and 1827 train / 1000 test for citeseer.

citeseer's test ids have gaps (some ids in the test range never appear);
the missing rows are filled with zero features and left unlabeled, so
they stay in the graph but out of every mask.

Usage: python3 scripts/convert_planetoid.py --name cora --raw-dir
<download dir> --out data/cora [--no-row-normalize]
"""

from __future__ import annotations

import argparse
import os
import pickle
import sys

import numpy as np
import scipy.sparse as sp

from .data import Dataset, save_dataset
from .graph import build_graph

_PARTS = ("x", "y", "tx", "ty", "allx", "ally", "graph")


def _read_pickle(raw_dir: str, name: str, part: str):
    path = os.path.join(raw_dir, f"ind.{name}.{part}")
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing Planetoid file: {path}")
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def _read_test_index(raw_dir: str, name: str) -> np.ndarray:
    path = os.path.join(raw_dir, f"ind.{name}.test.index")
    if not os.path.exists(path):
        raise FileNotFoundError(f"missing Planetoid file: {path}")
    with open(path, encoding="utf-8") as fh:
        return np.array([int(line) for line in fh if line.strip()],
                        dtype=np.int64)


def convert(name: str, raw_dir: str, row_normalize: bool = True,
            val_count: int = 500) -> Dataset:
    """Planetoid pickles -> validated Dataset with the full training split.

    val_count is the size of the fixed validation window starting right
    after the originally-labeled block; the upstream datasets use 500.
    """
    x, y, tx, ty, allx, ally, graph = (
        _read_pickle(raw_dir, name, part) for part in _PARTS)
    test_index = _read_test_index(raw_dir, name)

    # fill holes in the test id range (citeseer) with zero rows
    lo, hi = int(test_index.min()), int(test_index.max())
    span = hi - lo + 1
    tx_full = np.zeros((span, allx.shape[1]), dtype=np.float64)
    ty_full = np.zeros((span, ally.shape[1]), dtype=np.float64)
    tx_full[test_index - lo] = np.asarray(sp.csr_matrix(tx).todense())
    ty_full[test_index - lo] = ty

    features = np.vstack([np.asarray(sp.csr_matrix(allx, dtype=np.float64)
                                     .todense()), tx_full])
    onehot = np.vstack([ally, ty_full])
    num_nodes = features.shape[0]
    if hi != num_nodes - 1:
        raise ValueError("test ids do not sit at the end of the node range")

    labels = np.where(onehot.sum(axis=1) > 0, onehot.argmax(axis=1),
                      -1).astype(np.int64)

    edges = [(i, j) for i, nbrs in graph.items() for j in nbrs
             if 0 <= j < num_nodes and i != j]

    val_nodes = np.arange(y.shape[0], y.shape[0] + val_count, dtype=np.int64)
    test_nodes = np.sort(test_index)
    claimed = np.zeros(num_nodes, dtype=bool)
    claimed[val_nodes] = True
    claimed[test_nodes] = True
    train_nodes = np.flatnonzero(~claimed & (labels >= 0))

    if row_normalize:
        sums = features.sum(axis=1, keepdims=True)
        np.divide(features, sums, out=features, where=sums > 0)

    return Dataset(
        name=name, graph=build_graph(num_nodes, edges), features=features,
        labels=labels, train_nodes=train_nodes.astype(np.int64),
        val_nodes=val_nodes, test_nodes=test_nodes.astype(np.int64),
        num_classes=onehot.shape[1], feature_kind="sparse").validate()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="Convert a Planetoid citation dataset to the dpgcn "
                    "directory format")
    parser.add_argument("--name", required=True, choices=("cora", "citeseer",
                                                          "pubmed"))
    parser.add_argument("--raw-dir", required=True,
                        help="directory holding the ind.<name>.* files")
    parser.add_argument("--out", required=True)
    parser.add_argument("--no-row-normalize", action="store_true",
                        help="keep raw bag-of-words counts")
    args = parser.parse_args(argv)
    try:
        ds = convert(args.name, args.raw_dir,
                     row_normalize=not args.no_row_normalize)
    except FileNotFoundError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    save_dataset(ds, args.out)
    print(f"wrote {ds.name}: {ds.num_nodes} nodes, "
          f"{ds.train_nodes.size} train / {ds.val_nodes.size} val / "
          f"{ds.test_nodes.size} test -> {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
