#!/usr/bin/env python3
"""Convert upstream citation-network distributions into the portable layout.

Two upstream formats are understood:

  planetoid  ind.<name>.{x,y,tx,ty,allx,ally,graph,test.index}; the canonical
             fixed split is written to splits.json.
  linqs      <name>.content / <name>.cites (raw LINQS release); no split file
             is written, the engine derives the fixed split itself.

Output directory layout:

  meta.json     {"n": .., "classes": .., "feature_dim": ..}
  features.csv  node_id,idx:val,...
  labels.csv    node_id,class          (unlabeled nodes omitted)
  edges.tsv     src<TAB>dst            (each undirected edge once, src < dst)
  splits.json   {"train": [..], "val": [..], "test": [..]}   (planetoid only)
"""

import argparse
import json
import os
import pickle
import sys

import numpy as np
import scipy.sparse as sp


def _load_pickle(path):
    with open(path, "rb") as f:
        return pickle.load(f, encoding="latin1")


def read_planetoid(src, name):
    parts = {}
    for key in ("x", "y", "tx", "ty", "allx", "ally", "graph"):
        parts[key] = _load_pickle(os.path.join(src, f"ind.{name}.{key}"))
    with open(os.path.join(src, f"ind.{name}.test.index")) as f:
        test_reorder = [int(line) for line in f if line.strip()]
    test_range = np.sort(test_reorder)

    tx, ty = parts["tx"], parts["ty"]
    if name == "citeseer":
        # Isolated test nodes are missing from tx/ty; pad them with zero rows.
        full = range(test_range.min(), test_range.max() + 1)
        tx_ext = sp.lil_matrix((len(full), tx.shape[1]))
        tx_ext[test_range - test_range.min(), :] = tx
        tx = tx_ext
        ty_ext = np.zeros((len(full), ty.shape[1]))
        ty_ext[test_range - test_range.min(), :] = ty
        ty = ty_ext

    features = sp.vstack((parts["allx"], tx)).tolil()
    features[test_reorder, :] = features[test_range, :]
    onehot = np.vstack((parts["ally"], ty))
    onehot[test_reorder, :] = onehot[test_range, :]

    labels = np.full(onehot.shape[0], -1, dtype=np.int64)
    has_label = onehot.sum(axis=1) > 0
    labels[has_label] = onehot[has_label].argmax(axis=1)

    edges = set()
    for src_node, dsts in parts["graph"].items():
        for dst in dsts:
            if src_node != dst:
                edges.add((min(src_node, dst), max(src_node, dst)))

    n_train = parts["y"].shape[0]
    splits = {
        "train": list(range(n_train)),
        "val": list(range(n_train, n_train + 500)),
        "test": [int(i) for i in test_range],
    }
    return sp.csr_matrix(features), labels, onehot.shape[1], sorted(edges), splits


def read_linqs(src, name):
    ids, rows, classes = [], [], []
    with open(os.path.join(src, f"{name}.content")) as f:
        for line in f:
            tok = line.split()
            if not tok:
                continue
            ids.append(tok[0])
            rows.append([float(v) for v in tok[1:-1]])
            classes.append(tok[-1])
    index = {pid: i for i, pid in enumerate(ids)}
    names = sorted(set(classes))
    labels = np.array([names.index(c) for c in classes], dtype=np.int64)
    features = sp.csr_matrix(np.array(rows))

    edges = set()
    raw = 0
    with open(os.path.join(src, f"{name}.cites")) as f:
        for line in f:
            tok = line.split()
            if len(tok) != 2:
                continue
            raw += 1
            a, b = index[tok[0]], index[tok[1]]
            if a != b:
                edges.add((min(a, b), max(a, b)))
    print(f"{name}: {raw} citation records, {len(edges)} undirected edges",
          file=sys.stderr)
    return features, labels, len(names), sorted(edges), None


def write_portable(out, features, labels, classes, edges, splits):
    os.makedirs(out, exist_ok=True)
    n, dim = features.shape
    with open(os.path.join(out, "meta.json"), "w") as f:
        json.dump({"n": int(n), "classes": int(classes), "feature_dim": int(dim)}, f)
        f.write("\n")
    features = features.tocsr()
    features.sort_indices()
    with open(os.path.join(out, "features.csv"), "w") as f:
        for i in range(n):
            lo, hi = features.indptr[i], features.indptr[i + 1]
            cells = [f"{j}:{v:.9g}" for j, v in
                     zip(features.indices[lo:hi], features.data[lo:hi]) if v != 0]
            f.write(",".join([str(i)] + cells) + "\n")
    with open(os.path.join(out, "labels.csv"), "w") as f:
        for i, c in enumerate(labels):
            if c >= 0:
                f.write(f"{i},{int(c)}\n")
    with open(os.path.join(out, "edges.tsv"), "w") as f:
        for a, b in edges:
            f.write(f"{a}\t{b}\n")
    if splits is not None:
        with open(os.path.join(out, "splits.json"), "w") as f:
            json.dump(splits, f)
            f.write("\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--format", choices=("planetoid", "linqs"), required=True)
    ap.add_argument("--name", required=True, help="dataset stem, e.g. cora")
    ap.add_argument("--src", required=True, help="directory with upstream files")
    ap.add_argument("--out", required=True, help="portable output directory")
    args = ap.parse_args()

    reader = read_planetoid if args.format == "planetoid" else read_linqs
    features, labels, classes, edges, splits = reader(args.src, args.name)
    write_portable(args.out, features, labels, classes, edges, splits)
    print(f"{args.name}: n={features.shape[0]} edges={len(edges)} "
          f"classes={classes} dim={features.shape[1]}", file=sys.stderr)


if __name__ == "__main__":
    main()
