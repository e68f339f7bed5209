#!/usr/bin/env python3
"""Convert raw Planetoid files (ind.<name>.*) into a segnn dataset directory.

Usage: planetoid_to_tsv.py RAW_DIR NAME OUT_DIR [--no-row-normalize]

Writes nodes.tsv (id, label or '-', split), edges.tsv and features.csv with
the standard split: 20 labels per class for training, the next 500 nodes for
validation, and the 1000 listed test nodes.
"""

import argparse
import os
import pickle
import sys

import numpy as np
import scipy.sparse as sp


def load(raw, name, part):
    with open(os.path.join(raw, f"ind.{name}.{part}"), "rb") as f:
        return pickle.load(f, encoding="latin1")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("raw")
    ap.add_argument("name")
    ap.add_argument("out")
    ap.add_argument("--no-row-normalize", action="store_true")
    args = ap.parse_args()

    x, y, tx, ty, allx, ally, graph = (
        load(args.raw, args.name, p) for p in ("x", "y", "tx", "ty", "allx", "ally", "graph")
    )
    with open(os.path.join(args.raw, f"ind.{args.name}.test.index")) as f:
        test_idx = [int(line) for line in f if line.strip()]
    test_sorted = sorted(test_idx)

    if args.name == "citeseer":
        # Some test ids are missing from tx/ty; pad them with empty rows.
        full = range(test_sorted[0], test_sorted[-1] + 1)
        tx_ext = sp.lil_matrix((len(full), allx.shape[1]))
        tx_ext[np.array(test_sorted) - test_sorted[0], :] = tx
        tx = tx_ext
        ty_ext = np.zeros((len(full), ally.shape[1]))
        ty_ext[np.array(test_sorted) - test_sorted[0], :] = ty
        ty = ty_ext

    features = sp.vstack((allx, tx)).tolil()
    features[test_idx, :] = features[test_sorted, :]
    labels = np.vstack((ally, ty))
    labels[test_idx, :] = labels[test_sorted, :]
    features = np.asarray(features.todense(), dtype=float)
    if not args.no_row_normalize:
        sums = features.sum(axis=1, keepdims=True)
        sums[sums == 0] = 1.0
        features = features / sums

    n = features.shape[0]
    split = ["none"] * n
    for i in range(len(y)):
        split[i] = "train"
    for i in range(len(y), len(y) + 500):
        split[i] = "val"
    for i in test_idx:
        split[i] = "test"

    edges = set()
    for u, nbrs in graph.items():
        for v in nbrs:
            if u != v and u < n and v < n:
                edges.add((min(u, v), max(u, v)))

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "nodes.tsv"), "w") as f:
        for i in range(n):
            lab = str(int(labels[i].argmax())) if labels[i].sum() > 0 else "-"
            f.write(f"{i}\t{lab}\t{split[i]}\n")
    with open(os.path.join(args.out, "edges.tsv"), "w") as f:
        for u, v in sorted(edges):
            f.write(f"{u}\t{v}\n")
    with open(os.path.join(args.out, "features.csv"), "w") as f:
        for row in features:
            f.write(",".join(repr(float(v)) for v in row) + "\n")
    print(f"{args.name}: {n} nodes, {len(edges)} undirected edges", file=sys.stderr)


if __name__ == "__main__":
    main()
