"""Converters from public citation-graph releases to the tab-separated layout.

Two source formats are understood:

* Planetoid pickles (``ind.<name>.{x,tx,allx,y,ty,ally,graph,test.index}``).
  The observed split is the standard train block plus the validation block
  (the first 640 nodes for cora).
* LINQS release (``<name>.content`` and ``<name>.cites``).  No split ships
  with it, so a seeded stratified random split is drawn.
"""

from __future__ import annotations

import pickle
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .data import AttributedGraph, CategoryDomain, ObservationSplit, write_dataset

PLANETOID_OBSERVED = {"cora": 640, "citeseer": 620, "pubmed": 560}


def _unpickle(path: Path):
    with open(path, "rb") as fh:
        return pickle.load(fh, encoding="latin1")


def read_planetoid(directory: str | Path, name: str = "cora") -> tuple[AttributedGraph, ObservationSplit]:
    d = Path(directory)
    parts = {k: _unpickle(d / f"ind.{name}.{k}") for k in ("x", "tx", "allx", "y", "ty", "ally", "graph")}
    test_idx = np.loadtxt(d / f"ind.{name}.test.index", dtype=np.int64)
    lo, hi = test_idx.min(), test_idx.max()

    tx, ty = sp.csr_matrix(parts["tx"]), np.asarray(parts["ty"])
    if hi - lo + 1 != len(test_idx):            # isolated test nodes (citeseer)
        full_tx = sp.lil_matrix((hi - lo + 1, tx.shape[1]))
        full_tx[test_idx - lo, :] = tx
        full_ty = np.zeros((hi - lo + 1, ty.shape[1]))
        full_ty[test_idx - lo, :] = ty
        tx, ty = full_tx.tocsr(), full_ty

    features = sp.vstack([sp.csr_matrix(parts["allx"]), tx]).tolil()
    onehot = np.vstack([np.asarray(parts["ally"]), ty])
    order = np.sort(test_idx)
    features[test_idx, :] = features[order, :]
    onehot[test_idx, :] = onehot[order, :]
    features = sp.csr_matrix(features)

    n = features.shape[0]
    labels = np.where(onehot.sum(axis=1) > 0, onehot.argmax(axis=1), -1)
    edges = set()
    for src, nbrs in parts["graph"].items():
        for dst in nbrs:
            if src != dst and src < n and dst < n:
                edges.add((min(src, dst), max(src, dst)))
    edges = np.array(sorted(edges), dtype=np.int64).reshape(-1, 2)

    kappa = onehot.shape[1]
    graph = AttributedGraph(n, edges, CategoryDomain([f"c{c}" for c in range(kappa)]), features,
                            [str(i) for i in range(n)])
    n_obs = PLANETOID_OBSERVED.get(name, len(parts["y"]) + 500)
    observed = np.zeros(n, dtype=bool)
    observed[:n_obs] = True
    return graph, ObservationSplit(observed, labels)


def read_linqs(directory: str | Path, name: str = "cora", n_observed: int = 640,
               seed: int = 0) -> tuple[AttributedGraph, ObservationSplit]:
    d = Path(directory)
    ids, rows, label_names = [], [], []
    with open(d / f"{name}.content", encoding="utf-8") as fh:
        for line in fh:
            cols = line.split()
            if not cols:
                continue
            ids.append(cols[0])
            rows.append(np.array(cols[1:-1], dtype=np.float64))
            label_names.append(cols[-1])
    lookup = {node: i for i, node in enumerate(ids)}
    features = sp.csr_matrix(np.vstack(rows))
    domain = CategoryDomain(sorted(set(label_names)))
    labels = np.array([domain.index(c) for c in label_names], dtype=np.int64)

    edges = []
    with open(d / f"{name}.cites", encoding="utf-8") as fh:
        for line in fh:
            cols = line.split()
            if len(cols) != 2 or cols[0] not in lookup or cols[1] not in lookup:
                continue
            a, b = lookup[cols[1]], lookup[cols[0]]       # citing -> cited
            if a != b:
                edges.append((a, b))
    edges = np.array(sorted(set(edges)), dtype=np.int64).reshape(-1, 2)
    graph = AttributedGraph(len(ids), edges, domain, features, ids)
    return graph, ObservationSplit(stratified_split(labels, n_observed, seed), labels)


def stratified_split(labels: np.ndarray, n_observed: int, seed: int = 0) -> np.ndarray:
    """Observed mask with ``n_observed`` nodes spread over classes by frequency."""
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    kappa = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=kappa)
    quota = np.maximum(1, np.floor(n_observed * counts / counts.sum())).astype(int)
    while quota.sum() < n_observed:
        quota[np.argmax(counts - quota)] += 1
    while quota.sum() > n_observed:
        quota[np.argmax(quota)] -= 1
    mask = np.zeros(len(labels), dtype=bool)
    for c in range(kappa):
        members = np.flatnonzero(labels == c)
        mask[rng.choice(members, size=min(quota[c], len(members)), replace=False)] = True
    return mask


def convert(source: str | Path, out: str | Path, fmt: str = "auto", name: str = "cora",
            n_observed: int = 640, seed: int = 0) -> dict[str, Path]:
    source = Path(source)
    if fmt == "auto":
        fmt = "planetoid" if (source / f"ind.{name}.graph").exists() else "linqs"
    if fmt == "planetoid":
        graph, split = read_planetoid(source, name)
    elif fmt == "linqs":
        graph, split = read_linqs(source, name, n_observed, seed)
    else:
        raise ValueError(f"unknown dataset format {fmt!r}")
    return write_dataset(graph, split, out)
