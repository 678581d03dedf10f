"""Attributed citation graphs, category domains and observed/unobserved splits.

Files are tab separated UTF-8 text; lines starting with ``#`` and blank
lines are ignored everywhere.

* labels   ``node<TAB>category``  (one line per node; defines the node set,
  ``?`` marks an unknown ground-truth label)
* edges    ``src<TAB>dst``
* features ``node<TAB>feature_index[<TAB>value]`` (value defaults to 1.0)
* split    ``node`` (one observed node per line)
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

UNKNOWN_LABEL = "?"


class DataFormatError(ValueError):
    """Raised for malformed or inconsistent input files."""

    def __init__(self, message: str, path: str | Path | None = None, line: int | None = None):
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)
        self.path = path
        self.line = line


@dataclass(frozen=True)
class CategoryDomain:
    names: tuple[str, ...]

    def __post_init__(self):
        if len(self.names) < 2:
            raise ValueError(f"need at least 2 categories, got {len(self.names)}")
        if len(set(self.names)) != len(self.names):
            raise ValueError("category names must be unique")

    @property
    def kappa(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"category {name!r} is not in the domain {list(self.names)}") from None


@dataclass
class AttributedGraph:
    """Nodes ``0..node_count-1`` with citation links and sparse features.

    ``edges`` keeps the directed links as given.  Every query and rule uses
    ``undirected_edges``: one row ``(i, j)`` with ``i < j`` per linked pair.
    """

    node_count: int
    edges: np.ndarray
    categories: CategoryDomain
    features: sp.csr_matrix | None = None
    node_ids: list[str] | None = None
    undirected_edges: np.ndarray = field(init=False, repr=False)
    adj_indptr: np.ndarray = field(init=False, repr=False)
    adj_indices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        n = self.node_count
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise ValueError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise ValueError("self-loops are not allowed")
        self.edges = edges
        if self.node_ids is None:
            self.node_ids = [str(i) for i in range(n)]
        if len(self.node_ids) != n:
            raise ValueError("node_ids length does not match node_count")
        if self.features is None:
            self.features = sp.csr_matrix((n, 0), dtype=np.float64)
        self.features = sp.csr_matrix(self.features, dtype=np.float64)
        if self.features.shape[0] != n:
            raise ValueError("feature matrix row count does not match node_count")

        lo = np.minimum(edges[:, 0], edges[:, 1])
        hi = np.maximum(edges[:, 0], edges[:, 1])
        und = np.unique(np.stack([lo, hi], axis=1), axis=0) if len(edges) else np.empty((0, 2), np.int64)
        self.undirected_edges = und.astype(np.int64)

        src = np.concatenate([und[:, 0], und[:, 1]])
        dst = np.concatenate([und[:, 1], und[:, 0]])
        order = np.lexsort((dst, src))
        src, dst = src[order], dst[order]
        self.adj_indptr = np.concatenate([[0], np.cumsum(np.bincount(src, minlength=n))]).astype(np.int64)
        self.adj_indices = dst.astype(np.int64)

    @property
    def kappa(self) -> int:
        return self.categories.kappa

    @property
    def feature_count(self) -> int:
        return self.features.shape[1]

    def neighbors(self, node: int) -> np.ndarray:
        self._check_node(node)
        return self.adj_indices[self.adj_indptr[node]:self.adj_indptr[node + 1]]

    def degrees(self) -> np.ndarray:
        return np.diff(self.adj_indptr)

    def _check_node(self, node: int) -> None:
        if not 0 <= int(node) < self.node_count:
            raise IndexError(f"node id {node} out of range [0, {self.node_count})")

    def internal_id(self, external: str) -> int:
        if not hasattr(self, "_id_lookup"):
            self._id_lookup = {name: i for i, name in enumerate(self.node_ids)}
        return self._id_lookup[external]


@dataclass
class ObservationSplit:
    """Which nodes have a known category, plus ground truth for evaluation.

    ``true_labels`` holds a category index per node or -1 where the truth is
    unknown.  Observed nodes always carry a label.
    """

    observed: np.ndarray
    true_labels: np.ndarray

    def __post_init__(self):
        self.observed = np.asarray(self.observed, dtype=bool)
        self.true_labels = np.asarray(self.true_labels, dtype=np.int64)
        if self.observed.shape != self.true_labels.shape:
            raise ValueError("observed mask and labels differ in length")
        if np.any(self.true_labels[self.observed] < 0):
            raise ValueError("every observed node needs a label")

    @classmethod
    def from_nodes(cls, observed_nodes: Iterable[int], true_labels: Sequence[int]) -> "ObservationSplit":
        labels = np.asarray(true_labels, dtype=np.int64)
        mask = np.zeros(len(labels), dtype=bool)
        mask[list(observed_nodes)] = True
        return cls(mask, labels)

    @property
    def node_count(self) -> int:
        return len(self.observed)

    @property
    def observed_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.observed)

    @property
    def unobserved_nodes(self) -> np.ndarray:
        return np.flatnonzero(~self.observed)

    @property
    def has_full_truth(self) -> bool:
        return bool(np.all(self.true_labels >= 0))

    def observed_labels(self) -> np.ndarray:
        """Labels with unobserved nodes masked to -1."""
        out = np.full_like(self.true_labels, -1)
        out[self.observed] = self.true_labels[self.observed]
        return out


def degree(graph: AttributedGraph, node: int) -> int:
    """Number of distinct neighbours of ``node`` with links taken as undirected."""
    graph._check_node(node)
    return int(graph.adj_indptr[node + 1] - graph.adj_indptr[node])


def _records(path: Path):
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line.split("\t")


def read_labels(path: str | Path) -> tuple[list[str], list[str]]:
    """Return node ids (file order) and their category names."""
    path = Path(path)
    nodes, cats, seen = [], [], set()
    for lineno, cols in _records(path):
        if len(cols) != 2 or not cols[0] or not cols[1]:
            raise DataFormatError("expected 'node<TAB>category'", path, lineno)
        node, cat = cols[0].strip(), cols[1].strip()
        if node in seen:
            raise DataFormatError(f"node {node!r} labelled twice", path, lineno)
        seen.add(node)
        nodes.append(node)
        cats.append(cat)
    return nodes, cats


def load_graph(
    edge_path: str | Path,
    feature_path: str | Path | None,
    label_path: str | Path,
    split_path: str | Path,
    categories: Sequence[str] | None = None,
    feature_count: int | None = None,
) -> tuple[AttributedGraph, ObservationSplit]:
    """Load and validate a graph and its observation split.

    The label file defines the node set; node ids are re-indexed densely in
    label-file order (see :func:`write_id_map`).  Without an explicit
    ``categories`` list the domain is the sorted set of label names.
    """
    label_path = Path(label_path)
    node_ids, cat_names = read_labels(label_path)
    known = [c for c in cat_names if c != UNKNOWN_LABEL]
    if categories is None:
        domain = CategoryDomain(tuple(sorted(set(known))))
    else:
        domain = CategoryDomain(tuple(categories))
    lookup = {name: i for i, name in enumerate(node_ids)}
    labels = np.full(len(node_ids), -1, dtype=np.int64)
    for i, cat in enumerate(cat_names):
        if cat == UNKNOWN_LABEL:
            continue
        if cat not in domain.names:
            raise DataFormatError(f"label {cat!r} outside the category domain", label_path)
        labels[i] = domain.names.index(cat)

    def resolve(node: str, path: Path, lineno: int) -> int:
        try:
            return lookup[node]
        except KeyError:
            raise DataFormatError(f"unknown node id {node!r}", path, lineno) from None

    edge_path = Path(edge_path)
    edges, seen_edges = [], set()
    for lineno, cols in _records(edge_path):
        if len(cols) != 2 or not cols[0].strip() or not cols[1].strip():
            raise DataFormatError("expected 'src<TAB>dst'", edge_path, lineno)
        u = resolve(cols[0].strip(), edge_path, lineno)
        w = resolve(cols[1].strip(), edge_path, lineno)
        if u == w:
            raise DataFormatError(f"self-loop on node {cols[0].strip()!r}", edge_path, lineno)
        if (u, w) in seen_edges:
            raise DataFormatError(f"duplicate edge {cols[0].strip()}->{cols[1].strip()}", edge_path, lineno)
        seen_edges.add((u, w))
        edges.append((u, w))

    features = None
    if feature_path is not None:
        feature_path = Path(feature_path)
        rows, colidx, vals = [], [], []
        for lineno, cols in _records(feature_path):
            if len(cols) not in (2, 3):
                raise DataFormatError("expected 'node<TAB>feature_index[<TAB>value]'", feature_path, lineno)
            node = resolve(cols[0].strip(), feature_path, lineno)
            try:
                j = int(cols[1])
                v = float(cols[2]) if len(cols) == 3 else 1.0
            except ValueError:
                raise DataFormatError("non-numeric feature index or value", feature_path, lineno) from None
            if j < 0 or (feature_count is not None and j >= feature_count):
                raise DataFormatError(f"feature index {j} out of range", feature_path, lineno)
            if not np.isfinite(v):
                raise DataFormatError("non-finite feature value", feature_path, lineno)
            rows.append(node)
            colidx.append(j)
            vals.append(v)
        width = feature_count if feature_count is not None else (max(colidx) + 1 if colidx else 0)
        features = sp.csr_matrix((vals, (rows, colidx)), shape=(len(node_ids), width), dtype=np.float64)

    split_path = Path(split_path)
    observed = np.zeros(len(node_ids), dtype=bool)
    for lineno, cols in _records(split_path):
        if len(cols) != 1:
            raise DataFormatError("expected one node id per line", split_path, lineno)
        node = resolve(cols[0].strip(), split_path, lineno)
        if labels[node] < 0:
            raise DataFormatError(f"observed node {cols[0].strip()!r} has no label", split_path, lineno)
        observed[node] = True

    edge_arr = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    graph = AttributedGraph(len(node_ids), edge_arr, domain, features, node_ids)
    return graph, ObservationSplit(observed, labels)


def write_edges(graph: AttributedGraph, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for u, w in graph.edges:
            fh.write(f"{graph.node_ids[u]}\t{graph.node_ids[w]}\n")


def write_labels(graph: AttributedGraph, labels: Sequence[int], path: str | Path) -> None:
    names = graph.categories.names
    with open(path, "w", encoding="utf-8") as fh:
        for node, lab in zip(graph.node_ids, labels):
            fh.write(f"{node}\t{names[lab] if lab >= 0 else UNKNOWN_LABEL}\n")


def write_features(graph: AttributedGraph, path: str | Path) -> None:
    coo = graph.features.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8") as fh:
        for k in order:
            fh.write(f"{graph.node_ids[coo.row[k]]}\t{coo.col[k]}\t{coo.data[k]:.17g}\n")


def write_split(graph: AttributedGraph, split: ObservationSplit, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for node in split.observed_nodes:
            fh.write(f"{graph.node_ids[node]}\n")


def write_id_map(graph: AttributedGraph, path: str | Path) -> None:
    """Persist the internal -> external node id mapping."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# internal\texternal\n")
        for i, name in enumerate(graph.node_ids):
            fh.write(f"{i}\t{name}\n")


def write_dataset(graph: AttributedGraph, split: ObservationSplit, directory: str | Path) -> dict[str, Path]:
    """Write all four input files into ``directory`` and return their paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = {
        "edges": directory / "edges.tsv",
        "labels": directory / "labels.tsv",
        "features": directory / "features.tsv",
        "split": directory / "split.tsv",
    }
    write_edges(graph, paths["edges"])
    write_labels(graph, split.true_labels, paths["labels"])
    write_features(graph, paths["features"])
    write_split(graph, split, paths["split"])
    return paths
