"""Synthetic attributed graphs with planted category structure.

Used for tests, scale checks and demos when the benchmark citation datasets
are not at hand.  All generators are deterministic given ``seed``.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .data import AttributedGraph, CategoryDomain, ObservationSplit


def _bag_of_words(labels, kappa, n_features, words_per_node, topic_prob, rng):
    """Binary bag-of-words rows; each category owns a block of topic words."""
    n = len(labels)
    block = max(1, n_features // kappa)
    rows, cols = [], []
    for i, lab in enumerate(labels):
        topical = rng.random(words_per_node) < topic_prob
        own = lab * block + rng.integers(0, block, size=words_per_node)
        anywhere = rng.integers(0, n_features, size=words_per_node)
        words = np.unique(np.where(topical, np.minimum(own, n_features - 1), anywhere))
        rows.extend([i] * len(words))
        cols.extend(words.tolist())
    data = np.ones(len(rows))
    return sp.csr_matrix((data, (rows, cols)), shape=(n, n_features))


def _pick_observed(labels, kappa, n_observed, rng):
    """Random observed set that contains at least one node per category."""
    n = len(labels)
    observed = np.zeros(n, dtype=bool)
    for c in range(kappa):
        members = np.flatnonzero(labels == c)
        if len(members):
            observed[rng.choice(members)] = True
    rest = np.flatnonzero(~observed)
    extra = max(0, n_observed - int(observed.sum()))
    observed[rng.choice(rest, size=min(extra, len(rest)), replace=False)] = True
    return observed


def citation_graph(
    n_nodes: int = 2708,
    n_edges: int = 5429,
    kappa: int = 7,
    n_features: int = 1433,
    n_observed: int = 640,
    homophily: float = 0.8,
    words_per_node: int = 18,
    topic_prob: float = 0.35,
    seed: int = 0,
) -> tuple[AttributedGraph, ObservationSplit]:
    """Planted-partition citation network with Cora-like dimensions by default.

    Each directed link stays inside its source's category with probability
    ``homophily``.  Reciprocal pairs may occur (as in real citation data) but
    exact duplicates never do.
    """
    rng = np.random.default_rng(seed)
    sizes = rng.dirichlet(np.full(kappa, 8.0)) * n_nodes
    labels = np.repeat(np.arange(kappa), np.maximum(1, np.round(sizes).astype(int)))
    labels = np.resize(labels, n_nodes)
    rng.shuffle(labels)
    members = [np.flatnonzero(labels == c) for c in range(kappa)]

    # heavy-tailed citation counts
    popularity = rng.pareto(2.0, size=n_nodes) + 1.0
    edges, seen = [], set()
    while len(edges) < n_edges:
        u = int(rng.integers(n_nodes))
        if rng.random() < homophily:
            pool = members[labels[u]]
        else:
            pool = np.arange(n_nodes)
        p = popularity[pool] / popularity[pool].sum()
        w = int(rng.choice(pool, p=p))
        if u == w or (u, w) in seen:
            continue
        seen.add((u, w))
        edges.append((u, w))

    features = _bag_of_words(labels, kappa, n_features, words_per_node, topic_prob, rng)
    observed = _pick_observed(labels, kappa, n_observed, rng)
    names = tuple(f"c{c}" for c in range(kappa))
    graph = AttributedGraph(n_nodes, np.array(edges), CategoryDomain(names), features,
                            [f"n{i}" for i in range(n_nodes)])
    return graph, ObservationSplit(observed, labels)


def two_cluster_graph(
    community_size: int = 15,
    n_bridges: int = 3,
    observed_fraction: float = 0.3,
    p_in: float = 0.3,
    p_out: float = 0.02,
    purity: float = 0.8,
    bridge_links: int = 3,
    n_features: int = 40,
    words_per_node: int = 6,
    topic_prob: float = 0.5,
    seed: int = 0,
) -> tuple[AttributedGraph, ObservationSplit]:
    """Two dense communities joined by bridge nodes.

    A community node carries its community's category (0 or 1) with
    probability ``purity`` and the other one otherwise.  Bridge nodes take a
    random category and link to ``bridge_links`` nodes in each community.
    Features are weakly informative bags of words.
    """
    rng = np.random.default_rng(seed)
    n = 2 * community_size + n_bridges
    labels = np.empty(n, dtype=np.int64)
    labels[:community_size] = 0
    labels[community_size:2 * community_size] = 1
    flip = rng.random(2 * community_size) >= purity
    labels[:2 * community_size][flip] ^= 1
    labels[2 * community_size:] = rng.integers(0, 2, size=n_bridges)
    comm = [np.arange(community_size), np.arange(community_size, 2 * community_size)]

    edges = set()
    for i in range(2 * community_size):
        for j in range(i + 1, 2 * community_size):
            same = (i < community_size) == (j < community_size)
            if rng.random() < (p_in if same else p_out):
                edges.add((i, j) if rng.random() < 0.5 else (j, i))
    for b in range(2 * community_size, n):
        for c in comm:
            for j in rng.choice(c, size=min(bridge_links, len(c)), replace=False):
                edges.add((b, int(j)) if rng.random() < 0.5 else (int(j), b))

    features = _bag_of_words(labels, 2, n_features, words_per_node, topic_prob, rng)
    observed = _pick_observed(labels, 2, int(round(observed_fraction * n)), rng)
    graph = AttributedGraph(n, np.array(sorted(edges)), CategoryDomain(("c0", "c1")), features,
                            [f"n{i}" for i in range(n)])
    return graph, ObservationSplit(observed, labels)
