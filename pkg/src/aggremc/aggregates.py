"""Aggregate graph queries over category labels, their estimators and error scores.

Labels are integer arrays with one category index per node.  All half
thresholds use integer arithmetic (``2 * count`` against degree or kappa).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import AttributedGraph, ObservationSplit

QUERY_IDS = ("Q1", "Q2", "Q3", "Q4", "Q5")


def _labels(graph: AttributedGraph, labels) -> np.ndarray:
    lab = np.asarray(labels, dtype=np.int64)
    if lab.shape != (graph.node_count,):
        raise ValueError(f"expected {graph.node_count} labels, got shape {lab.shape}")
    if lab.size and (lab.min() < 0 or lab.max() >= graph.kappa):
        raise ValueError("label outside the category domain")
    return lab


def q1(graph: AttributedGraph, labels) -> int:
    """Undirected edges whose endpoints share a category."""
    lab = _labels(graph, labels)
    e = graph.undirected_edges
    return int(np.count_nonzero(lab[e[:, 0]] == lab[e[:, 1]]))


def q2(graph: AttributedGraph, labels) -> int:
    return len(graph.undirected_edges) - q1(graph, labels)


def _same_counts(graph, lab):
    src = np.repeat(np.arange(graph.node_count), graph.degrees())
    same = lab[src] == lab[graph.adj_indices]
    return np.bincount(src[same], minlength=graph.node_count), graph.degrees()


def q3(graph: AttributedGraph, labels, kappa: int | None = None) -> int:
    """Nodes linked to at least kappa/2 distinct categories other than their own."""
    lab = _labels(graph, labels)
    kappa = graph.kappa if kappa is None else int(kappa)
    src = np.repeat(np.arange(graph.node_count), graph.degrees())
    ncat = lab[graph.adj_indices]
    keep = ncat != lab[src]
    pairs = np.unique(src[keep] * kappa + ncat[keep])
    distinct = np.bincount(pairs // kappa, minlength=graph.node_count)
    return int(np.count_nonzero(2 * distinct >= kappa))


def q4(graph: AttributedGraph, labels) -> int:
    """Nodes with a strict majority of neighbours in another category."""
    same, deg = _same_counts(graph, _labels(graph, labels))
    return int(np.count_nonzero(2 * (deg - same) > deg))


def q5(graph: AttributedGraph, labels) -> int:
    """Nodes with a strict majority of neighbours in their own category."""
    same, deg = _same_counts(graph, _labels(graph, labels))
    return int(np.count_nonzero(2 * same > deg))


QUERIES: dict[str, Callable] = {"Q1": q1, "Q2": q2, "Q3": q3, "Q4": q4, "Q5": q5}


def all_queries(graph: AttributedGraph, labels) -> dict[str, int]:
    return {q: QUERIES[q](graph, labels) for q in QUERY_IDS}


def discretize(soft, rv_index: np.ndarray, split: ObservationSplit) -> np.ndarray:
    """Category labels from soft values: observed nodes keep their label,
    unobserved ones take the argmax of their RVs (lowest category on ties).

    ``soft`` is one RV vector or a ``(rows, n_rv)`` matrix; the result has
    one label row per input row.  ``rv_index`` is the ``(nodes, kappa)`` RV
    table with -1 for observed atoms.
    """
    soft = np.asarray(soft, dtype=np.float64)
    single = soft.ndim == 1
    rows = soft[None, :] if single else soft
    hidden = split.unobserved_nodes
    idx = rv_index[hidden]
    if np.any(idx < 0):
        node = int(hidden[np.flatnonzero(np.any(idx < 0, axis=1))[0]])
        raise ValueError(f"no RV for unobserved node {node}")
    base = split.observed_labels()
    out = np.repeat(base[None, :], len(rows), axis=0)
    if len(hidden):
        out[:, hidden] = np.argmax(rows[:, idx], axis=2)
    return out[0] if single else out


def expected_query(query: str, samples, graph: AttributedGraph, split: ObservationSplit,
                   rv_index: np.ndarray) -> float:
    """Mean of ``query`` over the discretized rows of ``samples``."""
    rows = samples.samples if hasattr(samples, "samples") else np.asarray(samples, dtype=np.float64)
    if rows.ndim != 2 or len(rows) == 0:
        raise ValueError("expected_query needs a nonempty sample matrix")
    f = QUERIES[query]
    labels = discretize(rows, rv_index, split)
    return float(sum(f(graph, lab) for lab in labels) / len(labels))


def expected_queries(samples, graph, split, rv_index) -> dict[str, float]:
    rows = samples.samples if hasattr(samples, "samples") else np.asarray(samples, dtype=np.float64)
    if rows.ndim != 2 or len(rows) == 0:
        raise ValueError("expected_query needs a nonempty sample matrix")
    labels = discretize(rows, rv_index, split)
    totals = dict.fromkeys(QUERY_IDS, 0)
    for lab in labels:
        for q in QUERY_IDS:
            totals[q] += QUERIES[q](graph, lab)
    return {q: totals[q] / len(labels) for q in QUERY_IDS}


@dataclass
class EstimateReport:
    estimates: dict[str, float]
    truth: dict[str, int]
    delta: dict[str, float]
    absolute: dict[str, bool]      # truth was 0: delta holds |P - T|
    mean_delta: float
    accuracy: float                # nan when nothing is unobserved
    accuracy_defined: bool
    method: str = ""
    notes: list[str] = field(default_factory=list)


def relative_error(p: float, t: float) -> tuple[float, bool]:
    if t == 0:
        return abs(p - t), True
    return abs(p - t) / t, False


def evaluate(estimates: Mapping[str, float], truth_labels, predicted, graph: AttributedGraph,
             split: ObservationSplit, method: str = "") -> EstimateReport:
    truth_labels = np.asarray(truth_labels, dtype=np.int64)
    if truth_labels.shape != (graph.node_count,) or np.any(truth_labels < 0):
        raise ValueError("evaluation needs a true label for every node")
    truth = all_queries(graph, truth_labels)
    delta, flags, notes = {}, {}, []
    for q in QUERY_IDS:
        if q not in estimates:
            raise ValueError(f"missing estimate for {q}")
        delta[q], flags[q] = relative_error(float(estimates[q]), truth[q])
        if flags[q]:
            notes.append(f"{q}: true value is 0, absolute error reported")
    hidden = split.unobserved_nodes
    if len(hidden):
        pred = np.asarray(predicted, dtype=np.int64)
        acc, defined = float(np.mean(pred[hidden] == truth_labels[hidden])), True
    else:
        acc, defined = math.nan, False
        notes.append("no unobserved nodes: accuracy undefined")
    return EstimateReport(
        {q: float(estimates[q]) for q in QUERY_IDS}, truth, delta, flags,
        float(np.mean([delta[q] for q in QUERY_IDS])), acc, defined, method, notes,
    )


REPORT_COLUMNS = ("method",) + tuple(f"{q}-delta" for q in QUERY_IDS) + ("mean-delta", "Acc")


def format_report(reports: Sequence[EstimateReport]) -> str:
    lines = ["\t".join(REPORT_COLUMNS)]
    for r in reports:
        cells = [r.method or "-"]
        cells += [f"{r.delta[q]:.6f}" + ("*" if r.absolute[q] else "") for q in QUERY_IDS]
        cells.append(f"{r.mean_delta:.6f}")
        cells.append(f"{r.accuracy:.6f}" if r.accuracy_defined else "NA")
        lines.append("\t".join(cells))
    notes = [f"# {r.method or '-'}: {n}" for r in reports for n in r.notes]
    if any(any(r.absolute.values()) for r in reports):
        notes.insert(0, "# * marks absolute error (true value 0)")
    return "\n".join(lines + notes) + "\n"


def write_report(reports: Sequence[EstimateReport], path: str | Path) -> None:
    Path(path).write_text(format_report(reports), encoding="utf-8")
