"""Local category priors from an L2-regularised multinomial logistic regression.

The objective minimised over the observed nodes is::

    mean_i  -log softmax(x_i W + b)[y_i]  +  (l2_weight / 2) * ||W||_F^2

The bias is not regularised, so with very large ``l2_weight`` the prior of
every node tends to the observed class frequencies.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .data import AttributedGraph, DataFormatError, ObservationSplit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LRConfig:
    l2_weight: float = 0.01
    learning_rate: float = 1.0
    max_epochs: int = 500
    tolerance: float = 1e-6

    def __post_init__(self):
        if not self.l2_weight >= 0:
            raise ValueError("l2_weight must be nonnegative")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


@dataclass
class LRWeights:
    coef: np.ndarray   # (n_features, kappa)
    bias: np.ndarray   # (kappa,)
    objective: float = float("nan")
    epochs: int = 0


@dataclass
class PriorTable:
    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2:
            raise ValueError("probs must be a (nodes, categories) matrix")

    @property
    def argmax(self) -> np.ndarray:
        # np.argmax returns the first maximum: ties go to the lowest category
        return np.argmax(self.probs, axis=1)


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    np.exp(z, out=z)
    z /= z.sum(axis=1, keepdims=True)
    return z


def _design(graph: AttributedGraph) -> sp.csr_matrix:
    return graph.features.tocsr()


def objective_and_gradient(coef, bias, X, y, l2_weight):
    """Regularised mean NLL and its gradient with respect to (coef, bias)."""
    n, kappa = X.shape[0], len(bias)
    scores = X @ coef + bias
    shift = scores.max(axis=1, keepdims=True)
    logz = np.log(np.exp(scores - shift).sum(axis=1)) + shift[:, 0]
    nll = np.mean(logz - scores[np.arange(n), y])
    obj = nll + 0.5 * l2_weight * float(np.sum(coef * coef))

    resid = softmax(scores)
    resid[np.arange(n), y] -= 1.0
    resid /= n
    g_coef = np.asarray(X.T @ resid) + l2_weight * coef
    g_bias = resid.sum(axis=0)
    return obj, g_coef, g_bias


def train_lr(graph: AttributedGraph, split: ObservationSplit, config: LRConfig | None = None) -> LRWeights:
    """Fit the regression on the observed nodes by full-batch proximal gradient descent.

    The smooth NLL takes a gradient step and the L2 term its exact proximal
    step ``W / (1 + step * l2_weight)``, so a stiff regulariser does not
    throttle the bias.  Each epoch starts from twice the previous accepted
    step (capped at ``config.learning_rate``) and halves it until the
    quadratic upper-bound condition holds.  Training stops when an epoch
    improves the objective by less than ``config.tolerance``.
    """
    config = config or LRConfig()
    kappa = graph.kappa
    obs = split.observed_nodes
    y = split.true_labels[obs]
    counts = np.bincount(y, minlength=kappa)
    if np.any(counts == 0):
        missing = [graph.categories.names[c] for c in np.flatnonzero(counts == 0)]
        raise ValueError(f"no observed examples for categories {missing}")
    X = _design(graph)[obs]
    l2 = config.l2_weight

    def smooth(c, b):
        return objective_and_gradient(c, b, X, y, 0.0)

    coef = np.zeros((X.shape[1], kappa))
    bias = np.zeros(kappa)
    f, g_coef, g_bias = smooth(coef, bias)
    obj = f + 0.5 * l2 * float(np.sum(coef * coef))
    step = config.learning_rate
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        step = min(2.0 * step, config.learning_rate)
        while True:
            c_new = (coef - step * g_coef) / (1.0 + step * l2)
            b_new = bias - step * g_bias
            f_new, gc_new, gb_new = smooth(c_new, b_new)
            if not np.isfinite(f_new):
                raise FloatingPointError(f"non-finite LR objective at epoch {epoch}")
            dc, db = c_new - coef, b_new - bias
            bound = f + float(np.sum(g_coef * dc) + np.sum(g_bias * db)) \
                + float(np.sum(dc * dc) + np.sum(db * db)) / (2.0 * step)
            if f_new <= bound + 1e-15 * abs(f):
                break
            step *= 0.5
            if step < 1e-20:
                break
        o_new = f_new + 0.5 * l2 * float(np.sum(c_new * c_new))
        if step < 1e-20 or o_new > obj:
            break
        improvement = obj - o_new
        coef, bias, obj, f, g_coef, g_bias = c_new, b_new, o_new, f_new, gc_new, gb_new
        if improvement < config.tolerance:
            break
    log.debug("LR finished after %d epochs, objective %.6g", epoch, obj)
    return LRWeights(coef, bias, obj, epoch)


def predict_priors(weights: LRWeights, graph: AttributedGraph) -> PriorTable:
    X = _design(graph)
    if weights.coef.shape != (X.shape[1], graph.kappa) or weights.bias.shape != (graph.kappa,):
        raise ValueError(
            f"weight shape {weights.coef.shape}/{weights.bias.shape} does not match "
            f"{X.shape[1]} features and {graph.kappa} categories"
        )
    return PriorTable(softmax(np.asarray(X @ weights.coef) + weights.bias))


def write_priors(graph: AttributedGraph, table: PriorTable, path: str | Path) -> None:
    names = graph.categories.names
    with open(path, "w", encoding="utf-8") as fh:
        for i, node in enumerate(graph.node_ids):
            for c, name in enumerate(names):
                fh.write(f"{node}\t{name}\t{table.probs[i, c]:.17g}\n")


def read_priors(graph: AttributedGraph, path: str | Path) -> PriorTable:
    """Load ``node<TAB>category<TAB>probability`` triples covering every node."""
    path = Path(path)
    probs = np.full((graph.node_count, graph.kappa), np.nan)
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 3:
                raise DataFormatError("expected 'node<TAB>category<TAB>probability'", path, lineno)
            try:
                i = graph.internal_id(cols[0])
            except KeyError:
                raise DataFormatError(f"unknown node id {cols[0]!r}", path, lineno) from None
            try:
                c = graph.categories.index(cols[1])
            except KeyError as exc:
                raise DataFormatError(str(exc), path, lineno) from None
            try:
                p = float(cols[2])
            except ValueError:
                raise DataFormatError("probability is not a number", path, lineno) from None
            if not 0.0 <= p <= 1.0:
                raise DataFormatError(f"probability {p} outside [0, 1]", path, lineno)
            probs[i, c] = p
    if np.isnan(probs).any():
        node = int(np.flatnonzero(np.isnan(probs).any(axis=1))[0])
        raise DataFormatError(f"missing prior entries for node {graph.node_ids[node]!r}", path)
    bad = np.abs(probs.sum(axis=1) - 1.0) > 1e-6
    if bad.any():
        node = int(np.flatnonzero(bad)[0])
        raise DataFormatError(f"priors of node {graph.node_ids[node]!r} do not sum to 1", path)
    return PriorTable(probs)
