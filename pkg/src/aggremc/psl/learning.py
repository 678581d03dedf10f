"""Rule-weight learning by MAP-approximated likelihood gradients.

For ``p(y) ~ exp(-sum_t w_t * Phi_t(y))`` the gradient of the log-likelihood
of the observed truth with respect to ``w_t`` is ``E[Phi_t] - Phi_t(truth)``.
The expectation is replaced by the value at the current MAP state, giving
the update ``w_t <- max(0, w_t - step * (Phi_t(truth) - Phi_t(MAP)))``.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from ..data import ObservationSplit
from .grounding import GroundRuleSet, assignment_from_labels, template_distances
from .inference import map_inference
from .model import RuleTemplate

log = logging.getLogger(__name__)


def learn_weights(
    templates: Sequence[RuleTemplate],
    rules: GroundRuleSet,
    split: ObservationSplit,
    steps: int = 10,
    step_size: float = 0.1,
    map_tolerance: float = 1e-6,
    map_max_iters: int = 20000,
    history: list | None = None,
) -> list[float | None]:
    """Run ``steps`` gradient steps and return the per-template weights.

    Hard templates keep ``None``.  ``split.true_labels`` must cover every
    node that owns RVs in ``rules``.  If ``history`` is given, the weight
    vector before every step is appended to it.
    """
    weights = [t.weight for t in templates]
    soft = np.array([w is not None for w in weights])
    truth = assignment_from_labels(rules, split.true_labels)
    phi_truth = template_distances(rules, truth, len(templates))
    for step in range(steps):
        if history is not None:
            history.append(list(weights))
        current = rules.reweighted(weights)
        state = map_inference(current, tolerance=map_tolerance, max_iters=map_max_iters)
        phi_map = template_distances(current, state.values, len(templates))
        grad = phi_truth - phi_map
        for t in np.flatnonzero(soft):
            weights[t] = max(0.0, weights[t] - step_size * float(grad[t]))
        log.debug("weight learning step %d: %s", step, weights)
    return weights
