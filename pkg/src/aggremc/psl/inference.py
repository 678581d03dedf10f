"""Energy evaluation and convex MAP inference for ground hinge-loss models.

The unnormalised density of an assignment ``y`` is ``exp(-energy(y))`` with
``energy(y) = sum_r w_r * max(0, a_r . y + c_r) ** p_r`` restricted to
``y`` in [0, 1] satisfying every sum constraint.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .grounding import GroundRuleSet, Potential

log = logging.getLogger(__name__)

FEASIBILITY_TOL = 1e-6


class InfeasibleAssignmentError(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


@dataclass
class Assignment:
    values: np.ndarray
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)

    def __len__(self):
        return len(self.values)


def _values(assignment) -> np.ndarray:
    return assignment.values if isinstance(assignment, Assignment) else np.asarray(assignment, dtype=np.float64)


def distance_to_satisfaction(potential: Potential, assignment) -> float:
    y = _values(assignment)
    return max(0.0, potential.linear(y)) ** potential.power


def constraint_violation(rules: GroundRuleSet, assignment) -> float:
    """Largest violation of the box and sum constraints."""
    y = _values(assignment)
    if y.shape != (rules.n_rv,):
        raise ValueError(f"assignment has {y.shape} entries, expected ({rules.n_rv},)")
    worst = 0.0
    if len(y):
        worst = max(float(-y.min()), float(y.max() - 1.0), 0.0)
    if rules.n_constraints:
        sums = np.add.reduceat(y[rules.con_rv], rules.con_ptr[:-1]) if len(rules.con_rv) else np.zeros(0)
        empty = np.diff(rules.con_ptr) == 0
        sums[empty] = 0.0
        worst = max(worst, float(np.abs(sums - 1.0).max()))
    return worst


def is_feasible(rules: GroundRuleSet, assignment, tol: float = FEASIBILITY_TOL) -> bool:
    return constraint_violation(rules, assignment) <= tol


def potential_values(rules: GroundRuleSet, assignment) -> np.ndarray:
    """Weighted hinge value of every potential."""
    lin = rules.linear_forms(_values(assignment))
    return rules.pot_weight * np.maximum(lin, 0.0) ** rules.pot_power


def energy(rules: GroundRuleSet, assignment, check: bool = True) -> float:
    """Total weighted distance to satisfaction (the negative log density up to Z)."""
    if check:
        v = constraint_violation(rules, assignment)
        if v > FEASIBILITY_TOL:
            raise InfeasibleAssignmentError(f"assignment violates constraints by {v:.3g}")
    return float(potential_values(rules, assignment).sum())


def project_simplex_rows(V: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of ``V`` onto the probability simplex."""
    k = V.shape[1]
    U = -np.sort(-V, axis=1)
    css = np.cumsum(U, axis=1) - 1.0
    ind = np.arange(1, k + 1)
    cond = U - css / ind > 0
    rho = k - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(len(V)), rho] / (rho + 1)
    return np.maximum(V - theta[:, None], 0.0)


def project_feasible(rules: GroundRuleSet, values: np.ndarray) -> np.ndarray:
    """Clip free RVs to [0, 1] and project every sum group onto its simplex."""
    values = np.asarray(values, dtype=np.float64)
    y = np.clip(values, 0.0, 1.0)
    sizes = np.diff(rules.con_ptr)
    for size in np.unique(sizes):
        if size == 0:
            continue
        groups = np.flatnonzero(sizes == size)
        idx = rules.con_rv[rules.con_ptr[groups][:, None] + np.arange(size)]
        y[idx] = project_simplex_rows(values[idx])
    return y


def initial_state(rules: GroundRuleSet) -> np.ndarray:
    y = np.full(rules.n_rv, 0.5)
    sizes = np.diff(rules.con_ptr)
    members = np.repeat(sizes, sizes)
    y[rules.con_rv] = 1.0 / members
    return y


def map_inference(
    rules: GroundRuleSet,
    tolerance: float = 1e-6,
    max_iters: int = 20000,
    rho: float = 1.0,
    check_every: int = 10,
) -> Assignment:
    """Minimise the energy by consensus ADMM over local potential copies.

    Each potential and each sum group keeps a local copy of its RVs; local
    updates have closed forms (hinge or squared hinge against a quadratic,
    simplex projection), and the consensus step averages copies and clips to
    [0, 1].  Stops when primal and dual residuals fall below
    ``tolerance`` (absolute and relative).  The returned assignment is
    projected onto the feasible set.  On non-convergence the best projected
    iterate is returned with ``converged=False`` and a warning.
    """
    n = rules.n_rv
    if n == 0:
        raise ValueError("MAP inference needs at least one RV")

    pot_ptr = rules.pot_ptr
    m = rules.n_potentials
    t_rv = rules.term_rv
    t_coef = rules.term_coef
    t_pot = rules.term_pot
    nterms = np.diff(pot_ptr)
    active = rules.pot_weight > 0
    norm2 = np.bincount(t_pot, weights=t_coef ** 2, minlength=m)
    w = rules.pot_weight
    sq = rules.pot_power == 2

    sizes = np.diff(rules.con_ptr)
    con_blocks = []
    for size in np.unique(sizes):
        if size == 0:
            continue
        groups = np.flatnonzero(sizes == size)
        con_blocks.append(rules.con_ptr[groups][:, None] + np.arange(size))
    c_rv = rules.con_rv

    copies = (np.bincount(t_rv[np.repeat(active, nterms)], minlength=n)
              + np.bincount(c_rv, minlength=n)).astype(np.float64)
    has_copy = copies > 0
    safe_copies = np.where(has_copy, copies, 1.0)
    term_active = np.repeat(active, nterms)

    y = initial_state(rules)
    x_t = y[t_rv].copy()
    u_t = np.zeros_like(x_t)
    x_c = y[c_rv].copy()
    u_c = np.zeros_like(x_c)
    total_copies = float(copies.sum())

    best_y, best_e = project_feasible(rules, y), np.inf
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        # local potential updates
        v = y[t_rv] - u_t
        s0 = np.bincount(t_pot, weights=t_coef * v, minlength=m) + rules.pot_const
        step = np.zeros(m)
        viol = active & (s0 > 0)
        lin_idx = viol & ~sq
        if lin_idx.any():
            full = w[lin_idx] / rho
            s_after = s0[lin_idx] - full * norm2[lin_idx]
            step[lin_idx] = np.where(s_after >= 0, full, s0[lin_idx] / norm2[lin_idx])
        sq_idx = viol & sq
        if sq_idx.any():
            s = s0[sq_idx] / (1.0 + 2.0 * w[sq_idx] * norm2[sq_idx] / rho)
            step[sq_idx] = 2.0 * w[sq_idx] * s / rho
        x_t = v - step[t_pot] * t_coef

        # local sum-constraint updates
        vc = y[c_rv] - u_c
        for idx in con_blocks:
            x_c[idx] = project_simplex_rows(vc[idx])

        # consensus
        y_old = y
        acc = (np.bincount(t_rv[term_active], weights=(x_t + u_t)[term_active], minlength=n)
               + np.bincount(c_rv, weights=x_c + u_c, minlength=n))
        y = np.where(has_copy, np.clip(acc / safe_copies, 0.0, 1.0), y_old)

        # duals
        r_t = x_t - y[t_rv]
        r_c = x_c - y[c_rv]
        u_t += np.where(term_active, r_t, 0.0)
        u_c += r_c

        if it % check_every == 0 or it == max_iters:
            primal = np.sqrt(np.sum(r_t[term_active] ** 2) + np.sum(r_c ** 2))
            dual = rho * np.sqrt(np.sum(copies * (y - y_old) ** 2))
            x_norm = np.sqrt(np.sum(x_t[term_active] ** 2) + np.sum(x_c ** 2))
            y_norm = np.sqrt(np.sum(copies * y ** 2))
            u_norm = rho * np.sqrt(np.sum(u_t[term_active] ** 2) + np.sum(u_c ** 2))
            eps_pri = np.sqrt(total_copies) * tolerance + tolerance * max(x_norm, y_norm)
            eps_dual = np.sqrt(total_copies) * tolerance + tolerance * u_norm
            if primal <= eps_pri and dual <= eps_dual:
                converged = True
                break
            if it % (check_every * 20) == 0:
                cand = project_feasible(rules, y)
                e = energy(rules, cand, check=False)
                if e < best_e:
                    best_y, best_e = cand, e

    final = project_feasible(rules, y)
    if not converged:
        e = energy(rules, final, check=False)
        if e > best_e:
            final = best_y
        warnings.warn(f"ADMM did not converge in {max_iters} iterations", ConvergenceWarning, stacklevel=2)
    log.debug("MAP inference: %d iterations, converged=%s", it, converged)
    return Assignment(final, converged=converged, iterations=it)
