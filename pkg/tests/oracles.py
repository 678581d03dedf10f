"""Independent reference computations shared by the unit and acceptance tests."""

import itertools

import numpy as np
from scipy import integrate


def feasible_grid(rules, resolution=100):
    """All feasible points whose coordinates are multiples of 1/resolution."""
    per_var = []
    groups = [rules.constraint(g).tolist() for g in range(rules.n_constraints)]
    grouped = {rv for g in groups for rv in g}
    axes, blocks = [], []
    ticks = np.arange(resolution + 1) / resolution
    for rv in range(rules.n_rv):
        if rv not in grouped:
            axes.append([rv])
            blocks.append(ticks[:, None])
    for g in groups:
        pts = [c for c in itertools.product(range(resolution + 1), repeat=len(g) - 1) if sum(c) <= resolution]
        pts = np.array([list(c) + [resolution - sum(c)] for c in pts]) / resolution
        axes.append(g)
        blocks.append(pts)
    order = np.concatenate(axes).astype(int)
    for combo in itertools.product(*[range(len(b)) for b in blocks]):
        x = np.empty(rules.n_rv)
        x[order] = np.concatenate([b[i] for b, i in zip(blocks, combo)])
        per_var.append(x)
    return np.array(per_var)


def grid_energies(rules, points):
    lin = points @ rules.matrix.T.toarray() + rules.pot_const
    return (rules.pot_weight * np.maximum(lin, 0.0) ** rules.pot_power).sum(axis=1)


def hinge_energy(potentials, y):
    """Energy from ``(w, {rv: coef}, const, p)`` tuples at a point ``y``."""
    total = 0.0
    for w, terms, c, p in potentials:
        lin = c + sum(coef * y[rv] for rv, coef in terms.items())
        total += w * max(0.0, lin) ** p
    return total


def quadrature_means_1d(potentials):
    f = lambda y: np.exp(-hinge_energy(potentials, [y]))
    kinks = sorted({-c / terms[0] for _, terms, c, _ in potentials if 0 < -c / terms[0] < 1})
    z = integrate.quad(f, 0, 1, points=kinks or None, epsabs=1e-12, limit=200)[0]
    m = integrate.quad(lambda y: y * f(y), 0, 1, points=kinks or None, epsabs=1e-12, limit=200)[0]
    return np.array([m / z])


def grid_means_2d(potentials, n=400):
    """Midpoint rule on an n x n grid over the unit square."""
    t = (np.arange(n) + 0.5) / n
    Y0, Y1 = np.meshgrid(t, t, indexing="ij")
    E = np.zeros_like(Y0)
    for w, terms, c, p in potentials:
        lin = c + terms.get(0, 0.0) * Y0 + terms.get(1, 0.0) * Y1
        E += w * np.maximum(lin, 0.0) ** p
    W = np.exp(-(E - E.min()))
    W /= W.sum()
    return np.array([(W * Y0).sum(), (W * Y1).sum()])


def brute_queries(n, edges, labels, kappa):
    """Double-loop reference implementations of the five queries."""
    und = set()
    for u, w in edges:
        if u != w:
            und.add((min(u, w), max(u, w)))
    nbrs = {i: [] for i in range(n)}
    for u, w in und:
        nbrs[u].append(w)
        nbrs[w].append(u)
    q1 = 0
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) in und and labels[i] == labels[j]:
                q1 += 1
    q2 = len(und) - q1
    q3 = q4 = q5 = 0
    for i in range(n):
        other = {labels[j] for j in nbrs[i] if labels[j] != labels[i]}
        if len(other) >= kappa / 2:
            q3 += 1
        diff = sum(1 for j in nbrs[i] if labels[j] != labels[i])
        same = len(nbrs[i]) - diff
        if diff > len(nbrs[i]) / 2:
            q4 += 1
        if same > len(nbrs[i]) / 2:
            q5 += 1
    return {"Q1": q1, "Q2": q2, "Q3": q3, "Q4": q4, "Q5": q5}
