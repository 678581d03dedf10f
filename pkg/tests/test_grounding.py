import itertools

import numpy as np
import pytest

from aggremc.data import ObservationSplit
from aggremc.prior import PriorTable
from aggremc.psl.grounding import GroundRuleSet, Potential, assignment_from_labels, ground, template_distances
from aggremc.psl.inference import energy, project_simplex_rows
from aggremc.psl.model import build_model

from conftest import make_graph, random_graph


def naive_energy(templates, graph, split, priors, y_table, keep_constant=False):
    """Instantiate every template over every binding with explicit atom values."""
    kappa, n = graph.kappa, graph.node_count
    truth = np.zeros((n, kappa))
    for i in range(n):
        if split.observed[i]:
            truth[i, split.true_labels[i]] = 1.0
        else:
            truth[i] = y_table[i]
    linked = {(int(a), int(b)) for a, b in graph.undirected_edges} | {(int(b), int(a)) for a, b in graph.undirected_edges}
    names = graph.categories.names
    total = 0.0
    for t in templates:
        if t.hard:
            continue
        node_vars = sorted({lit.args[0].name for lit in t.body + (t.head,)})
        for nodes in itertools.product(range(n), repeat=len(node_vars)):
            env = dict(zip(node_vars, nodes))
            for c in range(kappa):
                def value(lit):
                    if lit.predicate == "Link":
                        return float((env[lit.args[0].name], env[lit.args[1].name]) in linked)
                    cat = names.index(lit.args[1].name) if lit.args[1].constant else c
                    if lit.predicate == "LR":
                        return priors.probs[env[lit.args[0].name], cat]
                    return truth[env[lit.args[0].name], cat]
                lin = sum(value(b) for b in t.body) - (len(t.body) - 1) - value(t.head)
                has_rv = any(lit.predicate == "HasCat" and not split.observed[env[lit.args[0].name]]
                             for lit in t.body + (t.head,))
                if has_rv or keep_constant:
                    total += t.weight * max(0.0, lin) ** t.exponent
                if all(lit.args[1].constant for lit in t.body + (t.head,) if lit.predicate != "Link"):
                    break
    return total


def random_instance(rng, n=8, kappa=3, p=0.35):
    g = random_graph(rng, n, p, kappa)
    labels = rng.integers(0, kappa, size=n)
    split = ObservationSplit(rng.random(n) < 0.4, labels)
    priors = PriorTable(rng.dirichlet(np.ones(kappa), size=n))
    return g, split, priors


def test_folding_matches_naive_instantiation(rng):
    for _ in range(15):
        g, split, priors = random_instance(rng)
        templates = build_model(g.categories.names, {"propagate": 1.3, "propagate_category": [0.2, 0.7, 0.4],
                                                     "prior": [2.0, 1.0, 0.5]})
        rules = ground(templates, g, split, priors)
        y = project_simplex_rows(rng.random((len(split.unobserved_nodes), g.kappa))).ravel()
        table = np.zeros((g.node_count, g.kappa))
        table[split.unobserved_nodes] = y.reshape(-1, g.kappa)
        assert energy(rules, y) == pytest.approx(naive_energy(templates, g, split, priors, table), abs=1e-10)
        # constant groundings shift every energy by the same amount
        y2 = project_simplex_rows(rng.random((len(split.unobserved_nodes), g.kappa))).ravel()
        table2 = np.zeros_like(table)
        table2[split.unobserved_nodes] = y2.reshape(-1, g.kappa)
        full = [naive_energy(templates, g, split, priors, tb, keep_constant=True) for tb in (table, table2)]
        assert energy(rules, y) - energy(rules, y2) == pytest.approx(full[0] - full[1], abs=1e-10)


def test_general_rule_grounding_count(rng):
    for _ in range(30):
        n = int(rng.integers(2, 21))
        kappa = int(rng.integers(2, 5))
        g = random_graph(rng, n, 0.25, kappa)
        split = ObservationSplit(rng.random(n) < 0.5, rng.integers(0, kappa, size=n))
        rules = ground(build_model(g.categories.names)[:1], g, split, None)
        # brute force: each undirected edge, both directions, every category
        count = 0
        for a, b in g.undirected_edges:
            for u, v in ((a, b), (b, a)):
                for _c in range(kappa):
                    if not (split.observed[u] and split.observed[v]):
                        count += 1
        incident = sum(1 for a, b in g.undirected_edges if not (split.observed[a] and split.observed[b]))
        assert rules.n_potentials == count == 2 * incident * kappa


def test_single_edge_example():
    g = make_graph(2, [(0, 1)])
    split = ObservationSplit(np.array([True, False]), np.array([0, 1]))
    rules = ground(build_model(g.categories.names)[:1], g, split, None)
    assert rules.n_rv == 2 and rules.n_potentials == 4
    heads = [p for p in rules.potentials() if p.coefs == (-1.0,)]
    bodies = [p for p in rules.potentials() if p.coefs == (1.0,)]
    assert len(heads) == 2 and len(bodies) == 2
    # u -> v with category 0: 1 + 1 - 1 - y_v0 ; category 1: 0 + 1 - 1 - y_v1
    assert sorted(p.const for p in heads) == [0.0, 1.0]
    # v -> u: y_v,c + 1 - 1 - [u is c]
    assert sorted(p.const for p in bodies) == [-1.0, 0.0]


def test_all_observed_and_isolated_examples():
    g = make_graph(3, [(0, 1), (1, 2)])
    full = ObservationSplit(np.ones(3, bool), np.array([0, 1, 0]))
    rules = ground(build_model(g.categories.names), g, full, PriorTable(np.full((3, 2), 0.5)))
    assert rules.n_rv == 0 and rules.n_potentials == 0 and rules.n_constraints == 0

    lone = make_graph(1, [], kappa=3)
    split = ObservationSplit(np.array([False]), np.array([-1]))
    rules = ground(build_model(lone.categories.names), lone, split, PriorTable(np.array([[1.0, 0.0, 0.0]])))
    assert (rules.n_rv, rules.n_potentials, rules.n_constraints) == (3, 3, 1)
    assert rules.constraint(0).tolist() == [0, 1, 2]


def test_structure_invariants(rng):
    g, split, priors = random_instance(rng, n=12)
    rules = ground(build_model(g.categories.names), g, split, priors)
    membership = {(int(rv), r) for r in range(rules.n_potentials) for rv in rules.potential(r).rvs}
    incidence = {(rv, int(r)) for rv in range(rules.n_rv) for r in rules.incident(rv)}
    assert membership == incidence
    assert rules.n_constraints == len(split.unobserved_nodes)
    assert sorted(np.concatenate([rules.constraint(k) for k in range(rules.n_constraints)])) == list(range(rules.n_rv))
    idx = rules.rv_index()
    assert np.all(idx[split.observed] == -1) and np.all(idx[~split.observed] >= 0)
    assert np.all(rules.rv_node[:-1] * 3 + rules.rv_cat[:-1] < rules.rv_node[1:] * 3 + rules.rv_cat[1:])


def test_from_potentials_and_persistence(tmp_path):
    rules = GroundRuleSet.from_potentials(
        3, [(2.0, {0: 1.0, 1: -1.0}, 0.1, 1), Potential(0.5, (2,), (1.0,), -0.5, 2, 3)], [[0, 1]])
    assert rules.n_potentials == 2 and rules.rv_group.tolist() == [0, 0, -1]
    rules.save(tmp_path / "a.npz")
    rules.save(tmp_path / "b.npz")
    assert (tmp_path / "a.npz").read_bytes() == (tmp_path / "b.npz").read_bytes()
    back = GroundRuleSet.load(tmp_path / "a.npz")
    assert back.potentials() == rules.potentials()
    rules.dump(tmp_path / "d.tsv")
    lines = (tmp_path / "d.tsv").read_text().splitlines()
    assert lines[0] == "2\t1\t0:1,1:-1\t0.10000000000000001"
    assert lines[-1].startswith("HARD")
    with pytest.raises(ValueError):
        GroundRuleSet.from_potentials(2, [(1.0, {5: 1.0}, 0.0, 1)])


def test_template_distances_and_truth(rng):
    g, split, priors = random_instance(rng, n=10)
    templates = build_model(g.categories.names)
    rules = ground(templates, g, split, priors)
    truth = assignment_from_labels(rules, split.true_labels)
    d = template_distances(rules, truth, len(templates))
    weights = np.array([t.weight or 0.0 for t in templates])
    assert float(weights @ d) == pytest.approx(energy(rules, truth))
