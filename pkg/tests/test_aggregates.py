import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aggremc.aggregates import (
    QUERY_IDS, all_queries, discretize, evaluate, expected_queries, expected_query, format_report, q1, q2, q3,
    q4, q5, relative_error, write_report,
)
from aggremc.data import ObservationSplit
from aggremc.psl.grounding import GroundRuleSet
from aggremc.sampler import SamplerConfig, abgibbs_run

from conftest import make_graph, random_graph, split_of
from oracles import brute_queries, hinge_energy


def test_q1_q2_examples(triangle):
    assert q1(triangle, [0, 0, 0]) == 3 and q2(triangle, [0, 0, 0]) == 0
    path = make_graph(3, [(0, 1), (1, 2)])
    assert q1(path, [0, 0, 1]) == 1 and q2(path, [0, 0, 1]) == 1


def test_q3_examples():
    star = make_graph(3, [(0, 1), (0, 2)], kappa=4)
    assert q3(make_graph(1, [], kappa=2), [0]) == 0
    pair = make_graph(2, [(0, 1)], kappa=3)
    assert q3(pair, [0, 1]) == 0
    # kappa 4 star: only the hub sees two other categories
    assert q3(star, [0, 2, 3]) == 1


def test_q4_q5_examples():
    star3 = make_graph(4, [(0, 1), (0, 2), (0, 3)])
    lab = [0, 1, 1, 0]
    deg = star3.degrees()
    assert deg[0] == 3
    # hub: 2 of 3 differ -> exterior; leaves 1 and 2 differ from their only neighbour
    assert q4(star3, lab) == 3
    assert q5(star3, [0, 0, 0, 1]) == 3            # hub 2 of 3 match, leaves 1 and 2 match
    star2 = make_graph(3, [(0, 1), (0, 2)])
    assert q4(star2, [0, 1, 0]) == 1               # only leaf 1; hub has 1 of 2 differing
    isolated = make_graph(2, [])
    assert q4(isolated, [0, 1]) == 0 and q5(isolated, [0, 1]) == 0


def test_random_graphs_match_brute_force(rng):
    for _ in range(30):
        kappa = int(rng.integers(2, 6))
        g = random_graph(rng, 15, float(rng.uniform(0.05, 0.5)), kappa)
        lab = rng.integers(0, kappa, 15)
        assert all_queries(g, lab) == brute_queries(15, g.undirected_edges.tolist(), lab.tolist(), kappa)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_identities_and_permutation_invariance(seed, kappa):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 20))
    g = random_graph(rng, n, 0.3, kappa)
    lab = rng.integers(0, kappa, n)
    vals = all_queries(g, lab)
    assert vals["Q1"] + vals["Q2"] == len(g.undirected_edges)
    assert vals["Q4"] + vals["Q5"] <= n and vals["Q3"] <= n
    assert all_queries(g, rng.permutation(kappa)[lab]) == vals


def test_q4_q5_disjoint(rng):
    g = random_graph(rng, 18, 0.3, 3)
    lab = rng.integers(0, 3, 18)
    same = np.array([np.sum(lab[g.neighbors(i)] == lab[i]) for i in range(18)])
    deg = g.degrees()
    assert not np.any((2 * (deg - same) > deg) & (2 * same > deg))


def test_bad_labels_rejected(triangle):
    with pytest.raises(ValueError):
        q1(triangle, [0, 0])
    with pytest.raises(ValueError):
        q1(triangle, [0, 0, 2])


def two_node_setup():
    g = make_graph(2, [(0, 1)])
    split = ObservationSplit(np.zeros(2, dtype=bool), np.array([0, 0]))
    rv_index = np.array([[0, 1], [2, 3]])
    return g, split, rv_index


def test_discretize_examples():
    g = make_graph(2, [(0, 1)], kappa=3)
    split = ObservationSplit(np.array([True, False]), np.array([2, 0]))
    rv_index = np.array([[-1, -1, -1], [0, 1, 2]])
    assert discretize([0.2, 0.7, 0.1], rv_index, split).tolist() == [2, 1]
    assert discretize([0.5, 0.5, 0.0], rv_index, split).tolist() == [2, 0]
    rows = discretize(np.array([[0.2, 0.7, 0.1], [0.1, 0.1, 0.8]]), rv_index, split)
    assert rows.tolist() == [[2, 1], [2, 2]]
    bad = np.array([[-1, -1, -1], [0, -1, 2]])
    with pytest.raises(ValueError):
        discretize([0.2, 0.7, 0.1], bad, split)


def test_expected_query_arithmetic(triangle):
    split = split_of([0, 0, 0], [])
    rv_index = np.arange(6).reshape(3, 2)
    all_same = [1, 0, 1, 0, 1, 0]                 # Q1 = 3
    two_diff = [1, 0, 0, 1, 1, 0]                 # Q1 = 1
    assert expected_query("Q1", np.array([all_same]), triangle, split, rv_index) == 3.0
    assert expected_query("Q1", np.array([all_same, two_diff]), triangle, split, rv_index) == 2.0
    path = make_graph(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)])
    rvp = np.arange(8).reshape(4, 2)
    sp = split_of([0] * 4, [])
    a = np.array([1, 0] * 4, dtype=float)                 # all same: Q1 = 5
    b = np.array([1, 0, 1, 0, 1, 0, 0, 1], dtype=float)   # node 3 differs: Q1 = 3
    assert expected_query("Q1", np.array([a]), path, sp, rvp) == 5
    assert expected_query("Q1", np.array([b]), path, sp, rvp) == 3
    assert expected_query("Q1", np.array([b, a]), path, sp, rvp) == 4.0
    with pytest.raises(ValueError):
        expected_query("Q1", np.zeros((0, 8)), path, sp, rvp)


def test_single_sample_equals_point_query(rng):
    g = random_graph(rng, 12, 0.3, 3)
    split = ObservationSplit(rng.random(12) < 0.4, rng.integers(0, 3, 12))
    rv_index = np.full((12, 3), -1)
    hidden = split.unobserved_nodes
    rv_index[hidden] = np.arange(3 * len(hidden)).reshape(-1, 3)
    row = rng.random(3 * len(hidden))
    exp = expected_queries(row[None, :], g, split, rv_index)
    assert exp == {q: float(v) for q, v in all_queries(g, discretize(row, rv_index, split)).items()}


def test_two_node_expected_query_matches_quadrature():
    g, split, rv_index = two_node_setup()
    pots = [(3.0, {0: 1.0, 2: -1.0}, 0.0, 1), (3.0, {0: -1.0, 2: 1.0}, 0.0, 1), (2.0, {0: -1.0}, 0.8, 1)]
    rules = GroundRuleSet.from_potentials(4, pots, [[0, 1], [2, 3]])
    # quadrature over the free coordinates a = y0 and b = y2
    n = 600
    a, b = np.meshgrid((np.arange(n) + 0.5) / n, (np.arange(n) + 0.5) / n, indexing="ij")
    y = np.stack([a, 1 - a, b, 1 - b], axis=-1).reshape(-1, 4)
    dens = np.exp(-np.array([hinge_energy(pots, row) for row in y]))
    lab0 = np.where(y[:, 0] >= y[:, 1], 0, 1)
    lab1 = np.where(y[:, 2] >= y[:, 3], 0, 1)
    p_same = float(np.sum(dens * (lab0 == lab1)) / dens.sum())
    s = abgibbs_run(rules, None, np.full(4, 0.5), SamplerConfig(iterations=20100, burn_in=100, seed=3, thin_to=100))
    assert len(s) == 100
    est = expected_query("Q1", s, g, split, rv_index)
    assert abs(est - p_same) < 4 * math.sqrt(p_same * (1 - p_same) / 100)
    # the long chain pins the same quantity tightly
    full = abgibbs_run(rules, None, np.full(4, 0.5), SamplerConfig(iterations=40100, burn_in=100, seed=4))
    assert expected_query("Q1", full, g, split, rv_index) == pytest.approx(p_same, abs=0.03)


def test_relative_error():
    assert relative_error(3.0, 4) == (0.25, False)
    assert relative_error(2.0, 0) == (2.0, True)


def test_evaluate_exact_and_accuracy(rng):
    g = random_graph(rng, 15, 0.3, 3)
    truth = rng.integers(0, 3, 15)
    split = ObservationSplit(np.arange(15) < 5, truth)
    r = evaluate(all_queries(g, truth), truth, truth, g, split, "MAP")
    assert r.mean_delta == 0.0 and r.accuracy == 1.0 and r.accuracy_defined
    pred = truth.copy()
    pred[5:10] = (pred[5:10] + 1) % 3
    r = evaluate(all_queries(g, truth), truth, pred, g, split)
    assert r.accuracy == 0.5


def test_evaluate_zero_truth_and_report(tmp_path, triangle):
    truth = np.array([0, 0, 0])
    split = split_of(truth, [0, 1, 2])
    est = {"Q1": 3.0, "Q2": 0.5, "Q3": 0.0, "Q4": 0.0, "Q5": 3.0}
    r = evaluate(est, truth, truth, triangle, split, "MEAN")
    assert r.absolute["Q2"] and r.delta["Q2"] == 0.5 and not r.absolute["Q1"]
    assert r.mean_delta == pytest.approx(0.1)
    assert not r.accuracy_defined and math.isnan(r.accuracy)
    text = format_report([r])
    lines = text.splitlines()
    assert lines[0].split("\t") == ["method"] + [f"{q}-delta" for q in QUERY_IDS] + ["mean-delta", "Acc"]
    assert lines[1].split("\t")[2] == "0.500000*" and lines[1].endswith("NA")
    assert any("accuracy undefined" in line for line in lines)
    write_report([r], tmp_path / "r.tsv")
    assert (tmp_path / "r.tsv").read_text() == text


def test_evaluate_needs_truth(triangle):
    split = split_of([0, 0, 0], [0])
    with pytest.raises(ValueError):
        evaluate(dict.fromkeys(QUERY_IDS, 0.0), [0, -1, 0], [0, 0, 0], triangle, split)
    with pytest.raises(ValueError):
        evaluate({"Q1": 1.0}, [0, 0, 0], [0, 0, 0], triangle, split)
