"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import os
import time
from pathlib import Path

import numpy as np
import pytest
from scipy import integrate

from aggremc import pipeline
from aggremc.data import write_dataset
from aggremc.datasets import convert
from aggremc.psl.grounding import GroundRuleSet
from aggremc.psl.inference import energy, map_inference
from aggremc.sampler import SamplerConfig, abgibbs_run, ablocks, naive_mwg_run
from aggremc.synthetic import citation_graph, two_cluster_graph

from conftest import random_graph
from oracles import brute_queries, feasible_grid, grid_energies, grid_means_2d, hinge_energy, quadrature_means_1d
from aggregates_helpers import query_identities_hold


def line_means(pots):
    """Quadrature on the segment y0 + y1 = 1."""
    f = lambda a: np.exp(-hinge_energy(pots, [a, 1 - a]))
    z = integrate.quad(f, 0, 1, limit=200, epsabs=1e-12)[0]
    m = integrate.quad(lambda a: a * f(a), 0, 1, limit=200, epsabs=1e-12)[0] / z
    return np.array([m, 1 - m])


def coupling(w, a=0, b=1):
    return [(w, {a: 1.0, b: -1.0}, 0.0, 1), (w, {a: -1.0, b: 1.0}, 0.0, 1)]


# (n_rv, potentials, groups, oracle, sampler overrides)
MARGINAL_MODELS = {
    "hinge": (1, [(4.0, {0: 1.0}, -0.5, 1)], [], quadrature_means_1d, {}),
    "squared_pull": (1, [(3.0, {0: -1.0}, 0.7, 2)], [], quadrature_means_1d, {}),
    "opposing": (1, [(2.0, {0: 1.0}, -0.3, 1), (1.0, {0: -1.0}, 0.8, 1)], [], quadrature_means_1d, {}),
    "coupled": (2, coupling(2.0) + [(1.5, {0: -1.0}, 0.9, 1), (1.0, {1: 1.0}, -0.2, 2)], [], grid_means_2d, {}),
    "strong_coupled": (2, coupling(5.0) + [(1.0, {0: -1.0}, 0.8, 1)], [], grid_means_2d, {}),
    "simplex_pair": (2, [(3.0, {0: -1.0}, 0.7, 1), (1.0, {1: -1.0}, 0.6, 2)], [[0, 1]], line_means, {}),
    "blocked_pair": (2, coupling(3.0) + [(1.0, {0: -1.0}, 0.8, 1), (0.5, {1: 1.0}, -0.1, 1)], [], grid_means_2d,
                     {"weight_threshold": 2.0, "hastings_correction": True}),
}


def test_criterion_1_marginal_oracle(record):
    t0 = time.perf_counter()
    worst, names = 0.0, []
    for name, (n, pots, groups, oracle, extra) in MARGINAL_MODELS.items():
        rules = GroundRuleSet.from_potentials(n, pots, groups)
        cfg = SamplerConfig(iterations=50100, burn_in=100, seed=7, **extra)
        s = abgibbs_run(rules, None, np.full(n, 0.5), cfg)
        assert len(s) == 50000
        err = float(np.abs(s.mean() - oracle(pots)).max())
        worst = max(worst, err)
        if err >= 0.02:
            names.append(name)
    elapsed = time.perf_counter() - t0
    ok = worst < 0.02 and elapsed < 120
    record(1, ok, f"{len(MARGINAL_MODELS)} models, max |mean - quadrature| = {worst:.4f} (tol 0.02), "
                  f"{elapsed:.1f} s (limit 120 s){', failing: ' + ', '.join(names) if names else ''}")
    assert ok


def map_models():
    return [
        GroundRuleSet.from_potentials(1, [(2.0, {0: 1.0}, -0.3, 1), (1.0, {0: -1.0}, 0.8, 2)]),
        GroundRuleSet.from_potentials(2, coupling(4.0) + [(1.0, {0: -1.0}, 0.9, 1), (2.0, {1: 1.0}, -0.1, 1)]),
        GroundRuleSet.from_potentials(2, [(3.0, {0: -1.0}, 0.6, 2), (1.0, {1: -1.0}, 0.7, 1)], [[0, 1]]),
        GroundRuleSet.from_potentials(3, [(2.0, {0: -1.0}, 0.5, 1), (1.0, {1: -1.0}, 0.9, 2),
                                          (0.5, {2: 1.0, 0: -1.0}, 0.1, 1)], [[0, 1, 2]]),
        GroundRuleSet.from_potentials(3, coupling(3.0, 0, 1) + coupling(2.0, 1, 2) +
                                      [(1.0, {0: -1.0}, 1.0, 1), (1.5, {2: 1.0}, 0.0, 2), (0.7, {0: 1.0, 1: 1.0}, -1.2, 1)]),
        GroundRuleSet.from_potentials(3, [(5.0, {0: 1.0, 1: 1.0}, -0.4, 1), (2.0, {2: -1.0, 0: 1.0}, 0.3, 2),
                                          (1.0, {1: -1.0}, 0.8, 1)], [[1, 2]]),
    ]


def test_criterion_2_map_grid_oracle(record):
    t0 = time.perf_counter()
    gaps = []
    for rules in map_models():
        pts = feasible_grid(rules, 100)
        gaps.append(energy(rules, map_inference(rules)) - grid_energies(rules, pts).min())
    elapsed = time.perf_counter() - t0
    ok = max(gaps) <= 1e-3 and elapsed < 60
    record(2, ok, f"{len(gaps)} models, max energy(MAP) - grid min = {max(gaps):.2e} (tol 1e-3), "
                  f"{elapsed:.1f} s (limit 60 s)")
    assert ok


def test_criterion_3_query_oracle(record):
    rng = np.random.default_rng(2024)
    from aggremc.aggregates import all_queries
    mismatches = identities = 0
    for k in range(100):
        n = int(rng.integers(1, 21))
        kappa = int(rng.choice([2, 3, 4]))
        g = random_graph(rng, n, float(rng.uniform(0.05, 0.6)), kappa)
        lab = rng.integers(0, kappa, n)
        if all_queries(g, lab) != brute_queries(n, g.undirected_edges.tolist(), lab.tolist(), kappa):
            mismatches += 1
        if not query_identities_hold(g, lab):
            identities += 1
    ok = mismatches == 0 and identities == 0
    record(3, ok, f"100 random graphs: {mismatches} oracle mismatches, {identities} identity violations")
    assert ok


def blocks_of(p):
    return [b.tolist() for b in p.blocks]


def test_criterion_4_ablock_traces(record):
    cases = []
    # chain (a,b),(b,c),(c,d) of tight equality pairs -> one 4-block, e stays alone
    pots = coupling(20.0, 0, 1) + coupling(20.0, 1, 2) + coupling(20.0, 2, 3) + [(1.0, {4: 1.0}, -0.5, 1)]
    cases.append(("chain", ablocks(GroundRuleSet.from_potentials(5, pots), 10.0, 0.1), [[0, 1, 2, 3], [4]]))
    # a + b = 1 from two opposing hinges (plus bound {1,1})
    pots = [(10.0, {0: 1.0, 1: 1.0}, -1.0, 1), (10.0, {0: -1.0, 1: -1.0}, 1.0, 1)]
    cases.append(("sum_pair", ablocks(GroundRuleSet.from_potentials(2, pots), 5.0, 0.05), [[0, 1]]))
    # same pair under the weight threshold
    cases.append(("light", ablocks(GroundRuleSet.from_potentials(2, pots), 20.0, 0.05), [[0], [1]]))
    # a + b in [0.8, 1.0]: width 0.2 merges only when theta >= 0.2
    pots = [(9.0, {0: 1.0, 1: 1.0}, -1.0, 1), (9.0, {0: -1.0, 1: -1.0}, 0.8, 1)]
    cases.append(("wide_0.1", ablocks(GroundRuleSet.from_potentials(2, pots), 1.0, 0.1), [[0], [1]]))
    cases.append(("wide_0.2", ablocks(GroundRuleSet.from_potentials(2, pots), 1.0, 0.2), [[0, 1]]))
    # binary node group is a hard plus pair; a ternary group is not a pair
    cases.append(("binary_group", ablocks(GroundRuleSet.from_potentials(2, [], [[0, 1]]), 1e9, 0.0), [[0, 1]]))
    cases.append(("ternary_group", ablocks(GroundRuleSet.from_potentials(3, [], [[0, 1, 2]]), 0.0, 0.1),
                  [[0], [1], [2]]))
    # two disjoint tight pairs and one loose link between them
    pots = coupling(30.0, 0, 1) + coupling(30.0, 2, 3) + coupling(1.0, 1, 2)
    cases.append(("two_pairs", ablocks(GroundRuleSet.from_potentials(4, pots), 10.0, 0.1), [[0, 1], [2, 3]]))
    wrong = [name for name, p, expected in cases if blocks_of(p) != expected]
    ok = not wrong
    record(4, ok, f"{len(cases)} hand-traced partitions incl. 4-element chain merge"
                  + (f"; mismatched: {', '.join(wrong)}" if wrong else ""))
    assert ok


def blocking_model(n_nodes=10, seed=0):
    rng = np.random.default_rng(seed)
    pots = []
    for i in range(n_nodes):
        a, b = 2 * i, 2 * i + 1
        pots += [(50.0, {a: 1.0, b: 1.0}, -1.0, 1), (50.0, {a: -1.0, b: -1.0}, 1.0, 1),
                 (1.0, {a: -1.0}, float(rng.uniform(0.3, 0.9)), 1)]
    for i in range(n_nodes - 1):
        pots += coupling(1.0, 2 * i, 2 * i + 2)
    return GroundRuleSet.from_potentials(2 * n_nodes, pots)


def test_criterion_5_blocking_advantage(record):
    rules = blocking_model()
    cfg = SamplerConfig(iterations=5100, burn_in=100, seed=1, weight_threshold=10.0)
    init = np.full(rules.n_rv, 0.5)
    ab = abgibbs_run(rules, None, init, cfg).diagnostics["ess"]
    nv = naive_mwg_run(rules, init, cfg).diagnostics["ess"]
    ratio = ab / nv
    ok = bool(np.all(ratio >= 2.0))
    record(5, ok, f"per-RV ESS ratio ABGibbs/naive: min {ratio.min():.1f}, median {np.median(ratio):.1f} "
                  f"(need >= 2 on every RV; ESS {ab.min():.0f} vs {nv.max():.1f} at 5000 draws)")
    assert ok


def dataset_config(tmp_path, graph, split, mode, seed, name):
    paths = write_dataset(graph, split, tmp_path / name / "data")
    text = "\n".join([f"data.{k} = {v}" for k, v in paths.items()] + [f"mode = {mode}", f"seed = {seed}",
                                                                       f"out = {tmp_path / name / mode}"])
    return pipeline.parse_config(text)


def test_criterion_6_samples_beat_map(tmp_path, record):
    res = {"map": [], "samples": []}
    for seed in range(10):
        g, s = two_cluster_graph(seed=seed)
        for mode in res:
            cfg = dataset_config(tmp_path, g, s, mode, seed, f"seed{seed}")
            res[mode].append(pipeline.run_pipeline(cfg).mean_delta)
    m, smp = float(np.mean(res["map"])), float(np.mean(res["samples"]))
    ok = smp <= m
    record(6, ok, f"mean delta-hat over 10 seeds: SAMPLES {smp:.3f} vs MAP {m:.3f}")
    assert ok


@pytest.fixture(scope="module")
def cora_size_runs(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cora_size")
    g, s = citation_graph(seed=0)
    outs, times = [], []
    for k in range(2):
        cfg = dataset_config(tmp, g, s, "samples", 0, f"run{k}")
        t0 = time.perf_counter()
        report = pipeline.run_pipeline(cfg)
        times.append(time.perf_counter() - t0)
        outs.append(cfg.out)
    return g, outs, times, report


def test_criterion_7_cora_scale_runtime(cora_size_runs, record):
    g, outs, times, report = cora_size_runs
    rows = len((outs[0] / "samples.tsv").read_text().splitlines()) - 1
    ok = times[0] <= 600 and rows == 100 and (outs[0] / "report.tsv").exists()
    record(7, ok, f"{g.node_count} nodes, {len(g.edges)} edges, kappa {g.kappa}: pipeline {times[0]:.1f} s "
                  f"(limit 600 s), {rows} thinned samples, accuracy {report.accuracy:.3f}")
    assert ok


def test_criterion_8_cora_map_accuracy(tmp_path, record):
    source = os.environ.get("AGGREMC_CORA_DIR")
    if not source or not Path(source).is_dir():
        record(8, False, "Cora data not available: set AGGREMC_CORA_DIR to a Planetoid or LINQS Cora directory")
        pytest.fail("AGGREMC_CORA_DIR is not set to a Cora release; the accuracy criterion cannot be evaluated")
    paths = convert(source, tmp_path / "cora")
    text = "\n".join([f"data.{k} = {v}" for k, v in paths.items()] + ["mode = map", f"out = {tmp_path / 'out'}"])
    report = pipeline.run_pipeline(pipeline.parse_config(text))
    ok = report.accuracy >= 0.78
    record(8, ok, f"PSL-MAP accuracy on Cora {report.accuracy:.4f} (need >= 0.78)")
    assert ok


def artifact_bytes(out):
    return {p.name: p.read_bytes() for p in sorted(Path(out).iterdir()) if p.name != "timing.tsv"}


def test_criterion_9_determinism(tmp_path, cora_size_runs, record):
    _, outs, _, _ = cora_size_runs
    same = [artifact_bytes(outs[0]) == artifact_bytes(outs[1])]
    g, s = two_cluster_graph(seed=5)
    for mode in pipeline.MODES:
        a, b = (dataset_config(tmp_path, g, s, mode, 5, f"r{k}") for k in range(2))
        pipeline.run_pipeline(a)
        pipeline.run_pipeline(b)
        same.append(artifact_bytes(a.out) == artifact_bytes(b.out))
    ok = all(same)
    record(9, ok, f"{sum(same)}/{len(same)} repeated runs byte-identical (Cora-size samples; small graph in "
                  f"map, mean, samples modes; timing.tsv excluded)")
    assert ok
