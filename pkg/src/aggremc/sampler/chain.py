"""Blocked Metropolis-within-Gibbs chains over ground hinge-loss models."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..psl.grounding import GroundRuleSet
from ..psl.inference import Assignment, InfeasibleAssignmentError, constraint_violation
from . import kernel
from .blocks import AssociationBounds, BlockPartition, ablocks
from .diagnostics import effective_sample_size

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SamplerConfig:
    iterations: int = 1100
    burn_in: int = 100
    weight_threshold: float | None = None
    range_threshold: float = 0.1
    region_prob: float = 0.9
    seed: int = 0
    thin_to: int | None = None
    hastings_correction: bool = False
    chains: int = 1
    threads: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be positive")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must satisfy 0 <= burn_in < iterations")
        if not 0.0 <= self.range_threshold <= 1.0:
            raise ValueError("range_threshold must lie in [0, 1]")
        if not 0.0 <= self.region_prob <= 1.0:
            raise ValueError("region_prob must lie in [0, 1]")
        if self.thin_to is not None and self.thin_to < 0:
            raise ValueError("thin_to must be nonnegative")
        if self.chains < 1:
            raise ValueError("chains must be at least 1")


@dataclass
class SampleSet:
    """Retained draws (rows) over RVs (columns) plus chain diagnostics.

    ``chain_ids`` gives the chain of every row.  ``diagnostics`` holds
    arrays keyed by name; per-RV statistics (``mean``, ``var``, ``ess``) are
    computed on all retained draws before any thinning.
    """

    samples: np.ndarray
    chain_ids: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2:
            raise ValueError("samples must be a (draws, RVs) matrix")
        if self.chain_ids is None:
            self.chain_ids = np.zeros(len(self.samples), dtype=np.int64)

    def __len__(self):
        return len(self.samples)

    @property
    def n_rv(self) -> int:
        return self.samples.shape[1]

    def mean(self) -> np.ndarray:
        if "mean" in self.diagnostics:
            return self.diagnostics["mean"]
        return self.samples.mean(axis=0)


class _Engine:
    """Flat-array view of a model and block partition for the compiled sweep."""

    def __init__(self, rules: GroundRuleSet, partition: BlockPartition):
        n = rules.n_rv
        self.rules = rules
        self.partition = partition
        sizes = partition.sizes
        self.blk_ptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        self.blk_rv = np.concatenate(partition.blocks).astype(np.int64) if partition.blocks else np.zeros(0, np.int64)
        if len(self.blk_rv) != n or len(np.unique(self.blk_rv)) != n:
            raise ValueError("block partition does not cover every RV exactly once")

        nbr, kind, lo, hi, owner = [], [], [], [], []
        bounds = partition.bounds
        for a, b in sorted(bounds.associated):
            if (a, b) in bounds.plus:
                p_lo, p_hi = bounds.plus[(a, b)]
                owner += [a, b]; nbr += [b, a]; kind += [0, 0]; lo += [p_lo, p_lo]; hi += [p_hi, p_hi]
            if (a, b) in bounds.minus:
                m_lo, m_hi = bounds.minus[(a, b)]
                owner += [a, b]; nbr += [b, a]; kind += [1, 1]; lo += [m_lo, -m_hi]; hi += [m_hi, -m_lo]
        owner = np.asarray(owner, dtype=np.int64)
        order = np.argsort(owner, kind="stable")
        self.as_ptr = np.concatenate([[0], np.cumsum(np.bincount(owner, minlength=n))]).astype(np.int64)
        self.as_nbr = np.asarray(nbr, dtype=np.int64)[order]
        self.as_kind = np.asarray(kind, dtype=np.int64)[order]
        self.as_lo = np.asarray(lo, dtype=np.float64)[order]
        self.as_hi = np.asarray(hi, dtype=np.float64)[order]

        self.n_blocks = len(partition.blocks)
        self.buffer_size = 3 * n + 2 * self.n_blocks + 1
        n_groups = rules.n_constraints
        self.scratch = dict(
            in_block=np.zeros(n, dtype=np.bool_),
            determined=np.zeros(n, dtype=np.bool_),
            pending=np.zeros(max(n_groups, 1), dtype=np.int64),
            outside=np.zeros(max(n_groups, 1), dtype=np.int64),
            frontier=np.zeros(max(n, 1), dtype=np.int64),
            in_frontier=np.zeros(n, dtype=np.bool_),
            changed=np.zeros(2 * n + 1, dtype=np.int64),
        )
        self.pot_mark = np.zeros(max(rules.n_potentials, 1), dtype=np.int64)
        self.pots = np.zeros(max(rules.n_potentials, 1), dtype=np.int64)
        self.old = np.zeros(2 * n + 1, dtype=np.float64)

    def run(self, init: np.ndarray, config: SamplerConfig, rng: np.random.Generator):
        r = self.rules
        s = self.scratch
        y = np.array(init, dtype=np.float64)
        prop = y.copy()
        accepts = np.zeros(self.n_blocks, dtype=np.int64)
        infeasible = np.zeros(self.n_blocks, dtype=np.int64)
        fallbacks = np.zeros(self.n_blocks, dtype=np.int64)
        kept = config.iterations - config.burn_in
        out = np.empty((kept, r.n_rv))
        for t in range(1, config.iterations + 1):
            u = rng.random(self.buffer_size)
            kernel.sweep(
                y, prop, config.region_prob, config.hastings_correction,
                self.blk_ptr, self.blk_rv,
                self.as_ptr, self.as_nbr, self.as_kind, self.as_lo, self.as_hi,
                r.rv_group, r.con_ptr, r.con_rv,
                r.pot_ptr, r.term_rv, r.term_coef, r.pot_const, r.pot_weight, r.pot_power,
                r.inc_ptr, r.inc_pot,
                u,
                accepts, infeasible, fallbacks,
                s["in_block"], s["determined"], s["pending"], s["outside"],
                s["frontier"], s["in_frontier"], s["changed"],
                self.pot_mark, self.pots, self.old,
            )
            if t > config.burn_in:
                out[t - config.burn_in - 1] = y
        stats = dict(proposals=config.iterations, accepts=accepts, infeasible=infeasible, fallbacks=fallbacks)
        return out, stats


def _run_chains(rules, partition, map_state, config) -> SampleSet:
    init = map_state.values if isinstance(map_state, Assignment) else np.asarray(map_state, dtype=np.float64)
    if init.shape != (rules.n_rv,):
        raise ValueError("initial state has the wrong dimension")
    if constraint_violation(rules, init) > 1e-6:
        raise InfeasibleAssignmentError("sampler must start from a feasible state")
    root = np.random.SeedSequence(config.seed)
    seeds = root.spawn(config.chains)

    def one(i):
        engine = _Engine(rules, partition)
        return engine.run(init, config, np.random.Generator(np.random.PCG64(seeds[i])))

    if config.threads > 1 and config.chains > 1:
        with ThreadPoolExecutor(config.threads) as pool:
            results = list(pool.map(one, range(config.chains)))
    else:
        results = [one(i) for i in range(config.chains)]

    draws = np.concatenate([res[0] for res in results])
    chain_ids = np.repeat(np.arange(config.chains), [len(res[0]) for res in results])
    total = config.iterations * config.chains
    accepts = sum(res[1]["accepts"] for res in results)
    infeasible = sum(res[1]["infeasible"] for res in results)
    fallbacks = sum(res[1]["fallbacks"] for res in results)
    ess = np.zeros(rules.n_rv)
    for res in results:
        if len(res[0]):
            ess += effective_sample_size(res[0])
    diagnostics = dict(
        block_sizes=partition.sizes,
        block_acceptance=accepts / total,
        block_infeasible=infeasible / total,
        fallbacks=fallbacks,
        mean=draws.mean(axis=0) if len(draws) else np.full(rules.n_rv, np.nan),
        var=draws.var(axis=0) if len(draws) else np.full(rules.n_rv, np.nan),
        ess=ess,
        retained=np.array(len(draws)),
        chains=np.array(config.chains),
    )
    samples = SampleSet(draws, chain_ids, diagnostics)
    if config.thin_to is not None:
        samples = thin(samples, config.thin_to, np.random.default_rng([config.seed, 1]))
    return samples


def abgibbs_run(
    rules: GroundRuleSet,
    partition: BlockPartition | None,
    map_state,
    config: SamplerConfig | None = None,
) -> SampleSet:
    """Run the blocked sampler from ``map_state``.

    With ``partition=None`` the blocks are computed by :func:`ablocks` from
    ``config.weight_threshold`` and ``config.range_threshold``.  Each
    iteration proposes every block once and accepts with probability
    ``min(1, exp(E_current - E_proposed))`` over the potentials touching the
    block (times the proposal density ratio when
    ``config.hastings_correction`` is set).
    """
    config = config or SamplerConfig()
    if partition is None:
        partition = ablocks(rules, config.weight_threshold, config.range_threshold)
    return _run_chains(rules, partition, map_state, config)


def naive_mwg_run(rules: GroundRuleSet, map_state, config: SamplerConfig | None = None) -> SampleSet:
    """Single-site Metropolis-within-Gibbs baseline (every RV its own block)."""
    config = config or SamplerConfig()
    return _run_chains(rules, BlockPartition.singletons(rules.n_rv), map_state, config)


def thin(samples: SampleSet, k: int, rng: np.random.Generator) -> SampleSet:
    """Keep ``k`` rows chosen uniformly without replacement, in original order."""
    n = len(samples)
    if k > n:
        raise ValueError(f"cannot keep {k} of {n} samples")
    if k < 0:
        raise ValueError("k must be nonnegative")
    rows = np.sort(rng.choice(n, size=k, replace=False)) if k else np.zeros(0, dtype=np.int64)
    return SampleSet(samples.samples[rows], samples.chain_ids[rows], dict(samples.diagnostics))


def merge(sets: Sequence[SampleSet]) -> SampleSet:
    """Concatenate sample sets from independent chains, renumbering chain ids."""
    rows, ids, offset = [], [], 0
    for s in sets:
        rows.append(s.samples)
        ids.append(s.chain_ids + offset)
        offset = int(ids[-1].max()) + 1 if len(ids[-1]) else offset
    draws = np.concatenate(rows)
    return SampleSet(draws, np.concatenate(ids), {"mean": draws.mean(axis=0)})


def block_sample(block: Sequence[int], bounds: AssociationBounds, beta: float,
                 rng: np.random.Generator, n_rv: int | None = None) -> dict[int, float]:
    """Draw candidate values for the RVs of ``block`` (no sum constraints).

    The first RV is drawn from U(0, 1); each following RV associated with an
    already drawn one is drawn from its implied interval with probability
    ``beta`` and from U(0, 1) otherwise.
    """
    block = np.asarray(block, dtype=np.int64)
    if block.size == 0:
        raise ValueError("block must not be empty")
    n = int(n_rv if n_rv is not None else block.max() + 1)
    partition = BlockPartition([block] + [np.array([i]) for i in range(n) if i not in set(block.tolist())],
                               [], bounds, n)
    empty = GroundRuleSet.from_potentials(n, [])
    engine = _Engine(empty, partition)
    s = engine.scratch
    y = np.zeros(n)
    prop = np.zeros(n)
    u = rng.random(3 * len(block) + 1)
    n_changed, *_ = kernel.propose_block(
        block, y, prop, beta, False,
        engine.as_ptr, engine.as_nbr, engine.as_kind, engine.as_lo, engine.as_hi,
        empty.rv_group, empty.con_ptr, empty.con_rv,
        s["in_block"], s["determined"], s["pending"], s["outside"], s["frontier"], s["in_frontier"],
        s["changed"], u, 0,
    )
    changed = s["changed"][:n_changed]
    return {int(j): float(prop[j]) for j in changed}


# ---------------------------------------------------------------------------
# persistence


def write_samples(samples: SampleSet, names: Sequence[str], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(names) + "\n")
        for row in samples.samples:
            fh.write("\t".join(f"{v:.6f}" for v in row) + "\n")


def read_samples(path: str | Path) -> tuple[list[str], SampleSet]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\r\n")
        names = header.split("\t") if header else []
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\r\n")
            if not line:
                continue
            vals = line.split("\t")
            if len(vals) != len(names):
                raise ValueError(f"{path}:{lineno}: expected {len(names)} columns, got {len(vals)}")
            rows.append([float(v) for v in vals])
    return names, SampleSet(np.array(rows, dtype=np.float64).reshape(len(rows), len(names)))


def write_diagnostics(samples: SampleSet, path: str | Path) -> None:
    d = samples.diagnostics
    lines = [f"retained\t{len(samples)}"]
    if "retained" in d:
        lines.append(f"retained_before_thinning\t{int(d['retained'])}")
    if "chains" in d:
        lines.append(f"chains\t{int(d['chains'])}")
    if "block_sizes" in d:
        sizes = d["block_sizes"]
        lines += [f"blocks\t{len(sizes)}", f"largest_block\t{int(sizes.max()) if len(sizes) else 0}"]
    if "block_acceptance" in d and len(d["block_acceptance"]):
        acc = d["block_acceptance"]
        lines += [f"acceptance_mean\t{acc.mean():.6f}", f"acceptance_min\t{acc.min():.6f}",
                  f"acceptance_max\t{acc.max():.6f}"]
        lines.append(f"infeasible_rate_mean\t{d['block_infeasible'].mean():.6f}")
        lines.append(f"range_fallbacks\t{int(d['fallbacks'].sum())}")
    if "ess" in d and len(d["ess"]):
        ess = d["ess"]
        lines += [f"ess_min\t{ess.min():.3f}", f"ess_median\t{np.median(ess):.3f}", f"ess_mean\t{ess.mean():.3f}"]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
