"""Staged end-to-end runs: prior -> ground -> map -> sample -> query -> evaluate.

Every stage reads its inputs from the output directory and writes its
artifacts there, so running the stages one by one gives the same files as a
full pipeline run.  Files are written under a ``.partial`` name and renamed
once complete.
"""

from __future__ import annotations

import logging
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import aggregates
from .data import AttributedGraph, ObservationSplit, load_graph, write_id_map
from .prior import LRConfig, predict_priors, read_priors, train_lr, write_priors
from .psl.grounding import GroundRuleSet, ground
from .psl.inference import Assignment, map_inference
from .psl.learning import learn_weights
from .psl.model import DEFAULT_WEIGHTS, RuleTemplate, build_model, read_model, write_model
from .sampler.chain import SamplerConfig, abgibbs_run, read_samples, write_diagnostics, write_samples

log = logging.getLogger(__name__)

MODES = ("map", "mean", "samples")
STAGES = ("prior", "ground", "map", "sample", "query", "evaluate")
METHOD_NAMES = {"map": "PSL-MAP", "mean": "PSL-MEAN", "samples": "PSL-SAMPLES"}

# per-stage offsets added to the global seed
SEED_OFFSETS = {"learn": 11, "sample": 23}

ARTIFACTS = {
    "priors": "priors.tsv",
    "model": "model.learned.tsv",
    "rules": "ground.npz",
    "map": "map.tsv",
    "samples": "samples.tsv",
    "means": "means.tsv",
    "diagnostics": "diagnostics.txt",
    "estimates": "estimates.tsv",
    "predicted": "predicted.tsv",
    "report": "report.tsv",
    "timing": "timing.tsv",
    "ids": "ids.tsv",
}
PRODUCER = {"priors": "prior", "model": "ground", "rules": "ground", "map": "map",
            "samples": "sample", "means": "sample", "estimates": "query", "predicted": "query"}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException | str):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {cause}")


@dataclass
class PipelineConfig:
    edges: Path
    labels: Path
    split: Path
    features: Path | None = None
    categories: tuple[str, ...] | None = None
    model: Path | None = None
    model_weights: dict = field(default_factory=dict)
    lr: LRConfig = field(default_factory=LRConfig)
    learn_steps: int = 10
    learn_step_size: float = 0.01
    learn_holdout: float = 0.5
    map_tolerance: float = 1e-5
    map_max_iters: int = 20000
    sampler: SamplerConfig = field(default_factory=lambda: SamplerConfig(thin_to=100))
    mode: str = "samples"
    out: Path = Path("out")
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0.0 <= self.learn_holdout < 1.0:
            raise ValueError("learn.holdout must lie in [0, 1)")
        if self.learn_steps < 0:
            raise ValueError("learn.steps must be nonnegative")
        if self.threads < 1:
            raise ValueError("threads must be positive")

    def check_paths(self) -> None:
        for key in ("edges", "labels", "split", "features", "model"):
            p = getattr(self, key)
            if p is not None and not Path(p).exists():
                raise FileNotFoundError(f"{key} file not found: {p}")

    def path(self, artifact: str) -> Path:
        return Path(self.out) / ARTIFACTS[artifact]


# --------------------------------------------------------------------------
# config file


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional(conv):
    return lambda text: None if text.strip().lower() in ("", "none", "auto") else conv(text)


_LR_KEYS = {f.name: (int if f.type in ("int", int) else float) for f in fields(LRConfig)}
_SAMPLER_KEYS = {
    "iterations": int, "burn_in": int, "weight_threshold": _optional(float), "range_threshold": float,
    "region_prob": float, "seed": int, "thin_to": _optional(int), "hastings_correction": _bool,
    "chains": int,
}


def parse_config(text: str, base: Path | None = None, overrides: dict | None = None) -> PipelineConfig:
    """Parse ``key = value`` lines (``#`` starts a comment).

    Relative paths resolve against ``base``.  ``overrides`` are applied on
    top of the file, with the same keys.
    """
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"config line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key] = value
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = str(value)
    base = Path(base) if base is not None else Path.cwd()

    def path(key, required=True):
        if key not in raw or raw[key].lower() in ("", "none"):
            if required:
                raise ValueError(f"config key '{key}' is required")
            return None
        p = Path(raw.pop(key)).expanduser()
        return p if p.is_absolute() else base / p

    kw: dict = dict(
        edges=path("data.edges"), labels=path("data.labels"), split=path("data.split"),
        features=path("data.features", False), model=path("model", False),
    )
    out = path("out", False)
    if out is not None:
        kw["out"] = out
    if "data.categories" in raw:
        kw["categories"] = tuple(c.strip() for c in raw.pop("data.categories").split(",") if c.strip())
    lr, sampler, weights = {}, {}, {}
    for key in list(raw):
        value = raw.pop(key)
        section, _, name = key.partition(".")
        try:
            if section == "lr" and name in _LR_KEYS:
                lr[name] = _LR_KEYS[name](value)
            elif section == "sampler" and name in _SAMPLER_KEYS:
                sampler[name] = _SAMPLER_KEYS[name](value)
            elif section == "model" and name in DEFAULT_WEIGHTS:
                weights[name] = [float(v) for v in value.split(",")] if "," in value else float(value)
            elif key == "learn.steps":
                kw["learn_steps"] = int(value)
            elif key == "learn.step_size":
                kw["learn_step_size"] = float(value)
            elif key == "learn.holdout":
                kw["learn_holdout"] = float(value)
            elif key == "map.tolerance":
                kw["map_tolerance"] = float(value)
            elif key == "map.max_iters":
                kw["map_max_iters"] = int(value)
            elif key == "mode":
                kw["mode"] = value
            elif key == "seed":
                kw["seed"] = int(value)
            elif key == "threads":
                kw["threads"] = int(value)
            else:
                raise ValueError("unknown key")
        except ValueError as exc:
            raise ValueError(f"config key '{key}': {exc}") from None
    kw["lr"] = LRConfig(**lr)
    seed = kw.get("seed", 0)
    sampler.setdefault("seed", seed + SEED_OFFSETS["sample"])
    sampler.setdefault("thin_to", 100)
    sampler.setdefault("threads", kw.get("threads", 1))
    kw["sampler"] = SamplerConfig(**sampler)
    kw["model_weights"] = weights
    return PipelineConfig(**kw)


def load_config(path: str | Path, overrides: dict | None = None) -> PipelineConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), path.parent, overrides)


# --------------------------------------------------------------------------
# helpers


@contextmanager
def _atomic(path: Path):
    """Yield a ``.partial`` path; rename it to ``path`` on success."""
    partial = path.with_name(path.name + ".partial")
    yield partial
    os.replace(partial, path)


def _require(cfg: PipelineConfig, artifact: str) -> Path:
    p = cfg.path(artifact)
    if not p.exists():
        raise FileNotFoundError(f"missing {p.name}; run the '{PRODUCER[artifact]}' stage first")
    return p


def load_data(cfg: PipelineConfig) -> tuple[AttributedGraph, ObservationSplit]:
    return load_graph(cfg.edges, cfg.features, cfg.labels, cfg.split, categories=cfg.categories)


def base_model(cfg: PipelineConfig, graph: AttributedGraph) -> list[RuleTemplate]:
    if cfg.model is not None:
        return read_model(cfg.model)
    return build_model(graph.categories.names, cfg.model_weights or None)


def induced_subgraph(graph: AttributedGraph, nodes: np.ndarray) -> AttributedGraph:
    nodes = np.asarray(nodes, dtype=np.int64)
    new_id = np.full(graph.node_count, -1, dtype=np.int64)
    new_id[nodes] = np.arange(len(nodes))
    e = graph.undirected_edges
    keep = (new_id[e[:, 0]] >= 0) & (new_id[e[:, 1]] >= 0)
    return AttributedGraph(len(nodes), new_id[e[keep]], graph.categories, graph.features[nodes],
                           [graph.node_ids[i] for i in nodes])


def learning_split(split: ObservationSplit, holdout: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Divide observed nodes into (learn-observed, learn-target), stratified by class."""
    rng = np.random.default_rng(seed)
    obs = split.observed_nodes
    labels = split.true_labels[obs]
    target = np.zeros(len(obs), dtype=bool)
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        k = int(np.floor(holdout * len(members)))
        if k >= len(members):
            k = len(members) - 1
        target[rng.permutation(members)[:k]] = True
    return obs[~target], obs[target]


def learn_model(templates, graph, split, cfg: PipelineConfig) -> list[RuleTemplate]:
    """Fit soft template weights on the observed part of the graph.

    Half of the observed nodes (per class) act as training targets; the rest
    stay observed and also train the regression that supplies their priors.
    """
    if cfg.learn_steps == 0 or cfg.learn_holdout == 0:
        return list(templates)
    keep, target = learning_split(split, cfg.learn_holdout, cfg.seed + SEED_OFFSETS["learn"])
    if len(target) == 0:
        return list(templates)
    nodes = np.sort(np.concatenate([keep, target]))
    sub = induced_subgraph(graph, nodes)
    pos = {int(n): i for i, n in enumerate(nodes)}
    mask = np.zeros(len(nodes), dtype=bool)
    mask[[pos[int(n)] for n in keep]] = True
    sub_split = ObservationSplit(mask, split.true_labels[nodes])
    priors = predict_priors(train_lr(sub, sub_split, cfg.lr), sub)
    rules = ground(templates, sub, sub_split, priors)
    if rules.n_rv == 0:
        return list(templates)
    weights = learn_weights(templates, rules, sub_split, cfg.learn_steps, cfg.learn_step_size,
                            map_tolerance=cfg.map_tolerance, map_max_iters=cfg.map_max_iters)
    return [t.with_weight(w) if w is not None else t for t, w in zip(templates, weights)]


def _write_values(path: Path, names, values) -> None:
    with _atomic(path) as tmp, open(tmp, "w", encoding="utf-8") as fh:
        for name, v in zip(names, values):
            fh.write(f"{name}\t{float(v)!r}\n")


def _read_values(path: Path, expected: list[str]) -> np.ndarray:
    names, values = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'rv<TAB>value'")
            names.append(cols[0])
            values.append(float(cols[1]))
    if names != expected:
        raise ValueError(f"{path}: RV names do not match the ground model")
    return np.array(values, dtype=np.float64)


def _read_labels_file(path: Path, graph: AttributedGraph) -> np.ndarray:
    lab = np.full(graph.node_count, -1, dtype=np.int64)
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\r\n")
            if line:
                node, cat = line.split("\t")
                lab[graph.internal_id(node)] = graph.categories.index(cat)
    return lab


# --------------------------------------------------------------------------
# stages


def stage_prior(cfg: PipelineConfig) -> Path:
    graph, split = load_data(cfg)
    weights = train_lr(graph, split, cfg.lr)
    table = predict_priors(weights, graph)
    with _atomic(cfg.path("ids")) as tmp:
        write_id_map(graph, tmp)
    with _atomic(cfg.path("priors")) as tmp:
        write_priors(graph, table, tmp)
    return cfg.path("priors")


def stage_ground(cfg: PipelineConfig) -> Path:
    graph, split = load_data(cfg)
    priors = read_priors(graph, _require(cfg, "priors"))
    templates = learn_model(base_model(cfg, graph), graph, split, cfg)
    with _atomic(cfg.path("model")) as tmp:
        write_model(templates, tmp)
    rules = ground(templates, graph, split, priors)
    with _atomic(cfg.path("rules")) as tmp:
        rules.save(tmp)
    return cfg.path("rules")


def _load_rules(cfg):
    return GroundRuleSet.load(_require(cfg, "rules"))


def stage_map(cfg: PipelineConfig) -> Path:
    graph, _ = load_data(cfg)
    rules = _load_rules(cfg)
    names = rules.rv_names(graph)
    if rules.n_rv == 0:
        values = np.zeros(0)
    else:
        values = map_inference(rules, tolerance=cfg.map_tolerance, max_iters=cfg.map_max_iters).values
    _write_values(cfg.path("map"), names, values)
    return cfg.path("map")


def stage_sample(cfg: PipelineConfig) -> Path:
    graph, _ = load_data(cfg)
    rules = _load_rules(cfg)
    names = rules.rv_names(graph)
    init = _read_values(_require(cfg, "map"), names)
    sampler = cfg.sampler
    retained = (sampler.iterations - sampler.burn_in) * sampler.chains
    if sampler.thin_to is not None and sampler.thin_to > retained:
        raise ValueError(f"thin_to={sampler.thin_to} exceeds the {retained} retained samples")
    if rules.n_rv == 0:
        from .sampler.chain import SampleSet
        k = sampler.thin_to if sampler.thin_to is not None else retained
        samples = SampleSet(np.zeros((k, 0)), diagnostics={"mean": np.zeros(0)})
    else:
        samples = abgibbs_run(rules, None, Assignment(init), sampler)
    with _atomic(cfg.path("samples")) as tmp:
        write_samples(samples, names, tmp)
    _write_values(cfg.path("means"), names, samples.mean())
    with _atomic(cfg.path("diagnostics")) as tmp:
        write_diagnostics(samples, tmp)
    return cfg.path("samples")


def _majority(labels: np.ndarray, kappa: int) -> np.ndarray:
    counts = np.zeros((labels.shape[1], kappa), dtype=np.int64)
    for row in labels:
        counts[np.arange(labels.shape[1]), row] += 1
    return counts.argmax(axis=1)


def stage_query(cfg: PipelineConfig) -> Path:
    graph, split = load_data(cfg)
    rules = _load_rules(cfg)
    names = rules.rv_names(graph)
    index = rules.rv_index()
    if cfg.mode == "map":
        predicted = aggregates.discretize(_read_values(_require(cfg, "map"), names), index, split)
        estimates = aggregates.all_queries(graph, predicted)
    elif cfg.mode == "mean":
        predicted = aggregates.discretize(_read_values(_require(cfg, "means"), names), index, split)
        estimates = aggregates.all_queries(graph, predicted)
    else:
        header, samples = read_samples(_require(cfg, "samples"))
        if header != names:
            raise ValueError("sample file columns do not match the ground model")
        if len(samples) == 0:
            raise ValueError("sample file has no rows")
        labels = aggregates.discretize(samples.samples, index, split)
        estimates = aggregates.expected_queries(samples, graph, split, index)
        predicted = _majority(labels, graph.kappa)
    with _atomic(cfg.path("estimates")) as tmp, open(tmp, "w", encoding="utf-8") as fh:
        fh.write(f"# mode\t{cfg.mode}\n")
        for q in aggregates.QUERY_IDS:
            fh.write(f"{q}\t{float(estimates[q])!r}\n")
    with _atomic(cfg.path("predicted")) as tmp, open(tmp, "w", encoding="utf-8") as fh:
        for node, lab in zip(graph.node_ids, predicted):
            fh.write(f"{node}\t{graph.categories.names[lab]}\n")
    return cfg.path("estimates")


def read_estimates(path: Path) -> tuple[str | None, dict[str, float]]:
    mode, est = None, {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\r\n")
            if line.startswith("# mode\t"):
                mode = line.split("\t", 1)[1]
            elif line and not line.startswith("#"):
                q, v = line.split("\t")
                est[q] = float(v)
    return mode, est


def stage_evaluate(cfg: PipelineConfig) -> aggregates.EstimateReport:
    graph, split = load_data(cfg)
    if not split.has_full_truth:
        raise ValueError(f"evaluation needs a true label for every node in the label file {cfg.labels}")
    mode, estimates = read_estimates(_require(cfg, "estimates"))
    predicted = _read_labels_file(_require(cfg, "predicted"), graph)
    report = aggregates.evaluate(estimates, split.true_labels, predicted, graph, split,
                                 METHOD_NAMES.get(mode or cfg.mode, mode or cfg.mode))
    with _atomic(cfg.path("report")) as tmp:
        aggregates.write_report([report], tmp)
    return report


STAGE_FUNCS: dict[str, Callable] = {
    "prior": stage_prior, "ground": stage_ground, "map": stage_map,
    "sample": stage_sample, "query": stage_query, "evaluate": stage_evaluate,
}


def _timing_lines(times: dict[str, float]) -> str:
    lines = [f"{name}\t{sec:.3f}" for name, sec in times.items()]
    lines.append(f"total\t{sum(times.values()):.3f}")
    return "stage\tseconds\n" + "\n".join(lines) + "\n"


def run_stage(name: str, cfg: PipelineConfig):
    if name not in STAGE_FUNCS:
        raise StageError(name, f"unknown stage; choose from {', '.join(STAGES)}")
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    try:
        cfg.check_paths()
        return STAGE_FUNCS[name](cfg)
    except StageError:
        raise
    except Exception as exc:  # noqa: BLE001 - surfaced with the stage name
        raise StageError(name, exc) from exc


def run_pipeline(cfg: PipelineConfig) -> aggregates.EstimateReport:
    """Run every stage in order; ``sample`` is skipped in ``map`` mode."""
    times: dict[str, float] = {}
    report = None
    for name in STAGES:
        if name == "sample" and cfg.mode == "map":
            continue
        t0 = time.perf_counter()
        result = run_stage(name, cfg)
        times[name] = time.perf_counter() - t0
        log.info("%s finished in %.2f s", name, times[name])
        if name == "evaluate":
            report = result
    with _atomic(cfg.path("timing")) as tmp:
        tmp.write_text(_timing_lines(times), encoding="utf-8")
    return report


def with_overrides(cfg: PipelineConfig, **kw) -> PipelineConfig:
    kw = {k: v for k, v in kw.items() if v is not None}
    return replace(cfg, **kw)
