"""Aggregate-query estimation on partially labelled citation graphs.

Subpackages: ``psl`` (templates, grounding, MAP, weight learning) and
``sampler`` (association blocks and the blocked Metropolis-within-Gibbs
chain).  ``aggregates`` holds the queries and error scores, ``pipeline``
and ``cli`` the staged runs.
"""

from .aggregates import QUERY_IDS, EstimateReport, all_queries, discretize, evaluate, expected_queries
from .data import AttributedGraph, CategoryDomain, ObservationSplit, load_graph
from .pipeline import PipelineConfig, load_config, run_pipeline, run_stage

__version__ = "0.1.0"

__all__ = [
    "QUERY_IDS",
    "AttributedGraph",
    "CategoryDomain",
    "EstimateReport",
    "ObservationSplit",
    "PipelineConfig",
    "all_queries",
    "discretize",
    "evaluate",
    "expected_queries",
    "load_config",
    "load_graph",
    "run_pipeline",
    "run_stage",
]
