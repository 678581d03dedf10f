from .blocks import AssociationBounds, BlockPartition, ablocks, collect_bounds, default_weight_threshold
from .chain import (
    SampleSet,
    SamplerConfig,
    abgibbs_run,
    block_sample,
    merge,
    naive_mwg_run,
    read_samples,
    thin,
    write_diagnostics,
    write_samples,
)
from .diagnostics import autocorrelation, effective_sample_size

__all__ = [
    "AssociationBounds",
    "BlockPartition",
    "SampleSet",
    "SamplerConfig",
    "abgibbs_run",
    "ablocks",
    "autocorrelation",
    "block_sample",
    "collect_bounds",
    "default_weight_threshold",
    "effective_sample_size",
    "merge",
    "naive_mwg_run",
    "read_samples",
    "thin",
    "write_diagnostics",
    "write_samples",
]
