"""Succinct correlation-based secondary indexing engine.

Instead of a complete index per queried column, a succinct regression
search tree maps a target column's values onto a correlated host column
that already has a complete index; an exact multi-step lookup pipeline
(tree, host index, optional primary hop, base-table validation) removes
every false positive.  Baseline structures and a benchmark CLI are
included for comparison.
"""

from hermit.baselines import CompleteSecondaryIndex, CorrelationMap
from hermit.datagen import WorkloadSpec, generate, generate_queries
from hermit.engine import (
    Engine,
    HermitIndex,
    LookupMetrics,
    baseline_lookup,
    cm_lookup,
    hermit_lookup,
)
from hermit.kernels import BACKEND as KERNEL_BACKEND
from hermit.ranges import ValueRange, union_ranges
from hermit.table import (
    LOGICAL,
    PHYSICAL,
    Predicate,
    Table,
    TupleId,
    read_table,
    scan_oracle,
    write_table,
)
from hermit.trstree import LookupAnswer, TrsParams, TrsTree

__version__ = "0.1.0"

__all__ = [
    "CompleteSecondaryIndex",
    "CorrelationMap",
    "Engine",
    "HermitIndex",
    "KERNEL_BACKEND",
    "LOGICAL",
    "LookupAnswer",
    "LookupMetrics",
    "PHYSICAL",
    "Predicate",
    "Table",
    "TrsParams",
    "TrsTree",
    "TupleId",
    "ValueRange",
    "WorkloadSpec",
    "baseline_lookup",
    "cm_lookup",
    "generate",
    "generate_queries",
    "hermit_lookup",
    "read_table",
    "scan_oracle",
    "union_ranges",
    "write_table",
]
