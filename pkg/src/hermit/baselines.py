"""Comparison structures: the complete ordered secondary index and
correlation maps.

CompleteSecondaryIndex is the conventional approach (one ordered-map
entry per live non-null value) and doubles as the host-index
implementation, so space comparisons against it are apples-to-apples.

CorrelationMap buckets both columns by fixed widths and records which
host buckets each target bucket maps into.  Lookups widen the predicate
to whole buckets, scan the host index over the mapped bucket ranges, and
rely on base-table validation for exactness.  Deletes are conservative:
mappings are never garbage-collected (coverage is never lost); call
rebuild() to shrink after heavy deletion.
"""

from __future__ import annotations

import math
from typing import Dict, List, Set, Tuple

import numpy as np

from hermit.ordmap import OrderedMap
from hermit.ranges import ValueRange
from hermit.table import Table


class CompleteSecondaryIndex:
    """Ordered multimap: column value -> tuple-id tokens, with range scans."""

    def __init__(self, table: Table, column) -> None:
        self.table = table
        self.column = table.column_ordinal(column)
        self.map = OrderedMap(val_dtype=table.token_dtype())
        self.rebuild()

    def rebuild(self) -> None:
        vals, usable = self.table.column_data(self.column)
        slots = np.nonzero(usable)[0]
        keys = vals[slots]
        tokens = self.table.tokens_for_slots(slots)
        order = np.argsort(keys, kind="stable")
        self.map = OrderedMap(val_dtype=self.table.token_dtype())
        self.map.bulk_load(keys[order], tokens[order])

    def on_insert(self, values, token) -> None:
        v = values[self.column]
        if v is not None:
            self.map.insert(v, token)

    def on_delete(self, values, token) -> None:
        v = values[self.column]
        if v is not None:
            self.map.remove(v, token)

    def scan(self, lb: float, ub: float, include_ub: bool = True) -> np.ndarray:
        return self.map.scan(lb, ub, include_ub)

    def __len__(self) -> int:
        return len(self.map)

    def memory_bytes(self) -> int:
        return self.map.memory_bytes()


class CorrelationMap:
    """Bucketized target -> host mapping (the correlation-maps baseline)."""

    def __init__(
        self,
        table: Table,
        target_col,
        host_col,
        target_bucket_width: float,
        host_bucket_width: float,
    ) -> None:
        if target_bucket_width <= 0 or host_bucket_width <= 0:
            raise ValueError("bucket widths must be positive")
        self.table = table
        self.target_col = table.column_ordinal(target_col)
        self.host_col = table.column_ordinal(host_col)
        if self.target_col == self.host_col:
            raise ValueError("target and host columns must differ")
        self.target_width = float(target_bucket_width)
        self.host_width = float(host_bucket_width)
        self.mapping: Dict[int, Set[int]] = {}
        self.rebuild()

    def rebuild(self) -> None:
        pairs = self.table.project_pairs(self.target_col, self.host_col)
        self.mapping = {}
        if len(pairs) == 0:
            return
        tb = np.floor(pairs.ms / self.target_width).astype(np.int64)
        hb = np.floor(pairs.ns / self.host_width).astype(np.int64)
        uniq = np.unique(np.stack([tb, hb], axis=1), axis=0)
        for t, h in uniq.tolist():
            self.mapping.setdefault(t, set()).add(h)

    def on_insert(self, values, token) -> None:
        m = values[self.target_col]
        n = values[self.host_col]
        if m is None or n is None:
            return
        tb = math.floor(m / self.target_width)
        self.mapping.setdefault(tb, set()).add(math.floor(n / self.host_width))

    def on_delete(self, values, token) -> None:
        # Conservative: stale mappings only ever widen candidate sets.
        return

    def host_ranges(self, pred: ValueRange) -> List[Tuple[float, float]]:
        """Half-open host value ranges covering the predicate's buckets."""
        b0 = math.floor(pred.lb / self.target_width)
        b1 = math.floor(pred.ub / self.target_width)
        ords: Set[int] = set()
        for tb in range(b0, b1 + 1):
            hit = self.mapping.get(tb)
            if hit:
                ords.update(hit)
        if not ords:
            return []
        ranges: List[Tuple[float, float]] = []
        run_start = prev = None
        for o in sorted(ords):
            if prev is not None and o == prev + 1:
                prev = o
                continue
            if prev is not None:
                ranges.append((run_start * self.host_width, (prev + 1) * self.host_width))
            run_start = prev = o
        ranges.append((run_start * self.host_width, (prev + 1) * self.host_width))
        return ranges

    def candidate_tokens(self, pred: ValueRange, host: CompleteSecondaryIndex) -> np.ndarray:
        parts = [host.scan(lo, hi, include_ub=False) for lo, hi in self.host_ranges(pred)]
        if not parts:
            return np.empty(0, dtype=host.map.val_dtype)
        return np.concatenate(parts)

    def check_coverage(self) -> None:
        """Assert the mapping covers every live (target, host) pair."""
        pairs = self.table.project_pairs(self.target_col, self.host_col)
        for m, n in zip(pairs.ms.tolist(), pairs.ns.tolist()):
            tb = math.floor(m / self.target_width)
            hb = math.floor(n / self.host_width)
            assert hb in self.mapping.get(tb, ()), f"uncovered pair ({m}, {n})"

    def entry_count(self) -> int:
        return sum(len(s) for s in self.mapping.values())

    def memory_bytes(self) -> int:
        # 16 bytes per target-bucket key entry + 8 per mapped host ordinal
        return len(self.mapping) * 16 + self.entry_count() * 8
