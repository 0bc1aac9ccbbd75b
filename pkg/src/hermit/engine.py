"""Secondary-indexing engine: registration, maintenance, exact lookups.

An Engine wraps one table and keeps every registered index in lockstep
with it.  A correlation-backed index pairs a regression search tree on
the target column with a complete host index on the correlated column;
several such indexes can share one host index.  Lookups run the
multi-step pipeline:

  1. tree lookup           -> host ranges + buffered tuple-id tokens
  2. host index range scan -> candidate tokens (unioned with step 1's)
  3. primary index hop     -> slots (logical tuple ids only)
  4. base table validation -> exact rows

Results equal a full-scan oracle exactly; approximation only ever widens
the candidate set.  Baseline (complete secondary index) and correlation-
map lookups reuse steps 3-4 so per-step timings are comparable.

Mutations go through a single writer lane (engine-level lock); lookups
take no locks.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from time import perf_counter
from typing import Dict, List, Optional, Tuple

import numpy as np

from hermit.baselines import CompleteSecondaryIndex, CorrelationMap
from hermit.ranges import ValueRange
from hermit.table import LOGICAL, MissingKeyError, Predicate, Table, TupleId, scan_oracle
from hermit.trstree import TrsParams, TrsTree


@dataclass
class LookupMetrics:
    steps: Dict[str, float]
    candidate_count: int
    result_count: int

    @property
    def false_positive_ratio(self) -> float:
        if self.candidate_count == 0:
            return 0.0
        return (self.candidate_count - self.result_count) / self.candidate_count

    def time_fractions(self) -> Dict[str, float]:
        total = sum(self.steps.values())
        if total <= 0.0:
            return {k: 0.0 for k in self.steps}
        return {k: v / total for k, v in self.steps.items()}


def _collect_candidates(host: CompleteSecondaryIndex, answer, token_dtype) -> np.ndarray:
    parts = [host.scan(r.lb, r.ub) for r in answer.host_ranges]
    if answer.outlier_tokens:
        parts.append(np.asarray(list(answer.outlier_tokens), dtype=token_dtype))
    if not parts:
        return np.empty(0, dtype=token_dtype)
    return np.unique(np.concatenate(parts))


def _resolve_and_validate(
    table: Table,
    candidates: np.ndarray,
    pred: Predicate,
    second: Optional[Predicate],
) -> Tuple[np.ndarray, float, float]:
    """Steps 3-4; returns (slots, primary_seconds, validation_seconds)."""
    t0 = perf_counter()
    slots, ok = table.slots_for_tokens(candidates)
    t1 = perf_counter()
    result = table.filter_slots(slots[ok], (pred, second))
    t2 = perf_counter()
    primary_seconds = (t1 - t0) if table.id_scheme == LOGICAL else 0.0
    return result, primary_seconds, t2 - t1


class HermitIndex:
    """One correlation-backed secondary index (tree + shared host index)."""

    def __init__(
        self,
        name: str,
        table: Table,
        target_col: int,
        host_col: int,
        tree: TrsTree,
        host: CompleteSecondaryIndex,
    ) -> None:
        self.name = name
        self.table = table
        self.target_col = target_col
        self.host_col = host_col
        self.tree = tree
        self.host = host

    def on_insert(self, row, token) -> None:
        m = row[self.target_col]
        if m is None:
            return
        self.tree.insert(m, row[self.host_col], token)

    def on_delete(self, row, token) -> None:
        m = row[self.target_col]
        if m is None:
            return
        self.tree.delete(m, row[self.host_col], token)

    def lookup(self, pred: Predicate, second: Optional[Predicate] = None) -> np.ndarray:
        slots, _ = self.lookup_metrics(pred, second)
        return slots

    def lookup_metrics(
        self, pred: Predicate, second: Optional[Predicate] = None
    ) -> Tuple[np.ndarray, LookupMetrics]:
        t0 = perf_counter()
        answer = self.tree.lookup(pred.vrange)
        t1 = perf_counter()
        candidates = _collect_candidates(self.host, answer, self.table.token_dtype())
        t2 = perf_counter()
        result, primary_s, validation_s = _resolve_and_validate(self.table, candidates, pred, second)
        metrics = LookupMetrics(
            steps={
                "trs_lookup": t1 - t0,
                "host_index": t2 - t1,
                "primary_index": primary_s,
                "validation": validation_s,
            },
            candidate_count=int(candidates.shape[0]),
            result_count=int(result.shape[0]),
        )
        return result, metrics


def hermit_lookup(index: HermitIndex, pred: Predicate, second: Optional[Predicate] = None) -> np.ndarray:
    return index.lookup(pred, second)


def baseline_lookup_metrics(
    index: CompleteSecondaryIndex,
    pred: Predicate,
    table: Table,
    second: Optional[Predicate] = None,
) -> Tuple[np.ndarray, LookupMetrics]:
    t0 = perf_counter()
    candidates = index.scan(pred.vrange.lb, pred.vrange.ub)
    t1 = perf_counter()
    result, primary_s, validation_s = _resolve_and_validate(table, candidates, pred, second)
    metrics = LookupMetrics(
        steps={
            "secondary_index": t1 - t0,
            "primary_index": primary_s,
            "validation": validation_s,
        },
        candidate_count=int(candidates.shape[0]),
        result_count=int(result.shape[0]),
    )
    return result, metrics


def baseline_lookup(
    index: CompleteSecondaryIndex,
    pred: Predicate,
    table: Table,
    second: Optional[Predicate] = None,
) -> np.ndarray:
    return baseline_lookup_metrics(index, pred, table, second)[0]


def cm_lookup_metrics(
    cm: CorrelationMap,
    pred: Predicate,
    host: CompleteSecondaryIndex,
    table: Table,
    second: Optional[Predicate] = None,
) -> Tuple[np.ndarray, LookupMetrics]:
    t0 = perf_counter()
    ranges = cm.host_ranges(pred.vrange)
    t1 = perf_counter()
    parts = [host.scan(lo, hi, include_ub=False) for lo, hi in ranges]
    candidates = np.concatenate(parts) if parts else np.empty(0, dtype=host.map.val_dtype)
    t2 = perf_counter()
    result, primary_s, validation_s = _resolve_and_validate(table, candidates, pred, second)
    metrics = LookupMetrics(
        steps={
            "cm_buckets": t1 - t0,
            "host_index": t2 - t1,
            "primary_index": primary_s,
            "validation": validation_s,
        },
        candidate_count=int(candidates.shape[0]),
        result_count=int(result.shape[0]),
    )
    return result, metrics


def cm_lookup(
    cm: CorrelationMap,
    pred: Predicate,
    host: CompleteSecondaryIndex,
    table: Table,
    second: Optional[Predicate] = None,
) -> np.ndarray:
    return cm_lookup_metrics(cm, pred, host, table, second)[0]


class Engine:
    """Owns a table plus its indexes and routes mutations to all of them."""

    def __init__(self, table: Table) -> None:
        self.table = table
        self.hosts: Dict[int, CompleteSecondaryIndex] = {}
        self.hermits: Dict[str, HermitIndex] = {}
        self.baselines: Dict[str, CompleteSecondaryIndex] = {}
        self.cms: Dict[str, CorrelationMap] = {}
        self._write_lock = threading.Lock()

    def _unique_name(self, base: str, taken) -> str:
        if base not in taken:
            return base
        k = 2
        while f"{base}#{k}" in taken:
            k += 1
        return f"{base}#{k}"

    def host_index(self, host_col) -> CompleteSecondaryIndex:
        """Complete index on the host column; built on first use."""
        col = self.table.column_ordinal(host_col)
        host = self.hosts.get(col)
        if host is None:
            host = CompleteSecondaryIndex(self.table, col)
            self.hosts[col] = host
            self.table.register_structure(f"host:{self.table.schema[col][0]}", host)
        return host

    def create_hermit_index(
        self,
        target_col,
        host_col,
        params: Optional[TrsParams] = None,
        seed: int = 0,
        name: Optional[str] = None,
        workers: int = 1,
    ) -> HermitIndex:
        target = self.table.column_ordinal(target_col)
        hostc = self.table.column_ordinal(host_col)
        if target == hostc:
            raise ValueError("target and host columns must differ")
        host = self.host_index(hostc)
        tree = TrsTree.build(self.table, target, hostc, params=params, seed=seed, workers=workers)
        self._buffer_null_host_rows(tree, target, hostc)
        name = self._unique_name(
            name or f"hermit:{self.table.schema[target][0]}", self.hermits
        )
        index = HermitIndex(name, self.table, target, hostc, tree, host)
        self.hermits[name] = index
        self.table.register_structure(f"trs:{name}", tree)
        return index

    def _buffer_null_host_rows(self, tree: TrsTree, target: int, hostc: int) -> None:
        # Rows with a valid target but a null host cannot be reached through
        # the host index; keep their ids in the tree's overflow buffer so
        # lookups stay exact.
        tvals, usable_t = self.table.column_data(target)
        _, usable_h = self.table.column_data(hostc)
        slots = np.nonzero(usable_t & ~usable_h)[0]
        if slots.shape[0] == 0:
            return
        tokens = self.table.tokens_for_slots(slots)
        for m, token in zip(tvals[slots].tolist(), tokens.tolist()):
            tree.insert(m, None, token)

    def create_baseline_index(self, column, name: Optional[str] = None) -> CompleteSecondaryIndex:
        col = self.table.column_ordinal(column)
        index = CompleteSecondaryIndex(self.table, col)
        name = self._unique_name(name or f"baseline:{self.table.schema[col][0]}", self.baselines)
        self.baselines[name] = index
        self.table.register_structure(f"secondary:{name}", index)
        return index

    def create_cm_index(
        self,
        target_col,
        host_col,
        target_bucket_width: float,
        host_bucket_width: float,
        name: Optional[str] = None,
    ) -> CorrelationMap:
        cm = CorrelationMap(self.table, target_col, host_col, target_bucket_width, host_bucket_width)
        self.host_index(host_col)
        name = self._unique_name(
            name or f"cm:{self.table.schema[cm.target_col][0]}", self.cms
        )
        self.cms[name] = cm
        self.table.register_structure(f"cm:{name}", cm)
        return cm

    def cm_host(self, cm: CorrelationMap) -> CompleteSecondaryIndex:
        return self.host_index(cm.host_col)

    # -- mutation fan-out ---------------------------------------------------

    def insert(self, values) -> TupleId:
        with self._write_lock:
            tid, row = self.table.insert_row(values)
            token = self.table.token_of(tid)
            for host in self.hosts.values():
                host.on_insert(row, token)
            for hermit in self.hermits.values():
                hermit.on_insert(row, token)
            for baseline in self.baselines.values():
                baseline.on_insert(row, token)
            for cm in self.cms.values():
                cm.on_insert(row, token)
            return tid

    def delete(self, primary_key) -> TupleId:
        with self._write_lock:
            slot = self.table.primary.get_first(primary_key)
            if slot is None:
                raise MissingKeyError(primary_key)
            row = self.table.fetch(self.table.tuple_id_for_slot(slot))
            tid = self.table.delete_tuple(primary_key)
            token = self.table.token_of(tid)
            for host in self.hosts.values():
                host.on_delete(row, token)
            for hermit in self.hermits.values():
                hermit.on_delete(row, token)
            for baseline in self.baselines.values():
                baseline.on_delete(row, token)
            for cm in self.cms.values():
                cm.on_delete(row, token)
            return tid

    def reorganize_all(self, batch_limit: Optional[int] = None) -> dict:
        stats = {}
        for name, hermit in self.hermits.items():
            stats[name] = hermit.tree.reorganize(self.table, batch_limit)
        return stats

    def memory_report(self) -> dict:
        return self.table.memory_report()

    def verify_lookup(self, slots: np.ndarray, pred: Predicate, second: Optional[Predicate] = None) -> bool:
        """Compare a lookup result against the brute-force scan oracle."""
        expected = scan_oracle(self.table, pred, second)
        return slots.shape == expected.shape and bool(np.all(slots == expected))
