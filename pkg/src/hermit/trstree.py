"""Tiered regression search tree over a correlated column pair.

A k-ary tree on the target column's value range.  Each leaf models its
sub-range with a fitted line plus a tolerance band (half-width ``band``);
covered pairs that fall outside the band live in the leaf's outlier
buffer, mapping target values to tuple-id tokens.  Internal nodes split
their range into ``node_fanout`` equal-width children.

Construction walks top-down with a FIFO queue: fit a line over the node's
pairs, derive the band from ``error_bound``, and split whenever strictly
more than ``outlier_ratio`` of the pairs fall outside the band, until
``max_height`` caps the depth (capped leaves keep oversized buffers).

Lookups return approximate answers: a set of host-column ranges plus the
buffered tokens whose target value matches the predicate.  Exactness is
restored downstream by validating candidates against the base table.

Maintenance never restructures inline.  Inserts and deletes only touch
one leaf's buffer and counters; nodes whose buffers or delete counts grow
past their thresholds are queued for background reorganization, which
rebuilds affected regions from the base table and installs replacements
under a brief tree-wide exclusive phase (mutations arriving during a
rebuild are diverted to a pending buffer and applied at install time).

Child routing is half-open: a value equal to an interior boundary belongs
to the right child, while the stored node ranges stay closed so boundary
values remain within their leaf's range.  Node sizes in the memory model
are fixed per node kind plus a per-entry charge for buffers.
"""

from __future__ import annotations

import math
import threading
from bisect import bisect_right
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Set, Tuple, Union

import numpy as np

from hermit import kernels
from hermit.ranges import ValueRange, union_ranges
from hermit.table import Table

_INTERNAL_NODE_BYTES = 24  # range + header; child pointers charged per fanout
_POINTER_BYTES = 8
_LEAF_NODE_BYTES = 80  # range + model + counters + flags
_BUFFER_ENTRY_BYTES = 24  # hash entry: key + token + bucket link

_PRECHECK_MIN_PAIRS = 32


@dataclass
class TrsParams:
    node_fanout: int = 8
    max_height: int = 10
    outlier_ratio: float = 0.1
    error_bound: float = 2.0
    sample_precheck: bool = False
    sample_fraction: float = 0.05
    delete_ratio: float = 0.25

    def validate(self) -> None:
        if self.node_fanout < 2:
            raise ValueError("node_fanout must be >= 2")
        if self.max_height < 1:
            raise ValueError("max_height must be >= 1")
        if not (0.0 < self.outlier_ratio < 1.0):
            raise ValueError("outlier_ratio must be in (0, 1)")
        if self.error_bound < 0.0:
            raise ValueError("error_bound must be non-negative")
        if not (0.0 < self.sample_fraction <= 1.0):
            raise ValueError("sample_fraction must be in (0, 1]")
        if not (0.0 < self.delete_ratio < 1.0):
            raise ValueError("delete_ratio must be in (0, 1)")


class LeafNode:
    __slots__ = (
        "lb",
        "ub",
        "ub_inclusive",
        "depth",
        "slope",
        "intercept",
        "band",
        "covered_count",
        "deleted_count",
        "outliers",
        "buffer_len",
        "empty",
        "degenerate",
        "pending",
        "detached",
    )

    def __init__(self, lb: float, ub: float, ub_inclusive: bool, depth: int) -> None:
        self.lb = lb
        self.ub = ub
        self.ub_inclusive = ub_inclusive
        self.depth = depth
        self.slope = 0.0
        self.intercept = 0.0
        self.band = 0.0
        self.covered_count = 0
        self.deleted_count = 0
        self.outliers: Dict[float, Set] = {}
        self.buffer_len = 0
        self.empty = True
        self.degenerate = False
        self.pending = False
        self.detached = False

    def is_leaf(self) -> bool:
        return True

    def buffer_add(self, m: float, token) -> None:
        toks = self.outliers.get(m)
        if toks is None:
            self.outliers[m] = {token}
            self.buffer_len += 1
        elif token not in toks:
            toks.add(token)
            self.buffer_len += 1

    def buffer_remove(self, m: float, token) -> bool:
        toks = self.outliers.get(m)
        if toks is None or token not in toks:
            return False
        toks.discard(token)
        if not toks:
            del self.outliers[m]
        self.buffer_len -= 1
        return True


class InternalNode:
    __slots__ = (
        "lb",
        "ub",
        "ub_inclusive",
        "depth",
        "children",
        "inner_bounds",
        "bounds_array",
        "pending",
        "detached",
    )

    def __init__(self, lb: float, ub: float, ub_inclusive: bool, depth: int, edges: np.ndarray) -> None:
        self.lb = lb
        self.ub = ub
        self.ub_inclusive = ub_inclusive
        self.depth = depth
        self.bounds_array = np.ascontiguousarray(edges[1:-1], dtype=np.float64)
        self.inner_bounds = self.bounds_array.tolist()
        self.children: List[Union["InternalNode", LeafNode]] = []
        self.pending = False
        self.detached = False

    def is_leaf(self) -> bool:
        return False

    def route(self, m: float) -> int:
        return bisect_right(self.inner_bounds, m)


Node = Union[InternalNode, LeafNode]


@dataclass
class LookupAnswer:
    """Approximate answer: disjoint sorted host ranges + buffered tokens."""

    host_ranges: List[ValueRange]
    outlier_tokens: set = field(default_factory=set)


def child_edges(lb: float, ub: float, fanout: int) -> np.ndarray:
    """fanout+1 boundaries of equal-width children, endpoints exact.

    Forced monotone so routing and child ranges stay consistent under
    floating-point rounding.
    """
    edges = lb + (ub - lb) * np.arange(fanout + 1) / fanout
    edges[0] = lb
    edges[-1] = ub
    np.maximum.accumulate(edges, out=edges)
    return edges


def fit_linear_model(ms: np.ndarray, ns: np.ndarray) -> Tuple[float, float, int]:
    """(slope, intercept, status) from one pass over the pairs.

    slope = cov(M, N) / var(M) and intercept = mean(N) - slope * mean(M).
    Status is kernels.FIT_OK, FIT_DEGENERATE (zero target variance, slope
    forced to 0 and intercept to mean(N)), or FIT_EMPTY.
    """
    ms = np.ascontiguousarray(ms, dtype=np.float64)
    ns = np.ascontiguousarray(ns, dtype=np.float64)
    return kernels.fit_line(ms, ns)


def derive_epsilon(slope: float, vrange: ValueRange, n: int, error_bound: float) -> float:
    """Tolerance-band half width for a leaf.

    Chosen so a point query is expected to return about ``error_bound``
    host values when the host column is uniform over the leaf's image:
    |slope| * range_width * error_bound / (2n).
    """
    if n < 1 or vrange.ub <= vrange.lb:
        return 0.0
    return abs(slope) * (vrange.ub - vrange.lb) * error_bound / (2.0 * n)


def validate_node(
    ms: np.ndarray,
    ns: np.ndarray,
    slope: float,
    intercept: float,
    band: float,
    outlier_ratio: float,
) -> Optional[np.ndarray]:
    """Outlier indices if the model is acceptable, else None (reject).

    Rejects as soon as strictly more than outlier_ratio * len(pairs)
    pairs fall outside the band; a rejected node's buffer is discarded,
    so no index list is returned for it.
    """
    ms = np.ascontiguousarray(ms, dtype=np.float64)
    ns = np.ascontiguousarray(ns, dtype=np.float64)
    return kernels.scan_outliers(ms, ns, slope, intercept, band, outlier_ratio * ms.shape[0])


def sample_precheck(
    ms: np.ndarray,
    ns: np.ndarray,
    vrange: ValueRange,
    params: TrsParams,
    rng: np.random.Generator,
) -> bool:
    """True when a seeded sample already exceeds the outlier ratio.

    Fits on ceil(sample_fraction * k) pairs drawn without replacement;
    below 32 pairs the check abstains (returns False = unknown).  The
    band uses the full pair count so it approximates the full-fit band.
    """
    k = int(ms.shape[0])
    if k < _PRECHECK_MIN_PAIRS:
        return False
    ssize = math.ceil(params.sample_fraction * k)
    idx = np.sort(rng.choice(k, size=ssize, replace=False))
    sm = np.ascontiguousarray(ms[idx])
    sn = np.ascontiguousarray(ns[idx])
    slope, intercept, status = kernels.fit_line(sm, sn)
    if status == kernels.FIT_EMPTY:
        return False
    if status == kernels.FIT_DEGENERATE:
        band = (float(sn.max()) - float(sn.min())) / 2.0
    else:
        band = derive_epsilon(slope, vrange, k, params.error_bound)
    out = kernels.scan_outliers(sm, sn, slope, intercept, band, params.outlier_ratio * ssize)
    return out is None


def leaf_host_range(leaf: LeafNode, r: ValueRange) -> Optional[ValueRange]:
    """Host-column range covering the leaf's in-band pairs for m in r."""
    if leaf.empty:
        return None
    if leaf.degenerate or leaf.slope == 0.0:
        return ValueRange(leaf.intercept - leaf.band, leaf.intercept + leaf.band)
    if leaf.slope > 0.0:
        lo = leaf.slope * r.lb + leaf.intercept - leaf.band
        hi = leaf.slope * r.ub + leaf.intercept + leaf.band
    else:
        lo = leaf.slope * r.ub + leaf.intercept - leaf.band
        hi = leaf.slope * r.lb + leaf.intercept + leaf.band
    return ValueRange(lo, hi)


class TrsTree:
    """See module docstring; construct with :meth:`build`."""

    def __init__(
        self,
        target_col: int,
        host_col: int,
        full_range: ValueRange,
        params: TrsParams,
        seed: int = 0,
    ) -> None:
        self.target_col = target_col
        self.host_col = host_col
        self.full = full_range
        self.params = params
        self.seed = seed
        self.root: Optional[Node] = None
        self.reorg_queue: deque = deque()
        self.reorg_flag = False
        self.pending_buffer: list = []
        self.overflow: Dict[float, Set] = {}
        self.overflow_len = 0
        self.build_stats: Dict[str, int] = {}
        self._install_lock = threading.Lock()
        # flat leaf directory for O(1) maintenance routing; rebuilt lazily
        # whenever the structure changes
        self._flat: Optional[Tuple[list, list]] = None

    # -- construction -------------------------------------------------------

    @classmethod
    def build(
        cls,
        table: Table,
        target_col,
        host_col,
        full_range: Optional[ValueRange] = None,
        params: Optional[TrsParams] = None,
        seed: int = 0,
        workers: int = 1,
    ) -> "TrsTree":
        params = params if params is not None else TrsParams()
        params.validate()
        if workers < 1:
            raise ValueError("workers must be >= 1")
        target_col = table.column_ordinal(target_col)
        host_col = table.column_ordinal(host_col)
        if target_col == host_col:
            raise ValueError("target and host columns must differ")
        pairs = table.project_pairs(target_col, host_col)
        if full_range is None:
            if len(pairs) == 0:
                raise ValueError("empty full range: no data and no explicit range")
            full_range = ValueRange(float(pairs.ms.min()), float(pairs.ms.max()))
        elif len(pairs) > 0:
            if pairs.ms.min() < full_range.lb or pairs.ms.max() > full_range.ub:
                raise ValueError("full range does not cover all target values")
        tree = cls(target_col, host_col, full_range, params, seed)
        stats = {"pairs_scanned": 0, "nodes_built": 0, "leaves_built": 0}
        tree.root = tree._build_region(
            pairs.ms,
            pairs.ns,
            pairs.tokens,
            full_range.lb,
            full_range.ub,
            depth=1,
            ub_inclusive=True,
            path=(),
            stats=stats,
            workers=workers,
        )
        tree.build_stats = stats
        return tree

    @classmethod
    def build_parallel(
        cls,
        table: Table,
        target_col,
        host_col,
        full_range: Optional[ValueRange] = None,
        params: Optional[TrsParams] = None,
        seed: int = 0,
        workers: int = 1,
    ) -> "TrsTree":
        """Multi-worker build; identical structure to the serial build.

        Sub-ranges partition the data disjointly and every node's result
        depends only on its own pairs (per-node sampling is seeded by tree
        position), so worker scheduling cannot change the outcome.
        """
        return cls.build(table, target_col, host_col, full_range, params, seed, workers)

    def _node_rng(self, path: Tuple[int, ...]) -> np.random.Generator:
        entropy = [self.seed & 0xFFFFFFFFFFFFFFFF] + list(path)
        return np.random.default_rng(np.random.SeedSequence(entropy))

    def _process_node(self, ms, ns, tokens, lb, ub, depth, ub_inclusive, path, stats) -> Optional[LeafNode]:
        """Fit + validate one node; a leaf on accept, None to split."""
        k = int(ms.shape[0])
        stats["pairs_scanned"] += k
        leaf = LeafNode(lb, ub, ub_inclusive, depth)
        if k == 0:
            return leaf
        can_split = depth < self.params.max_height and ub > lb
        if can_split and self.params.sample_precheck and k >= _PRECHECK_MIN_PAIRS:
            ssize = math.ceil(self.params.sample_fraction * k)
            stats["pairs_scanned"] += ssize
            if sample_precheck(ms, ns, ValueRange(lb, ub), self.params, self._node_rng(path)):
                return None
        slope, intercept, status = kernels.fit_line(ms, ns)
        if status == kernels.FIT_DEGENERATE:
            band = (float(ns.max()) - float(ns.min())) / 2.0
        else:
            band = derive_epsilon(slope, ValueRange(lb, ub), k, self.params.error_bound)
        limit = self.params.outlier_ratio * k if can_split else math.inf
        idx = kernels.scan_outliers(ms, ns, slope, intercept, band, limit)
        if idx is None:
            return None
        leaf.slope = slope
        leaf.intercept = intercept
        leaf.band = band
        leaf.covered_count = k
        leaf.empty = False
        leaf.degenerate = status == kernels.FIT_DEGENERATE
        if idx.shape[0]:
            for m, tok in zip(ms[idx].tolist(), tokens[idx].tolist()):
                leaf.buffer_add(m, tok)
        return leaf

    def _build_region(self, ms, ns, tokens, lb, ub, depth, ub_inclusive, path, stats, workers=1) -> Node:
        """Top-down FIFO construction of the subtree for one region."""
        fanout = self.params.node_fanout
        holder: List[Optional[Node]] = [None]
        queue: deque = deque()
        queue.append((holder, 0, ms, ns, tokens, lb, ub, depth, ub_inclusive, path))
        parallel_tasks = []
        while queue:
            container, slot, ms, ns, tokens, lb, ub, depth, ub_inclusive, path = queue.popleft()
            leaf = self._process_node(ms, ns, tokens, lb, ub, depth, ub_inclusive, path, stats)
            if leaf is not None:
                stats["nodes_built"] += 1
                stats["leaves_built"] += 1
                container[slot] = leaf
                continue
            edges = child_edges(lb, ub, fanout)
            node = InternalNode(lb, ub, ub_inclusive, depth, edges)
            node.children = [None] * fanout  # type: ignore[list-item]
            stats["nodes_built"] += 1
            container[slot] = node
            route = kernels.route_values(ms, node.bounds_array)
            for ci in range(fanout):
                mask = route == ci
                entry = (
                    node.children,
                    ci,
                    np.ascontiguousarray(ms[mask]),
                    np.ascontiguousarray(ns[mask]),
                    tokens[mask],
                    float(edges[ci]),
                    float(edges[ci + 1]),
                    depth + 1,
                    ub_inclusive and ci == fanout - 1,
                    path + (ci,),
                )
                if workers > 1 and depth == 1:
                    parallel_tasks.append(entry)
                else:
                    queue.append(entry)
        if parallel_tasks:
            def run(entry):
                container, slot, ms, ns, tokens, lb, ub, depth, ub_inclusive, path = entry
                sub_stats = {"pairs_scanned": 0, "nodes_built": 0, "leaves_built": 0}
                node = self._build_region(ms, ns, tokens, lb, ub, depth, ub_inclusive, path, sub_stats)
                return container, slot, node, sub_stats

            with ThreadPoolExecutor(max_workers=workers) as pool:
                for container, slot, node, sub_stats in pool.map(run, parallel_tasks):
                    container[slot] = node
                    for key, val in sub_stats.items():
                        stats[key] += val
        return holder[0]  # type: ignore[return-value]

    # -- lookup ---------------------------------------------------------------

    def lookup(self, pred: ValueRange) -> LookupAnswer:
        """Breadth-first descent per the lookup algorithm (host ranges + ids)."""
        host_ranges: List[ValueRange] = []
        tokens: set = set()
        root = self.root
        if root is not None and root.lb <= pred.ub and pred.lb <= root.ub:
            queue: deque = deque((root,))
            while queue:
                node = queue.popleft()
                if node.is_leaf():
                    r = ValueRange(max(node.lb, pred.lb), min(node.ub, pred.ub))
                    hr = leaf_host_range(node, r)
                    if hr is not None:
                        host_ranges.append(hr)
                    if node.buffer_len:
                        for m, toks in node.outliers.items():
                            if r.lb <= m <= r.ub:
                                tokens.update(toks)
                else:
                    for child in node.children:
                        if child.lb <= pred.ub and pred.lb <= child.ub:
                            queue.append(child)
        if self.overflow_len:
            for m, toks in self.overflow.items():
                if pred.lb <= m <= pred.ub:
                    tokens.update(toks)
        return LookupAnswer(union_ranges(host_ranges), tokens)

    # -- maintenance ------------------------------------------------------------

    def _descend(self, m: float) -> LeafNode:
        node = self.root
        while not node.is_leaf():
            node = node.children[bisect_right(node.inner_bounds, m)]
        return node

    def _route_leaf(self, m: float) -> LeafNode:
        """O(log #leaves) maintenance routing via the flat leaf directory.

        Equivalent to _descend by the partition invariant (leaf ownership
        intervals are [lb, next lb), last leaf closed).
        """
        flat = self._flat
        if flat is None:
            leaves = [n for n in self.iter_nodes() if n.is_leaf()]
            flat = ([leaf.lb for leaf in leaves], leaves)
            self._flat = flat
        lbs, leaves = flat
        return leaves[bisect_right(lbs, m) - 1]

    def insert(self, m: float, n: float, token) -> None:
        lock = self._install_lock
        lock.acquire()
        try:
            if self.reorg_flag:
                self.pending_buffer.append(("insert", m, n, token))
                return
            # fast path: in-range, in-band pair touches one leaf's counter only
            if n is not None and self.full.lb <= m <= self.full.ub:
                flat = self._flat
                if flat is None:
                    leaves = [node for node in self.iter_nodes() if node.is_leaf()]
                    flat = ([leaf.lb for leaf in leaves], leaves)
                    self._flat = flat
                leaf = flat[1][bisect_right(flat[0], m) - 1]
                leaf.covered_count += 1
                if not leaf.empty:
                    center = leaf.slope * m + leaf.intercept  # slope is 0 when degenerate
                    if (center - leaf.band) <= n <= (center + leaf.band):
                        return
                leaf.buffer_add(m, token)
                if leaf.buffer_len > self.params.outlier_ratio * leaf.covered_count and not leaf.pending:
                    leaf.pending = True
                    self.reorg_queue.append((leaf, "split"))
                return
            self._insert_now(m, n, token)
        finally:
            lock.release()

    def _insert_now(self, m: float, n: float, token) -> None:
        if n is None or not (self.full.lb <= m <= self.full.ub):
            # out-of-range target (or unindexable host): tree-level overflow
            toks = self.overflow.get(m)
            if toks is None:
                self.overflow[m] = {token}
                self.overflow_len += 1
            elif token not in toks:
                toks.add(token)
                self.overflow_len += 1
            return
        leaf = self._route_leaf(m)
        leaf.covered_count += 1
        if leaf.empty:
            in_band = False
        else:
            center = leaf.slope * m + leaf.intercept  # slope is 0 when degenerate
            in_band = (center - leaf.band) <= n <= (center + leaf.band)
        if not in_band:
            leaf.buffer_add(m, token)
            if leaf.buffer_len > self.params.outlier_ratio * leaf.covered_count and not leaf.pending:
                leaf.pending = True
                self.reorg_queue.append((leaf, "split"))

    def delete(self, m: float, n: float, token) -> None:
        with self._install_lock:
            if self.reorg_flag:
                self.pending_buffer.append(("delete", m, n, token))
                return
            self._delete_now(m, n, token)

    def _delete_now(self, m: float, n: float, token) -> None:
        if n is None or not (self.full.lb <= m <= self.full.ub):
            toks = self.overflow.get(m)
            if toks is not None and token in toks:
                toks.discard(token)
                if not toks:
                    del self.overflow[m]
                self.overflow_len -= 1
            return
        leaf = self._route_leaf(m)
        leaf.buffer_remove(m, token)
        leaf.deleted_count += 1
        if leaf.deleted_count > self.params.delete_ratio * max(leaf.covered_count, 1):
            parent, _ = self._find_parent(leaf)
            if parent is not None and not parent.pending:
                parent.pending = True
                self.reorg_queue.append((parent, "merge"))

    def _find_parent(self, node: Node) -> Tuple[Optional[InternalNode], int]:
        cur = self.root
        if cur is node or cur is None or cur.is_leaf():
            return None, -1
        while True:
            ci = cur.route(node.lb)
            child = cur.children[ci]
            if child is node:
                return cur, ci
            if child.is_leaf():
                return None, -1
            cur = child

    def _path_of(self, node: Node) -> Tuple[int, ...]:
        path: List[int] = []
        cur = self.root
        while cur is not node and not cur.is_leaf():
            ci = cur.route(node.lb)
            path.append(ci)
            cur = cur.children[ci]
        return tuple(path)

    # -- reorganization ----------------------------------------------------------

    def reorganize(self, table: Table, batch_limit: Optional[int] = None) -> dict:
        """Drain queued split/merge work and install rebuilt nodes.

        Rebuilds read the base table outside the exclusive phase; the
        install step (plus replay of mutations diverted while the flag was
        up) runs under the tree-wide lock.  Query results are identical
        before and after.
        """
        with self._install_lock:
            self.reorg_flag = True
            take = len(self.reorg_queue) if batch_limit is None else min(batch_limit, len(self.reorg_queue))
            entries = [self.reorg_queue.popleft() for _ in range(take)]
        stats = {
            "entries": len(entries),
            "splits": 0,
            "merges": 0,
            "merges_rejected": 0,
            "skipped_stale": 0,
            "pending_applied": 0,
        }
        installs: List[Tuple[Node, Node]] = []
        build_stats = {"pairs_scanned": 0, "nodes_built": 0, "leaves_built": 0}
        for node, action in entries:
            node.pending = False
            if node.detached:
                stats["skipped_stale"] += 1
                continue
            vrange = ValueRange(node.lb, node.ub)
            pairs = table.project_pairs(
                self.target_col, self.host_col, vrange, include_ub=node.ub_inclusive
            )
            if action == "split":
                new_node = self._build_region(
                    pairs.ms,
                    pairs.ns,
                    pairs.tokens,
                    node.lb,
                    node.ub,
                    node.depth,
                    node.ub_inclusive,
                    self._path_of(node),
                    build_stats,
                )
                installs.append((node, new_node))
                stats["splits"] += 1
            else:
                merged = self._process_node(
                    pairs.ms,
                    pairs.ns,
                    pairs.tokens,
                    node.lb,
                    node.ub,
                    node.depth,
                    node.ub_inclusive,
                    self._path_of(node),
                    build_stats,
                )
                if merged is not None:
                    installs.append((node, merged))
                    stats["merges"] += 1
                else:
                    stats["merges_rejected"] += 1
                    for leaf in _iter_leaves(node):
                        leaf.deleted_count = 0
        with self._install_lock:
            self._flat = None
            for old, new in installs:
                if old is self.root:
                    self.root = new
                else:
                    parent, ci = self._find_parent(old)
                    if parent is None:
                        stats["skipped_stale"] += 1
                        continue
                    parent.children[ci] = new
                _mark_detached(old)
            pending = self.pending_buffer
            self.pending_buffer = []
            for op, m, n, token in pending:
                if op == "insert":
                    self._insert_now(m, n, token)
                else:
                    self._delete_now(m, n, token)
            stats["pending_applied"] = len(pending)
            self.reorg_flag = False
        stats["build"] = build_stats
        return stats

    # -- inspection ----------------------------------------------------------------

    def iter_nodes(self) -> Iterator[Node]:
        if self.root is None:
            return
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if not node.is_leaf():
                stack.extend(reversed(node.children))

    def leaves(self) -> List[LeafNode]:
        return [n for n in self.iter_nodes() if n.is_leaf()]

    def height(self) -> int:
        return max((n.depth for n in self.iter_nodes()), default=0)

    def memory_breakdown(self) -> dict:
        node_bytes = 0
        buffer_entries = 0
        fanout = self.params.node_fanout
        for node in self.iter_nodes():
            if node.is_leaf():
                node_bytes += _LEAF_NODE_BYTES
                buffer_entries += node.buffer_len
            else:
                node_bytes += _INTERNAL_NODE_BYTES + _POINTER_BYTES * fanout
        return {
            "nodes": node_bytes,
            "outlier_buffers": buffer_entries * _BUFFER_ENTRY_BYTES,
            "overflow_buffer": self.overflow_len * _BUFFER_ENTRY_BYTES,
        }

    def memory_bytes(self) -> int:
        return sum(self.memory_breakdown().values())

    def stats_dump(self) -> str:
        """One text record per node, for assertions and docs."""
        lines = []
        for node in self.iter_nodes():
            if node.is_leaf():
                lines.append(
                    f"leaf depth={node.depth} lb={node.lb!r} ub={node.ub!r} "
                    f"slope={node.slope!r} intercept={node.intercept!r} band={node.band!r} "
                    f"covered={node.covered_count} deleted={node.deleted_count} buffer={node.buffer_len}"
                )
            else:
                lines.append(f"internal depth={node.depth} lb={node.lb!r} ub={node.ub!r}")
        return "\n".join(lines)

    def signature(self):
        """Structural fingerprint: ranges, models, counters, buffers."""

        def sig(node):
            if node.is_leaf():
                buf = tuple(
                    (m, tuple(sorted(toks))) for m, toks in sorted(node.outliers.items())
                )
                return (
                    "leaf",
                    node.lb,
                    node.ub,
                    node.slope,
                    node.intercept,
                    node.band,
                    node.covered_count,
                    node.empty,
                    node.degenerate,
                    buf,
                )
            return ("internal", node.lb, node.ub, tuple(sig(c) for c in node.children))

        overflow = tuple((m, tuple(sorted(t))) for m, t in sorted(self.overflow.items()))
        return (self.full.lb, self.full.ub, sig(self.root), overflow)

    def check_invariants(self, outlier_bound: bool = True) -> None:
        """Raise AssertionError when a structural invariant is broken."""
        assert self.root is not None
        assert self.root.lb == self.full.lb and self.root.ub == self.full.ub
        for node in self.iter_nodes():
            assert node.depth <= self.params.max_height
            if node.is_leaf():
                if outlier_bound and node.depth < self.params.max_height and not node.pending:
                    assert node.buffer_len <= self.params.outlier_ratio * max(node.covered_count, 0) or (
                        node.covered_count == 0 and node.buffer_len == 0
                    ), f"leaf at depth {node.depth} exceeds outlier bound"
            else:
                assert len(node.children) == self.params.node_fanout
                assert node.children[0].lb == node.lb
                assert node.children[-1].ub == node.ub
                for a, b in zip(node.children, node.children[1:]):
                    assert a.ub == b.lb, "child ranges must be contiguous"
                for child in node.children:
                    assert child.depth == node.depth + 1


def _iter_leaves(node: Node) -> Iterator[LeafNode]:
    stack = [node]
    while stack:
        cur = stack.pop()
        if cur.is_leaf():
            yield cur
        else:
            stack.extend(cur.children)


def _mark_detached(node: Node) -> None:
    stack = [node]
    while stack:
        cur = stack.pop()
        cur.detached = True
        if not cur.is_leaf():
            stack.extend(cur.children)
