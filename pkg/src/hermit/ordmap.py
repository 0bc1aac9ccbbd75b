"""Blocked sorted multimap with range scans.

This is the ordered-map family shared by the primary index, host indexes,
and the complete-secondary-index baseline, so space and speed comparisons
between them are apples-to-apples.  Layout is B+-style: entries live in
sorted blocks of at most ``fanout`` pairs, with a top-level array of block
low keys for navigation.  Duplicate keys are allowed (multimap); the
caller enforces uniqueness where required.

Memory accounting is modeled, not measured: 8 bytes per key, 8 per value,
plus fixed per-block overhead.  The model is deterministic so tests can
assert exact byte counts.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right, insort_right
from typing import Iterator, List, Optional, Tuple

import numpy as np

BLOCK_CAPACITY = 256
BULK_FILL = 192  # bulk loads leave slack for later inserts
_ENTRY_BYTES = 16  # 8-byte key + 8-byte value
_BLOCK_OVERHEAD = 48  # block header + top-level (low key, pointer) entry


class _Block:
    __slots__ = ("keys", "vals")

    def __init__(self, keys: list, vals: list) -> None:
        self.keys = keys
        self.vals = vals


class OrderedMap:
    """Sorted multimap: insert/remove/point/range ops over numeric keys."""

    def __init__(self, val_dtype=np.int64) -> None:
        self.val_dtype = np.dtype(val_dtype)
        self._blocks: List[_Block] = []
        self._lows: List[float] = []
        self._entries = 0
        self._flat: Optional[Tuple[np.ndarray, np.ndarray]] = None

    def __len__(self) -> int:
        return self._entries

    @property
    def fanout(self) -> int:
        return BLOCK_CAPACITY

    @property
    def block_count(self) -> int:
        return len(self._blocks)

    # -- mutation ---------------------------------------------------------

    def insert(self, key, val) -> None:
        self._flat = None
        if not self._blocks:
            self._blocks.append(_Block([key], [val]))
            self._lows.append(key)
            self._entries = 1
            return
        bi = bisect_right(self._lows, key) - 1
        if bi < 0:
            bi = 0
        blk = self._blocks[bi]
        pos = bisect_right(blk.keys, key)
        blk.keys.insert(pos, key)
        blk.vals.insert(pos, val)
        self._lows[bi] = blk.keys[0]
        self._entries += 1
        if len(blk.keys) > BLOCK_CAPACITY:
            self._split(bi)

    def insert_unique(self, key, val) -> bool:
        """Insert unless the key already exists; returns False on conflict."""
        if not self._blocks:
            self._blocks.append(_Block([key], [val]))
            self._lows.append(key)
            self._entries = 1
            self._flat = None
            return True
        bi = bisect_right(self._lows, key) - 1
        if bi < 0:
            bi = 0
        blk = self._blocks[bi]
        pos = bisect_right(blk.keys, key)
        if pos and blk.keys[pos - 1] == key:
            return False
        if pos == 0 and bi > 0:
            prev = self._blocks[bi - 1].keys
            if prev and prev[-1] == key:
                return False
        self._flat = None
        blk.keys.insert(pos, key)
        blk.vals.insert(pos, val)
        self._lows[bi] = blk.keys[0]
        self._entries += 1
        if len(blk.keys) > BLOCK_CAPACITY:
            self._split(bi)
        return True

    def _split(self, bi: int) -> None:
        blk = self._blocks[bi]
        mid = len(blk.keys) // 2
        right = _Block(blk.keys[mid:], blk.vals[mid:])
        del blk.keys[mid:]
        del blk.vals[mid:]
        self._blocks.insert(bi + 1, right)
        self._lows.insert(bi + 1, right.keys[0])

    def remove(self, key, val) -> bool:
        """Remove one (key, val) pair; False if absent."""
        for bi in self._candidate_blocks(key):
            blk = self._blocks[bi]
            lo = bisect_left(blk.keys, key)
            hi = bisect_right(blk.keys, key)
            for i in range(lo, hi):
                if blk.vals[i] == val:
                    del blk.keys[i]
                    del blk.vals[i]
                    self._entries -= 1
                    self._flat = None
                    if not blk.keys:
                        del self._blocks[bi]
                        del self._lows[bi]
                    else:
                        self._lows[bi] = blk.keys[0]
                    return True
        return False

    def bulk_load(self, keys: np.ndarray, vals: np.ndarray) -> None:
        """Replace contents with pre-sorted (by key) parallel arrays."""
        if keys.shape[0] != vals.shape[0]:
            raise ValueError("keys/vals length mismatch")
        key_list = keys.tolist()
        val_list = vals.tolist()
        self._blocks = []
        self._lows = []
        for i in range(0, len(key_list), BULK_FILL):
            blk = _Block(key_list[i : i + BULK_FILL], val_list[i : i + BULK_FILL])
            self._blocks.append(blk)
            self._lows.append(blk.keys[0])
        self._entries = len(key_list)
        self._flat = None

    # -- point access -----------------------------------------------------

    def _candidate_blocks(self, key) -> Iterator[int]:
        # Equal keys may span blocks whose low key equals `key`.
        first = max(0, bisect_left(self._lows, key) - 1)
        last = bisect_right(self._lows, key) - 1
        for bi in range(first, last + 1):
            yield bi

    def contains(self, key) -> bool:
        for bi in self._candidate_blocks(key):
            blk = self._blocks[bi]
            i = bisect_left(blk.keys, key)
            if i < len(blk.keys) and blk.keys[i] == key:
                return True
        return False

    def get_first(self, key):
        """First value stored under key, or None."""
        for bi in self._candidate_blocks(key):
            blk = self._blocks[bi]
            i = bisect_left(blk.keys, key)
            if i < len(blk.keys) and blk.keys[i] == key:
                return blk.vals[i]
        return None

    def get_all(self, key) -> list:
        out: list = []
        for bi in self._candidate_blocks(key):
            blk = self._blocks[bi]
            lo = bisect_left(blk.keys, key)
            hi = bisect_right(blk.keys, key)
            out.extend(blk.vals[lo:hi])
        return out

    # -- range access -----------------------------------------------------

    def scan(self, lb: float, ub: float, include_ub: bool = True) -> np.ndarray:
        """Values for keys in [lb, ub] (or [lb, ub) when include_ub=False)."""
        out: list = []
        if self._blocks and lb <= ub:
            # start one block before the first low >= lb: equal keys may
            # span a block boundary
            bi = max(0, bisect_left(self._lows, lb) - 1)
            cut = bisect_right if include_ub else bisect_left
            while bi < len(self._blocks) and self._lows[bi] <= ub:
                blk = self._blocks[bi]
                lo = bisect_left(blk.keys, lb)
                hi = cut(blk.keys, ub)
                if lo < hi:
                    out.extend(blk.vals[lo:hi])
                bi += 1
        return np.asarray(out, dtype=self.val_dtype)

    def batch_first(self, keys: np.ndarray, missing=-1) -> np.ndarray:
        """Vectorized get_first over an array of keys.

        Missing keys map to ``missing``.  Used on the primary index (slot
        values, always >= 0) for candidate resolution.
        """
        if keys.shape[0] == 0:
            return np.empty(0, dtype=self.val_dtype)
        if self._flat is None and self._entries > 64:
            self._rebuild_flat()
        if self._flat is None:
            return np.asarray(
                [m if (m := self.get_first(k)) is not None else missing for k in keys.tolist()],
                dtype=self.val_dtype,
            )
        fkeys, fvals = self._flat
        if fkeys.shape[0] == 0:
            return np.full(keys.shape[0], missing, dtype=self.val_dtype)
        idx = np.searchsorted(fkeys, keys, side="left")
        idx_c = np.minimum(idx, max(len(fkeys) - 1, 0))
        found = (idx < len(fkeys)) & (fkeys[idx_c] == keys)
        return np.where(found, fvals[idx_c], missing).astype(self.val_dtype, copy=False)

    def _rebuild_flat(self) -> None:
        if not self._blocks:
            self._flat = (np.empty(0), np.empty(0, dtype=self.val_dtype))
            return
        fkeys = np.concatenate([np.asarray(b.keys, dtype=np.float64) for b in self._blocks])
        fvals = np.concatenate(
            [np.asarray(b.vals, dtype=self.val_dtype) for b in self._blocks]
        )
        self._flat = (fkeys, fvals)

    def items(self) -> Iterator[tuple]:
        for blk in self._blocks:
            yield from zip(blk.keys, blk.vals)

    def min_key(self):
        return self._blocks[0].keys[0] if self._blocks else None

    def max_key(self):
        return self._blocks[-1].keys[-1] if self._blocks else None

    # -- accounting -------------------------------------------------------

    def memory_bytes(self) -> int:
        return self._entries * _ENTRY_BYTES + len(self._blocks) * _BLOCK_OVERHEAD
