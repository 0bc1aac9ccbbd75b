"""In-memory columnar table with a primary index and two tuple-id schemes.

Slots are append-only: deletes tombstone a slot and never reuse it, so
physical tuple identifiers stay stable for the life of the table.  Nulls
are tracked in per-column validity bitmaps; a null participates in no
index, no regression, and no predicate match.  NaN is rejected at ingest.

Tuple identifiers come in two schemes:

* logical  - the identifier is the row's primary key; resolving it to a
  slot requires a hop through the primary index.
* physical - the identifier is the slot location (block id, offset) with
  a fixed 4096 slots per block.

Internally both schemes are carried as a scalar "token" (primary-key
value or slot ordinal); :class:`TupleId` is the public wrapper.

Memory accounting is a deterministic model (8 bytes per numeric cell,
1 bit per validity/liveness flag, fixed per-object headers), not a
measurement of interpreter overhead; components always sum to the total.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from hermit.ordmap import OrderedMap
from hermit.ranges import ValueRange

LOGICAL = "logical"
PHYSICAL = "physical"
BLOCK_SLOTS = 4096

_TABLE_HEADER = 64
_COLUMN_HEADER = 64
_STRUCT_HEADER = 64

_DTYPES = {"i64": np.dtype(np.int64), "f64": np.dtype(np.float64)}


class TableError(Exception):
    """Base for table-level errors."""


class SchemaError(TableError):
    pass


class InvalidValueError(TableError):
    pass


class DuplicateKeyError(TableError):
    pass


class MissingKeyError(TableError, KeyError):
    pass


class TombstoneError(TableError, LookupError):
    pass


class DataFileError(TableError):
    """Malformed ingestion file."""


@dataclass(frozen=True)
class TupleId:
    scheme: str
    logical_key: Optional[float] = None
    location: Optional[Tuple[int, int]] = None

    def __post_init__(self) -> None:
        if self.scheme == LOGICAL:
            if self.logical_key is None or self.location is not None:
                raise ValueError("logical TupleId carries exactly a primary key")
        elif self.scheme == PHYSICAL:
            if self.location is None or self.logical_key is not None:
                raise ValueError("physical TupleId carries exactly a location")
        else:
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass(frozen=True)
class Predicate:
    """Range condition on one column (point predicate has lb == ub)."""

    column: int
    vrange: ValueRange


@dataclass
class ProjectedPairs:
    """Live (target, host) pairs plus tuple-id tokens, as parallel arrays."""

    ms: np.ndarray
    ns: np.ndarray
    tokens: np.ndarray

    def __len__(self) -> int:
        return int(self.ms.shape[0])


class Table:
    def __init__(
        self,
        schema: Sequence[Tuple[str, str]],
        primary_key_column: int,
        id_scheme: str = PHYSICAL,
    ) -> None:
        if not schema:
            raise SchemaError("schema must not be empty")
        names = [name for name, _ in schema]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names")
        for name, typ in schema:
            if typ not in _DTYPES:
                raise SchemaError(f"unknown column type {typ!r} for {name!r}")
        if not (0 <= primary_key_column < len(schema)):
            raise SchemaError("primary key column out of range")
        if id_scheme not in (LOGICAL, PHYSICAL):
            raise SchemaError(f"unknown id scheme {id_scheme!r}")

        self.schema: List[Tuple[str, str]] = [(n, t) for n, t in schema]
        self.primary_key_column = primary_key_column
        self.id_scheme = id_scheme
        self._dtypes = [_DTYPES[t] for _, t in schema]
        cap = 1024
        self._cols = [np.zeros(cap, dtype=dt) for dt in self._dtypes]
        self._valid = [np.zeros(cap, dtype=bool) for _ in schema]
        self._live = np.zeros(cap, dtype=bool)
        self._nslots = 0
        self._live_count = 0
        # primary index: pk value -> slot ordinal
        self.primary = OrderedMap(val_dtype=np.int64)
        self._structures: dict = {}

    # -- basic facts --------------------------------------------------------

    @property
    def ncols(self) -> int:
        return len(self.schema)

    @property
    def slot_count(self) -> int:
        return self._nslots

    @property
    def live_count(self) -> int:
        return self._live_count

    def column_ordinal(self, name_or_ordinal) -> int:
        """Column lookup by name or ordinal."""
        if isinstance(name_or_ordinal, int):
            col = name_or_ordinal
        else:
            text = str(name_or_ordinal)
            names = [n for n, _ in self.schema]
            if text in names:
                return names.index(text)
            try:
                col = int(text)
            except ValueError:
                raise SchemaError(f"unknown column {name_or_ordinal!r}") from None
        if not (0 <= col < self.ncols):
            raise SchemaError(f"column ordinal {col} out of range")
        return col

    def column_data(self, col: int) -> Tuple[np.ndarray, np.ndarray]:
        """(values, usable) where usable = live and non-null.

        Views over the first slot_count slots; callers must not mutate.
        """
        col = self.column_ordinal(col)
        n = self._nslots
        return self._cols[col][:n], self._valid[col][:n] & self._live[:n]

    def column_range(self, col: int) -> Optional[ValueRange]:
        vals, usable = self.column_data(col)
        if not usable.any():
            return None
        sel = vals[usable]
        return ValueRange(float(sel.min()), float(sel.max()))

    # -- mutation ------------------------------------------------------------

    def _grow_to(self, n: int) -> None:
        cap = self._live.shape[0]
        if n <= cap:
            return
        while cap < n:
            cap *= 2
        for i, dt in enumerate(self._dtypes):
            col = np.zeros(cap, dtype=dt)
            col[: self._nslots] = self._cols[i][: self._nslots]
            self._cols[i] = col
            valid = np.zeros(cap, dtype=bool)
            valid[: self._nslots] = self._valid[i][: self._nslots]
            self._valid[i] = valid
        live = np.zeros(cap, dtype=bool)
        live[: self._nslots] = self._live[: self._nslots]
        self._live = live

    def _check_value(self, col: int, value):
        if value is None:
            return None
        if isinstance(value, float) and math.isnan(value):
            raise InvalidValueError(f"NaN is not storable (column {col})")
        if self._dtypes[col] == np.int64:
            iv = int(value)
            if iv != value:
                raise InvalidValueError(f"non-integral value {value!r} in i64 column {col}")
            return iv
        return float(value)

    def insert_tuple(self, values: Sequence) -> TupleId:
        return self.insert_row(values)[0]

    def insert_row(self, values: Sequence) -> Tuple[TupleId, list]:
        """Insert and also return the canonical (type-coerced) row values."""
        if len(values) != self.ncols:
            raise SchemaError(f"expected {self.ncols} values, got {len(values)}")
        checked = [self._check_value(i, v) for i, v in enumerate(values)]
        pk = checked[self.primary_key_column]
        if pk is None:
            raise InvalidValueError("primary key must not be null")
        slot = self._nslots
        if not self.primary.insert_unique(pk, slot):
            raise DuplicateKeyError(f"primary key {pk!r} already present")
        self._grow_to(slot + 1)
        for i, v in enumerate(checked):
            if v is not None:
                self._cols[i][slot] = v
                self._valid[i][slot] = True
        self._live[slot] = True
        self._nslots += 1
        self._live_count += 1
        return self.tuple_id_for_slot(slot), checked

    def append_rows(self, columns: Sequence[np.ndarray], valids: Optional[Sequence[np.ndarray]] = None) -> None:
        """Bulk ingest into an empty table (datagen / file reader path)."""
        if self._nslots != 0:
            raise TableError("bulk append requires an empty table")
        if len(columns) != self.ncols:
            raise SchemaError("column count mismatch")
        n = int(columns[0].shape[0])
        if n == 0:
            return
        self._grow_to(n)
        for i in range(self.ncols):
            arr = np.asarray(columns[i])
            if arr.shape[0] != n:
                raise SchemaError("ragged bulk columns")
            valid = (
                np.ones(n, dtype=bool) if valids is None or valids[i] is None else np.asarray(valids[i], dtype=bool)
            )
            vals = arr.astype(self._dtypes[i], copy=True)
            if self._dtypes[i] == np.float64 and np.isnan(vals[valid]).any():
                raise InvalidValueError(f"NaN in column {i}")
            vals[~valid] = 0
            self._cols[i][:n] = vals
            self._valid[i][:n] = valid
        pk_valid = self._valid[self.primary_key_column][:n]
        if not pk_valid.all():
            raise InvalidValueError("primary key must not be null")
        pks = self._cols[self.primary_key_column][:n]
        order = np.argsort(pks, kind="stable")
        sorted_pks = pks[order]
        if sorted_pks.shape[0] > 1 and (sorted_pks[1:] == sorted_pks[:-1]).any():
            raise DuplicateKeyError("duplicate primary keys in bulk load")
        self._live[:n] = True
        self._nslots = n
        self._live_count = n
        self.primary.bulk_load(sorted_pks, order.astype(np.int64))

    def delete_tuple(self, primary_key) -> TupleId:
        slot = self.primary.get_first(primary_key)
        if slot is None:
            raise MissingKeyError(primary_key)
        tid = self.tuple_id_for_slot(slot)
        self.primary.remove(primary_key, slot)
        self._live[slot] = False
        self._live_count -= 1
        return tid

    # -- identifiers ---------------------------------------------------------

    def tuple_id_for_slot(self, slot: int) -> TupleId:
        if self.id_scheme == PHYSICAL:
            return TupleId(PHYSICAL, location=(slot // BLOCK_SLOTS, slot % BLOCK_SLOTS))
        pk = self._cols[self.primary_key_column][slot]
        return TupleId(LOGICAL, logical_key=pk.item())

    def token_for_slot(self, slot: int):
        if self.id_scheme == PHYSICAL:
            return slot
        return self._cols[self.primary_key_column][slot].item()

    def token_dtype(self) -> np.dtype:
        if self.id_scheme == PHYSICAL:
            return np.dtype(np.int64)
        return self._dtypes[self.primary_key_column]

    def token_of(self, tid: TupleId):
        if tid.scheme != self.id_scheme:
            raise SchemaError(f"tuple id scheme {tid.scheme!r} != table scheme {self.id_scheme!r}")
        if tid.scheme == PHYSICAL:
            block, offset = tid.location
            if not (0 <= offset < BLOCK_SLOTS):
                raise MissingKeyError(tid)
            return block * BLOCK_SLOTS + offset
        return tid.logical_key

    def slot_of(self, tid: TupleId) -> int:
        token = self.token_of(tid)
        if self.id_scheme == PHYSICAL:
            slot = int(token)
            if not (0 <= slot < self._nslots):
                raise MissingKeyError(tid)
            return slot
        slot = self.primary.get_first(token)
        if slot is None:
            raise MissingKeyError(tid)
        return slot

    def tokens_for_slots(self, slots: np.ndarray) -> np.ndarray:
        if self.id_scheme == PHYSICAL:
            return slots.astype(np.int64, copy=False)
        return self._cols[self.primary_key_column][slots].copy()

    def slots_for_tokens(self, tokens: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Resolve a token array to (slots, resolved-mask).

        Logical tokens hop through the primary index (lookup workflow
        step 3); physical tokens are already slot ordinals.
        """
        if self.id_scheme == PHYSICAL:
            slots = tokens.astype(np.int64, copy=False)
            ok = (slots >= 0) & (slots < self._nslots)
            return slots, ok
        slots = self.primary.batch_first(tokens, missing=-1)
        return slots, slots >= 0

    # -- reads ----------------------------------------------------------------

    def fetch(self, tid: TupleId) -> list:
        slot = self.slot_of(tid)
        if not self._live[slot]:
            raise TombstoneError(f"slot {slot} is tombstoned")
        row = []
        for i in range(self.ncols):
            row.append(self._cols[i][slot].item() if self._valid[i][slot] else None)
        return row

    def filter_slots(self, slots: np.ndarray, preds: Sequence[Optional[Predicate]]) -> np.ndarray:
        """Keep live slots satisfying every predicate; sorted result.

        This is the base-table validation step: candidates produced by any
        index path are checked against the actual column values.
        """
        if slots.shape[0] == 0:
            return slots.astype(np.int64, copy=False)
        mask = self._live[slots]
        for p in preds:
            if p is None:
                continue
            col = self.column_ordinal(p.column)
            vals = self._cols[col][slots]
            mask = mask & self._valid[col][slots]
            mask = mask & (vals >= p.vrange.lb) & (vals <= p.vrange.ub)
        return np.sort(slots[mask]).astype(np.int64, copy=False)

    def live_tokens(self) -> list:
        return [self.token_for_slot(s) for s in range(self._nslots) if self._live[s]]

    def project_pairs(
        self,
        target_col: int,
        host_col: int,
        vrange: Optional[ValueRange] = None,
        include_ub: bool = True,
    ) -> ProjectedPairs:
        """Live rows with non-null target and host values, target in range.

        ``include_ub=False`` restricts to [lb, ub), which reorganization
        uses to project exactly one node's owned slice of the key space.
        """
        target_col = self.column_ordinal(target_col)
        host_col = self.column_ordinal(host_col)
        n = self._nslots
        mask = self._live[:n] & self._valid[target_col][:n] & self._valid[host_col][:n]
        tvals = self._cols[target_col][:n]
        if vrange is not None:
            mask = mask & (tvals >= vrange.lb)
            mask = mask & ((tvals <= vrange.ub) if include_ub else (tvals < vrange.ub))
        slots = np.nonzero(mask)[0]
        ms = tvals[slots].astype(np.float64, copy=False)
        ns = self._cols[host_col][slots].astype(np.float64, copy=False)
        if self.id_scheme == PHYSICAL:
            tokens = slots.astype(np.int64)
        else:
            tokens = self._cols[self.primary_key_column][slots].copy()
        return ProjectedPairs(np.ascontiguousarray(ms), np.ascontiguousarray(ns), tokens)

    # -- secondary structure registry and accounting --------------------------

    def register_structure(self, name: str, structure) -> None:
        """Track a secondary structure (must expose memory_bytes())."""
        if name in self._structures:
            raise TableError(f"structure {name!r} already registered")
        self._structures[name] = structure

    def unregister_structure(self, name: str) -> None:
        self._structures.pop(name, None)

    def memory_report(self) -> dict:
        n = self._nslots
        bitmap = (n + 7) // 8
        secondary = {name: s.memory_bytes() for name, s in self._structures.items()}
        components = {
            "base_columns": n * 8 * self.ncols,
            "validity_bitmaps": bitmap * self.ncols,
            "liveness_bitmap": bitmap,
            "headers": _TABLE_HEADER
            + _COLUMN_HEADER * self.ncols
            + _STRUCT_HEADER * (1 + len(secondary)),
            "primary_index": self.primary.memory_bytes(),
            "secondary": secondary,
        }
        total = sum(v for k, v in components.items() if k != "secondary")
        total += sum(secondary.values())
        return {
            "total": total,
            "components": components,
            "meta": {
                "slots": n,
                "live": self._live_count,
                "primary_index_fanout": self.primary.fanout,
                "physical_block_slots": BLOCK_SLOTS,
            },
        }


def scan_oracle(table: Table, pred: Predicate, second: Optional[Predicate] = None) -> np.ndarray:
    """Brute-force predicate evaluation; returns sorted matching slots.

    Deliberately independent of every index structure: it inspects only
    the raw column arrays, so it can serve as the correctness oracle for
    all lookup paths.
    """
    n = table.slot_count
    mask = table._live[:n].copy()
    for p in (pred, second):
        if p is None:
            continue
        col = table.column_ordinal(p.column)
        vals = table._cols[col][:n]
        mask &= table._valid[col][:n]
        mask &= (vals >= p.vrange.lb) & (vals <= p.vrange.ub)
    return np.nonzero(mask)[0].astype(np.int64)


# -- ingestion text format ----------------------------------------------------
#
#   header:  name:type,name:type,...        (type is i64 or f64)
#   rows:    comma-separated fields, empty field = null, no quoting


def write_table(table: Table, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(f"{name}:{typ}" for name, typ in table.schema) + "\n")
        n = table.slot_count
        is_int = [typ == "i64" for _, typ in table.schema]
        for slot in range(n):
            if not table._live[slot]:
                continue
            fields = []
            for c in range(table.ncols):
                if not table._valid[c][slot]:
                    fields.append("")
                elif is_int[c]:
                    fields.append(str(int(table._cols[c][slot])))
                else:
                    fields.append(repr(float(table._cols[c][slot])))
            fh.write(",".join(fields) + "\n")


def read_table(path: str, primary_key_column: int = 0, id_scheme: str = PHYSICAL) -> Table:
    with open(path, "r") as fh:
        header = fh.readline().rstrip("\n")
        if not header:
            raise DataFileError("empty ingestion file")
        schema = []
        for part in header.split(","):
            name, sep, typ = part.partition(":")
            if not sep or typ not in _DTYPES:
                raise DataFileError(f"bad header field {part!r}")
            schema.append((name, typ))
        ncols = len(schema)
        cols: List[list] = [[] for _ in range(ncols)]
        valids: List[list] = [[] for _ in range(ncols)]
        for lineno, line in enumerate(fh, start=2):
            fields = line.rstrip("\n").split(",")
            if len(fields) == 1 and fields[0] == "":
                continue
            if len(fields) != ncols:
                raise DataFileError(f"line {lineno}: expected {ncols} fields, got {len(fields)}")
            for c, field in enumerate(fields):
                if field == "":
                    cols[c].append(0)
                    valids[c].append(False)
                    continue
                try:
                    value = int(field) if schema[c][1] == "i64" else float(field)
                except ValueError:
                    raise DataFileError(f"line {lineno}: bad numeric field {field!r}") from None
                if isinstance(value, float) and math.isnan(value):
                    raise DataFileError(f"line {lineno}: NaN is not ingestible")
                cols[c].append(value)
                valids[c].append(True)
        table = Table(schema, primary_key_column, id_scheme)
        if cols[0]:
            arrays = [np.asarray(cols[c], dtype=_DTYPES[schema[c][1]]) for c in range(ncols)]
            masks = [np.asarray(valids[c], dtype=bool) for c in range(ncols)]
            try:
                table.append_rows(arrays, masks)
            except TableError as exc:
                raise DataFileError(str(exc)) from exc
        return table
