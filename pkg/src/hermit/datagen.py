"""Seeded synthetic tables with controlled correlation shapes.

Four dataset families, all deterministic per (spec, seed):

* linear  - 4 columns (a pk, b = 1.5*c + 1000, c uniform, d payload).
* sigmoid - same layout, b is a sigmoid curve of c scaled across the
  value range (visible curvature: several tree leaves at defaults).
* stock   - date pk plus per-stock (low, high) price columns; high
  tracks low closely except for occasional large single-day moves, and
  some days have both prices null (reading unavailable).
* sensor  - timestamp pk, 16 reading columns driven through per-sensor
  power-law responses of one latent series, plus their average column;
  each reading correlates non-linearly with the average.

Noise replaces the dependent column(s) of ceil(noise_pct * rows) rows
with uniform draws (replaced rows are guaranteed to leave the clean
curve).  Real-world price/sensor datasets are not redistributable, so
stock/sensor are generated analogs that match the documented shapes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from hermit.ranges import ValueRange
from hermit.table import PHYSICAL, Predicate, Table

KINDS = ("linear", "sigmoid", "stock", "sensor")

LINEAR_SLOPE = 1.5
LINEAR_INTERCEPT = 1000.0
SIGMOID_STEEPNESS_DIVISOR = 6.0  # latent scale: visible curvature without extreme tail flattening
STOCK_BIG_MOVE_PROB = 0.003
STOCK_NULL_PROB = 0.01
SENSOR_EXPONENT_RANGE = (0.6, 1.8)


NOISE_MODES = ("range", "additive")


@dataclass
class WorkloadSpec:
    kind: str
    row_count: int
    noise_pct: float = 0.01
    seed: int = 0
    value_range: Tuple[float, float] = (0.0, 1_048_576.0)
    stocks: int = 4
    sensors: int = 16
    # "range": replaced values are uniform over the dependent column's span
    # (scattered noise, independent of the clean value); "additive": uniform
    # symmetric offsets around the clean curve (spike-style outliers), with
    # half-width noise_amplitude (default: half the column span).
    noise_mode: str = "range"
    noise_amplitude: float = 0.0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown workload kind {self.kind!r}")
        if self.row_count < 0:
            raise ValueError("row_count must be >= 0")
        if not (0.0 <= self.noise_pct <= 1.0):
            raise ValueError("noise_pct must be in [0, 1]")
        if not (self.value_range[0] < self.value_range[1]):
            raise ValueError("value_range must be non-degenerate")
        if self.stocks < 1 or self.sensors < 1:
            raise ValueError("stocks/sensors must be >= 1")
        if self.noise_mode not in NOISE_MODES:
            raise ValueError(f"unknown noise mode {self.noise_mode!r}")


def _noise_rows(rng: np.random.Generator, n: int, noise_pct: float) -> np.ndarray:
    k = math.ceil(noise_pct * n)
    if k == 0:
        return np.empty(0, dtype=np.int64)
    return np.sort(rng.choice(n, size=k, replace=False))


def _redraw_off_curve(
    rng: np.random.Generator,
    clean: np.ndarray,
    idx: np.ndarray,
    lo: float,
    hi: float,
    mode: str = "range",
    amplitude: float = 0.0,
) -> np.ndarray:
    """Uniform redraw at idx, guaranteed to deviate from the clean value.

    mode "range" draws from [lo, hi] outright; "additive" draws a
    symmetric offset of up to +-amplitude (0 = half the span) around the
    clean value.
    """
    out = clean.copy()
    if idx.shape[0] == 0:
        return out
    tol = (hi - lo) * 1e-9
    half = amplitude if amplitude > 0 else (hi - lo) / 2.0
    pending = idx
    while pending.shape[0]:
        if mode == "additive":
            draws = clean[pending] + rng.uniform(-half, half, pending.shape[0])
        else:
            draws = rng.uniform(lo, hi, pending.shape[0])
        out[pending] = draws
        pending = pending[np.abs(draws - clean[pending]) <= tol]
    return out


def generate(spec: WorkloadSpec, id_scheme: str = PHYSICAL) -> Table:
    spec.validate()
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed & 0xFFFFFFFFFFFFFFFF]))
    n = spec.row_count
    lo, hi = spec.value_range

    if spec.kind in ("linear", "sigmoid"):
        a = np.arange(n, dtype=np.int64)
        c = rng.uniform(lo, hi, n)
        if spec.kind == "linear":
            b_clean = LINEAR_SLOPE * c + LINEAR_INTERCEPT
            b_lo, b_hi = LINEAR_SLOPE * lo + LINEAR_INTERCEPT, LINEAR_SLOPE * hi + LINEAR_INTERCEPT
        else:
            mid = (lo + hi) / 2.0
            scale = (hi - lo) / SIGMOID_STEEPNESS_DIVISOR
            b_clean = lo + (hi - lo) / (1.0 + np.exp(-(c - mid) / scale))
            b_lo, b_hi = lo, hi
        d = rng.uniform(lo, hi, n)
        b = _redraw_off_curve(
            rng, b_clean, _noise_rows(rng, n, spec.noise_pct), b_lo, b_hi,
            spec.noise_mode, spec.noise_amplitude,
        )
        table = Table([("a", "i64"), ("b", "f64"), ("c", "f64"), ("d", "f64")], 0, id_scheme)
        table.append_rows([a, b, c, d])
        return table

    if spec.kind == "stock":
        date = np.arange(n, dtype=np.int64)
        schema = [("date", "i64")]
        cols: List[np.ndarray] = [date]
        valids: List[Optional[np.ndarray]] = [None]
        noise_idx = _noise_rows(rng, n, spec.noise_pct)
        for s in range(spec.stocks):
            base = rng.uniform(10.0, 500.0)
            low = base * np.cumprod(1.0 + rng.normal(0.0, 0.01, n))
            spread = 1.0 + 0.001 + np.abs(rng.normal(0.0, 0.004, n))
            high = low * spread
            big = rng.random(n) < STOCK_BIG_MOVE_PROB
            high[big] = low[big] * rng.uniform(1.3, 1.8, int(big.sum()))
            if noise_idx.shape[0]:
                high = _redraw_off_curve(
                    rng, high, noise_idx, float(high.min()), float(high.max()),
                    spec.noise_mode, spec.noise_amplitude,
                )
            null = rng.random(n) < STOCK_NULL_PROB
            valid = ~null
            schema.append((f"s{s}_low", "f64"))
            schema.append((f"s{s}_high", "f64"))
            cols.append(np.where(valid, low, 0.0))
            valids.append(valid)
            cols.append(np.where(valid, high, 0.0))
            valids.append(valid.copy())
        table = Table(schema, 0, id_scheme)
        table.append_rows(cols, valids)
        return table

    # sensor
    ts = np.arange(n, dtype=np.int64)
    if n:
        walk = rng.standard_normal(n).cumsum()
        span = walk.max() - walk.min()
        latent = (walk - walk.min()) / (span if span > 0 else 1.0)
    else:
        latent = np.empty(0)
    exponents = rng.uniform(*SENSOR_EXPONENT_RANGE, spec.sensors)
    readings = [lo + (hi - lo) * latent**p for p in exponents]
    noise_idx = _noise_rows(rng, n, spec.noise_pct)
    if noise_idx.shape[0]:
        readings = [
            _redraw_off_curve(rng, r, noise_idx, lo, hi, spec.noise_mode, spec.noise_amplitude)
            for r in readings
        ]
    avg = np.mean(np.stack(readings), axis=0) if n else np.empty(0)
    schema = [("ts", "i64")] + [(f"r{j}", "f64") for j in range(spec.sensors)] + [("avg", "f64")]
    table = Table(schema, 0, id_scheme)
    table.append_rows([ts, *readings, avg])
    return table


def generate_queries(
    table: Table,
    target_col,
    selectivity,
    count: int,
    seed: int = 0,
    point: bool = False,
) -> List[Predicate]:
    """Seeded predicates hitting ~selectivity of the live rows.

    Range predicates are calibrated against the sorted column values, so
    the true match fraction is within +-20% of the request.  Point mode
    (or selectivity == "point") draws lb == ub from existing values.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    col = table.column_ordinal(target_col)
    vals, usable = table.column_data(col)
    vs = np.sort(vals[usable].astype(np.float64))
    n = vs.shape[0]
    if n == 0:
        raise ValueError("cannot generate queries for an empty table")
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF]))
    if point or selectivity == "point":
        idx = rng.integers(0, n, count)
        return [Predicate(col, ValueRange(float(vs[i]), float(vs[i]))) for i in idx]
    selectivity = float(selectivity)
    if not (0.0 < selectivity <= 1.0):
        raise ValueError("selectivity must be in (0, 1]")
    k = max(1, round(selectivity * n))
    if k >= n:
        return [Predicate(col, ValueRange(float(vs[0]), float(vs[-1])))] * count
    starts = rng.integers(0, n - k + 1, count)
    return [Predicate(col, ValueRange(float(vs[s]), float(vs[s + k - 1]))) for s in starts]
