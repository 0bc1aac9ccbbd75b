"""Numpy implementations of the hot kernels.

Selected at import time by :mod:`hermit.kernels` when the compiled
extension is unavailable (or disabled via HERMIT_PURE_PYTHON=1).  The two
backends implement the same contracts; floating-point results may differ
in the last bits because summation order differs.
"""

from __future__ import annotations

from typing import Optional, Tuple

import numpy as np

# fit_line status codes (shared contract with hermit._native)
FIT_OK = 0
FIT_DEGENERATE = 1
FIT_EMPTY = 2


def fit_line(ms: np.ndarray, ns: np.ndarray) -> Tuple[float, float, int]:
    """Least-squares line through (ms, ns): slope, intercept, status.

    slope = cov(ms, ns) / var(ms), intercept = mean(ns) - slope * mean(ms).
    Sums are accumulated relative to the first element so narrow value
    ranges far from zero do not lose precision to cancellation.
    """
    k = ms.shape[0]
    if k == 0:
        return 0.0, 0.0, FIT_EMPTY
    dm = ms - ms[0]
    dn = ns - ns[0]
    sm = float(dm.sum())
    sn = float(dn.sum())
    svar = float(np.dot(dm, dm)) - sm * sm / k
    scov = float(np.dot(dm, dn)) - sm * sn / k
    mean_m = float(ms[0]) + sm / k
    mean_n = float(ns[0]) + sn / k
    if svar <= 0.0:
        return 0.0, mean_n, FIT_DEGENERATE
    slope = scov / svar
    return slope, mean_n - slope * mean_m, FIT_OK


def scan_outliers(
    ms: np.ndarray,
    ns: np.ndarray,
    slope: float,
    intercept: float,
    band: float,
    max_outliers: float,
) -> Optional[np.ndarray]:
    """Indices of pairs with |n - (slope*m + intercept)| > band.

    Returns None as soon as the outlier count strictly exceeds
    ``max_outliers`` (the node must split and its buffer is discarded, so
    no index list is materialized for that case).
    """
    dev = np.abs(ns - (slope * ms + intercept))
    idx = np.nonzero(dev > band)[0]
    if idx.size > max_outliers:
        return None
    return idx.astype(np.int64, copy=False)


def route_values(ms: np.ndarray, inner_bounds: np.ndarray) -> np.ndarray:
    """Child ordinal per value: half-open buckets, last bucket closed.

    ``inner_bounds`` are the fanout-1 interior boundaries; a value equal to
    a boundary routes to the right bucket.
    """
    return np.searchsorted(inner_bounds, ms, side="right").astype(np.int64)
